//! Average precision per outcome and their mean across outcomes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores paired with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.is_empty() || scores.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "need equally many scores and labels (at least one), got {} and {}",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(Error::NonBinaryTarget {
                index: i,
                value: labels[i] as f64,
            });
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("scores".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Cumulative (true positives, false positives) after each distinct
    /// threshold, highest threshold first. Equal scores enter together.
    fn threshold_counts(&self) -> Vec<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut out = Vec::new();
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut i = 0;
        while i < order.len() {
            let s = self.scores[order[i]];
            while i < order.len() && self.scores[order[i]] == s {
                if self.labels[order[i]] == 1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            out.push((tp, fp));
        }
        out
    }
}

/// Average precision, or the explicit signal that the class has no
/// positive labels (where recall is undefined).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AveragePrecision {
    Value(f64),
    NoPositives,
}

impl AveragePrecision {
    pub fn value(self) -> Option<f64> {
        match self {
            AveragePrecision::Value(v) => Some(v),
            AveragePrecision::NoPositives => None,
        }
    }
}

/// `Σ (R_n − R_{n−1}) · P_n` over descending distinct thresholds, without
/// interpolation.
pub fn average_precision(sl: &ScoredLabels) -> AveragePrecision {
    let positives = sl.positives();
    if positives == 0 {
        return AveragePrecision::NoPositives;
    }
    let p = positives as f64;
    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    for (tp, fp) in sl.threshold_counts() {
        if tp > prev_tp {
            ap += (tp - prev_tp) as f64 / p * (tp as f64 / (tp + fp) as f64);
        }
        prev_tp = tp;
    }
    AveragePrecision::Value(ap)
}

/// Precision–recall points starting from `(0, 1)`, one per distinct
/// threshold (highest first).
pub fn pr_curve(sl: &ScoredLabels) -> Vec<(f64, f64)> {
    let positives = sl.positives();
    let mut points = vec![(0.0, 1.0)];
    for (tp, fp) in sl.threshold_counts() {
        let recall = if positives == 0 {
            0.0
        } else {
            tp as f64 / positives as f64
        };
        points.push((recall, tp as f64 / (tp + fp) as f64));
    }
    points
}

/// How classes without positives enter the mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UndefinedPolicy {
    /// Count as 0 and flag it.
    #[default]
    Zero,
    /// Leave the class out of the mean.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanAp {
    /// `None` only when every class is undefined under [`UndefinedPolicy::Skip`].
    pub value: Option<f64>,
    /// Indices of classes that had no positives.
    pub undefined: Vec<usize>,
}

pub fn mean_average_precision(per_class: &[AveragePrecision], policy: UndefinedPolicy) -> MeanAp {
    let undefined: Vec<usize> = per_class
        .iter()
        .enumerate()
        .filter(|(_, ap)| ap.value().is_none())
        .map(|(i, _)| i)
        .collect();
    let values: Vec<f64> = match policy {
        UndefinedPolicy::Zero => per_class
            .iter()
            .map(|ap| ap.value().unwrap_or(0.0))
            .collect(),
        UndefinedPolicy::Skip => per_class.iter().filter_map(|ap| ap.value()).collect(),
    };
    let value = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    MeanAp { value, undefined }
}

/// AP for each of the three outcomes and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub ap: [AveragePrecision; 3],
    pub map: MeanAp,
}

/// Scores every outcome column against its labels.
pub fn score_classes(
    scores: [Vec<f64>; 3],
    labels: [Vec<u8>; 3],
    policy: UndefinedPolicy,
) -> Result<ClassReport> {
    let mut ap = [AveragePrecision::NoPositives; 3];
    for (c, (s, l)) in scores.into_iter().zip(labels).enumerate() {
        ap[c] = average_precision(&ScoredLabels::new(s, l)?);
    }
    Ok(ClassReport {
        map: mean_average_precision(&ap, policy),
        ap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sl(scores: &[f64], labels: &[u8]) -> ScoredLabels {
        ScoredLabels::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    /// Brute force: for every distinct threshold τ (descending), recompute
    /// precision and recall of `score >= τ` from scratch.
    fn brute_force_ap(scores: &[f64], labels: &[u8]) -> f64 {
        let mut th: Vec<f64> = scores.to_vec();
        th.sort_by(|a, b| b.total_cmp(a));
        th.dedup();
        let p = labels.iter().filter(|&&l| l == 1).count() as f64;
        let mut prev_r = 0.0;
        let mut ap = 0.0;
        for t in th {
            let sel: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
            let tp = sel.iter().filter(|&&i| labels[i] == 1).count() as f64;
            let r = tp / p;
            let prec = tp / sel.len() as f64;
            ap += (r - prev_r) * prec;
            prev_r = r;
        }
        ap
    }

    #[test]
    fn hand_example() {
        let s = [0.9, 0.8, 0.7, 0.6];
        let l = [1, 0, 1, 1];
        let want = 1.0 / 3.0 + (2.0 / 3.0) / 3.0 + 0.75 / 3.0;
        assert!((want - 0.80556f64).abs() < 1e-5);
        assert_eq!(brute_force_ap(&s, &l), want);
        let got = average_precision(&sl(&s, &l)).value().unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn perfect_ranking_scores_one() {
        let got = average_precision(&sl(&[0.9, 0.8, 0.3, 0.1], &[1, 1, 0, 0]));
        assert_eq!(got, AveragePrecision::Value(1.0));
    }

    #[test]
    fn constant_scores_give_prevalence() {
        let got = average_precision(&sl(&[0.5; 8], &[1, 0, 0, 1, 0, 1, 0, 0]))
            .value()
            .unwrap();
        assert!((got - 3.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn no_positives_is_undefined() {
        assert_eq!(
            average_precision(&sl(&[0.1, 0.2], &[0, 0])),
            AveragePrecision::NoPositives
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ScoredLabels::new(vec![], vec![]).is_err());
        assert!(ScoredLabels::new(vec![0.1], vec![2]).is_err());
        assert!(ScoredLabels::new(vec![0.1, 0.2], vec![1]).is_err());
        assert!(ScoredLabels::new(vec![f64::NAN], vec![1]).is_err());
    }

    #[test]
    fn mean_of_three_and_policies() {
        use AveragePrecision::*;
        let m =
            mean_average_precision(&[Value(1.0), Value(1.0), Value(1.0)], UndefinedPolicy::Zero);
        assert_eq!(m.value, Some(1.0));
        let m = mean_average_precision(
            &[Value(0.9), NoPositives, Value(0.3)],
            UndefinedPolicy::Zero,
        );
        assert!((m.value.unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(m.undefined, vec![1]);
        let m = mean_average_precision(
            &[Value(0.9), NoPositives, Value(0.3)],
            UndefinedPolicy::Skip,
        );
        assert!((m.value.unwrap() - 0.6).abs() < 1e-15);
        let m = mean_average_precision(&[NoPositives; 3], UndefinedPolicy::Skip);
        assert_eq!(m.value, None);
    }

    #[test]
    fn pr_curve_cases() {
        let c = pr_curve(&sl(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]));
        assert!(c.contains(&(0.5, 1.0)) && c.contains(&(1.0, 1.0)));
        let c = pr_curve(&sl(&[0.9, 0.8, 0.7, 0.2, 0.1], &[0, 0, 0, 1, 1]));
        assert_eq!(*c.last().unwrap(), (1.0, 2.0 / 5.0));
        assert_eq!(pr_curve(&sl(&[0.4], &[1])), vec![(0.0, 1.0), (1.0, 1.0)]);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (1usize..=64).prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..8).prop_map(|v| v as f64 / 8.0), n),
                prop::collection::vec(0u8..=1, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn matches_brute_force((scores, labels) in instance()) {
            let s = sl(&scores, &labels);
            match average_precision(&s) {
                AveragePrecision::Value(v) => {
                    prop_assert!((v - brute_force_ap(&scores, &labels)).abs() < 1e-12);
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                AveragePrecision::NoPositives => prop_assert!(labels.iter().all(|&l| l == 0)),
            }
        }

        #[test]
        fn invariant_to_permutation_and_monotone_maps(
            (scores, labels) in instance(),
            rot in 0usize..64,
        ) {
            let base = average_precision(&sl(&scores, &labels));
            let n = scores.len();
            let (mut s2, mut l2) = (scores.clone(), labels.clone());
            s2.rotate_left(rot % n);
            l2.rotate_left(rot % n);
            s2.reverse();
            l2.reverse();
            prop_assert_eq!(average_precision(&sl(&s2, &l2)), base);
            let mapped: Vec<f64> = scores.iter().map(|&v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(average_precision(&sl(&mapped, &labels)), base);
        }

        #[test]
        fn recall_never_decreases((scores, labels) in instance()) {
            let c = pr_curve(&sl(&scores, &labels));
            prop_assert!(c.windows(2).all(|w| w[0].0 <= w[1].0));
        }
    }
}
