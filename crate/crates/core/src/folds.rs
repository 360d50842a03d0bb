//! Subject-grouped, stratified k-fold assignment of series.
//!
//! Subjects are placed greedily, rarest strata and largest subjects
//! first, each into the fold that keeps per-stratum counts most even.
//! A local-search pass then moves or swaps subjects while that reduces
//! the largest excess of a stratum's fold spread over its single-subject
//! maximum.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SeriesSummary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    None,
    StartHesitation,
    Turn,
    Walking,
}

impl Stratum {
    pub const ALL: [Stratum; 4] = [
        Stratum::None,
        Stratum::StartHesitation,
        Stratum::Turn,
        Stratum::Walking,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::None => "none",
            Stratum::StartHesitation => "starthesitation",
            Stratum::Turn => "turn",
            Stratum::Walking => "walking",
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stratum {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stratum::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stratum `{s}`")))
    }
}

/// Dominant event class; ties go to the earlier class
/// (StartHesitation, Turn, Walking), all-zero maps to `None`.
pub fn compute_stratum(event_counts: [usize; 3]) -> Stratum {
    let mut best = Stratum::None;
    let mut best_count = 0;
    for (i, &c) in event_counts.iter().enumerate() {
        if c > best_count {
            best_count = c;
            best = Stratum::ALL[i + 1];
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldItem {
    pub series_id: String,
    pub subject_id: String,
    pub stratum: Stratum,
}

impl FoldItem {
    pub fn from_summary(s: &SeriesSummary) -> Self {
        Self {
            series_id: s.series_id.clone(),
            subject_id: s.subject_id.clone(),
            stratum: compute_stratum(s.event_counts),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldEntry {
    pub series_id: String,
    pub subject_id: String,
    pub fold: usize,
}

/// Every series mapped to exactly one fold in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    entries: BTreeMap<String, FoldEntry>,
}

impl FoldAssignment {
    pub fn new(k: usize, entries: Vec<FoldEntry>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!(
                "need k >= 2 folds, got {k}"
            )));
        }
        let mut map = BTreeMap::new();
        let mut subject_fold: BTreeMap<String, usize> = BTreeMap::new();
        for e in entries {
            if e.fold >= k {
                return Err(Error::InvalidArgument(format!(
                    "series `{}` has fold {} >= {k}",
                    e.series_id, e.fold
                )));
            }
            if let Some(&f) = subject_fold.get(&e.subject_id) {
                if f != e.fold {
                    return Err(Error::InvalidArgument(format!(
                        "subject `{}` appears in folds {f} and {}",
                        e.subject_id, e.fold
                    )));
                }
            }
            subject_fold.insert(e.subject_id.clone(), e.fold);
            if map.insert(e.series_id.clone(), e.clone()).is_some() {
                return Err(Error::DuplicateSeries(e.series_id));
            }
        }
        Ok(Self { k, entries: map })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fold_of(&self, series_id: &str) -> Option<usize> {
        self.entries.get(series_id).map(|e| e.fold)
    }

    pub fn entries(&self) -> impl Iterator<Item = &FoldEntry> {
        self.entries.values()
    }

    pub fn series_in_fold(&self, fold: usize) -> Vec<&str> {
        self.entries
            .values()
            .filter(|e| e.fold == fold)
            .map(|e| e.series_id.as_str())
            .collect()
    }

    pub fn subjects_in_fold(&self, fold: usize) -> BTreeSet<&str> {
        self.entries
            .values()
            .filter(|e| e.fold == fold)
            .map(|e| e.subject_id.as_str())
            .collect()
    }

    /// `counts[fold][stratum]` for the given items.
    pub fn stratum_counts(&self, items: &[FoldItem]) -> Vec<[usize; 4]> {
        let mut counts = vec![[0usize; 4]; self.k];
        for it in items {
            if let Some(f) = self.fold_of(&it.series_id) {
                counts[f][it.stratum.index()] += 1;
            }
        }
        counts
    }

    /// CSV with header `series_id,subject_id,fold`, rows in series id order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for e in self.entries.values() {
            w.serialize(e).map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads an export; `k` is the number of distinct folds unless given.
    pub fn read_csv(path: &Path, k: Option<usize>) -> Result<Self> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let entries: Vec<FoldEntry> = r
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_err)?;
        let k = k.unwrap_or_else(|| entries.iter().map(|e| e.fold + 1).max().unwrap_or(0));
        Self::new(k, entries)
    }
}

#[derive(Debug, Clone)]
struct Subject {
    id: String,
    counts: [usize; 4],
    total: usize,
}
/// Stratum counts per subject, in subject id order.
pub fn subject_stratum_counts(items: &[FoldItem]) -> Vec<[usize; 4]> {
    let mut by_subject: BTreeMap<&str, [usize; 4]> = BTreeMap::new();
    for it in items {
        by_subject.entry(&it.subject_id).or_default()[it.stratum.index()] += 1;
    }
    by_subject.into_values().collect()
}

/// Largest single-subject count per stratum.
pub fn stratification_caps(subjects: &[[usize; 4]]) -> [usize; 4] {
    let mut cap = [0usize; 4];
    for s in subjects {
        for st in 0..4 {
            cap[st] = cap[st].max(s[st]);
        }
    }
    cap
}

/// Whether every stratum's max−min fold count is at most its cap.
pub fn within_stratification_bound(fold_counts: &[[usize; 4]], cap: &[usize; 4]) -> bool {
    excess(fold_counts, cap) == 0
}

/// Exhaustive search over partitions of `subjects` into exactly `k`
/// non-empty folds for one that meets the bound. Exponential; meant for
/// small instances.
pub fn bound_attainable(subjects: &[[usize; 4]], k: usize) -> bool {
    fn go(
        subjects: &[[usize; 4]],
        i: usize,
        used: usize,
        folds: &mut [[usize; 4]],
        cap: &[usize; 4],
    ) -> bool {
        let k = folds.len();
        if subjects.len() - i < k - used {
            return false;
        }
        if i == subjects.len() {
            return excess(folds, cap) == 0;
        }
        for f in 0..(used + 1).min(k) {
            add(&mut folds[f], &subjects[i]);
            let found = go(subjects, i + 1, used.max(f + 1), folds, cap);
            sub(&mut folds[f], &subjects[i]);
            if found {
                return true;
            }
        }
        false
    }
    let cap = stratification_caps(subjects);
    subjects.len() >= k && go(subjects, 0, 0, &mut vec![[0; 4]; k], &cap)
}

/// Greedy grouped, stratified assignment. Subjects are visited by
/// (rarest stratum, descending series count, subject id). Should a
/// stratum's fold spread still exceed its largest single-subject count,
/// seeded reorderings of the subjects are tried. `seed` also permutes the
/// fold labels of the result.
pub fn stratified_group_kfold(items: &[FoldItem], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "need k >= 2 folds, got {k}"
        )));
    }
    let mut by_subject: BTreeMap<&str, [usize; 4]> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for it in items {
        if !seen.insert(it.series_id.as_str()) {
            return Err(Error::DuplicateSeries(it.series_id.clone()));
        }
        by_subject.entry(&it.subject_id).or_default()[it.stratum.index()] += 1;
    }
    if by_subject.len() < k {
        return Err(Error::TooFewSubjects {
            subjects: by_subject.len(),
            k,
        });
    }
    let mut subjects: Vec<Subject> = by_subject
        .into_iter()
        .map(|(id, counts)| Subject {
            id: id.to_string(),
            counts,
            total: counts.iter().sum(),
        })
        .collect();

    let mut global = [0usize; 4];
    let mut cap = [0usize; 4];
    for s in &subjects {
        for st in 0..4 {
            global[st] += s.counts[st];
            cap[st] = cap[st].max(s.counts[st]);
        }
    }
    // rarity rank per stratum: 0 = rarest present stratum
    let mut by_rarity: Vec<usize> = (0..4).filter(|&s| global[s] > 0).collect();
    by_rarity.sort_by_key(|&s| (global[s], s));
    let rank = |st: usize| {
        by_rarity
            .iter()
            .position(|&x| x == st)
            .unwrap_or(usize::MAX)
    };
    let rarest = |s: &Subject| {
        (0..4)
            .filter(|&st| s.counts[st] > 0)
            .map(rank)
            .min()
            .unwrap_or(usize::MAX)
    };

    subjects.sort_by_key(|s| (rarest(s), std::cmp::Reverse(s.total)));

    let mut order: Vec<usize> = (0..subjects.len()).collect();
    let (mut folds, mut members) = place(&subjects, &order, k, &cap);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RESTARTS {
        if excess(&folds, &cap) == 0 {
            break;
        }
        order.shuffle(&mut rng);
        let (f2, m2) = place(&subjects, &order, k, &cap);
        if excess(&f2, &cap) < excess(&folds, &cap) {
            (folds, members) = (f2, m2);
        }
    }

    let mut labels: Vec<usize> = (0..k).collect();
    labels.shuffle(&mut rng);
    let mut subject_fold = BTreeMap::new();
    for (f, m) in members.iter().enumerate() {
        let f = labels[f];
        for &si in m {
            subject_fold.insert(subjects[si].id.as_str(), f);
        }
    }
    let entries = items
        .iter()
        .map(|it| FoldEntry {
            series_id: it.series_id.clone(),
            subject_id: it.subject_id.clone(),
            fold: subject_fold[it.subject_id.as_str()],
        })
        .collect();
    FoldAssignment::new(k, entries)
}

/// Reorderings tried when the first placement leaves a stratum spread
/// above its bound.
const RESTARTS: usize = 256;

/// Greedy placement of subjects in `order`, then local repair.
fn place(
    subjects: &[Subject],
    order: &[usize],
    k: usize,
    cap: &[usize; 4],
) -> (Vec<[usize; 4]>, Vec<Vec<usize>>) {
    let mut folds = vec![[0usize; 4]; k];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (placed, &si) in order.iter().enumerate() {
        let s = &subjects[si];
        let empty = members.iter().filter(|m| m.is_empty()).count();
        let remaining = order.len() - placed;
        let best = (0..k)
            .filter(|&f| remaining > empty || members[f].is_empty())
            .min_by(|&a, &b| {
                let score = |f: usize| {
                    let mut trial = folds.clone();
                    add(&mut trial[f], &s.counts);
                    (imbalance(&trial, cap), trial[f].iter().sum::<usize>())
                };
                let (sa, sb) = (score(a), score(b));
                sa.0.total_cmp(&sb.0).then(sa.1.cmp(&sb.1)).then(a.cmp(&b))
            })
            .expect("at least one candidate fold");
        add(&mut folds[best], &s.counts);
        members[best].push(si);
    }
    repair(subjects, &mut folds, &mut members, cap);
    (folds, members)
}

fn add(fold: &mut [usize; 4], counts: &[usize; 4]) {
    for st in 0..4 {
        fold[st] += counts[st];
    }
}

fn sub(fold: &mut [usize; 4], counts: &[usize; 4]) {
    for st in 0..4 {
        fold[st] -= counts[st];
    }
}

/// Sum over strata of the per-fold count variance, scaled by the
/// stratum's single-subject maximum.
fn imbalance(folds: &[[usize; 4]], cap: &[usize; 4]) -> f64 {
    let k = folds.len() as f64;
    (0..4)
        .filter(|&st| cap[st] > 0)
        .map(|st| {
            let mean = folds.iter().map(|f| f[st] as f64).sum::<f64>() / k;
            let var = folds
                .iter()
                .map(|f| (f[st] as f64 - mean).powi(2))
                .sum::<f64>()
                / k;
            var / (cap[st] * cap[st]) as f64
        })
        .sum()
}

/// Total amount by which stratum spreads exceed their bound.
fn excess(folds: &[[usize; 4]], cap: &[usize; 4]) -> usize {
    (0..4)
        .map(|st| {
            let max = folds.iter().map(|f| f[st]).max().unwrap_or(0);
            let min = folds.iter().map(|f| f[st]).min().unwrap_or(0);
            (max - min).saturating_sub(cap[st])
        })
        .sum()
}

fn repair(
    subjects: &[Subject],
    folds: &mut [[usize; 4]],
    members: &mut [Vec<usize>],
    cap: &[usize; 4],
) {
    let k = folds.len();
    let key = |folds: &[[usize; 4]]| (excess(folds, cap), imbalance(folds, cap));
    for _ in 0..(4 * subjects.len()).max(16) {
        let current = key(folds);
        if current.0 == 0 {
            return;
        }
        let mut best: Option<((usize, f64), Move)> = None;
        let mut consider = |trial: &[[usize; 4]], mv: Move| {
            let kk = key(trial);
            let better_than_current =
                kk.0 < current.0 || (kk.0 == current.0 && kk.1 < current.1 - 1e-12);
            let better_than_best = best
                .as_ref()
                .is_none_or(|(b, _)| kk.0 < b.0 || (kk.0 == b.0 && kk.1 < b.1 - 1e-12));
            if better_than_current && better_than_best {
                best = Some((kk, mv));
            }
        };
        for from in 0..k {
            for (pos, &si) in members[from].iter().enumerate() {
                for to in 0..k {
                    if to == from {
                        continue;
                    }
                    if members[from].len() > 1 {
                        let mut trial = folds.to_vec();
                        sub(&mut trial[from], &subjects[si].counts);
                        add(&mut trial[to], &subjects[si].counts);
                        consider(&trial, Move::Shift { from, pos, to });
                    }
                    if to > from {
                        for (pos2, &sj) in members[to].iter().enumerate() {
                            let mut trial = folds.to_vec();
                            sub(&mut trial[from], &subjects[si].counts);
                            add(&mut trial[to], &subjects[si].counts);
                            sub(&mut trial[to], &subjects[sj].counts);
                            add(&mut trial[from], &subjects[sj].counts);
                            consider(
                                &trial,
                                Move::Swap {
                                    from,
                                    pos,
                                    to,
                                    pos2,
                                },
                            );
                        }
                    }
                }
            }
        }
        let Some((_, mv)) = best else { return };
        match mv {
            Move::Shift { from, pos, to } => {
                let si = members[from].remove(pos);
                sub(&mut folds[from], &subjects[si].counts);
                add(&mut folds[to], &subjects[si].counts);
                members[to].push(si);
            }
            Move::Swap {
                from,
                pos,
                to,
                pos2,
            } => {
                let si = members[from][pos];
                let sj = members[to][pos2];
                sub(&mut folds[from], &subjects[si].counts);
                add(&mut folds[to], &subjects[si].counts);
                sub(&mut folds[to], &subjects[sj].counts);
                add(&mut folds[from], &subjects[sj].counts);
                members[from][pos] = sj;
                members[to][pos2] = si;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Shift {
        from: usize,
        pos: usize,
        to: usize,
    },
    Swap {
        from: usize,
        pos: usize,
        to: usize,
        pos2: usize,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(series: &str, subject: &str, stratum: Stratum) -> FoldItem {
        FoldItem {
            series_id: series.into(),
            subject_id: subject.into(),
            stratum,
        }
    }

    #[test]
    fn bound_is_not_always_attainable() {
        // None, StartHesitation, Turn, Walking per subject.
        let subjects = [
            [0, 1, 1, 0],
            [1, 0, 1, 0],
            [1, 0, 1, 0],
            [1, 1, 0, 0],
            [1, 0, 1, 0],
            [1, 1, 0, 0],
        ];
        assert!(!bound_attainable(&subjects, 5));
        assert!(bound_attainable(&subjects[1..], 5));
    }

    #[test]
    fn stratum_examples() {
        assert_eq!(compute_stratum([0, 500, 10]), Stratum::Turn);
        assert_eq!(compute_stratum([0, 0, 0]), Stratum::None);
        assert_eq!(compute_stratum([7, 7, 0]), Stratum::StartHesitation);
        assert_eq!(compute_stratum([0, 3, 3]), Stratum::Turn);
        assert_eq!(compute_stratum([1, 0, 2]), Stratum::Walking);
    }

    #[test]
    fn ten_single_series_subjects_split_two_per_fold() {
        let items: Vec<_> = (0..10)
            .map(|i| item(&format!("s{i}"), &format!("p{i}"), Stratum::Turn))
            .collect();
        for seed in 0..5 {
            let fa = stratified_group_kfold(&items, 5, seed).unwrap();
            assert_eq!(fa.k(), 5);
            for f in 0..5 {
                assert_eq!(fa.series_in_fold(f).len(), 2);
            }
        }
    }

    #[test]
    fn subjects_never_span_folds() {
        let mut items = vec![];
        for p in 0..7 {
            for r in 0..(p % 3 + 1) {
                let st = Stratum::ALL[(p + r) % 4];
                items.push(item(&format!("p{p}r{r}"), &format!("p{p}"), st));
            }
        }
        let fa = stratified_group_kfold(&items, 5, 3).unwrap();
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for e in fa.entries() {
            assert_eq!(*seen.entry(&e.subject_id).or_insert(e.fold), e.fold);
        }
        assert_eq!(fa.len(), items.len());
        assert!((0..5).all(|f| !fa.series_in_fold(f).is_empty()));
    }

    #[test]
    fn too_few_subjects_rejected() {
        let items: Vec<_> = (0..4)
            .map(|i| item(&format!("s{i}"), &format!("p{i}"), Stratum::None))
            .collect();
        assert!(matches!(
            stratified_group_kfold(&items, 5, 0),
            Err(Error::TooFewSubjects { subjects: 4, k: 5 })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let items: Vec<_> = (0..6)
            .map(|i| item(&format!("s{i}"), &format!("p{}", i / 2), Stratum::Walking))
            .collect();
        let fa = stratified_group_kfold(&items, 3, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("folds.csv");
        fa.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("series_id,subject_id,fold\n"));
        assert_eq!(FoldAssignment::read_csv(&p, Some(3)).unwrap(), fa);
    }

    #[test]
    fn rejects_inconsistent_import() {
        let e = |s: &str, p: &str, f| FoldEntry {
            series_id: s.into(),
            subject_id: p.into(),
            fold: f,
        };
        assert!(FoldAssignment::new(2, vec![e("a", "p", 0), e("b", "p", 1)]).is_err());
        assert!(FoldAssignment::new(2, vec![e("a", "p", 2)]).is_err());
    }
}
