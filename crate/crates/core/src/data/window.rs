use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::Catalog;
use super::series::{SeriesRecord, Source};
use crate::error::{Error, Result};

/// Window geometry: `total` samples, of which `future` lie after the
/// labeled anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub total: usize,
    pub future: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            total: 1000,
            future: 50,
        }
    }
}

impl WindowSpec {
    pub fn new(total: usize, future: usize) -> Result<Self> {
        if total == 0 || future >= total {
            return Err(Error::InvalidArgument(format!(
                "window needs 0 <= future < total, got total {total}, future {future}"
            )));
        }
        Ok(Self { total, future })
    }

    /// Window position of the anchor timepoint (949 for 1000/50).
    pub fn anchor_index(&self) -> usize {
        self.total - self.future - 1
    }
}

/// Copies the `[t - anchor, t + future]` span of all three channels into
/// `out` (`3 × total`, channel-major). Positions outside the series are 0.
pub fn fill_window(series: &SeriesRecord, t: usize, spec: WindowSpec, out: &mut [f32]) {
    debug_assert_eq!(out.len(), 3 * spec.total);
    let len = series.len() as isize;
    let start = t as isize - spec.anchor_index() as isize;
    let lo = (-start).clamp(0, spec.total as isize) as usize;
    let hi = (len - start).clamp(0, spec.total as isize) as usize;
    for (c, dst) in out.chunks_exact_mut(spec.total).enumerate() {
        dst[..lo].fill(0.0);
        dst[hi.max(lo)..].fill(0.0);
        if lo < hi {
            let s0 = (start + lo as isize) as usize;
            dst[lo..hi].copy_from_slice(&series.acc[c][s0..s0 + (hi - lo)]);
        }
    }
}

/// The `3 × total` window anchored at `t` and the three labels at `t`.
pub fn extract_window(series: &SeriesRecord, t: usize, spec: WindowSpec) -> (Vec<f32>, [u8; 3]) {
    assert!(
        t < series.len(),
        "anchor {t} outside series of length {}",
        series.len()
    );
    let mut w = vec![0.0; 3 * spec.total];
    fill_window(series, t, spec, &mut w);
    (w, std::array::from_fn(|c| series.labels[c][t]))
}

/// A training sample: series (by position in the id-ordered catalog) and
/// anchor timepoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleRef {
    pub series: u32,
    pub t: u32,
}

/// Which defog data counts as "without events" during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExclusionPolicy {
    /// Whole eventless defog recordings are removed (catalog filter only).
    #[default]
    Series,
    /// Additionally skip defog anchors whose three labels are all 0.
    Rows,
}

/// One reference per timepoint, series in catalog (id) order, then `t`
/// ascending.
pub fn enumerate_samples(catalog: &Catalog, policy: ExclusionPolicy) -> Vec<SampleRef> {
    let mut refs = Vec::with_capacity(catalog.total_timepoints());
    for (i, s) in catalog.series().iter().enumerate() {
        let skip_rows = policy == ExclusionPolicy::Rows && s.source == Source::Defog;
        for t in 0..s.len() {
            if skip_rows && s.labels.iter().all(|l| l[t] == 0) {
                continue;
            }
            refs.push(SampleRef {
                series: i as u32,
                t: t as u32,
            });
        }
    }
    refs
}

/// Uniform draw of `budget` references without replacement, returned in
/// their original order. All references are kept when there are fewer
/// than `budget`.
pub fn draw_sample_budget(refs: &[SampleRef], budget: usize, seed: u64) -> Result<Vec<SampleRef>> {
    if budget == 0 {
        return Err(Error::InvalidArgument(
            "sample budget must be positive".into(),
        ));
    }
    if refs.len() <= budget {
        return Ok(refs.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, refs.len(), budget).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| refs[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> SeriesRecord {
        SeriesRecord {
            series_id: "r".into(),
            source: Source::Tdcsfog,
            subject_id: "s".into(),
            time: (0..n).map(|t| t as f64).collect(),
            acc: std::array::from_fn(|c| (0..n).map(|t| (t + c * 100_000) as f32).collect()),
            labels: std::array::from_fn(|c| (0..n).map(|t| ((t / (3 + c)) % 2) as u8).collect()),
            labeled: true,
            flags: Default::default(),
        }
    }

    #[test]
    fn anchor_sits_at_949() {
        let spec = WindowSpec::default();
        assert_eq!(spec.anchor_index(), 949);
        let s = ramp(5000);
        let (w, _) = extract_window(&s, 949, spec);
        // index oracle: position i holds sample t - 949 + i
        for i in 0..1000 {
            assert_eq!(w[i], i as f32);
            assert_eq!(w[1000 + i], (i + 100_000) as f32);
        }
        let (w, _) = extract_window(&s, 2000, spec);
        assert_eq!(w[949], 2000.0);
        assert_eq!(w[999], 2050.0);
        assert_eq!(w[0], 1051.0);
    }

    #[test]
    fn start_and_end_are_zero_padded() {
        let spec = WindowSpec::default();
        let s = ramp(3000);
        let (w, _) = extract_window(&s, 0, spec);
        assert!(w[..949].iter().all(|&v| v == 0.0));
        assert_eq!(w[949], 0.0); // sample 0 of the ramp is 0 itself
        assert_eq!(w[950], 1.0);
        assert_eq!(w[2000 + 949], 200_000.0);
        let (w, _) = extract_window(&s, 2999, spec);
        assert!(w[950..1000].iter().all(|&v| v == 0.0));
        assert_eq!(w[949], 2999.0);
    }

    #[test]
    fn shorter_than_window_series() {
        let spec = WindowSpec::new(20, 5).unwrap();
        let s = ramp(6);
        for t in 0..6 {
            let (w, y) = extract_window(&s, t, spec);
            assert_eq!(w[14], t as f32);
            assert_eq!(y, [s.labels[0][t], s.labels[1][t], s.labels[2][t]]);
            let nonzero_span = (0..20).filter(|&i| {
                let p = t as isize - 14 + i as isize;
                (0..6).contains(&p)
            });
            assert_eq!(nonzero_span.count(), 6);
        }
    }

    #[test]
    fn window_spec_validation() {
        assert!(WindowSpec::new(10, 10).is_err());
        assert!(WindowSpec::new(0, 0).is_err());
        assert!(WindowSpec::new(10, 0).is_ok());
    }

    #[test]
    fn budget_keeps_everything_when_small_and_is_seeded() {
        let refs: Vec<SampleRef> = (0..100).map(|t| SampleRef { series: 0, t }).collect();
        assert_eq!(draw_sample_budget(&refs, 5_000_000, 1).unwrap(), refs);
        let a = draw_sample_budget(&refs[..10], 4, 9).unwrap();
        assert_eq!(a, draw_sample_budget(&refs[..10], 4, 9).unwrap());
        assert_eq!(a.len(), 4);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(draw_sample_budget(&refs, 0, 1).is_err());
    }
}
