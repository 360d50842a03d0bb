use rayon::prelude::*;

use crate::data::{fill_window, SeriesRecord, WindowSpec};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::nn::sigmoid;
use crate::tensor::Tensor3;

/// Windows per inference batch.
pub const PREDICT_BATCH: usize = 64;

/// Arithmetic mean, summed in ascending order so the result does not
/// depend on the order of the inputs.
pub fn ensemble_mean(probs: &mut [f64]) -> f64 {
    probs.sort_by(f64::total_cmp);
    probs.iter().sum::<f64>() / probs.len() as f64
}

/// Per-timepoint probabilities averaged over `models`.
///
/// Windows are anchored at every `stride`-th timepoint; the timepoints in
/// between repeat the most recent anchored value. The output has one row
/// per timepoint of `series`.
pub fn predict_series(
    models: &[&Network<f32>],
    series: &SeriesRecord,
    window: WindowSpec,
    stride: usize,
) -> Result<Vec<[f32; 3]>> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidArgument("prediction needs at least one model".into()))?;
    if let Some(m) = models.iter().find(|m| m.spec() != first.spec()) {
        return Err(Error::SpecMismatch(format!(
            "ensemble members disagree: {:?} vs {:?}",
            first.spec(),
            m.spec()
        )));
    }
    let spec = first.spec();
    if spec.input_channels != 3 || spec.window_length != window.total || spec.num_outputs != 3 {
        return Err(Error::SpecMismatch(format!(
            "model expects [{}, {}] -> {}, windows are [3, {}] -> 3",
            spec.input_channels, spec.window_length, spec.num_outputs, window.total
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument(
            "inference stride must be positive".into(),
        ));
    }
    let n = series.len();
    let anchors: Vec<usize> = (0..n).step_by(stride).collect();
    let mut anchored = Vec::with_capacity(anchors.len());
    for batch in anchors.chunks(PREDICT_BATCH) {
        let w = 3 * window.total;
        let mut data = vec![0f32; batch.len() * w];
        data.par_chunks_mut(w)
            .zip(batch.par_iter())
            .for_each(|(dst, &t)| fill_window(series, t, window, dst));
        let x = Tensor3::from_vec(data, batch.len(), 3, window.total)?;
        let per_model = models
            .iter()
            .map(|m| m.predict(&x))
            .collect::<Result<Vec<_>>>()?;
        for b in 0..batch.len() {
            anchored.push(std::array::from_fn(|c| {
                let mut p: Vec<f64> = per_model
                    .iter()
                    .map(|l| sigmoid(l.get(b, c) as f64))
                    .collect();
                ensemble_mean(&mut p) as f32
            }));
        }
    }
    Ok((0..n).map(|t| anchored[t / stride]).collect())
}
