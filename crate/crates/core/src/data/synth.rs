//! Synthetic accelerometer recordings with injected event signatures.
//!
//! Each subject walks with a personal cadence; events replace a stretch
//! of the recording with a class-specific oscillation:
//!
//! | class           | axis | band   |
//! |-----------------|------|--------|
//! | StartHesitation | AP   | 3 Hz   |
//! | Turn            | ML   | 6 Hz   |
//! | Walking         | V    | 11 Hz  |
//!
//! Amplitudes are specified in g. tdcsfog subjects are emitted in m/s²
//! (×9.81) at 128 Hz, defog subjects in g at 100 Hz, mirroring the real
//! sources.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::catalog::Catalog;
use super::series::{SeriesRecord, Source};
use crate::error::{Error, Result};

pub const STANDARD_GRAVITY: f64 = 9.81;

/// Signature (axis index, frequency in Hz) per class.
pub const SIGNATURES: [(usize, f64); 3] = [(2, 3.0), (1, 6.0), (0, 11.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub subjects: usize,
    pub series_per_subject: usize,
    pub series_length: usize,
    /// Share of subjects recorded as defog.
    pub defog_fraction: f64,
    /// Each slot of this many samples hosts at most one event.
    pub slot_length: usize,
    /// Per-slot event probability for StartHesitation, Turn, Walking.
    pub event_probability: [f64; 3],
    pub event_min_length: usize,
    pub event_max_length: usize,
    pub noise_std_g: f64,
    pub signature_amplitude_g: f64,
    /// Prepended to subject and series ids, so separately generated sets
    /// never collide.
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 20,
            series_per_subject: 2,
            series_length: 5000,
            defog_fraction: 0.5,
            slot_length: 2500,
            event_probability: [0.15, 0.45, 0.15],
            event_min_length: 500,
            event_max_length: 1500,
            noise_std_g: 0.05,
            signature_amplitude_g: 0.4,
            id_prefix: "syn".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic config: {m}")));
        if self.subjects == 0 || self.series_per_subject == 0 || self.series_length == 0 {
            return bad("subjects, series_per_subject and series_length must be positive");
        }
        if !(0.0..=1.0).contains(&self.defog_fraction) {
            return bad("defog_fraction must lie in [0, 1]");
        }
        if self
            .event_probability
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
            || self.event_probability.iter().sum::<f64>() > 1.0 + 1e-12
        {
            return bad("event probabilities must lie in [0, 1] and sum to at most 1");
        }
        if self.slot_length == 0
            || self.event_min_length == 0
            || self.event_min_length > self.event_max_length
        {
            return bad("need slot_length > 0 and 0 < event_min_length <= event_max_length");
        }
        if self.event_max_length > self.slot_length {
            return bad("event_max_length must fit in slot_length");
        }
        if self.noise_std_g < 0.0 || self.signature_amplitude_g < 0.0 {
            return bad("noise and amplitude must be non-negative");
        }
        Ok(())
    }
}

/// Deterministic synthetic catalog for `config` and `seed`.
pub fn synthesize_dataset(config: &SynthConfig, seed: u64) -> Result<Catalog> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_defog = (config.defog_fraction * config.subjects as f64).round() as usize;
    let mut sources: Vec<Source> = (0..config.subjects)
        .map(|i| {
            if i < n_defog {
                Source::Defog
            } else {
                Source::Tdcsfog
            }
        })
        .collect();
    sources.shuffle(&mut rng);

    let mut records = Vec::with_capacity(config.subjects * config.series_per_subject);
    for (subject, &source) in sources.iter().enumerate() {
        let subject_id = format!("{}S{subject:03}", config.id_prefix);
        let cadence_hz = rng.gen_range(0.8..1.2);
        let gait_amp = rng.gen_range(0.08..0.2);
        for rep in 0..config.series_per_subject {
            let series_id = format!("{}_{subject:03}_{rep}", config.id_prefix.to_lowercase());
            records.push(synth_series(
                config,
                &mut rng,
                series_id,
                subject_id.clone(),
                source,
                cadence_hz,
                gait_amp,
            ));
        }
    }
    Catalog::new(records)
}

fn synth_series(
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
    series_id: String,
    subject_id: String,
    source: Source,
    cadence_hz: f64,
    gait_amp: f64,
) -> SeriesRecord {
    let n = config.series_length;
    let rate = source.sample_rate_hz();
    let unit = match source {
        Source::Tdcsfog => STANDARD_GRAVITY,
        Source::Defog => 1.0,
    };
    let noise = Normal::new(0.0, config.noise_std_g).expect("non-negative std");
    let phase: f64 = rng.gen_range(0.0..2.0 * PI);

    let mut acc: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(n));
    for t in 0..n {
        let g = (2.0 * PI * cadence_hz * t as f64 / rate + phase).sin() * gait_amp;
        acc[0].push(-1.0 + g + noise.sample(rng));
        acc[1].push(0.3 * g + noise.sample(rng));
        acc[2].push(0.2 + 0.6 * g + noise.sample(rng));
    }

    let mut labels: [Vec<u8>; 3] = std::array::from_fn(|_| vec![0; n]);
    let p = config.event_probability;
    let mut slot = 0;
    while slot < n {
        let slot_end = (slot + config.slot_length).min(n);
        let r: f64 = rng.gen();
        let class = if r < p[0] {
            Some(0)
        } else if r < p[0] + p[1] {
            Some(1)
        } else if r < p[0] + p[1] + p[2] {
            Some(2)
        } else {
            None
        };
        if let Some(class) = class {
            let len = rng
                .gen_range(config.event_min_length..=config.event_max_length)
                .min(slot_end - slot);
            let start = slot + rng.gen_range(0..=(slot_end - slot - len));
            let (axis, freq) = SIGNATURES[class];
            let ph: f64 = rng.gen_range(0.0..2.0 * PI);
            let taper = 10.min(len / 2).max(1);
            for (i, t) in (start..start + len).enumerate() {
                let edge = i.min(len - 1 - i);
                let env = if edge < taper {
                    0.5 - 0.5 * (PI * edge as f64 / taper as f64).cos()
                } else {
                    1.0
                };
                acc[axis][t] += config.signature_amplitude_g
                    * env
                    * (2.0 * PI * freq * i as f64 / rate + ph).sin();
                labels[class][t] = 1;
            }
        }
        slot = slot_end;
    }

    let mut flags = BTreeMap::new();
    if source == Source::Defog {
        flags.insert("Task".to_string(), vec![true; n]);
        flags.insert("Valid".to_string(), vec![true; n]);
    }
    SeriesRecord {
        series_id,
        source,
        subject_id,
        time: (0..n).map(|t| t as f64).collect(),
        acc: acc.map(|ch| ch.into_iter().map(|v| (v * unit) as f32).collect()),
        labels,
        labeled: true,
        flags,
    }
}
