//! Flat TOML run configuration.
//!
//! Keys map one-to-one onto the fields below. Command-line flags take
//! precedence over the file, and the file over built-in defaults.

use std::path::{Path, PathBuf};

use fogresnet::data::{synthesize_dataset, Catalog};
use fogresnet::data::{ExclusionPolicy, LabelMode, Source, SourceDir, SynthConfig, WindowSpec};
use fogresnet::metrics::UndefinedPolicy;
use fogresnet::model::{NetworkSpec, KERNEL_SIZE};
use fogresnet::train::{AdamWConfig, PlateauConfig, TrainConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,

    pub tdcsfog_dir: Option<PathBuf>,
    pub tdcsfog_metadata: Option<PathBuf>,
    pub defog_dir: Option<PathBuf>,
    pub defog_metadata: Option<PathBuf>,

    /// Presence of this key selects synthetic data.
    pub synth_seed: Option<u64>,
    pub synth_subjects: Option<usize>,
    pub synth_series_per_subject: Option<usize>,
    pub synth_series_length: Option<usize>,
    pub synth_defog_fraction: Option<f64>,
    pub synth_slot_length: Option<usize>,
    pub synth_event_probability: Option<[f64; 3]>,
    pub synth_event_min_length: Option<usize>,
    pub synth_event_max_length: Option<usize>,
    pub synth_noise_std_g: Option<f64>,
    pub synth_signature_amplitude_g: Option<f64>,
    pub synth_id_prefix: Option<String>,

    pub folds: usize,
    pub split_seed: u64,

    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub sample_budget: usize,
    pub initial_lr: f64,
    pub eval_stride: usize,
    pub exclusion: ExclusionPolicy,
    pub undefined_policy: UndefinedPolicy,
    pub window_total: usize,
    pub window_future: usize,

    pub adamw_beta1: f64,
    pub adamw_beta2: f64,
    pub adamw_eps: f64,
    pub adamw_weight_decay: f64,

    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub plateau_min_delta: f64,
    pub plateau_min_lr: f64,
    pub plateau_segment_batches: usize,

    pub network_filters: Vec<usize>,
    pub network_strides: Vec<usize>,
    pub network_kernel: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let spec = NetworkSpec::default();
        Self {
            output_dir: PathBuf::from("run"),
            tdcsfog_dir: None,
            tdcsfog_metadata: None,
            defog_dir: None,
            defog_metadata: None,
            synth_seed: None,
            synth_subjects: None,
            synth_series_per_subject: None,
            synth_series_length: None,
            synth_defog_fraction: None,
            synth_slot_length: None,
            synth_event_probability: None,
            synth_event_min_length: None,
            synth_event_max_length: None,
            synth_noise_std_g: None,
            synth_signature_amplitude_g: None,
            synth_id_prefix: None,
            folds: 5,
            split_seed: 0,
            seed: t.seed,
            batch_size: t.batch_size,
            epochs: t.epochs,
            sample_budget: t.sample_budget,
            initial_lr: t.initial_lr,
            eval_stride: t.eval_stride,
            exclusion: t.exclusion,
            undefined_policy: t.undefined_policy,
            window_total: t.window.total,
            window_future: t.window.future,
            adamw_beta1: t.optimizer.beta1,
            adamw_beta2: t.optimizer.beta2,
            adamw_eps: t.optimizer.eps,
            adamw_weight_decay: t.optimizer.weight_decay,
            plateau_patience: t.scheduler.patience,
            plateau_factor: t.scheduler.factor,
            plateau_min_delta: t.scheduler.min_delta,
            plateau_min_lr: t.scheduler.min_lr,
            plateau_segment_batches: t.scheduler.segment_batches,
            network_filters: spec.blocks.iter().map(|b| b.out_channels).collect(),
            network_strides: spec.blocks.iter().map(|b| b.stride).collect(),
            network_kernel: KERNEL_SIZE,
        }
    }
}

/// Where the series come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files(Vec<SourceDir>),
    Synthetic { config: SynthConfig, seed: u64 },
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    fn synth_keys_set(&self) -> bool {
        self.synth_seed.is_some()
            || self.synth_subjects.is_some()
            || self.synth_series_per_subject.is_some()
            || self.synth_series_length.is_some()
            || self.synth_defog_fraction.is_some()
            || self.synth_slot_length.is_some()
            || self.synth_event_probability.is_some()
            || self.synth_event_min_length.is_some()
            || self.synth_event_max_length.is_some()
            || self.synth_noise_std_g.is_some()
            || self.synth_signature_amplitude_g.is_some()
            || self.synth_id_prefix.is_some()
    }

    pub fn synth_config(&self) -> SynthConfig {
        let d = SynthConfig::default();
        SynthConfig {
            subjects: self.synth_subjects.unwrap_or(d.subjects),
            series_per_subject: self
                .synth_series_per_subject
                .unwrap_or(d.series_per_subject),
            series_length: self.synth_series_length.unwrap_or(d.series_length),
            defog_fraction: self.synth_defog_fraction.unwrap_or(d.defog_fraction),
            slot_length: self.synth_slot_length.unwrap_or(d.slot_length),
            event_probability: self.synth_event_probability.unwrap_or(d.event_probability),
            event_min_length: self.synth_event_min_length.unwrap_or(d.event_min_length),
            event_max_length: self.synth_event_max_length.unwrap_or(d.event_max_length),
            noise_std_g: self.synth_noise_std_g.unwrap_or(d.noise_std_g),
            signature_amplitude_g: self
                .synth_signature_amplitude_g
                .unwrap_or(d.signature_amplitude_g),
            id_prefix: self.synth_id_prefix.clone().unwrap_or(d.id_prefix),
        }
    }

    /// Exactly one of directories or synthetic settings must be given.
    pub fn data_source(&self) -> Result<DataSource, CliError> {
        let files = self.tdcsfog_dir.is_some() || self.defog_dir.is_some();
        match (files, self.synth_keys_set()) {
            (true, true) => Err(CliError::Usage(
                "config mixes data directories with synth_* settings".into(),
            )),
            (false, false) => Err(CliError::Usage(
                "config names no data: set tdcsfog_dir/defog_dir or synth_seed".into(),
            )),
            (false, true) => {
                let seed = self
                    .synth_seed
                    .ok_or_else(|| CliError::Usage("synthetic data needs synth_seed".into()))?;
                let config = self.synth_config();
                config.validate()?;
                Ok(DataSource::Synthetic { config, seed })
            }
            (true, false) => {
                let mut dirs = Vec::new();
                for (source, dir, meta) in [
                    (Source::Tdcsfog, &self.tdcsfog_dir, &self.tdcsfog_metadata),
                    (Source::Defog, &self.defog_dir, &self.defog_metadata),
                ] {
                    let Some(dir) = dir else { continue };
                    if !dir.is_dir() {
                        return Err(CliError::Data(format!(
                            "{source} data directory {} does not exist",
                            dir.display()
                        )));
                    }
                    if let Some(m) = meta {
                        if !m.is_file() {
                            return Err(CliError::Data(format!(
                                "{source} metadata file {} does not exist",
                                m.display()
                            )));
                        }
                    }
                    dirs.push(SourceDir {
                        source,
                        dir: dir.clone(),
                        metadata: meta.clone(),
                    });
                }
                Ok(DataSource::Files(dirs))
            }
        }
    }

    /// The labeled catalog the config describes.
    pub fn catalog(&self) -> Result<Catalog, CliError> {
        match self.data_source()? {
            DataSource::Files(dirs) => Ok(Catalog::load(&dirs, LabelMode::Required)?),
            DataSource::Synthetic { config, seed } => Ok(synthesize_dataset(&config, seed)?),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        if self.network_filters.len() != self.network_strides.len()
            || self.network_filters.is_empty()
        {
            return Err(CliError::Usage(
                "network_filters and network_strides must be non-empty and equally long".into(),
            ));
        }
        let schedule: Vec<(usize, usize)> = self
            .network_filters
            .iter()
            .copied()
            .zip(self.network_strides.iter().copied())
            .collect();
        let config = TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            sample_budget: self.sample_budget,
            initial_lr: self.initial_lr,
            seed: self.seed,
            optimizer: AdamWConfig {
                beta1: self.adamw_beta1,
                beta2: self.adamw_beta2,
                eps: self.adamw_eps,
                weight_decay: self.adamw_weight_decay,
            },
            scheduler: PlateauConfig {
                patience: self.plateau_patience,
                factor: self.plateau_factor,
                min_delta: self.plateau_min_delta,
                min_lr: self.plateau_min_lr,
                segment_batches: self.plateau_segment_batches,
            },
            window: WindowSpec {
                total: self.window_total,
                future: self.window_future,
            },
            exclusion: self.exclusion,
            eval_stride: self.eval_stride,
            undefined_policy: self.undefined_policy,
            network: NetworkSpec::from_schedule(
                3,
                self.window_total,
                &schedule,
                self.network_kernel,
                3,
            ),
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_the_training_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.train_config().unwrap(), TrainConfig::default());
        assert_eq!(c.folds, 5);
    }

    #[test]
    fn unknown_keys_and_mixed_sources_are_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
        let c: RunConfig = toml::from_str("synth_seed = 1\ndefog_dir = \"x\"").unwrap();
        assert!(matches!(c.data_source(), Err(CliError::Usage(_))));
        assert!(matches!(
            RunConfig::default().data_source(),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn synthetic_keys_override_generator_defaults() {
        let c: RunConfig =
            toml::from_str("synth_seed = 4\nsynth_subjects = 6\nsynth_id_prefix = \"h\"").unwrap();
        match c.data_source().unwrap() {
            DataSource::Synthetic { config, seed } => {
                assert_eq!(seed, 4);
                assert_eq!(config.subjects, 6);
                assert_eq!(config.id_prefix, "h");
                assert_eq!(config.series_length, SynthConfig::default().series_length);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_directory_is_a_data_error() {
        let c: RunConfig = toml::from_str("tdcsfog_dir = \"/definitely/not/here\"").unwrap();
        assert!(matches!(c.data_source(), Err(CliError::Data(_))));
    }
}
