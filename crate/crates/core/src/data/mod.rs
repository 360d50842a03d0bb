//! Series ingestion, training catalog, window extraction and sampling.

mod catalog;
mod series;
mod synth;
mod window;

pub use catalog::{filter_training_catalog, list_csv, Catalog, SeriesSummary, SourceDir};
pub use series::{
    load_series_csv, load_subject_map, write_series_csv, LabelMode, SeriesRecord, Source,
    ACC_COLUMNS, CLASS_NAMES, TIME_COLUMN,
};
pub use synth::{synthesize_dataset, SynthConfig, SIGNATURES, STANDARD_GRAVITY};
pub use window::{
    draw_sample_budget, enumerate_samples, extract_window, fill_window, ExclusionPolicy, SampleRef,
    WindowSpec,
};
