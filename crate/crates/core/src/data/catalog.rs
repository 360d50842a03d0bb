use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::series::{load_series_csv, load_subject_map, LabelMode, SeriesRecord, Source};
use crate::error::{Error, Result};

/// Per-series facts the splitter and reports need.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub series_id: String,
    pub source: Source,
    pub subject_id: String,
    pub length: usize,
    pub event_counts: [usize; 3],
}

impl SeriesSummary {
    pub fn has_events(&self) -> bool {
        self.event_counts.iter().any(|&c| c > 0)
    }
}

/// Immutable set of series, ordered by series id.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    series: Vec<Arc<SeriesRecord>>,
}

/// One directory of series CSVs and the metadata file naming their subjects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDir {
    pub source: Source,
    pub dir: PathBuf,
    pub metadata: Option<PathBuf>,
}

impl Catalog {
    pub fn new(records: Vec<SeriesRecord>) -> Result<Self> {
        Self::from_shared(records.into_iter().map(Arc::new).collect())
    }

    pub fn from_shared(mut series: Vec<Arc<SeriesRecord>>) -> Result<Self> {
        series.sort_by(|a, b| a.series_id.cmp(&b.series_id));
        for w in series.windows(2) {
            if w[0].series_id == w[1].series_id {
                return Err(Error::DuplicateSeries(w[0].series_id.clone()));
            }
        }
        for s in &series {
            s.validate()?;
        }
        Ok(Self { series })
    }

    /// Loads every `*.csv` under each directory. Without a metadata file
    /// each series is its own subject.
    pub fn load(dirs: &[SourceDir], labels: LabelMode) -> Result<Self> {
        let mut records = Vec::new();
        for sd in dirs {
            let subjects = sd.metadata.as_deref().map(load_subject_map).transpose()?;
            let files = list_csv(&sd.dir)?;
            let loaded: Vec<SeriesRecord> = files
                .par_iter()
                .map(|p| load_series_csv(p, sd.source, labels))
                .collect::<Result<_>>()?;
            for mut rec in loaded {
                rec.subject_id = match &subjects {
                    Some(map) => map
                        .get(&rec.series_id)
                        .cloned()
                        .ok_or_else(|| Error::UnknownSubject(rec.series_id.clone()))?,
                    None => rec.series_id.clone(),
                };
                records.push(rec);
            }
        }
        Self::new(records)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn series(&self) -> &[Arc<SeriesRecord>] {
        &self.series
    }

    pub fn get(&self, series_id: &str) -> Option<&Arc<SeriesRecord>> {
        self.series
            .binary_search_by(|s| s.series_id.as_str().cmp(series_id))
            .ok()
            .map(|i| &self.series[i])
    }

    pub fn summaries(&self) -> Vec<SeriesSummary> {
        self.series
            .iter()
            .map(|s| SeriesSummary {
                series_id: s.series_id.clone(),
                source: s.source,
                subject_id: s.subject_id.clone(),
                length: s.len(),
                event_counts: s.event_counts(),
            })
            .collect()
    }

    /// Subject id → series ids.
    pub fn subjects(&self) -> BTreeMap<String, Vec<String>> {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for s in &self.series {
            map.entry(s.subject_id.clone())
                .or_default()
                .push(s.series_id.clone());
        }
        map
    }

    pub fn total_timepoints(&self) -> usize {
        self.series.iter().map(|s| s.len()).sum()
    }

    pub fn filter(&self, mut keep: impl FnMut(&SeriesRecord) -> bool) -> Catalog {
        Catalog {
            series: self.series.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }
}

/// `*.csv` files directly inside `dir`, sorted by name.
pub fn list_csv(dir: &Path) -> Result<Vec<PathBuf>> {
    let io_err = |source| Error::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()).map_err(io_err))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    Ok(files)
}

/// Drops defog series without a single positive label in any class.
/// tdcsfog series are always kept.
pub fn filter_training_catalog(catalog: &Catalog) -> Catalog {
    catalog.filter(|s| s.source != Source::Defog || s.event_counts().iter().any(|&c| c > 0))
}
