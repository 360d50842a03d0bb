use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome classes, in the fixed order used everywhere (labels, logits,
/// report columns).
pub const CLASS_NAMES: [&str; 3] = ["StartHesitation", "Turn", "Walking"];
/// Acceleration columns: vertical, mediolateral, anteroposterior.
pub const ACC_COLUMNS: [&str; 3] = ["AccV", "AccML", "AccAP"];
pub const TIME_COLUMN: &str = "Time";

/// Recording setting. Values are kept in each source's native units
/// (m/s² for tdcsfog, g for defog) and native rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Tdcsfog,
    Defog,
}

impl Source {
    pub fn sample_rate_hz(self) -> f64 {
        match self {
            Source::Tdcsfog => 128.0,
            Source::Defog => 100.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Tdcsfog => "tdcsfog",
            Source::Defog => "defog",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tdcsfog" => Ok(Source::Tdcsfog),
            "defog" => Ok(Source::Defog),
            other => Err(Error::InvalidArgument(format!("unknown source `{other}`"))),
        }
    }
}

/// Whether label columns must be present when loading a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    Required,
    /// Missing label columns load as all-zero with `labeled = false`.
    Optional,
}

/// One recording session.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecord {
    pub series_id: String,
    pub source: Source,
    pub subject_id: String,
    pub time: Vec<f64>,
    /// V, ML, AP in native units.
    pub acc: [Vec<f32>; 3],
    /// StartHesitation, Turn, Walking as 0/1.
    pub labels: [Vec<u8>; 3],
    pub labeled: bool,
    /// Extra boolean columns (defog `Valid` / `Task`); stored, never used as features.
    pub flags: BTreeMap<String, Vec<bool>>,
}

impl SeriesRecord {
    pub fn len(&self) -> usize {
        self.acc[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.source.sample_rate_hz()
    }

    /// Positive-label count per class.
    pub fn event_counts(&self) -> [usize; 3] {
        std::array::from_fn(|c| self.labels[c].iter().filter(|&&v| v != 0).count())
    }

    /// Checks that every channel has the same length and labels are binary.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = self
            .acc
            .iter()
            .map(Vec::len)
            .chain(self.labels.iter().map(Vec::len));
        if lens.chain(std::iter::once(self.time.len())).any(|l| l != n)
            || self.flags.values().any(|f| f.len() != n)
        {
            return Err(Error::InvalidArgument(format!(
                "series `{}`: channels differ in length",
                self.series_id
            )));
        }
        if self.labels.iter().flatten().any(|&v| v > 1) {
            return Err(Error::InvalidArgument(format!(
                "series `{}`: non-binary label",
                self.series_id
            )));
        }
        Ok(())
    }
}

fn parse_label(raw: &str) -> Option<u8> {
    match raw.trim() {
        "0" => Some(0),
        "1" => Some(1),
        s => match s.parse::<f64>() {
            Ok(0.0) => Some(0),
            Ok(1.0) => Some(1),
            _ => None,
        },
    }
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim() {
        "True" | "true" | "TRUE" | "1" => Some(true),
        "False" | "false" | "FALSE" | "0" | "" => Some(false),
        _ => None,
    }
}

/// Reads one series CSV. The series id is the file stem; the subject is
/// left empty for the caller to fill from metadata.
pub fn load_series_csv(path: &Path, source: Source, labels: LabelMode) -> Result<SeriesRecord> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(std::io::BufReader::new(file));
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let index: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    let column = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let time_col = column(TIME_COLUMN)?;
    let acc_cols = [
        column(ACC_COLUMNS[0])?,
        column(ACC_COLUMNS[1])?,
        column(ACC_COLUMNS[2])?,
    ];
    let label_cols = match labels {
        LabelMode::Required => Some([
            column(CLASS_NAMES[0])?,
            column(CLASS_NAMES[1])?,
            column(CLASS_NAMES[2])?,
        ]),
        LabelMode::Optional => match CLASS_NAMES.map(|c| index.get(c).copied()) {
            [Some(a), Some(b), Some(c)] => Some([a, b, c]),
            _ => None,
        },
    };
    let mut used: Vec<usize> = vec![time_col];
    used.extend(acc_cols);
    used.extend(label_cols.iter().flatten());
    let flag_cols: Vec<(String, usize)> = headers
        .iter()
        .enumerate()
        .filter(|(i, h)| !used.contains(i) && !h.trim().is_empty())
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();

    let mut time = Vec::new();
    let mut acc: [Vec<f32>; 3] = Default::default();
    let mut lab: [Vec<u8>; 3] = Default::default();
    let mut flags: Vec<Vec<bool>> = vec![Vec::new(); flag_cols.len()];
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = i + 1;
        let cell = |c: usize| rec.get(c).unwrap_or("");
        let number_err = |c: usize, name: &str| Error::ParseNumber {
            path: path.to_path_buf(),
            row,
            column: name.to_string(),
            value: cell(c).to_string(),
        };
        time.push(
            cell(time_col)
                .trim()
                .parse::<f64>()
                .map_err(|_| number_err(time_col, TIME_COLUMN))?,
        );
        for (ch, &c) in acc_cols.iter().enumerate() {
            acc[ch].push(
                cell(c)
                    .trim()
                    .parse::<f32>()
                    .map_err(|_| number_err(c, ACC_COLUMNS[ch]))?,
            );
        }
        if let Some(cols) = &label_cols {
            for (k, &c) in cols.iter().enumerate() {
                lab[k].push(parse_label(cell(c)).ok_or_else(|| Error::NonBinaryLabel {
                    path: path.to_path_buf(),
                    row,
                    column: CLASS_NAMES[k].to_string(),
                    value: cell(c).to_string(),
                })?);
            }
        }
        for ((name, c), out) in flag_cols.iter().zip(flags.iter_mut()) {
            out.push(parse_flag(cell(*c)).ok_or_else(|| Error::InvalidFlag {
                path: path.to_path_buf(),
                row,
                column: name.clone(),
                value: cell(*c).to_string(),
            })?);
        }
    }
    if time.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let labeled = label_cols.is_some();
    if !labeled {
        lab = std::array::from_fn(|_| vec![0; time.len()]);
    }
    let series_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(SeriesRecord {
        series_id,
        source,
        subject_id: String::new(),
        time,
        acc,
        labels: lab,
        labeled,
        flags: flag_cols.into_iter().map(|(n, _)| n).zip(flags).collect(),
    })
}

/// Writes a series in the same column layout it is read from.
pub fn write_series_csv(path: &Path, series: &SeriesRecord) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec![TIME_COLUMN.to_string()];
    header.extend(ACC_COLUMNS.iter().map(|s| s.to_string()));
    if series.labeled {
        header.extend(CLASS_NAMES.iter().map(|s| s.to_string()));
    }
    header.extend(series.flags.keys().cloned());
    w.write_record(&header).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for t in 0..series.len() {
        row.clear();
        row.push(series.time[t].to_string());
        row.extend(series.acc.iter().map(|c| c[t].to_string()));
        if series.labeled {
            row.extend(series.labels.iter().map(|c| c[t].to_string()));
        }
        row.extend(
            series
                .flags
                .values()
                .map(|f| if f[t] { "True" } else { "False" }.to_string()),
        );
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a metadata CSV with `Id` and `Subject` columns.
pub fn load_subject_map(path: &Path) -> Result<HashMap<String, String>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let (id_col, subject_col) = (find("Id")?, find("Subject")?);
    let mut map = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let id = rec.get(id_col).unwrap_or("").trim().to_string();
        let subject = rec.get(subject_col).unwrap_or("").trim().to_string();
        map.insert(id, subject);
    }
    Ok(map)
}
