use std::fmt::Write as _;
use std::path::Path;

use super::trainer::FoldReport;
use crate::data::CLASS_NAMES;
use crate::error::{Error, Result};
use crate::metrics::AveragePrecision;

pub const REPORT_HEADER: [&str; 11] = [
    "fold",
    "StartHesitation",
    "Turn",
    "Walking",
    "mAP",
    "undefined",
    "train_windows",
    "batches",
    "initial_loss",
    "final_loss",
    "final_lr",
];

fn ap_cell(ap: AveragePrecision) -> String {
    match ap {
        AveragePrecision::Value(v) => v.to_string(),
        AveragePrecision::NoPositives => "undefined".into(),
    }
}

/// Machine-readable report, one row per fold, values at full precision.
pub fn write_fold_reports(path: &Path, reports: &[FoldReport]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).map_err(csv_err)?;
    for r in reports {
        let undefined: Vec<&str> = r.map.undefined.iter().map(|&c| CLASS_NAMES[c]).collect();
        w.write_record([
            r.fold.to_string(),
            ap_cell(r.ap[0]),
            ap_cell(r.ap[1]),
            ap_cell(r.ap[2]),
            r.map
                .value
                .map(|v| v.to_string())
                .unwrap_or_else(|| "undefined".into()),
            undefined.join(";"),
            r.train_windows.to_string(),
            r.batches.to_string(),
            r.initial_loss.to_string(),
            r.final_loss.to_string(),
            r.final_lr.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    crate::model::write_atomic(path, &bytes)
}

/// Fixed-width table with three decimals; a `mean` row follows when
/// there is more than one fold. `*` marks a class without positives.
pub fn render_table(reports: &[FoldReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6}{:>17}{:>9}{:>9}{:>9}",
        "fold", CLASS_NAMES[0], CLASS_NAMES[1], CLASS_NAMES[2], "mAP"
    );
    let cell = |ap: AveragePrecision| match ap {
        AveragePrecision::Value(v) => format!("{v:.3}"),
        AveragePrecision::NoPositives => "*".into(),
    };
    for r in reports {
        let map = r
            .map
            .value
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "*".into());
        let _ = writeln!(
            out,
            "{:<6}{:>17}{:>9}{:>9}{:>9}",
            r.fold + 1,
            cell(r.ap[0]),
            cell(r.ap[1]),
            cell(r.ap[2]),
            map
        );
    }
    if reports.len() > 1 {
        let mean = |f: &dyn Fn(&FoldReport) -> Option<f64>| {
            let v: Vec<f64> = reports.iter().filter_map(f).collect();
            if v.is_empty() {
                "*".to_string()
            } else {
                format!("{:.3}", v.iter().sum::<f64>() / v.len() as f64)
            }
        };
        let _ = writeln!(
            out,
            "{:<6}{:>17}{:>9}{:>9}{:>9}",
            "mean",
            mean(&|r| r.ap[0].value()),
            mean(&|r| r.ap[1].value()),
            mean(&|r| r.ap[2].value()),
            mean(&|r| r.map.value)
        );
    }
    out
}
