use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fogresnet::data::{
    filter_training_catalog, write_series_csv, Catalog, LabelMode, Source, SourceDir, WindowSpec,
    CLASS_NAMES,
};
use fogresnet::folds::{stratified_group_kfold, FoldAssignment, FoldItem, Stratum};
use fogresnet::metrics::{score_classes, AveragePrecision, ClassReport, UndefinedPolicy};
use fogresnet::model::{load_checkpoint, save_checkpoint, write_atomic, Network};
use fogresnet::train::{predict_series, render_table, train_fold, write_fold_reports, FoldReport};
use log::info;

use crate::config::{DataSource, RunConfig};
use crate::{Cli, CliError, Command};

pub const PREDICTION_HEADER: [&str; 4] = ["Id", "StartHesitation", "Turn", "Walking"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldSelection {
    One(usize),
    All,
}

impl FromStr for FoldSelection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(FoldSelection::All);
        }
        s.parse()
            .map(FoldSelection::One)
            .map_err(|_| format!("expected a fold index or `all`, got `{s}`"))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(dir) = cli.output_dir {
        config.output_dir = dir;
    }
    match cli.command {
        Command::Synth { out, seed } => {
            if seed.is_some() {
                config.synth_seed = seed;
            }
            cmd_synth(&config, &out)
        }
        Command::Catalog { out } => {
            let out = out.unwrap_or_else(|| config.output_dir.join("catalog.csv"));
            cmd_catalog(&config, &out)
        }
        Command::Split { out, seed, folds } => {
            if let Some(s) = seed {
                config.split_seed = s;
            }
            if let Some(k) = folds {
                config.folds = k;
            }
            let out = out.unwrap_or_else(|| config.output_dir.join("folds.csv"));
            cmd_split(&config, &config.catalog()?, &out).map(|_| ())
        }
        Command::Train {
            fold,
            folds_file,
            seed,
            sample_budget,
            batch_size,
            eval_stride,
        } => {
            config.seed = seed.unwrap_or(config.seed);
            config.sample_budget = sample_budget.unwrap_or(config.sample_budget);
            config.batch_size = batch_size.unwrap_or(config.batch_size);
            config.eval_stride = eval_stride.unwrap_or(config.eval_stride);
            cmd_train(&config, fold, folds_file)
        }
        Command::Predict {
            checkpoints,
            tdcsfog,
            defog,
            out,
            stride,
        } => {
            let dirs = input_dirs(tdcsfog, defog)?;
            cmd_predict(&checkpoints, &dirs, config.window_future, stride, &out)
        }
        Command::Evaluate {
            predictions,
            tdcsfog,
            defog,
            out,
            undefined,
        } => {
            let policy = match undefined.as_deref() {
                None => config.undefined_policy,
                Some("zero") => UndefinedPolicy::Zero,
                Some("skip") => UndefinedPolicy::Skip,
                Some(other) => {
                    return Err(CliError::Usage(format!(
                        "--undefined must be `zero` or `skip`, got `{other}`"
                    )))
                }
            };
            let dirs = input_dirs(tdcsfog, defog)?;
            let report = cmd_evaluate(&predictions, &dirs, policy)?;
            print!("{}", metrics_table(&report));
            if let Some(out) = out {
                write_metrics(&out, &report)?;
            }
            Ok(())
        }
    }
}

fn input_dirs(
    tdcsfog: Option<PathBuf>,
    defog: Option<PathBuf>,
) -> Result<Vec<SourceDir>, CliError> {
    let dirs: Vec<SourceDir> = [(Source::Tdcsfog, tdcsfog), (Source::Defog, defog)]
        .into_iter()
        .filter_map(|(source, dir)| {
            dir.map(|dir| SourceDir {
                source,
                dir,
                metadata: None,
            })
        })
        .collect();
    if dirs.is_empty() {
        return Err(CliError::Usage("give --tdcsfog and/or --defog".into()));
    }
    if let Some(d) = dirs.iter().find(|d| !d.dir.is_dir()) {
        return Err(CliError::Data(format!(
            "{} is not a directory",
            d.dir.display()
        )));
    }
    Ok(dirs)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn csv_bytes(
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    Ok(write_atomic(path, bytes)?)
}

fn cmd_synth(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let DataSource::Synthetic {
        config: synth,
        seed,
    } = config.data_source()?
    else {
        return Err(CliError::Usage(
            "synth needs a config with synth_* settings".into(),
        ));
    };
    let catalog = fogresnet::data::synthesize_dataset(&synth, seed)?;
    for source in [Source::Tdcsfog, Source::Defog] {
        let dir = out.join(source.as_str());
        create_dir(&dir)?;
        let mut rows = Vec::new();
        for s in catalog.series().iter().filter(|s| s.source == source) {
            write_series_csv(&dir.join(format!("{}.csv", s.series_id)), s)?;
            rows.push(vec![s.series_id.clone(), s.subject_id.clone()]);
        }
        write_file(
            &out.join(format!("{source}_metadata.csv")),
            &csv_bytes(&["Id", "Subject"], rows)?,
        )?;
    }
    info!(
        "wrote {} synthetic series to {}",
        catalog.len(),
        out.display()
    );
    Ok(())
}

fn cmd_catalog(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let catalog = config.catalog()?;
    let retained = filter_training_catalog(&catalog);
    let rows = catalog.summaries().into_iter().map(|s| {
        let kept = retained.get(&s.series_id).is_some();
        let mut row = vec![
            s.series_id,
            s.source.to_string(),
            s.subject_id,
            s.length.to_string(),
        ];
        row.extend(s.event_counts.iter().map(|c| c.to_string()));
        row.push(kept.to_string());
        row
    });
    let header = [
        "series_id",
        "source",
        "subject_id",
        "length",
        CLASS_NAMES[0],
        CLASS_NAMES[1],
        CLASS_NAMES[2],
        "retained",
    ];
    write_file(out, &csv_bytes(&header, rows)?)?;
    println!(
        "{} series from {} subjects, {} timepoints; {} retained for training",
        catalog.len(),
        catalog.subjects().len(),
        catalog.total_timepoints(),
        retained.len()
    );
    Ok(())
}

fn cmd_split(
    config: &RunConfig,
    catalog: &Catalog,
    out: &Path,
) -> Result<FoldAssignment, CliError> {
    let retained = filter_training_catalog(catalog);
    let items: Vec<FoldItem> = retained
        .summaries()
        .iter()
        .map(FoldItem::from_summary)
        .collect();
    let folds = stratified_group_kfold(&items, config.folds, config.split_seed)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    folds.write_csv(out)?;
    let counts = folds.stratum_counts(&items);
    println!(
        "{:<6}{:>9}{:>17}{:>9}{:>9}{:>10}",
        "fold", "none", "starthesitation", "turn", "walking", "subjects"
    );
    for (f, c) in counts.iter().enumerate() {
        println!(
            "{:<6}{:>9}{:>17}{:>9}{:>9}{:>10}",
            f,
            c[Stratum::None.index()],
            c[Stratum::StartHesitation.index()],
            c[Stratum::Turn.index()],
            c[Stratum::Walking.index()],
            folds.subjects_in_fold(f).len()
        );
    }
    info!("wrote {}", out.display());
    Ok(folds)
}

fn cmd_train(
    config: &RunConfig,
    selection: FoldSelection,
    folds_file: Option<PathBuf>,
) -> Result<(), CliError> {
    let train_config = config.train_config()?;
    let catalog = config.catalog()?;
    let folds_path = folds_file.unwrap_or_else(|| config.output_dir.join("folds.csv"));
    let folds = if folds_path.is_file() {
        FoldAssignment::read_csv(&folds_path, Some(config.folds))?
    } else {
        info!("no fold file at {}, splitting now", folds_path.display());
        cmd_split(config, &catalog, &folds_path)?
    };
    let selected: Vec<usize> = match selection {
        FoldSelection::All => (0..folds.k()).collect(),
        FoldSelection::One(f) if f < folds.k() => vec![f],
        FoldSelection::One(f) => {
            return Err(CliError::Usage(format!(
                "fold {f} out of range for {} folds",
                folds.k()
            )))
        }
    };
    let ckpt_dir = config.output_dir.join("checkpoints");
    let report_dir = config.output_dir.join("reports");
    create_dir(&ckpt_dir)?;
    create_dir(&report_dir)?;
    let mut reports: Vec<FoldReport> = Vec::new();
    for fold in selected {
        info!("training fold {fold}");
        let outcome = train_fold(&train_config, &catalog, &folds, fold)?;
        let ckpt = ckpt_dir.join(format!("fold{fold}.ckpt"));
        save_checkpoint(&ckpt, &outcome.network, &outcome.meta)?;
        write_fold_reports(
            &report_dir.join(format!("fold{fold}.csv")),
            std::slice::from_ref(&outcome.report),
        )?;
        info!(
            "fold {fold}: {} windows, loss {:.4} -> {:.4}, checkpoint {}",
            outcome.report.train_windows,
            outcome.report.initial_loss,
            outcome.report.final_loss,
            ckpt.display()
        );
        reports.push(outcome.report);
    }
    if selection == FoldSelection::All {
        write_fold_reports(&report_dir.join("cv.csv"), &reports)?;
    }
    print!("{}", render_table(&reports));
    Ok(())
}

/// Window length comes from the checkpoints, the future span from the config.
fn cmd_predict(
    checkpoints: &[PathBuf],
    dirs: &[SourceDir],
    future: usize,
    stride: usize,
    out: &Path,
) -> Result<(), CliError> {
    let models: Vec<Network<f32>> = checkpoints
        .iter()
        .map(|p| load_checkpoint::<f32>(p).map(|(net, _)| net))
        .collect::<Result<_, _>>()?;
    let window = WindowSpec::new(models[0].spec().window_length, future)?;
    let refs: Vec<&Network<f32>> = models.iter().collect();
    let catalog = Catalog::load(dirs, LabelMode::Optional)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let partial = out.with_file_name(format!(
        ".{}.partial",
        out.file_name()
            .map(|n| n.to_string_lossy())
            .unwrap_or_default()
    ));
    let io_err = |e: std::io::Error| CliError::Data(format!("{}: {e}", out.display()));
    let file = fs::File::create(&partial).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", PREDICTION_HEADER.join(",")).map_err(io_err)?;
    let mut rows = 0usize;
    for s in catalog.series() {
        let probs = predict_series(&refs, s, window, stride)?;
        for (t, p) in probs.iter().enumerate() {
            writeln!(w, "{}_{t},{},{},{}", s.series_id, p[0], p[1], p[2]).map_err(io_err)?;
        }
        rows += probs.len();
        info!("predicted {} ({} timepoints)", s.series_id, s.len());
    }
    w.into_inner()
        .map_err(|e| io_err(e.into_error()))?
        .sync_all()
        .map_err(io_err)?;
    fs::rename(&partial, out).map_err(io_err)?;
    info!(
        "wrote {rows} rows from {} model(s) to {}",
        models.len(),
        out.display()
    );
    Ok(())
}

/// Joins predictions to the labeled series by `Id` and scores them.
pub fn cmd_evaluate(
    predictions: &Path,
    dirs: &[SourceDir],
    policy: UndefinedPolicy,
) -> Result<ClassReport, CliError> {
    let catalog = Catalog::load(dirs, LabelMode::Required)?;
    let mut slots: HashMap<&str, Vec<Option<[f64; 3]>>> = catalog
        .series()
        .iter()
        .map(|s| (s.series_id.as_str(), vec![None; s.len()]))
        .collect();
    let data_err = |m: String| CliError::Data(format!("{}: {m}", predictions.display()));
    let mut reader = csv::Reader::from_path(predictions).map_err(|e| data_err(e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| data_err(e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != PREDICTION_HEADER {
        return Err(data_err(format!(
            "header must be {}",
            PREDICTION_HEADER.join(",")
        )));
    }
    for rec in reader.records() {
        let rec = rec.map_err(|e| data_err(e.to_string()))?;
        let id = &rec[0];
        let slot = id
            .rsplit_once('_')
            .and_then(|(series, t)| Some((slots.get_mut(series)?, t.parse::<usize>().ok()?)))
            .and_then(|(v, t)| v.get_mut(t));
        let Some(slot) = slot else {
            return Err(data_err(format!("Id `{id}` matches no labeled timepoint")));
        };
        if slot.is_some() {
            return Err(data_err(format!("Id `{id}` appears twice")));
        }
        let mut p = [0.0; 3];
        for c in 0..3 {
            p[c] = rec[c + 1]
                .trim()
                .parse::<f64>()
                .map_err(|_| data_err(format!("Id `{id}`: bad probability `{}`", &rec[c + 1])))?;
        }
        *slot = Some(p);
    }
    let mut scores: [Vec<f64>; 3] = Default::default();
    let mut labels: [Vec<u8>; 3] = Default::default();
    for s in catalog.series() {
        for (t, p) in slots[s.series_id.as_str()].iter().enumerate() {
            let p =
                p.ok_or_else(|| data_err(format!("no prediction for Id `{}_{t}`", s.series_id)))?;
            for c in 0..3 {
                scores[c].push(p[c]);
                labels[c].push(s.labels[c][t]);
            }
        }
    }
    Ok(score_classes(scores, labels, policy)?)
}

fn ap_text(ap: AveragePrecision, digits: usize) -> String {
    match ap {
        AveragePrecision::Value(v) => format!("{v:.digits$}"),
        AveragePrecision::NoPositives => "undefined".into(),
    }
}

fn metrics_table(r: &ClassReport) -> String {
    let mut out = String::new();
    for (c, name) in CLASS_NAMES.iter().enumerate() {
        out.push_str(&format!("{name:<16}{:>10}\n", ap_text(r.ap[c], 4)));
    }
    let map = r
        .map
        .value
        .map(|v| format!("{v:.4}"))
        .unwrap_or_else(|| "undefined".into());
    out.push_str(&format!("{:<16}{map:>10}\n", "mAP"));
    out
}

fn write_metrics(path: &Path, r: &ClassReport) -> Result<(), CliError> {
    let mut rows: Vec<Vec<String>> = CLASS_NAMES
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let flag = r.map.undefined.contains(&c).to_string();
            let value = r.ap[c]
                .value()
                .map(|v| v.to_string())
                .unwrap_or_else(|| "undefined".into());
            vec![name.to_string(), value, flag]
        })
        .collect();
    rows.push(vec![
        "mAP".into(),
        r.map
            .value
            .map(|v| v.to_string())
            .unwrap_or_else(|| "undefined".into()),
        (!r.map.undefined.is_empty()).to_string(),
    ]);
    write_file(path, &csv_bytes(&["metric", "value", "undefined"], rows)?)
}
