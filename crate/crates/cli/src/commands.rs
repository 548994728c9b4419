use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use flowtx_core::dataio::{
    load_checkpoint, load_csv, save_checkpoint, split, synth as generate, Checkpoint, Dataset,
    Difficulty, Profile, ProfileName, RejectionSummary,
};
use flowtx_core::metrics::{render_table, report as metrics_report, MetricsReport};
use flowtx_core::training::{train as run_training, TrainConfig};
use flowtx_core::{Error as CoreError, FlowRecord};
use serde::Serialize;

use crate::error::{CliError, CliResult, Context};
use crate::manifest::{beside, Recorder};
use crate::{DifficultyArg, EvalArgs, PredictArgs, ReportArgs, Subset, SynthArgs, TrainArgs};

const MIN_SYNTH_RECORDS: usize = 10;
/// Rejected rows listed individually before the summary line.
const REJECTIONS_SHOWN: usize = 10;

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::File { path: path.into(), source })
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::File { path: path.into(), source })
}

fn finish(path: &Path, mut w: BufWriter<File>) -> CliResult<()> {
    w.flush().map_err(|source| CliError::File { path: path.into(), source })
}

fn profile_for(name: ProfileName) -> CliResult<Profile> {
    match name {
        ProfileName::Custom => Err(CliError::Usage(
            "the custom profile has no built-in columns; use unsw, ton or synthetic".into(),
        )),
        other => Ok(Profile::by_name(other)),
    }
}

fn report_rejections(path: &Path, summary: &RejectionSummary) {
    if summary.rejected.is_empty() {
        return;
    }
    for r in summary.rejected.iter().take(REJECTIONS_SHOWN) {
        eprintln!("rejected {} row {}: column `{}` {}", path.display(), r.row, r.column, r.reason);
    }
    eprintln!(
        "{}: {} of {} rows rejected, {} accepted",
        path.display(),
        summary.rejected_count(),
        summary.rows_read,
        summary.accepted
    );
}

fn load(path: &Path, profile: &Profile) -> CliResult<Dataset> {
    let (data, summary) = load_csv(path, profile).context(format!("reading {}", path.display()))?;
    report_rejections(path, &summary);
    Ok(data)
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let rec = Recorder::start("synth");
    if args.n < MIN_SYNTH_RECORDS {
        return Err(CliError::Usage(format!("--n must be at least {MIN_SYNTH_RECORDS}, got {}", args.n)));
    }
    let difficulty = match args.difficulty {
        DifficultyArg::Separable => Difficulty::Separable,
        DifficultyArg::Noisy => Difficulty::Noisy { bayes_error: args.bayes_error },
    };
    let data = generate(args.n, args.seed, difficulty).map_err(|e| match e {
        CoreError::Config(m) => CliError::Usage(m),
        other => CliError::Core { context: "synth".into(), source: other },
    })?;
    let mut out = create(&args.out)?;
    flowtx_core::dataio::write_csv(&data, &mut out).context(format!("writing {}", args.out.display()))?;
    finish(&args.out, out)?;
    log::info!("wrote {} {difficulty} records to {}", data.len(), args.out.display());

    let manifest = args.manifest.clone().unwrap_or_else(|| beside(&args.out, ".manifest.json"));
    rec.finish(args, None, &[], &[&args.out])?.emit(Some(&manifest))
}

/// Defaults for the model kind, then the config file, then flags.
fn resolve_config(args: &TrainArgs) -> CliResult<TrainConfig> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::File { path: path.clone(), source })?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: invalid JSON: {e}", path.display())))?;
            Some(value)
        }
        None => None,
    };
    let mut config = TrainConfig::resolve(args.model, file.as_ref()).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(lr) = args.learning_rate {
        config.learning_rate = lr;
    }
    if let Some(bs) = args.batch_size {
        config.batch_size = bs;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

#[derive(Serialize)]
struct HeldOut<'a> {
    validation: Option<&'a MetricsReport>,
    test: Option<&'a MetricsReport>,
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let rec = Recorder::start("train");
    let config = resolve_config(args)?;
    let profile = profile_for(args.profile)?;
    let data = load(&args.data, &profile)?;

    let outcome = run_training(&data, &config).context("training")?;
    let last = outcome.log.last().expect("at least one epoch");
    println!(
        "final epoch {}: train loss {:.6}, train accuracy {:.4}",
        last.epoch, last.train_loss, last.train_acc
    );
    if let Some(acc) = last.val_acc {
        println!("final validation accuracy: {acc:.4}");
    }
    let name = config.model.to_string();
    if let Some(test) = &outcome.test {
        println!("held-out test split ({} records):", outcome.split.test().len());
        print!("{}", render_table(&[(&name, test)]));
    }

    let checkpoint = Checkpoint {
        model: outcome.model,
        config: Some(config.clone()),
        metrics: outcome.test.clone(),
    };
    save_checkpoint(&checkpoint, &args.out_checkpoint).context(format!("writing {}", args.out_checkpoint.display()))?;

    let log_path = args.log.clone().unwrap_or_else(|| beside(&args.out_checkpoint, ".log.csv"));
    let mut w = create(&log_path)?;
    outcome.log.write_csv(&mut w).context("writing training log")?;
    finish(&log_path, w)?;

    let metrics_path = args.metrics.clone().unwrap_or_else(|| beside(&args.out_checkpoint, ".metrics.json"));
    let held = HeldOut { validation: outcome.validation.as_ref(), test: outcome.test.as_ref() };
    write_file(&metrics_path, (serde_json::to_string_pretty(&held).expect("serializes") + "\n").as_bytes())?;

    let manifest = args.manifest.clone().unwrap_or_else(|| beside(&args.out_checkpoint, ".manifest.json"));
    let mut inputs: Vec<&Path> = vec![&args.data];
    if let Some(c) = &args.config {
        inputs.push(c);
    }
    rec.finish(args, Some(config), &inputs, &[&args.out_checkpoint, &log_path, &metrics_path])?
        .emit(Some(&manifest))
}

/// Loads a checkpoint and reads `data` with its profile (or `profile` if given).
fn scoring_inputs(checkpoint: &Path, data: &Path, profile: Option<ProfileName>) -> CliResult<(Checkpoint, Dataset)> {
    let ck = load_checkpoint(checkpoint).context(format!("loading {}", checkpoint.display()))?;
    let profile = match profile {
        None => ck.model.profile.clone(),
        Some(name) => profile_for(name)?,
    };
    let expected = ck.model.classifier.inputs();
    if profile.feature_count() != expected {
        return Err(CliError::Core {
            context: format!("checking {}", checkpoint.display()),
            source: CoreError::Incompatible(format!(
                "model was trained on {expected} features but profile `{}` has {}",
                profile.name,
                profile.feature_count()
            )),
        });
    }
    let data = match load_csv(data, &profile) {
        Ok((d, summary)) => {
            report_rejections(data, &summary);
            d
        }
        Err(CoreError::Schema(m)) => {
            return Err(CliError::Core {
                context: format!("reading {}", data.display()),
                source: CoreError::Incompatible(format!("data does not fit the checkpoint: {m}")),
            })
        }
        Err(e) => return Err(CliError::Core { context: format!("reading {}", data.display()), source: e }),
    };
    Ok((ck, data))
}

fn subset_records(ck: &Checkpoint, data: &Dataset, subset: Subset) -> CliResult<Vec<FlowRecord>> {
    if subset == Subset::All {
        return Ok(data.records().to_vec());
    }
    let config = ck
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("checkpoint has no training config to recompute the split".into()))?;
    let parts = split(data, &config.split, config.seed).context("splitting")?;
    let idx = match subset {
        Subset::Train => parts.train(),
        Subset::Validation => parts.validation(),
        Subset::Test => parts.test(),
        Subset::All => unreachable!(),
    };
    if idx.is_empty() {
        return Err(CliError::Core {
            context: "selecting subset".into(),
            source: CoreError::Dataset(format!("the {subset:?} subset is empty")),
        });
    }
    Ok(data.select(idx))
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let rec = Recorder::start("eval");
    let (ck, data) = scoring_inputs(&args.checkpoint, &args.data, args.profile)?;
    let records = subset_records(&ck, &data, args.subset)?;
    let threshold = args
        .threshold
        .or_else(|| ck.config.as_ref().map(|c| c.threshold))
        .unwrap_or(flowtx_core::metrics::DEFAULT_THRESHOLD);
    let report = ck.model.report(&records, threshold).context("scoring")?;

    let name = args.name.clone().unwrap_or_else(|| ck.model.classifier.kind().to_string());
    print!("{}", render_table(&[(&name, &report)]));
    let json = report.to_json().context("serializing metrics")?;
    println!("{json}");

    let mut outputs: Vec<&Path> = Vec::new();
    if let Some(path) = &args.json {
        write_file(path, (json + "\n").as_bytes())?;
        outputs.push(path);
    }
    if let Some(path) = &args.roc {
        let mut w = create(path)?;
        report.write_roc_csv(&mut w).context("writing ROC")?;
        finish(path, w)?;
        outputs.push(path);
    }
    rec.finish(args, ck.config.clone(), &[&args.checkpoint, &args.data], &outputs)?
        .emit(args.manifest.as_deref())
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let rec = Recorder::start("predict");
    let (ck, data) = scoring_inputs(&args.checkpoint, &args.data, args.profile)?;
    let scores = ck.model.score(data.records()).context("scoring")?;

    let mut w = csv::Writer::from_writer(create(&args.out_scores)?);
    let io = |e: csv::Error| CliError::Core { context: format!("writing {}", args.out_scores.display()), source: e.into() };
    w.write_record(["row", "score"]).map_err(io)?;
    for (r, s) in data.records().iter().zip(&scores) {
        w.write_record([r.row.to_string(), s.to_string()]).map_err(io)?;
    }
    let inner = w.into_inner().map_err(|e| CliError::File { path: args.out_scores.clone(), source: e.into_error() })?;
    finish(&args.out_scores, inner)?;
    log::info!("wrote {} scores to {}", scores.len(), args.out_scores.display());

    let manifest = args.manifest.clone().unwrap_or_else(|| beside(&args.out_scores, ".manifest.json"));
    rec.finish(args, ck.config.clone(), &[&args.checkpoint, &args.data], &[&args.out_scores])?
        .emit(Some(&manifest))
}

fn data_error(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Core {
        context: format!("reading {}", path.display()),
        source: CoreError::Dataset(format!("{}: {msg}", path.display())),
    }
}

/// One numeric column of a headered CSV: `column` if present, else the last.
fn read_column(path: &Path, column: &str) -> CliResult<Vec<String>> {
    let file = File::open(path).map_err(|source| CliError::File { path: path.into(), source })?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| data_error(path, e))?.clone();
    let idx = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(column))
        .or_else(|| headers.len().checked_sub(1))
        .ok_or_else(|| data_error(path, "no columns"))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data_error(path, e))?;
        let cell = rec.get(idx).ok_or_else(|| data_error(path, format!("row {} is short", out.len())))?;
        out.push(cell.to_string());
    }
    if out.is_empty() {
        return Err(data_error(path, "no rows"));
    }
    Ok(out)
}

fn read_scores(path: &Path) -> CliResult<Vec<f64>> {
    read_column(path, "score")?
        .iter()
        .enumerate()
        .map(|(i, s)| match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(data_error(path, format!("row {i}: `{s}` is not a finite score"))),
        })
        .collect()
}

fn read_labels(path: &Path) -> CliResult<Vec<u8>> {
    read_column(path, "label")?
        .iter()
        .enumerate()
        .map(|(i, s)| match s.as_str() {
            "0" | "0.0" => Ok(0),
            "1" | "1.0" => Ok(1),
            _ => Err(data_error(path, format!("row {i}: `{s}` is not a 0/1 label"))),
        })
        .collect()
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn report(args: &ReportArgs) -> CliResult<()> {
    let rec = Recorder::start("report");
    if !args.names.is_empty() && args.names.len() != args.scores.len() {
        return Err(CliError::Usage(format!(
            "{} names for {} score files",
            args.names.len(),
            args.scores.len()
        )));
    }
    let labels = read_labels(&args.labels)?;
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    for (k, path) in args.scores.iter().enumerate() {
        let scores = read_scores(path)?;
        if scores.len() != labels.len() {
            return Err(data_error(
                path,
                format!("{} scores but {} has {} labels", scores.len(), args.labels.display(), labels.len()),
            ));
        }
        let name = args.names.get(k).cloned().unwrap_or_else(|| stem(path));
        let r = metrics_report(&scores, &labels, args.threshold).context(format!("scoring {}", path.display()))?;
        rows.push((name, r));
    }

    let table: Vec<(&str, &MetricsReport)> = rows.iter().map(|(n, r)| (n.as_str(), r)).collect();
    print!("{}", render_table(&table));

    let mut outputs: Vec<&Path> = Vec::new();
    if let Some(path) = &args.json {
        let named: Vec<_> = rows.iter().map(|(n, r)| serde_json::json!({ "name": n, "metrics": r })).collect();
        write_file(path, (serde_json::to_string_pretty(&named).expect("serializes") + "\n").as_bytes())?;
        outputs.push(path);
    }
    let mut inputs: Vec<&Path> = args.scores.iter().map(PathBuf::as_path).collect();
    inputs.push(&args.labels);
    rec.finish(args, None, &inputs, &outputs)?.emit(args.manifest.as_deref())
}
