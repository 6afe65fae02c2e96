use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ldssl::data::{LabeledDataset, Standardizer};
use ldssl::eval::{aggregate, write_latents_csv, write_projection_csv, METRIC_NAMES};
use ldssl::experiment::{
    evaluate_model, fold_projection, project_model, run_experiment, write_metrics, ExperimentResult,
    FoldMetrics, MetricsFile, RunManifest, MANIFEST_FORMAT,
};
use ldssl::network::{read_checkpoint, write_checkpoint, Mlp};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::spec::{DatasetSpec, RunSpec};

/// Progress line on stdout; a closed pipe is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub const OUT_ENV: &str = "LDSSL_OUT";
const DEFAULT_ROOT: &str = "runs";

/// Everything `eval` and `project` need besides the two networks.
#[derive(Debug, Serialize, Deserialize)]
struct FoldMeta {
    fold: usize,
    seed: u64,
    standardizer: Option<Standardizer>,
    test_rows: Vec<usize>,
    labeled_rows: Vec<usize>,
}

fn default_dir(spec: &RunSpec) -> PathBuf {
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_ROOT), PathBuf::from);
    let name = match spec.command.as_str() {
        "sweep-m" => format!("sweep-m-k{}-s{}", spec.k, spec.seed),
        "sweep-k" => format!("sweep-k-m{:.2}-s{}", spec.m_fraction, spec.seed),
        _ => format!("{}-m{:.2}-k{}-s{}", spec.method.name(), spec.m_fraction, spec.k, spec.seed),
    };
    root.join(name)
}

/// Output staged next to its destination and moved in only once complete,
/// so a failed command leaves nothing behind.
struct Staging {
    tmp: PathBuf,
    dest: PathBuf,
}

impl Staging {
    fn new(dest: PathBuf) -> Result<Self, CliError> {
        let parent = dest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent)?;
        let name = dest.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        let tmp = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        Ok(Self { tmp, dest })
    }

    fn path(&self) -> &Path {
        &self.tmp
    }

    fn commit(self) -> Result<PathBuf, CliError> {
        if !self.dest.exists() {
            fs::rename(&self.tmp, &self.dest)?;
        } else {
            move_into(&self.tmp, &self.dest)?;
            fs::remove_dir_all(&self.tmp)?;
        }
        Ok(self.dest.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.tmp);
    }
}

fn move_into(from: &Path, to: &Path) -> std::io::Result<()> {
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            move_into(&entry.path(), &target)?;
        } else {
            fs::rename(entry.path(), target)?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

fn checkpoint_paths(dir: &Path, fold: usize) -> (PathBuf, PathBuf, PathBuf) {
    let ck = dir.join("checkpoints");
    (
        ck.join(format!("fold{fold:02}_encoder.json")),
        ck.join(format!("fold{fold:02}_classifier.json")),
        ck.join(format!("fold{fold:02}_meta.json")),
    )
}

/// Runs one experiment and writes its full output layout into `dir`.
fn run_into(spec: &RunSpec, dataset: &LabeledDataset, dir: &Path) -> Result<ExperimentResult, CliError> {
    let options = spec.options();
    let result = run_experiment(dataset, &options)?;
    let spec_value = serde_json::to_value(spec).expect("spec serializes");

    fs::create_dir_all(dir.join("checkpoints"))?;
    fs::write(dir.join("spec.json"), spec.to_json())?;
    write_metrics(&dir.join("metrics.json"), &result.metrics)?;
    write_json(&dir.join("manifest.json"), &result.manifest(&options, spec_value))?;
    for fold in &result.folds {
        let (enc, cls, meta) = checkpoint_paths(dir, fold.fold);
        write_checkpoint(&enc, &fold.encoder, fold.seed)?;
        write_checkpoint(&cls, &fold.classifier, fold.seed)?;
        write_json(
            &meta,
            &FoldMeta {
                fold: fold.fold,
                seed: fold.seed,
                standardizer: fold.standardizer.clone(),
                test_rows: fold.test_rows.clone(),
                labeled_rows: fold.labeled_rows.clone(),
            },
        )?;
    }
    if let Some(first) = result.folds.first() {
        let (rows, latents, truth) = fold_projection(dataset, first)?;
        write_projection_csv(&dir.join("projection.csv"), &rows)?;
        write_latents_csv(&dir.join("latents.csv"), latents.view(), &truth)?;
    }
    Ok(result)
}

fn summary(metrics: &MetricsFile) -> String {
    format!(
        "{} m={:.2} k={}: accuracy {:.4} ± {:.4}, f1 {:.4} ± {:.4} over {} folds",
        metrics.method.name(),
        metrics.m_fraction,
        metrics.k,
        metrics.mean.accuracy,
        metrics.std.accuracy,
        metrics.mean.f1,
        metrics.std.f1,
        metrics.folds.len()
    )
}

pub fn train(spec: &RunSpec, out: Option<&Path>) -> Result<(), CliError> {
    let dataset = spec.dataset.load(spec.seed)?;
    let staging = Staging::new(out.map_or_else(|| default_dir(spec), Path::to_path_buf))?;
    let result = run_into(spec, &dataset, staging.path())?;
    let dir = staging.commit()?;
    say!("{}", summary(&result.metrics));
    say!("wrote {}", dir.display());
    Ok(())
}

pub fn sweep_m(spec: &RunSpec, out: Option<&Path>) -> Result<(), CliError> {
    let dataset = spec.dataset.load(spec.seed)?;
    let staging = Staging::new(out.map_or_else(|| default_dir(spec), Path::to_path_buf))?;
    fs::write(staging.path().join("spec.json"), spec.to_json())?;
    let mut table = String::from("m,metric,mean,std\n");
    for &m in &spec.m_list {
        let point = RunSpec {
            command: "train".into(),
            m_fraction: m,
            ..spec.clone()
        };
        let result = run_into(&point, &dataset, &staging.path().join(format!("m_{m:.2}")))?;
        say!("{}", summary(&result.metrics));
        for name in METRIC_NAMES {
            let mean = result.metrics.mean.get(name).expect("known metric");
            let std = result.metrics.std.get(name).expect("known metric");
            writeln!(table, "{m},{name},{mean},{std}").expect("string write");
        }
    }
    fs::write(staging.path().join("sweep_m.csv"), table)?;
    let dir = staging.commit()?;
    say!("wrote {}", dir.display());
    Ok(())
}

pub fn sweep_k(spec: &RunSpec, out: Option<&Path>) -> Result<(), CliError> {
    let dataset = spec.dataset.load(spec.seed)?;
    let staging = Staging::new(out.map_or_else(|| default_dir(spec), Path::to_path_buf))?;
    fs::write(staging.path().join("spec.json"), spec.to_json())?;
    let mut table = String::from("k,accuracy_mean,accuracy_std,label_seconds,label_seconds_per_fold\n");
    for &k in &spec.k_list {
        let mut point = RunSpec {
            command: "train".into(),
            k,
            ..spec.clone()
        };
        point.normalize();
        let result = run_into(&point, &dataset, &staging.path().join(format!("k_{k}")))?;
        let m = &result.metrics;
        let seconds = m.total_label_seconds();
        say!("{}; label generation {seconds:.3}s", summary(m));
        writeln!(
            table,
            "{k},{},{},{seconds},{}",
            m.mean.accuracy,
            m.std.accuracy,
            seconds / m.folds.len().max(1) as f64
        )
        .expect("string write");
    }
    fs::write(staging.path().join("sweep_k.csv"), table)?;
    let dir = staging.commit()?;
    say!("wrote {}", dir.display());
    Ok(())
}

/// Metrics of a previous run, from its metrics.json, manifest.json or
/// run directory.
fn load_compare(path: &Path) -> Result<MetricsFile, CliError> {
    let path = if path.is_dir() { path.join("metrics.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::config(format!("cannot read comparison run {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let parsed = if value.get("format").and_then(|v| v.as_str()) == Some(MANIFEST_FORMAT) {
        serde_json::from_value::<RunManifest>(value).map(|m| m.metrics)
    } else {
        serde_json::from_value::<MetricsFile>(value)
    };
    parsed.map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn paired_table(other: &MetricsFile, baseline: &MetricsFile) -> Result<String, CliError> {
    if other.seed != baseline.seed {
        return Err(CliError::config(format!(
            "comparison run used seed {} but this run uses {}; folds would not be paired",
            other.seed, baseline.seed
        )));
    }
    let a = other.method.name();
    let b = baseline.method.name();
    let mut table = format!("fold,metric,{a},{b},difference\n");
    let mut joined = 0;
    for fa in &other.folds {
        let Some(fb) = baseline.folds.iter().find(|f| f.fold == fa.fold) else {
            continue;
        };
        joined += 1;
        for name in METRIC_NAMES {
            let (x, y) = (fold_metric(fa, name), fold_metric(fb, name));
            writeln!(table, "{},{name},{x},{y},{}", fa.fold, x - y).expect("string write");
        }
    }
    if joined == 0 {
        return Err(CliError::config("comparison run shares no fold ids with this run"));
    }
    Ok(table)
}

fn fold_metric(f: &FoldMetrics, name: &str) -> f64 {
    match name {
        "accuracy" => f.accuracy,
        "precision" => f.precision,
        "recall" => f.recall,
        "f1" => f.f1,
        _ => unreachable!("unknown metric {name}"),
    }
}

pub fn baseline(spec: &RunSpec, out: Option<&Path>, compare: Option<&Path>) -> Result<(), CliError> {
    let other = compare.map(load_compare).transpose()?;
    let dataset = spec.dataset.load(spec.seed)?;
    let staging = Staging::new(out.map_or_else(|| default_dir(spec), Path::to_path_buf))?;
    let result = run_into(spec, &dataset, staging.path())?;
    if let Some(other) = &other {
        fs::write(staging.path().join("paired.csv"), paired_table(other, &result.metrics)?)?;
    }
    let dir = staging.commit()?;
    say!("{}", summary(&result.metrics));
    say!("wrote {}", dir.display());
    Ok(())
}

struct SavedFold {
    meta: FoldMeta,
    encoder: Mlp,
    classifier: Mlp,
}

fn read_spec(run: &Path) -> Result<RunSpec, CliError> {
    let path = run.join("spec.json");
    let text =
        fs::read_to_string(&path).map_err(|e| CliError::config(format!("{} is not a run directory: {e}", run.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn read_fold(run: &Path, fold: usize) -> Result<SavedFold, CliError> {
    let (enc, cls, meta) = checkpoint_paths(run, fold);
    let text = fs::read_to_string(&meta)
        .map_err(|e| CliError::config(format!("no fold {fold} in {}: {e}", run.display())))?;
    let meta: FoldMeta = serde_json::from_str(&text).map_err(|e| CliError::Data {
        module: "network",
        message: format!("{}: {e}", meta.display()),
    })?;
    Ok(SavedFold {
        meta,
        encoder: read_checkpoint(&enc)?.network,
        classifier: read_checkpoint(&cls)?.network,
    })
}

fn saved_folds(run: &Path) -> Result<Vec<usize>, CliError> {
    let mut folds = Vec::new();
    let dir = run.join("checkpoints");
    let entries = fs::read_dir(&dir).map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(n) = name.strip_prefix("fold").and_then(|s| s.strip_suffix("_meta.json")) {
            if let Ok(n) = n.parse() {
                folds.push(n);
            }
        }
    }
    folds.sort_unstable();
    Ok(folds)
}

/// Re-evaluates each saved fold, either on its own test rows of the run's
/// dataset or on every labeled row of an external CSV. Writes eval.json.
pub fn eval(run: &Path, out: Option<&Path>, dataset: Option<DatasetSpec>) -> Result<(), CliError> {
    let spec = read_spec(run)?;
    let external = dataset.is_some();
    let dataset = dataset.unwrap_or_else(|| spec.dataset.clone()).load(spec.seed)?;
    let base = dataset.select(&dataset.labeled_indices());
    let folds = saved_folds(run)?;
    if folds.is_empty() {
        return Err(CliError::config(format!("{} holds no checkpoints", run.display())));
    }
    let mut reports = Vec::new();
    let mut entries = Vec::new();
    for fold in folds {
        let saved = read_fold(run, fold)?;
        let target = if external { base.clone() } else { base.select(&saved.meta.test_rows) };
        let report = evaluate_model(&saved.encoder, &saved.classifier, saved.meta.standardizer.as_ref(), &target)?;
        let c = report.confusion;
        entries.push(FoldMetrics {
            fold,
            accuracy: report.accuracy,
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
            tp: c.tp,
            fp: c.fp,
            tn: c.tn,
            fn_: c.fn_,
            encoder_seconds: 0.0,
            classifier_seconds: 0.0,
            label_seconds: 0.0,
        });
        reports.push(report);
    }
    let (mean, std) = aggregate(&reports);
    let metrics = MetricsFile {
        dataset: dataset.provenance().to_string(),
        method: spec.method,
        seed: spec.seed,
        m_fraction: spec.m_fraction,
        k: spec.k,
        folds: entries,
        mean,
        std,
    };
    let dir = out.unwrap_or(run);
    fs::create_dir_all(dir)?;
    write_metrics(&dir.join("eval.json"), &metrics)?;
    say!("{}", summary(&metrics));
    Ok(())
}

/// Writes projection_foldNN.csv and latents_foldNN.csv for one saved fold.
pub fn project(run: &Path, out: Option<&Path>, dataset: Option<DatasetSpec>, fold: usize) -> Result<(), CliError> {
    let spec = read_spec(run)?;
    let external = dataset.is_some();
    let dataset = dataset.unwrap_or_else(|| spec.dataset.clone()).load(spec.seed)?;
    let saved = read_fold(run, fold)?;
    let labeled = if external { Vec::new() } else { saved.meta.labeled_rows.clone() };
    let (rows, latents, truth) = project_model(
        &saved.encoder,
        &saved.classifier,
        saved.meta.standardizer.as_ref(),
        &dataset,
        &labeled,
    )?;
    let dir = out.unwrap_or(run);
    fs::create_dir_all(dir)?;
    let projection = dir.join(format!("projection_fold{fold:02}.csv"));
    write_projection_csv(&projection, &rows)?;
    write_latents_csv(&dir.join(format!("latents_fold{fold:02}.csv")), latents.view(), &truth)?;
    say!("wrote {}", projection.display());
    Ok(())
}
