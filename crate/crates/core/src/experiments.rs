//! Seeded multi-trial benchmarks over a grid of losses, α and margin sweeps,
//! and report emission.
//!
//! Every trial `t` derives its seed from `(master_seed, t)`; the split, the
//! model initialisation and the shuffle stream all come from that seed, so
//! every loss in a benchmark sees identical splits and identical hidden-layer
//! initialisations. Trials may run on several threads; results are always
//! assembled in `(loss, trial)` order.
//!
//! Files written to the output directory:
//!
//! | file | content |
//! |------|---------|
//! | `trials/<loss>_trial<t>.json` | one [`TrialReport`] |
//! | `aggregate.json` | the full [`AggregateReport`] |
//! | `trials.csv` | one row per loss × trial |
//! | `confusion_<loss>.csv` | mean test confusion matrix over trials |
//! | `roc_<loss>_class<k>.csv` | one-vs-rest ROC on test scores pooled over trials |
//! | `sweep_alpha.csv`, `sweep_margin.csv` | `(alpha[, margin], mean_qwk, std_qwk)` |
//! | `summary.md` | mean ± std tables, metrics as rows and losses as columns |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_csv, Dataset, SplitSpec, SyntheticParams};
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossSpec};
use crate::metrics::{
    evaluate, mean_confusion, mean_confusion_csv, roc_auc, ConfusionMatrix, EvalExtras,
    MetricBundle,
};
use crate::model::{Activation, Head, MlpConfig, MlpModel};
use crate::numerics::{derive_seed, mean_std};
use crate::trainer::{extract_features, predict, train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        #[serde(default)]
        params: SyntheticParams,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
        #[serde(default)]
        num_classes: Option<usize>,
    },
}

fn default_label_column() -> String {
    "label".into()
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            params: SyntheticParams::default(),
        }
    }
}

impl DatasetSource {
    /// Synthetic data is generated from a seed derived from the master seed.
    pub fn load(&self, master_seed: u64) -> Result<Dataset> {
        match self {
            DatasetSource::Synthetic { params } => {
                generate_synthetic(params, derive_seed(master_seed, DATASET_STREAM))
            }
            DatasetSource::Csv {
                path,
                label_column,
                num_classes,
            } => load_csv(path, label_column, *num_classes),
        }
    }
}

const DATASET_STREAM: u64 = 0x0DA7_A5E7;
const SPLIT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32, 16],
            activation: Activation::Relu,
        }
    }
}

/// Fractions of the per-trial split; the split seed comes from the trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub stratified: bool,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            stratified: true,
        }
    }
}

impl SplitFractions {
    fn with_seed(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train: self.train,
            val: self.val,
            test: self.test,
            stratified: self.stratified,
            seed,
        }
    }
}

/// The losses compared in the default benchmark.
pub fn default_loss_grid() -> Vec<LossKind> {
    vec![
        LossKind::Ce,
        LossKind::MseReg,
        LossKind::Corn,
        LossKind::co2_default(),
        LossKind::ho2_default(),
        LossKind::CdwCe { alpha: 5.0 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub split: SplitFractions,
    pub losses: Vec<LossKind>,
    pub n_trials: usize,
    pub master_seed: u64,
    /// Where to write reports; nothing is written when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for independent trials. Does not affect any result.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            split: SplitFractions::default(),
            losses: default_loss_grid(),
            n_trials: 10,
            master_seed: 0,
            output_dir: None,
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.losses.is_empty() {
            return Err(Error::Config("loss grid is empty".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        for loss in &self.losses {
            loss.validate()?;
        }
        for (i, a) in self.losses.iter().enumerate() {
            if self.losses[..i].contains(a) {
                return Err(Error::Config(format!("loss {a} listed twice")));
            }
        }
        self.train.validate()?;
        self.split.with_seed(0).validate()?;
        if self.model.hidden_dims.is_empty() || self.model.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden_dims must be non-empty and positive".into()));
        }
        if let DatasetSource::Synthetic { params } = &self.dataset {
            params.validate()?;
        }
        Ok(())
    }

    /// Copy without fields that only affect where and how fast a run happens.
    fn recorded(&self) -> Self {
        Self {
            output_dir: None,
            jobs: None,
            ..self.clone()
        }
    }
}

/// Seed of trial `index` under `master_seed`.
pub fn trial_seed(master_seed: u64, index: usize) -> u64 {
    derive_seed(master_seed, index as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub selected_epoch: usize,
    pub epochs_run: usize,
    pub final_train_loss: f64,
    pub best_val_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub loss: LossKind,
    pub label: String,
    pub trial: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub status: TrialStatus,
    pub metrics: Option<MetricBundle>,
    pub confusion: Option<ConfusionMatrix>,
    pub train: Option<TrainSummary>,
}

impl TrialReport {
    pub fn is_completed(&self) -> bool {
        self.status == TrialStatus::Completed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl MetricSummary {
    fn from_values(values: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&values);
        Self { mean, std, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossAggregate {
    pub loss: LossKind,
    pub label: String,
    pub completed: usize,
    pub failed: usize,
    /// Set when some trials failed and the summary covers only the rest.
    pub flagged: bool,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub mean_confusion: Option<Vec<Vec<f64>>>,
}

impl LossAggregate {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub margin: Option<f64>,
    pub mean_qwk: f64,
    pub std_qwk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sweep {
    Alpha { rows: Vec<SweepRow> },
    Margin { alpha: f64, rows: Vec<SweepRow> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub config: ExperimentConfig,
    pub num_classes: usize,
    pub losses: Vec<LossAggregate>,
    pub trials: Vec<TrialReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sweep: Option<Sweep>,
}

impl AggregateReport {
    pub fn loss(&self, kind: &LossKind) -> Option<&LossAggregate> {
        self.losses.iter().find(|l| &l.loss == kind)
    }

    pub fn trials_for<'a>(&'a self, kind: &'a LossKind) -> impl Iterator<Item = &'a TrialReport> + 'a {
        self.trials.iter().filter(move |t| &t.loss == kind)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Test-set labels and per-class scores of one trial, kept for pooled ROC curves.
struct TrialScores {
    truth: Vec<usize>,
    class_probs: Vec<Vec<f64>>,
}

struct TrialOutcome {
    report: TrialReport,
    scores: Option<TrialScores>,
}

fn run_trial(
    config: &ExperimentConfig,
    dataset: &Dataset,
    loss: LossKind,
    trial: usize,
) -> Result<TrialOutcome> {
    let seed = trial_seed(config.master_seed, trial);
    let k = dataset.num_classes();
    let spec = LossSpec::new(loss, k)?;
    let (train_set, val_set, test_set) =
        dataset.split(&config.split.with_seed(derive_seed(seed, SPLIT_STREAM)))?;
    let model = MlpModel::init(MlpConfig {
        input_dim: dataset.input_dim(),
        hidden_dims: config.model.hidden_dims.clone(),
        head: Head::for_loss(loss.head(), k),
        activation: config.model.activation,
        init_seed: derive_seed(seed, INIT_STREAM),
    })?;
    let train_cfg = TrainConfig {
        seed: derive_seed(seed, SHUFFLE_STREAM),
        ..config.train.clone()
    };

    let failed = |error: &Error| TrialOutcome {
        report: TrialReport {
            loss,
            label: loss.to_string(),
            trial,
            seed,
            status: TrialStatus::Failed {
                error: error.to_string(),
            },
            metrics: None,
            confusion: None,
            train: None,
        },
        scores: None,
    };

    let (model, log) = match train(model, &spec, &train_set, &val_set, &train_cfg) {
        Ok(r) => r,
        Err(e @ Error::Divergence { .. }) => return Ok(failed(&e)),
        Err(e) => return Err(e),
    };
    if test_set.is_empty() {
        return Err(Error::Config("test split is empty".into()));
    }
    let pred = predict(&model, test_set.features(), &spec)?;
    let features = extract_features(&model, test_set.features())?;
    let evaluated = evaluate(
        test_set.labels(),
        &pred.labels,
        k,
        EvalExtras {
            class_scores: pred.class_probs.as_deref(),
            features: Some(&features),
        },
    );
    let (metrics, confusion) = match evaluated {
        Ok(r) => r,
        Err(e @ Error::UndefinedMetric(_)) => return Ok(failed(&e)),
        Err(e) => return Err(e),
    };
    let summary = TrainSummary {
        selected_epoch: log.selected_epoch,
        epochs_run: log.epochs.len(),
        final_train_loss: log.epochs.last().map_or(f64::NAN, |e| e.train_loss),
        best_val_metric: log.best_val_metric(),
    };
    Ok(TrialOutcome {
        report: TrialReport {
            loss,
            label: loss.to_string(),
            trial,
            seed,
            status: TrialStatus::Completed,
            metrics: Some(metrics),
            confusion: Some(confusion),
            train: Some(summary),
        },
        scores: pred.class_probs.map(|class_probs| TrialScores {
            truth: test_set.labels().to_vec(),
            class_probs,
        }),
    })
}

/// Named scalar metrics of one bundle, in report order.
pub fn scalar_metrics(b: &MetricBundle) -> Vec<(String, f64)> {
    let mut out = vec![
        ("qwk".to_string(), b.qwk),
        ("kappa".to_string(), b.kappa),
        ("accuracy".to_string(), b.accuracy),
        ("macro_f1".to_string(), b.macro_f1),
        ("mae".to_string(), b.mae),
        ("far_error_rate".to_string(), b.far_error_rate),
    ];
    if let Some(r) = b.remission {
        out.push(("remission_kappa".into(), r.kappa));
        out.push(("remission_f1".into(), r.f1));
        out.push(("remission_accuracy".into(), r.accuracy));
    }
    if let Some(s) = b.silhouette {
        out.push(("silhouette".into(), s));
    }
    let aucs: Vec<f64> = b.per_class_auc.iter().flatten().copied().collect();
    for (k, auc) in b.per_class_auc.iter().enumerate() {
        if let Some(a) = auc {
            out.push((format!("auc_class{k}"), *a));
        }
    }
    if !aucs.is_empty() && aucs.len() == b.per_class_auc.len() {
        out.push(("mean_auc".into(), aucs.iter().sum::<f64>() / aucs.len() as f64));
    }
    out
}

fn aggregate(loss: LossKind, trials: &[&TrialReport]) -> LossAggregate {
    let completed: Vec<&TrialReport> = trials.iter().copied().filter(|t| t.is_completed()).collect();
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in &completed {
        if let Some(m) = &t.metrics {
            for (name, v) in scalar_metrics(m) {
                values.entry(name).or_default().push(v);
            }
        }
    }
    let matrices: Vec<ConfusionMatrix> = completed.iter().filter_map(|t| t.confusion.clone()).collect();
    let failed = trials.len() - completed.len();
    LossAggregate {
        loss,
        label: loss.to_string(),
        completed: completed.len(),
        failed,
        flagged: failed > 0,
        metrics: values
            .into_iter()
            .map(|(k, v)| (k, MetricSummary::from_values(v)))
            .collect(),
        mean_confusion: mean_confusion(&matrices),
    }
}

struct Execution {
    report: AggregateReport,
    /// Pooled test scores per loss (same order as `report.losses`).
    pooled: Vec<Option<TrialScores>>,
}

fn execute(config: &ExperimentConfig) -> Result<Execution> {
    config.validate()?;
    let dataset = config.dataset.load(config.master_seed)?;
    let jobs: Vec<(LossKind, usize)> = config
        .losses
        .iter()
        .flat_map(|&l| (0..config.n_trials).map(move |t| (l, t)))
        .collect();

    let run = || -> Vec<Result<TrialOutcome>> {
        jobs.par_iter()
            .map(|&(loss, t)| run_trial(config, &dataset, loss, t))
            .collect()
    };
    let threads = config.jobs.unwrap_or(1);
    let outcomes = if threads == 1 {
        jobs.iter()
            .map(|&(loss, t)| run_trial(config, &dataset, loss, t))
            .collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {threads} workers: {e}")))?
            .install(run)
    };
    let outcomes: Vec<TrialOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let mut losses = Vec::with_capacity(config.losses.len());
    let mut pooled = Vec::with_capacity(config.losses.len());
    for (i, &loss) in config.losses.iter().enumerate() {
        let chunk = &outcomes[i * config.n_trials..(i + 1) * config.n_trials];
        let reports: Vec<&TrialReport> = chunk.iter().map(|o| &o.report).collect();
        losses.push(aggregate(loss, &reports));
        let mut pool: Option<TrialScores> = None;
        for s in chunk.iter().filter_map(|o| o.scores.as_ref()) {
            let p = pool.get_or_insert_with(|| TrialScores {
                truth: Vec::new(),
                class_probs: Vec::new(),
            });
            p.truth.extend_from_slice(&s.truth);
            p.class_probs.extend(s.class_probs.iter().cloned());
        }
        pooled.push(pool);
    }
    let trials = outcomes.into_iter().map(|o| o.report).collect();
    Ok(Execution {
        report: AggregateReport {
            config: config.recorded(),
            num_classes: dataset.num_classes(),
            losses,
            trials,
            sweep: None,
        },
        pooled,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn finish(exec: Execution, output_dir: Option<&Path>) -> Result<AggregateReport> {
    if let Some(dir) = output_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for format in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown] {
            emit_report(&exec.report, format, dir)?;
        }
        for (agg, pool) in exec.report.losses.iter().zip(&exec.pooled) {
            let Some(pool) = pool else { continue };
            for k in 0..exec.report.num_classes {
                let scores: Vec<f64> = pool.class_probs.iter().map(|p| p[k]).collect();
                let positive: Vec<bool> = pool.truth.iter().map(|&t| t == k).collect();
                if let Ok(curve) = roc_auc(&scores, &positive) {
                    write_file(
                        &dir.join(format!("roc_{}_class{k}.csv", agg.loss.slug())),
                        &curve.to_csv(),
                    )?;
                }
            }
        }
    }
    Ok(exec.report)
}

/// Trains and evaluates every loss of the grid on `n_trials` seeded trials.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<AggregateReport> {
    let exec = execute(config)?;
    finish(exec, config.output_dir.as_deref())
}

fn check_distinct(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config(format!("{what} list is empty")));
    }
    for (i, v) in values.iter().enumerate() {
        if values[..i].contains(v) {
            return Err(Error::Config(format!("{what} {v} listed twice")));
        }
    }
    Ok(())
}

fn sweep_rows(report: &AggregateReport, rows: impl Iterator<Item = (f64, Option<f64>)>) -> Vec<SweepRow> {
    rows.zip(&report.losses)
        .map(|((alpha, margin), agg)| {
            let (mean_qwk, std_qwk) = agg
                .metric("qwk")
                .map_or((f64::NAN, f64::NAN), |m| (m.mean, m.std));
            SweepRow {
                alpha,
                margin,
                mean_qwk,
                std_qwk,
            }
        })
        .collect()
}

/// Benchmarks CDW-CE once per α. The config's own loss grid is replaced.
pub fn run_alpha_sweep(config: &ExperimentConfig, alphas: &[f64]) -> Result<AggregateReport> {
    check_distinct(alphas, "alpha")?;
    if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::Config(format!("alpha must be positive, got {a}")));
    }
    let cfg = ExperimentConfig {
        losses: alphas.iter().map(|&alpha| LossKind::CdwCe { alpha }).collect(),
        ..config.clone()
    };
    let mut exec = execute(&cfg)?;
    let rows = sweep_rows(&exec.report, alphas.iter().map(|&a| (a, None)));
    exec.report.sweep = Some(Sweep::Alpha { rows });
    finish(exec, cfg.output_dir.as_deref())
}

/// Benchmarks CDW-CE with margin at a fixed α, once per margin in `[0, 0.5)`.
pub fn run_margin_sweep(
    config: &ExperimentConfig,
    alpha: f64,
    margins: &[f64],
) -> Result<AggregateReport> {
    check_distinct(margins, "margin")?;
    if let Some(m) = margins
        .iter()
        .find(|m| !(m.is_finite() && (0.0..LossKind::MAX_MARGIN).contains(*m)))
    {
        return Err(Error::Config(format!("margin must lie in [0, 0.5), got {m}")));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    let cfg = ExperimentConfig {
        losses: margins
            .iter()
            .map(|&margin| LossKind::CdwCeMargin { alpha, margin })
            .collect(),
        ..config.clone()
    };
    let mut exec = execute(&cfg)?;
    let rows = sweep_rows(&exec.report, margins.iter().map(|&m| (alpha, Some(m))));
    exec.report.sweep = Some(Sweep::Margin { alpha, rows });
    finish(exec, cfg.output_dir.as_deref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" | "markdown-table" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

/// Writes `report` into `dir` in one format and returns the written paths.
///
/// - json: `aggregate.json` and `trials/<loss>_trial<t>.json`
/// - csv: `trials.csv`, `confusion_<loss>.csv` and the sweep table if any
/// - markdown: `summary.md`
pub fn emit_report(report: &AggregateReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, contents: String| -> Result<()> {
        write_file(&path, &contents)?;
        written.push(path);
        Ok(())
    };
    match format {
        ReportFormat::Json => {
            put(dir.join("aggregate.json"), report.to_json()?)?;
            let trials_dir = dir.join("trials");
            fs::create_dir_all(&trials_dir).map_err(|e| Error::io(&trials_dir, e))?;
            for t in &report.trials {
                put(
                    trials_dir.join(format!("{}_trial{}.json", t.loss.slug(), t.trial)),
                    serde_json::to_string_pretty(t)?,
                )?;
            }
        }
        ReportFormat::Csv => {
            put(dir.join("trials.csv"), trials_csv(report))?;
            for agg in &report.losses {
                if let Some(mean) = &agg.mean_confusion {
                    put(
                        dir.join(format!("confusion_{}.csv", agg.loss.slug())),
                        mean_confusion_csv(mean),
                    )?;
                }
            }
            match &report.sweep {
                Some(Sweep::Alpha { rows }) => {
                    let mut s = String::from("alpha,mean_qwk,std_qwk\n");
                    for r in rows {
                        let _ = writeln!(s, "{},{},{}", r.alpha, r.mean_qwk, r.std_qwk);
                    }
                    put(dir.join("sweep_alpha.csv"), s)?;
                }
                Some(Sweep::Margin { rows, .. }) => {
                    let mut s = String::from("alpha,margin,mean_qwk,std_qwk\n");
                    for r in rows {
                        let _ = writeln!(
                            s,
                            "{},{},{},{}",
                            r.alpha,
                            r.margin.unwrap_or(0.0),
                            r.mean_qwk,
                            r.std_qwk
                        );
                    }
                    put(dir.join("sweep_margin.csv"), s)?;
                }
                None => {}
            }
        }
        ReportFormat::Markdown => put(dir.join("summary.md"), markdown_summary(report))?,
    }
    Ok(written)
}

const CSV_COLUMNS: [&str; 11] = [
    "qwk",
    "kappa",
    "accuracy",
    "macro_f1",
    "mae",
    "far_error_rate",
    "remission_kappa",
    "remission_f1",
    "remission_accuracy",
    "silhouette",
    "mean_auc",
];

/// One row per loss × trial; failed trials leave the metric cells empty.
pub fn trials_csv(report: &AggregateReport) -> String {
    let mut out = String::from("loss,trial,seed,status");
    for c in CSV_COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for t in &report.trials {
        let status = match t.status {
            TrialStatus::Completed => "completed",
            TrialStatus::Failed { .. } => "failed",
        };
        let _ = write!(out, "{},{},{},{status}", t.loss.slug(), t.trial, t.seed);
        let values: BTreeMap<String, f64> = t
            .metrics
            .as_ref()
            .map(|m| scalar_metrics(m).into_iter().collect())
            .unwrap_or_default();
        for c in CSV_COLUMNS {
            out.push(',');
            if let Some(v) = values.get(c) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

fn markdown_table(report: &AggregateReport, rows: &[(&str, &str)]) -> String {
    let mut s = String::from("| Metric |");
    for l in &report.losses {
        let _ = write!(s, " {} |", l.label);
    }
    s.push_str("\n|---|");
    for _ in &report.losses {
        s.push_str("---|");
    }
    s.push('\n');
    for (title, key) in rows {
        let _ = write!(s, "| {title} |");
        for l in &report.losses {
            match l.metric(key) {
                Some(m) => {
                    let flag = if l.flagged { "*" } else { "" };
                    let _ = write!(s, " {:.4} ± {:.4}{flag} |", m.mean, m.std);
                }
                None => s.push_str(" – |"),
            }
        }
        s.push('\n');
    }
    s
}

/// Mean ± std tables with metrics as rows and losses as columns.
pub fn markdown_summary(report: &AggregateReport) -> String {
    let mut s = format!(
        "# Results\n\n{} trials per loss, master seed {}.\n\n",
        report.config.n_trials, report.config.master_seed
    );
    s.push_str(&markdown_table(
        report,
        &[("QWK", "qwk"), ("F1", "macro_f1"), ("Accuracy", "accuracy"), ("MAE", "mae")],
    ));
    if report.num_classes == 4 {
        s.push_str("\n## Remission ({0,1} vs {2,3})\n\n");
        s.push_str(&markdown_table(
            report,
            &[
                ("Kappa", "remission_kappa"),
                ("F1", "remission_f1"),
                ("Accuracy", "remission_accuracy"),
            ],
        ));
    }
    s.push_str("\n## Error structure and embeddings\n\n");
    s.push_str(&markdown_table(
        report,
        &[
            ("Errors at distance ≥ 2", "far_error_rate"),
            ("Silhouette (penultimate)", "silhouette"),
            ("Mean one-vs-rest AUC", "mean_auc"),
        ],
    ));
    if report.losses.iter().any(|l| l.flagged) {
        s.push_str("\n\\* some trials failed; statistics cover completed trials only.\n");
    }
    s
}
