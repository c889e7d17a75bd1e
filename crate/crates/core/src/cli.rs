//! Command implementations for the `rffnet` binary.
//!
//! Exit codes: 0 on success, 2 for usage errors (bad flags, task/loss
//! mismatches), 1 for data, numerical and I/O failures.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{self, Dataset, TargetColumn, TaskKind};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::model::{Fitted, Model};
use crate::objective::LossKind;
use crate::optimizer::{self, History, NumFeatures, TrainConfig};

pub const DEFAULT_LEARNING_RATES: [f64; 4] = [1e-5, 1e-4, 1e-3, 1e-2];
pub const DEFAULT_REGULARIZATIONS: [f64; 7] = [1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

#[derive(Debug, Parser)]
#[command(name = "rffnet", version, about = "Kernel learning with learned feature relevances")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic regression dataset as CSV.
    Synth(SynthArgs),
    /// Train a model and write it with its training history.
    Train(TrainArgs),
    /// Grid-search learning rate and regularization on a validation split.
    Tune(TuneArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Export scaled feature relevances, most relevant first.
    Relevances(RelevancesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Se1,
    Se2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Regression => TaskKind::Regression,
            TaskArg::Classification => TaskKind::Classification,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Squared,
    CrossEntropy,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Squared => LossKind::SquaredError,
            LossArg::CrossEntropy => LossKind::BinaryCrossEntropy,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long, env = "RFFNET_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Target column, by header name or zero-based index.
    #[arg(long, default_value = "y")]
    pub target: String,
    #[arg(long, value_enum, default_value = "regression")]
    pub task: TaskArg,
    /// Defaults to squared for regression, cross-entropy for classification.
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
}

impl DataArgs {
    fn loss(&self) -> Result<LossKind> {
        let task = TaskKind::from(self.task);
        let loss = match self.loss {
            Some(l) => LossKind::from(l),
            None => default_loss(task),
        };
        if loss != default_loss(task) {
            return Err(Error::Usage(format!(
                "loss {} does not fit a {task} task",
                loss.name()
            )));
        }
        Ok(loss)
    }

    fn load(&self) -> Result<Dataset> {
        let target: TargetColumn = self.target.parse().expect("infallible");
        data::load_csv(&self.data, &target, self.task.into())
    }
}

fn default_loss(task: TaskKind) -> LossKind {
    match task {
        TaskKind::Regression => LossKind::SquaredError,
        TaskKind::Classification => LossKind::BinaryCrossEntropy,
    }
}

fn task_of(loss: LossKind) -> TaskKind {
    match loss {
        LossKind::SquaredError => TaskKind::Regression,
        LossKind::BinaryCrossEntropy => TaskKind::Classification,
    }
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long = "patience", default_value_t = 10)]
    pub patience: usize,
    #[arg(long = "max-epochs", default_value_t = 300)]
    pub max_epochs: usize,
    #[arg(long = "batch-size", default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long = "val-fraction", default_value_t = 0.1)]
    pub val_fraction: f64,
    /// Number of random features; defaults to ⌊√n·ln n⌋ of the training split.
    #[arg(long = "num-features")]
    pub num_features: Option<usize>,
    #[arg(long, env = "RFFNET_SEED", default_value_t = 0)]
    pub seed: u64,
}

impl ConfigArgs {
    fn config(&self, eta: f64, mu: f64) -> TrainConfig {
        TrainConfig {
            eta,
            mu,
            patience: self.patience,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            val_fraction: self.val_fraction,
            seed: self.seed,
            num_features: self.num_features.map_or(NumFeatures::Auto, NumFeatures::Fixed),
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Ridge regularization on the coefficients.
    #[arg(long, default_value_t = 1e-5)]
    pub reg: f64,
    /// Model output path.
    #[arg(long)]
    pub out: PathBuf,
    /// History output path; defaults to `<out>.history`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated learning rates.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LEARNING_RATES)]
    pub lr: Vec<f64>,
    /// Comma-separated regularization values.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_REGULARIZATIONS)]
    pub reg: Vec<f64>,
    /// Report output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub target: String,
    /// Must match the model when given.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Also write the key=value report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RelevancesArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Output goes to `stdout`, diagnostics to stderr.
pub fn run<I, T>(args: I, stdout: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(text) => {
            let _ = stdout.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

/// Runs a parsed command, returning what it prints on success.
pub fn execute(command: Command) -> Result<String> {
    match command {
        Command::Synth(a) => synth(&a),
        Command::Train(a) => train(&a),
        Command::Tune(a) => tune(&a),
        Command::Eval(a) => eval(&a),
        Command::Relevances(a) => relevances(&a),
    }
}

pub fn synth(a: &SynthArgs) -> Result<String> {
    let ds = match a.kind {
        SynthKind::Se1 => data::gen_se1(a.n, a.seed, a.noise)?,
        SynthKind::Se2 => data::gen_se2(a.n, a.seed, a.noise)?,
    };
    data::write_csv(&ds, &a.out, "y")?;
    Ok(format!("rows={}\nfeatures={}\nout={}\n", ds.n(), ds.p(), a.out.display()))
}

/// Writes `bytes` next to `path` and renames into place, so a failed run
/// never leaves a partial file behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn history_text(history: &History, config: &TrainConfig) -> String {
    let rule = match config.num_features {
        NumFeatures::Auto => "auto floor(sqrt(n_train)*ln(n_train))",
        NumFeatures::Fixed(_) => "fixed",
    };
    let mut out = String::new();
    let _ = writeln!(out, "# n_train={}", history.n_train);
    let _ = writeln!(out, "# n_val={}", history.n_val);
    let _ = writeln!(out, "# num_features={}", history.num_features);
    let _ = writeln!(out, "# num_features_rule={rule}");
    let _ = writeln!(out, "# best_epoch={}", history.best_epoch);
    let _ = writeln!(out, "# train_loss=mean minibatch loss before each update");
    out.push_str("epoch\ttrain_loss\tval_loss\tseconds\n");
    for r in &history.records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.6}",
            r.epoch, r.train_loss, r.val_loss, r.elapsed
        );
    }
    out
}

/// Validation score of a fitted model: MSE for regression, AUC for
/// classification.
pub fn validation_score(model: &Model, val: &Dataset) -> Result<f64> {
    match model.loss() {
        LossKind::SquaredError => crate::metrics::mse(&val.y, &model.predict(&val.x)?),
        LossKind::BinaryCrossEntropy => crate::metrics::auc(&val.y, &model.predict(&val.x)?),
    }
}

fn criterion_name(loss: LossKind) -> &'static str {
    match loss {
        LossKind::SquaredError => "mse",
        LossKind::BinaryCrossEntropy => "auc",
    }
}

fn validation_split(data: &Dataset, config: &TrainConfig) -> Result<Dataset> {
    let (_, val) = optimizer::split_indices(data.n(), config.val_fraction, config.seed)?;
    Ok(data.subset(&val))
}

pub fn train(a: &TrainArgs) -> Result<String> {
    let loss = a.data.loss()?;
    let ds = a.data.load()?;
    let config = a.config.config(a.lr, a.reg);
    let Fitted { model, history } = Model::fit(&ds, &config, loss)?;
    let score = validation_score(&model, &validation_split(&ds, &config)?)?;

    let history_path = a.history.clone().unwrap_or_else(|| {
        let mut p = a.out.as_os_str().to_owned();
        p.push(".history");
        PathBuf::from(p)
    });
    write_atomic(&a.out, &model.to_bytes())?;
    write_atomic(&history_path, history_text(&history, &config).as_bytes())?;

    let last = history.records.last().map(|r| r.elapsed).unwrap_or(0.0);
    Ok(format!(
        "model={}\nhistory={}\nepochs={}\nbest_epoch={}\nnum_features={}\nval_{}={}\nfit_seconds={:.3}\n",
        a.out.display(),
        history_path.display(),
        history.records.len(),
        history.best_epoch,
        history.num_features,
        criterion_name(loss),
        score,
        last
    ))
}

/// Outcome of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneCell {
    pub eta: f64,
    pub mu: f64,
    pub result: std::result::Result<CellScore, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellScore {
    pub score: f64,
    pub epochs: usize,
    pub best_epoch: usize,
}

/// Index of the winning cell: lowest MSE or highest AUC, ties broken by
/// smaller regularization, then smaller learning rate. Failed cells never win.
pub fn select_winner(cells: &[TuneCell], loss: LossKind) -> Option<usize> {
    let key = |c: &TuneCell| match (&c.result, loss) {
        (Ok(s), LossKind::SquaredError) => Some(s.score),
        (Ok(s), LossKind::BinaryCrossEntropy) => Some(-s.score),
        (Err(_), _) => None,
    };
    cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| key(c).filter(|k| !k.is_nan()).map(|k| (i, k)))
        .min_by(|(i, a), (j, b)| {
            a.total_cmp(b)
                .then(cells[*i].mu.total_cmp(&cells[*j].mu))
                .then(cells[*i].eta.total_cmp(&cells[*j].eta))
        })
        .map(|(i, _)| i)
}

pub fn tune(a: &TuneArgs) -> Result<String> {
    let loss = a.data.loss()?;
    if a.lr.is_empty() || a.reg.is_empty() {
        return Err(Error::Usage("tuning grid must be non-empty".into()));
    }
    if let Some(v) = a.lr.iter().chain(&a.reg).find(|v| !(**v > 0.0)) {
        return Err(Error::Usage(format!("grid values must be positive, got {v}")));
    }
    let ds = a.data.load()?;
    let base = a.config.config(a.lr[0], a.reg[0]);
    base.validate()?;
    let val = validation_split(&ds, &base)?;

    let mut cells = Vec::with_capacity(a.lr.len() * a.reg.len());
    for &eta in &a.lr {
        for &mu in &a.reg {
            let config = a.config.config(eta, mu);
            let result = Model::fit(&ds, &config, loss)
                .and_then(|f| {
                    Ok(CellScore {
                        score: validation_score(&f.model, &val)?,
                        epochs: f.history.records.len(),
                        best_epoch: f.history.best_epoch,
                    })
                })
                .map_err(|e| e.to_string());
            cells.push(TuneCell { eta, mu, result });
        }
    }
    let winner = select_winner(&cells, loss);
    let crit = criterion_name(loss);

    let mut report = String::new();
    let _ = writeln!(report, "# criterion={crit}");
    let _ = writeln!(report, "# seed={}", a.config.seed);
    match winner {
        Some(w) => {
            let c = &cells[w];
            let score = c.result.as_ref().map(|s| s.score).unwrap_or(f64::NAN);
            let _ = writeln!(report, "# best lr={} reg={} {crit}={score}", c.eta, c.mu);
        }
        None => {
            let _ = writeln!(report, "# best none");
        }
    }
    let _ = writeln!(report, "cell\tlr\treg\tstatus\t{crit}\tepochs\tbest_epoch");
    for (i, c) in cells.iter().enumerate() {
        match &c.result {
            Ok(s) => {
                let _ = writeln!(
                    report,
                    "{i}\t{}\t{}\tok\t{}\t{}\t{}",
                    c.eta, c.mu, s.score, s.epochs, s.best_epoch
                );
            }
            Err(e) => {
                let _ = writeln!(
                    report,
                    "{i}\t{}\t{}\tfailed: {}\t\t\t",
                    c.eta,
                    c.mu,
                    e.replace(['\t', '\n'], " ")
                );
            }
        }
    }
    write_atomic(&a.out, report.as_bytes())?;

    let w = winner.ok_or_else(|| Error::Numerical("every grid cell failed".into()))?;
    let c = &cells[w];
    let score = c.result.as_ref().map(|s| s.score).unwrap_or(f64::NAN);
    Ok(format!(
        "cells={}\nbest_lr={}\nbest_reg={}\nval_{crit}={score}\nreport={}\n",
        cells.len(),
        c.eta,
        c.mu,
        a.out.display()
    ))
}

pub fn eval(a: &EvalArgs) -> Result<String> {
    let model = Model::load(&a.model)?;
    let task = task_of(model.loss());
    if let Some(t) = a.task {
        if TaskKind::from(t) != task {
            return Err(Error::Usage(format!(
                "model was trained for {task}, data flagged as {}",
                TaskKind::from(t)
            )));
        }
    }
    let target: TargetColumn = a.target.parse().expect("infallible");
    let ds = data::load_csv(&a.data, &target, task)?;
    if ds.p() != model.dim() {
        return Err(Error::Argument(format!(
            "dimension mismatch: data has {} features, model expects {}",
            ds.p(),
            model.dim()
        )));
    }
    let report = match task {
        TaskKind::Regression => EvalReport::regression(&ds.y, &model.predict(&ds.x)?)?,
        TaskKind::Classification => EvalReport::classification(&ds.y, &model.predict_proba(&ds.x)?)?,
    };
    if report.f1_degenerate {
        eprintln!("warning: F1 undefined (no positive predictions or labels); reported as 0");
    }
    let text = report.to_text();
    if let Some(path) = &a.report {
        write_atomic(path, text.as_bytes())?;
    }
    Ok(text)
}

/// `(name, scaled relevance)` sorted by decreasing relevance, ties by
/// feature index.
pub fn relevance_table(model: &Model) -> Vec<(String, f64)> {
    let names = model
        .feature_names()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| data::default_feature_names(model.dim()));
    let mut rows: Vec<(String, f64)> = names.into_iter().zip(model.relevances()).collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1));
    rows
}

pub fn relevances(a: &RelevancesArgs) -> Result<String> {
    let model = Model::load(&a.model)?;
    let mut text = String::from("feature\trelevance\n");
    for (name, v) in relevance_table(&model) {
        let _ = writeln!(text, "{name}\t{v}");
    }
    match &a.out {
        Some(path) => {
            write_atomic(path, text.as_bytes())?;
            Ok(format!("out={}\n", path.display()))
        }
        None => Ok(text),
    }
}
