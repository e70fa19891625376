//! The `qms` command-line tool.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use ndarray::Array2;

use crate::adam::AdamConfig;
use crate::data::{read_table, split, FeatureSchema, LabeledDataset, SplitSpec};
use crate::error::{QmsError, Result};
use crate::eval::{accuracy, cross_validate, sweep, SweepParam};
use crate::model::{AlphaMatrix, QmsModel};
use crate::trainer::{train, AlphaSpec, EarlyStop, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "qms", version, about = "Quadratic multiform separation classifier")]
struct Cli {
    /// TOML file with defaults for any long flag (keys are flag names
    /// without the leading dashes); flags given on the command line win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write it with its training history.
    Train(TrainCmd),
    /// Predict class labels for every row of a CSV file.
    Predict(PredictCmd),
    /// Print the accuracy of a model on a labeled CSV file.
    Evaluate(EvaluateCmd),
    /// Stratified k-fold cross-validation.
    Cv(CvCmd),
    /// Cross-validate over a grid of q or alpha values.
    Sweep(SweepCmd),
    /// Print model dimensions, parameter count, and the alpha matrix.
    Inspect(InspectCmd),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Training data (CSV with a header row).
    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    /// Name of the class label column.
    #[arg(long, value_name = "NAME")]
    label_col: String,

    /// Columns to one-hot encode instead of parsing as numbers.
    #[arg(long, value_name = "NAMES", value_delimiter = ',')]
    categorical: Vec<String>,
}

#[derive(Args, Debug)]
struct HyperArgs {
    /// Rows of each A_i.
    #[arg(long, default_value_t = 15)]
    q: usize,

    /// Clamp floor shared by every class pair, in [0, 1).
    #[arg(long, default_value = "0.4")]
    alpha: f64,

    /// JSON file holding a full m x m alpha matrix (overrides --alpha).
    #[arg(long, value_name = "PATH")]
    alpha_matrix: Option<PathBuf>,

    #[arg(long, default_value_t = 15)]
    epochs: usize,

    #[arg(long, default_value_t = 200)]
    batch_size: usize,

    /// Adam learning rate for both A and b.
    #[arg(long, default_value = "1.0")]
    lr: f64,

    /// Learning rate for the A_i tensors (defaults to --lr).
    #[arg(long)]
    lr_a: Option<f64>,

    /// Learning rate for the b_i tensors (defaults to --lr).
    #[arg(long)]
    lr_b: Option<f64>,

    #[arg(long, default_value = "0.9")]
    beta1: f64,

    #[arg(long, default_value = "0.999")]
    beta2: f64,

    #[arg(long, default_value = "1e-8")]
    epsilon: f64,

    /// Seed for initialization, shuffling, and partitioning.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Train on raw features instead of z-scores fitted on the training data.
    #[arg(long)]
    no_standardize: bool,
}

impl HyperArgs {
    fn to_config(&self) -> Result<TrainConfig> {
        let alpha = match &self.alpha_matrix {
            Some(path) => AlphaSpec::Matrix(read_alpha_matrix(path)?),
            None => AlphaSpec::Uniform(self.alpha),
        };
        let adam = |lr: Option<f64>| AdamConfig {
            lr: lr.unwrap_or(self.lr),
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        };
        let config = TrainConfig {
            q: self.q,
            alpha,
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam_a: adam(self.lr_a),
            adam_b: adam(self.lr_b),
            seed: self.seed,
            early_stop: None,
            standardize: !self.no_standardize,
            verbose: false,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct TrainCmd {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    hyper: HyperArgs,

    /// Where to write the model JSON.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// Where to write the per-epoch history CSV [default: <out>.history.csv].
    #[arg(long, value_name = "PATH")]
    history: Option<PathBuf>,

    /// Separate validation CSV (same columns as --data).
    #[arg(long, value_name = "PATH", conflicts_with = "val_fraction")]
    val_data: Option<PathBuf>,

    /// Hold out this stratified fraction of --data for validation.
    #[arg(long, value_name = "FRACTION")]
    val_fraction: Option<f64>,

    /// Stop after this many epochs without a validation-accuracy gain and
    /// keep the best epoch's parameters. Needs a validation set.
    #[arg(long, value_name = "EPOCHS")]
    patience: Option<usize>,

    /// Suppress per-epoch progress lines.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct PredictCmd {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,

    /// CSV file to classify.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    /// Label column to ignore if present in --data.
    #[arg(long, value_name = "NAME")]
    label_col: Option<String>,

    /// Where to write `row_index,predicted_label`.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// Also write every member function value f_0..f_{m-1}.
    #[arg(long)]
    emit_members: bool,
}

#[derive(Args, Debug)]
struct EvaluateCmd {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,

    /// Labeled CSV file.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    #[arg(long, value_name = "NAME")]
    label_col: String,
}

#[derive(Args, Debug)]
struct CvCmd {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    hyper: HyperArgs,

    /// Number of folds.
    #[arg(long, default_value_t = 10)]
    k: usize,

    /// Where to write `fold,accuracy`.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepCmd {
    #[command(flatten)]
    data: DataArgs,

    #[command(flatten)]
    hyper: HyperArgs,

    #[arg(long, default_value_t = 10)]
    k: usize,

    /// Hyperparameter to vary: q or alpha.
    #[arg(long, value_name = "NAME")]
    param: String,

    /// Comma-separated grid values.
    #[arg(long, value_name = "VALUES", value_delimiter = ',', required = true)]
    grid: Vec<f64>,

    /// Where to write `param_value,fold,accuracy`.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Where to write `param_value,mean,std` [default: <out>.summary.csv].
    #[arg(long, value_name = "PATH")]
    summary_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectCmd {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
}

/// Runs the tool on the process arguments and returns the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Runs the tool on `args` (including the program name).
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match parse(argv) {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn parse(argv: Vec<OsString>) -> std::result::Result<Cli, i32> {
    let command = Cli::command();
    let matches = command.clone().try_get_matches_from(&argv).map_err(clap_exit)?;
    let Some(path) = matches.get_one::<PathBuf>("config").cloned() else {
        return Cli::from_arg_matches(&matches).map_err(clap_exit);
    };
    let extra = match config_args(&command, &matches, &path) {
        Ok(extra) => extra,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(e.exit_code());
        }
    };
    let mut argv = argv;
    argv.extend(extra);
    let matches = command.try_get_matches_from(&argv).map_err(clap_exit)?;
    Cli::from_arg_matches(&matches).map_err(clap_exit)
}

fn clap_exit(e: clap::Error) -> i32 {
    let _ = e.print();
    if e.use_stderr() {
        1
    } else {
        0
    }
}

/// Translates a TOML config file into extra long flags for the chosen
/// subcommand, skipping any flag already given on the command line.
fn config_args(command: &clap::Command, matches: &ArgMatches, path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| QmsError::io(path, e))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| QmsError::Config(format!("{}: {}", path.display(), e.message())))?;
    let (name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let sub = command.find_subcommand(name).expect("matched subcommand exists");
    let find = |long: &str| sub.get_arguments().find(|a| a.get_long() == Some(long));
    let given = |arg: &clap::Arg| sub_matches.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine);

    let mut extra = Vec::new();
    for (key, value) in &table {
        let unknown = || QmsError::Config(format!("{}: unknown key {key:?} for `{name}`", path.display()));
        if key == "config" {
            return Err(unknown());
        }
        let negated = format!("no-{key}");
        match (find(key), find(&negated), value) {
            (Some(arg), _, toml::Value::Boolean(on)) if is_flag(arg) => {
                if *on && !given(arg) {
                    extra.push(format!("--{key}").into());
                }
            }
            (None, Some(arg), toml::Value::Boolean(on)) if is_flag(arg) => {
                if !*on && !given(arg) {
                    extra.push(format!("--{negated}").into());
                }
            }
            (Some(arg), _, _) if !is_flag(arg) => {
                if !given(arg) {
                    extra.push(format!("--{key}").into());
                    extra.push(toml_scalar(value, key, path)?.into());
                }
            }
            _ => return Err(unknown()),
        }
    }
    Ok(extra)
}

fn is_flag(arg: &clap::Arg) -> bool {
    matches!(arg.get_action(), ArgAction::SetTrue | ArgAction::SetFalse)
}

fn toml_scalar(value: &toml::Value, key: &str, path: &Path) -> Result<String> {
    match value {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Array(items) => items
            .iter()
            .map(|v| toml_scalar(v, key, path))
            .collect::<Result<Vec<_>>>()
            .map(|parts| parts.join(",")),
        _ => Err(QmsError::Config(format!(
            "{}: unsupported value for {key:?}",
            path.display()
        ))),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(cmd) => cmd_train(cmd),
        Command::Predict(cmd) => cmd_predict(cmd),
        Command::Evaluate(cmd) => cmd_evaluate(cmd),
        Command::Cv(cmd) => cmd_cv(cmd),
        Command::Sweep(cmd) => cmd_sweep(cmd),
        Command::Inspect(cmd) => cmd_inspect(cmd),
    }
}

/// `<path>` with `suffix` appended to its file name.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Where `train` stores the column encoding next to a model file.
pub fn schema_path(model_path: &Path) -> PathBuf {
    sibling(model_path, ".schema.json")
}

fn read_alpha_matrix(path: &Path) -> Result<AlphaMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| QmsError::io(path, e))?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
        .map_err(|e| QmsError::Config(format!("{}: {e}", path.display())))?;
    let m = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(QmsError::Config(format!(
            "{}: alpha matrix must be square, found a row of length {} in a {m}-row matrix",
            path.display(),
            bad.len()
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((m, m), flat).expect("square checked");
    AlphaMatrix::from_array(values)
}

fn load_training(data: &DataArgs) -> Result<(LabeledDataset, FeatureSchema)> {
    read_table(&data.data, &data.label_col, &data.categorical)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| QmsError::io(path, e))
}

fn cmd_train(cmd: TrainCmd) -> Result<()> {
    let mut config = cmd.hyper.to_config()?;
    config.verbose = !cmd.quiet;
    if let Some(patience) = cmd.patience {
        if cmd.val_data.is_none() && cmd.val_fraction.is_none() {
            return Err(QmsError::Config("--patience needs --val-data or --val-fraction".into()));
        }
        config.early_stop = Some(EarlyStop { patience });
    }
    if let Some(f) = cmd.val_fraction {
        if !(f > 0.0 && f < 1.0) {
            return Err(QmsError::Config(format!("--val-fraction must lie in (0, 1), got {f}")));
        }
    }
    config.validate()?;

    let (data, schema) = load_training(&cmd.data)?;
    let (train_set, val_set) = match (&cmd.val_data, cmd.val_fraction) {
        (Some(path), _) => {
            let val = schema.load_labeled(path, &cmd.data.label_col, data.class_names())?;
            (data, Some(val))
        }
        (None, Some(f)) => {
            let spec = SplitSpec {
                train: 1.0 - f,
                validation: 0.0,
                test: f,
                stratified: true,
                seed: config.seed,
            };
            let (tr, _, held_out) = split(&data, &spec)?;
            (tr, Some(held_out))
        }
        (None, None) => (data, None),
    };

    let (model, history) = train(&config, &train_set, val_set.as_ref())?;
    model.save(&cmd.out)?;
    let schema_json = serde_json::to_string_pretty(&schema).expect("schema serializes") + "\n";
    write_text(&schema_path(&cmd.out), &schema_json)?;
    let history_path = cmd.history.unwrap_or_else(|| sibling(&cmd.out, ".history.csv"));
    history.write_csv(&history_path)?;
    if let Some(epoch) = history.best_epoch {
        eprintln!("kept parameters from epoch {epoch}");
    }
    Ok(())
}

/// Column encoding for a model: the sidecar written by `train` when present,
/// otherwise every column of `data` except `label_col` as numeric.
fn schema_for(model_path: &Path, data: &Path, label_col: Option<&str>) -> Result<FeatureSchema> {
    let sidecar = schema_path(model_path);
    if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| QmsError::io(&sidecar, e))?;
        serde_json::from_str(&text)
            .map_err(|e| QmsError::parse(sidecar.display().to_string(), e.to_string()))
    } else {
        FeatureSchema::numeric_from_header(data, label_col)
    }
}

fn check_width(model: &QmsModel, schema: &FeatureSchema) -> Result<()> {
    if schema.p() != model.p() {
        return Err(QmsError::Data(format!(
            "model expects p={} features but the data provides {}",
            model.p(),
            schema.p()
        )));
    }
    Ok(())
}

fn cmd_predict(cmd: PredictCmd) -> Result<()> {
    let model = QmsModel::load(&cmd.model)?;
    let schema = schema_for(&cmd.model, &cmd.data, cmd.label_col.as_deref())?;
    check_width(&model, &schema)?;
    let (raw, _) = schema.load_features(&cmd.data, None)?;
    let x = model.to_feature_space(&raw)?;
    let mut out = String::from("row_index,predicted_label");
    if cmd.emit_members {
        for i in 0..model.m() {
            let _ = write!(out, ",f_{i}");
        }
    }
    out.push('\n');
    for (row, col) in x.columns().enumerate() {
        let values = model.member_values(col)?;
        let label = crate::model::argmin(values.iter().copied());
        let _ = write!(out, "{row},{}", model.class_names()[label]);
        if cmd.emit_members {
            for v in values {
                let _ = write!(out, ",{v}");
            }
        }
        out.push('\n');
    }
    write_text(&cmd.out, &out)
}

fn cmd_evaluate(cmd: EvaluateCmd) -> Result<()> {
    let model = QmsModel::load(&cmd.model)?;
    let schema = schema_for(&cmd.model, &cmd.data, Some(&cmd.label_col))?;
    check_width(&model, &schema)?;
    let data = schema.load_labeled(&cmd.data, &cmd.label_col, model.class_names())?;
    let acc = accuracy(&model.classify(data.x())?, data.y())?;
    println!("accuracy={acc}");
    Ok(())
}

fn cmd_cv(cmd: CvCmd) -> Result<()> {
    let config = cmd.hyper.to_config()?;
    let (data, _) = load_training(&cmd.data)?;
    let report = cross_validate(&config, &data, cmd.k)?;
    if let Some(out) = &cmd.out {
        report.write_csv(out)?;
    }
    println!("{report}");
    Ok(())
}

fn cmd_sweep(cmd: SweepCmd) -> Result<()> {
    let param: SweepParam = cmd.param.parse()?;
    let config = cmd.hyper.to_config()?;
    let (data, _) = load_training(&cmd.data)?;
    let report = sweep(&config, &data, cmd.k, param, &cmd.grid)?;
    if let Some(out) = &cmd.out {
        let summary = cmd.summary_out.clone().unwrap_or_else(|| sibling(out, ".summary.csv"));
        report.write_csv(out, summary)?;
    } else if let Some(summary) = &cmd.summary_out {
        write_text(summary, &report.summary_csv())?;
    }
    println!("{report}");
    Ok(())
}

fn cmd_inspect(cmd: InspectCmd) -> Result<()> {
    let model = QmsModel::load(&cmd.model)?;
    println!(
        "q={} p={} m={} params={}",
        model.q(),
        model.p(),
        model.m(),
        model.param_count()
    );
    println!("classes: {}", model.class_names().join(", "));
    println!(
        "scaler: {}",
        if model.scaler().is_some() { "z-score" } else { "none" }
    );
    println!("alpha:");
    for row in model.alpha().as_array().rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        println!("  {}", cells.join(" "));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn defaults_parse() {
        let cli = Cli::try_parse_from(["qms", "cv", "--data", "d.csv", "--label-col", "y"]).unwrap();
        let Command::Cv(cmd) = cli.command else { panic!() };
        let cfg = cmd.hyper.to_config().unwrap();
        assert_eq!(cfg, TrainConfig::default());
        assert_eq!(cmd.k, 10);
    }

    #[test]
    fn split_learning_rates() {
        let cli = Cli::try_parse_from([
            "qms", "cv", "--data", "d.csv", "--label-col", "y", "--lr", "0.5", "--lr-b", "0.1",
        ])
        .unwrap();
        let Command::Cv(cmd) = cli.command else { panic!() };
        let cfg = cmd.hyper.to_config().unwrap();
        assert_eq!(cfg.adam_a.lr, 0.5);
        assert_eq!(cfg.adam_b.lr, 0.1);
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(schema_path(Path::new("out/m.json")), PathBuf::from("out/m.json.schema.json"));
        assert_eq!(sibling(Path::new("r.csv"), ".summary.csv"), PathBuf::from("r.csv.summary.csv"));
    }
}
