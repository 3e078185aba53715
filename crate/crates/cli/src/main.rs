//! `elastisr`: generate data, train, evaluate and plot.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use elastisr_core::eval::{self, EvalReport, Method, Panel, PanelColumn};
use elastisr_core::fem::{generate_dataset, Dataset, HrSource};
use elastisr_core::models::{Arch, Model};
use elastisr_core::train::{
    fit_normalizer, lbfgs_finetune, load_checkpoint, save_checkpoint, split_indices, train, Problem, Split, TrainInput,
    TrainSinks, TrainingState,
};
use elastisr_core::Execution;
use sha2::{Digest, Sha256};

use config::{out_root, FileConfig, Paths, RunConfig, RUN_CONFIG_FILE};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or stage ordering (exit 1).
    Usage(String),
    /// A stage failed while running (exit 2).
    Runtime(String),
}

impl CliError {
    fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl From<elastisr_core::Error> for CliError {
    fn from(e: elastisr_core::Error) -> Self {
        match e {
            elastisr_core::Error::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "elastisr", version, about = "Physics-informed super-resolution of 2D elastic deformation fields")]
struct Cli {
    /// TOML file with [dataset], [model] and [train] tables; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Run every stage on a single thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coarse and fine problems over the load range and write a dataset.
    GenerateData(GenerateArgs),
    /// Train a super-resolver on the physics loss of the training split.
    Train(TrainArgs),
    /// Score checkpoints and the bicubic baseline against HR ground truth.
    Evaluate(EvaluateArgs),
    /// Render contour panels for samples of an evaluation report.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory [default: $ELASTISR_OUT/data].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    q_start: Option<f64>,
    #[arg(long)]
    q_end: Option<f64>,
    #[arg(long)]
    dq: Option<f64>,
    #[arg(long)]
    lr_res: Option<usize>,
    #[arg(long)]
    hr_res: Option<usize>,
    /// Target node count of the coarse mesh.
    #[arg(long)]
    coarse_nodes: Option<usize>,
    /// Cells per side of the fine ground-truth mesh.
    #[arg(long, conflicts_with = "analytical_hr")]
    fine_cells: Option<usize>,
    /// Use the closed-form solution as HR ground truth instead of a fine solve.
    #[arg(long)]
    analytical_hr: bool,
    #[arg(long)]
    split_ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory written by generate-data.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    arch: Option<Arch>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// L-BFGS iteration cap after Adam.
    #[arg(long)]
    lbfgs_iters: Option<usize>,
    /// Skip the L-BFGS stage.
    #[arg(long)]
    no_lbfgs: bool,
    /// Checkpoint path [default: $ELASTISR_OUT/<arch>.ckpt].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to score; repeat for several models.
    #[arg(long = "ckpt")]
    ckpts: Vec<PathBuf>,
    /// Report directory [default: $ELASTISR_OUT/report].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Report directory written by evaluate.
    #[arg(long)]
    report: PathBuf,
    /// Comma-separated sample ids.
    #[arg(long, value_delimiter = ',', required = true)]
    samples: Vec<usize>,
    /// Panel directory [default: <report>/panels].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let exec = if cli.sequential { Execution::Sequential } else { file.train.execution };
    let base = RunConfig {
        command: String::new(),
        config_file: cli.config.clone(),
        execution: exec,
        paths: Paths::default(),
        samples: None,
        dataset: None,
        model: None,
        train: None,
    };
    match cli.command {
        Command::GenerateData(a) => generate(a, file, base),
        Command::Train(a) => train_cmd(a, file, base),
        Command::Evaluate(a) => evaluate_cmd(a, file, base),
        Command::Plot(a) => plot_cmd(a, base),
    }
}

fn echo(run: &RunConfig) {
    println!("# resolved configuration\n{}", run.to_toml());
}

fn generate(a: GenerateArgs, file: FileConfig, mut run: RunConfig) -> Result<(), CliError> {
    let mut p = file.dataset;
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => { $(if let Some(v) = a.$flag { p.$field = v; })* };
    }
    set!(q_start => q_start, q_end => q_end, dq => dq, lr_res => lr_res, hr_res => hr_res,
         coarse_nodes => coarse_target_nodes, split_ratio => split_ratio, seed => seed);
    if let Some(cells) = a.fine_cells {
        p.hr_source = HrSource::FineFem { cells };
    }
    if a.analytical_hr {
        p.hr_source = HrSource::Analytical;
    }
    let out = a.out.unwrap_or_else(|| out_root().join("data"));
    run.command = "generate-data".into();
    run.paths.out = Some(out.clone());
    run.dataset = Some(p.clone());
    echo(&run);

    let ds = generate_dataset(&p, run.execution)?;
    ds.write(&out)?;
    run.write(&out.join(RUN_CONFIG_FILE))?;
    println!(
        "wrote {} samples ({} train / {} test) to {}",
        ds.samples.len(),
        ds.manifest.split.train.len(),
        ds.manifest.split.test.len(),
        out.display()
    );
    Ok(())
}

fn read_dataset(dir: &Path) -> Result<Dataset, CliError> {
    if !dir.join("manifest.json").is_file() {
        return Err(CliError::Usage(format!("--data {}: no manifest.json (run generate-data first)", dir.display())));
    }
    Ok(Dataset::read(dir)?)
}

/// The manifest split, or a fresh one when the configured ratio differs.
fn resolve_split(ds: &Dataset, ratio: f64) -> Result<Split, CliError> {
    if (ds.params().split_ratio - ratio).abs() > 1e-12 {
        Ok(split_indices(ds.samples.len(), ratio, ds.params().seed)?)
    } else {
        Ok(ds.manifest.split.clone())
    }
}

fn train_cmd(a: TrainArgs, file: FileConfig, mut run: RunConfig) -> Result<(), CliError> {
    let mut model_cfg = file.model;
    let mut cfg = file.train;
    if let Some(arch) = a.arch {
        model_cfg.arch = arch;
    }
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),*) => { $(if let Some(v) = a.$flag { cfg.$($field).+ = v; })* };
    }
    set!(epochs => epochs, lr => lr, batch_size => batch_size, seed => seed, lbfgs_iters => lbfgs.max_iters);
    if a.no_lbfgs {
        cfg.lbfgs.enabled = false;
    }
    cfg.execution = run.execution;
    cfg.validate()?;
    model_cfg.validate()?;
    let out = a.out.unwrap_or_else(|| out_root().join(format!("{}.ckpt", model_cfg.arch)));
    run.command = "train".into();
    run.paths = Paths { data: Some(a.data.clone()), out: Some(out.clone()), ..Default::default() };
    run.model = Some(model_cfg);
    run.train = Some(cfg.clone());
    echo(&run);

    let ds = read_dataset(&a.data)?;
    let split = resolve_split(&ds, cfg.split_ratio)?;
    // only LR fields cross this line
    let train_in: Vec<TrainInput> = split.train.iter().map(|&i| TrainInput::from_sample(&ds.samples[i])).collect();
    let monitor: Vec<TrainInput> = split.test.iter().map(|&i| TrainInput::from_sample(&ds.samples[i])).collect();
    drop(ds.samples);
    let problem = Problem::from_dataset(&ds.manifest.params, cfg.weights);

    let mut model = Model::build(model_cfg, cfg.seed)?;
    model.set_normalizer(fit_normalizer(&train_in)?);
    println!("{} with {} parameters, {} training samples", model_cfg.arch, model.param_count(), train_in.len());

    let stem = out.with_extension("");
    let log = PathBuf::from(format!("{}.log.jsonl", stem.display()));
    let best = PathBuf::from(format!("{}.best.ckpt", stem.display()));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    let _ = std::fs::remove_file(&log);
    let sinks = TrainSinks { log: Some(log), best_checkpoint: Some(best), progress_every: 10 };
    let outcome = train(model, &train_in, &monitor, &problem, &cfg, &sinks)?;
    let mut model = outcome.model;
    let mut history = outcome.history;
    if cfg.lbfgs.enabled && cfg.lbfgs.max_iters > 0 {
        let report = lbfgs_finetune(&mut model, &train_in, &problem, &cfg)?;
        println!(
            "L-BFGS: {} iterations, loss {:.5e} -> {:.5e}{}",
            report.iterations.len(),
            report.entry_loss,
            report.exit_loss,
            report.warning.as_ref().map(|w| format!(" (warning: {w})")).unwrap_or_default()
        );
        history.lbfgs = Some(report);
    }
    let state = TrainingState {
        epochs_done: history.len(),
        lr: history.epochs.last().map(|e| e.lr).unwrap_or(cfg.lr),
        adam_steps: outcome.adam_steps,
        label: "final".into(),
    };
    save_checkpoint(&out, &model, &history, &state)?;
    run.write(&PathBuf::from(format!("{}.{RUN_CONFIG_FILE}", stem.display())))?;
    println!(
        "loss {:.5e} (first epoch) -> {:.5e} (final); checkpoint {}",
        history.first_loss().unwrap_or(f64::NAN),
        history.final_loss().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Loads checkpoints and gives each a distinct method label.
fn load_models(paths: &[PathBuf]) -> Result<Vec<(String, Model, String)>, CliError> {
    let mut out: Vec<(String, Model, String)> = Vec::new();
    for path in paths {
        if !path.is_file() {
            return Err(CliError::Usage(format!("--ckpt {}: no such file", path.display())));
        }
        let ck = load_checkpoint(path)?;
        let mut label = ck.model.arch().to_string();
        let same = out.iter().filter(|(l, m, _)| m.arch() == ck.model.arch() || *l == label).count();
        if same > 0 {
            label = format!("{label}#{}", same + 1);
        }
        out.push((label, ck.model, file_digest(path)?));
    }
    Ok(out)
}

fn evaluate_cmd(a: EvaluateArgs, file: FileConfig, mut run: RunConfig) -> Result<(), CliError> {
    let out = a.out.unwrap_or_else(|| out_root().join("report"));
    run.command = "evaluate".into();
    run.paths = Paths { data: Some(a.data.clone()), out: Some(out.clone()), checkpoints: a.ckpts.clone(), report: None };
    run.train = Some(file.train.clone());
    echo(&run);

    let ds = read_dataset(&a.data)?;
    let models = load_models(&a.ckpts)?;
    let mut methods = vec![Method::bicubic()];
    for (label, model, digest) in &models {
        methods.push(Method::model(label.clone(), model, Some(digest.clone())));
    }
    let problem = Problem::from_dataset(ds.params(), file.train.weights);
    let scale = ds.params().hr_res / ds.params().lr_res;
    let split = resolve_split(&ds, file.train.split_ratio)?;
    let test: Vec<_> = split.test.iter().map(|&i| &ds.samples[i]).collect();
    let report = eval::evaluate(&test, &methods, &problem, &ds.manifest.hash(), scale, run.execution)?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", out.display())))?;
    report.write_json(&out.join("report.json"))?;
    let table = report.to_table();
    std::fs::write(out.join("report.txt"), &table).map_err(|e| CliError::runtime(e.to_string()))?;
    run.write(&out.join(RUN_CONFIG_FILE))?;
    print!("{table}");
    Ok(())
}

fn plot_cmd(a: PlotArgs, mut run: RunConfig) -> Result<(), CliError> {
    let report_path = a.report.join("report.json");
    let eval_cfg = a.report.join(RUN_CONFIG_FILE);
    if !report_path.is_file() || !eval_cfg.is_file() {
        return Err(CliError::Usage(format!(
            "--report {}: no evaluation report found (run evaluate first)",
            a.report.display()
        )));
    }
    let report = EvalReport::read_json(&report_path)?;
    let eval_run = RunConfig::read(&eval_cfg)?;
    let data = eval_run.paths.data.clone().ok_or_else(|| CliError::runtime("evaluation config lacks a data path"))?;
    let out = a.out.unwrap_or_else(|| a.report.join("panels"));
    run.command = "plot".into();
    run.paths = Paths { data: Some(data.clone()), out: Some(out.clone()), checkpoints: eval_run.paths.checkpoints.clone(), report: Some(a.report.clone()) };
    run.samples = Some(a.samples.clone());
    echo(&run);

    let ds = read_dataset(&data)?;
    if ds.manifest.hash() != report.manifest_hash {
        return Err(CliError::runtime("dataset has changed since the report was written (manifest hash differs)"));
    }
    let models = load_models(&eval_run.paths.checkpoints)?;
    let scale = ds.params().hr_res / ds.params().lr_res;
    for &id in &a.samples {
        let errors = report.sample_errors(id);
        if errors.is_empty() {
            return Err(CliError::Usage(format!("--samples: sample {id} is not in the report")));
        }
        let sample = ds.samples.iter().find(|s| s.id == id).ok_or_else(|| CliError::runtime(format!("sample {id} missing from dataset")))?;
        let mut columns = vec![
            PanelColumn { label: "LR".into(), grid: sample.lr.clone(), errors: None },
            PanelColumn { label: "HR".into(), grid: sample.hr.clone(), errors: None },
        ];
        for (name, errs) in errors {
            let grid = match models.iter().find(|(l, _, _)| l == name) {
                Some((_, m, _)) => m.predict(&sample.lr)?,
                None if name == eval::BICUBIC => elastisr_core::interp::bicubic_upsample(&sample.lr, scale)?,
                None => return Err(CliError::runtime(format!("report method {name} has no checkpoint"))),
            };
            columns.push(PanelColumn { label: name.to_string(), grid, errors: Some(errs) });
        }
        let panel = Panel { sample_id: id, q: sample.q, columns };
        let path = out.join(format!("sample_{id:04}.png"));
        eval::render_contours(&panel, &path)?;
        println!("wrote {}", path.display());
    }
    run.write(&out.join(RUN_CONFIG_FILE))?;
    Ok(())
}
