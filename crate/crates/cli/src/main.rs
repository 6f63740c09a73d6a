mod config;
mod failure;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trnn::baseline::{fit_flat_dense, fit_pls_centered, fit_sl_trnn};
use trnn::datagen::{generate, Dataset, Generator};
use trnn::eval::{
    metrics_csv, rmse, run_benchmark_with, summarize, write_metrics_csv, write_summary_json, BenchmarkPlan,
    MetricsRecord, Regressor,
};
use trnn::gradcheck::{default_spec, gradcheck_spec, GradcheckConfig};
use trnn::layers::Activation;
use trnn::tensor::dtf;
use trnn::{init_model, train, DenseTensor, NetworkSpec, Predictor, TrainReport};

use config::{RunConfig, TrainJob, TrainOverrides};
use failure::{CliResult, Failure};

#[derive(Parser)]
#[command(name = "trnn", version, about = "Tensor-on-tensor regression networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset (X.dtf, Y.dtf, meta).
    Generate(GenerateArgs),
    /// Fit a model and write its bundle plus a per-epoch loss report.
    Train(TrainArgs),
    /// Apply a model bundle to an input tensor.
    Predict(PredictArgs),
    /// Score a model bundle on a dataset.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Run a replicated benchmark plan.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// waterdrop, helicoid or linear
    generator: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Sets both grid extents (feature widths for `linear`).
    #[arg(long, default_value_t = 20)]
    grid: usize,
    #[arg(long)]
    grid_i: Option<usize>,
    #[arg(long)]
    grid_j: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// trnn, sl_trnn, pls or flat_dense
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input tensor file.
    #[arg(long)]
    input: PathBuf,
    /// Output tensor file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Metrics CSV holding the single result row.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// TOML network spec; a small two-layer spec when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Replace the activation with the identity.
    #[arg(long)]
    identity: bool,
    /// Add this amount to one analytic gradient entry (negative control).
    #[arg(long, hide = true)]
    corrupt: Option<f64>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// TOML benchmark plan.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    plan: Option<PathBuf>,
    /// Built-in plan instead of a file: desk or full.
    #[arg(long, requires = "generator")]
    preset: Option<String>,
    /// Generator for `--preset`.
    #[arg(long)]
    generator: Option<String>,
    /// Comma-separated subset of methods.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Comma-separated training set sizes.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
    #[arg(long)]
    replications: Option<usize>,
    /// Directory for metrics.csv and summary.json.
    #[arg(long, default_value = "benchmark")]
    out: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the plan's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write zero fit times so reruns produce identical files.
    #[arg(long)]
    no_timings: bool,
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

fn parse<T: std::str::FromStr<Err = trnn::TrnnError>>(s: &str) -> CliResult<T> {
    s.parse::<T>().map_err(Failure::from)
}

fn shape_str(t: &DenseTensor) -> String {
    let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
    format!("({})", dims.join(", "))
}

fn cmd_generate(a: GenerateArgs) -> CliResult {
    let generator: Generator = parse(&a.generator)?;
    let (gi, gj) = (a.grid_i.unwrap_or(a.grid), a.grid_j.unwrap_or(a.grid));
    let d = generate(generator, a.n, a.sigma, gi, gj, a.seed)?;
    d.save(&a.out)?;
    println!("{generator}: X {} Y {} -> {}", shape_str(&d.x), shape_str(&d.y), a.out.display());
    Ok(())
}

fn flatten(t: &DenseTensor) -> CliResult<DenseTensor> {
    Ok(t.reshape(&[t.num_samples(), t.sample_len()])?)
}

fn write_report(path: &Path, report: &TrainReport) -> CliResult {
    let mut text = String::from("epoch,loss\n");
    for (e, l) in report.losses.iter().enumerate() {
        text.push_str(&format!("{e},{l:e}\n"));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn cmd_train(a: TrainArgs) -> CliResult {
    let file = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let flags = TrainOverrides {
        data: a.data,
        out: a.out,
        report: a.report,
        seed: a.seed,
        method: a.method.as_deref().map(parse).transpose()?,
        k: a.k,
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        no_standardize: a.no_standardize,
    };
    let job = TrainJob::resolve(file, flags)?;
    let data = Dataset::load(&job.data)?;
    let (x, y) = (&data.x, &data.y);
    let rank = |p: usize, q: usize| job.k.unwrap_or_else(|| 4.min(p).min(q).min(x.num_samples()));

    let (model, report) = match job.method {
        Regressor::Trnn => {
            let spec = match job.spec.clone() {
                Some(s) => s,
                None => NetworkSpec::geometric(x.sample_shape(), y.sample_shape(), &job.schedule)?,
            };
            let mut model = init_model(&spec, job.seed)?;
            let report = train(&mut model, x, y, &job.train)?;
            (Predictor::Network(model), Some(report))
        }
        Regressor::SlTrnn => {
            let (xf, yf) = (flatten(x)?, flatten(y)?);
            let k = rank(xf.sample_len(), yf.sample_len());
            let (m, report) = fit_sl_trnn(&xf, &yf, k, &job.train)?;
            (Predictor::Network(m.model), Some(report))
        }
        Regressor::Pls => {
            let k = rank(x.sample_len(), y.sample_len());
            (Predictor::Pls(fit_pls_centered(x, y, k)?), None)
        }
        Regressor::FlatDense => {
            let (m, report) = fit_flat_dense(x, y, &job.hidden, &job.train)?;
            (Predictor::FlatDense(m), Some(report))
        }
    };
    model.save(&job.out)?;
    match &report {
        Some(r) => {
            write_report(&job.report, r)?;
            println!(
                "{}: {} epochs, loss {:e} -> {:e}; model in {}",
                job.method,
                r.epochs_run,
                r.initial_loss(),
                r.final_loss(),
                job.out.display()
            );
        }
        None => println!("{}: closed-form fit; model in {}", job.method, job.out.display()),
    }
    Ok(())
}

/// Predicts with `model`, flattening `x` for models fitted on flattened data.
fn predict_with(model: &Predictor, x: &DenseTensor) -> CliResult<DenseTensor> {
    if let Predictor::Network(m) = model {
        let input = &m.spec().input_shape;
        if input.len() == 1 && x.order() > 2 && input[0] == x.sample_len() {
            return Ok(model.predict(&flatten(x)?)?);
        }
    }
    Ok(model.predict(x)?)
}

fn cmd_predict(a: PredictArgs) -> CliResult {
    let model = Predictor::load(&a.model)?;
    let x = dtf::read(&a.input)?;
    let y = predict_with(&model, &x)?;
    dtf::write(&a.out, &y)?;
    println!("predicted {} -> {}", shape_str(&y), a.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let model = Predictor::load(&a.model)?;
    let data = Dataset::load(&a.data)?;
    let mut y_hat = predict_with(&model, &data.x)?;
    if y_hat.shape() != data.y.shape() && y_hat.len() == data.y.len() {
        y_hat = y_hat.reshape(data.y.shape())?;
    }
    let value = rmse(&y_hat, &data.y)?;
    let record = MetricsRecord {
        method: model.kind().into(),
        generator: data.meta.generator,
        n: data.len(),
        sigma: data.meta.sigma,
        rep: 0,
        seed: data.meta.seed,
        rmse: value,
        train_seconds: 0.0,
    };
    write_metrics_csv(&a.out, &[record])?;
    println!("rmse {value:e}");
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> CliResult {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            toml::from_str::<NetworkSpec>(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => default_spec(),
    };
    if a.identity {
        spec.activation = Activation::Identity;
    }
    let cfg = GradcheckConfig {
        h: a.step,
        tolerance: a.tolerance,
        corrupt: a.corrupt,
        ..GradcheckConfig::default()
    };
    let report = gradcheck_spec(&spec, a.n, a.seed, &cfg)?;
    println!("{:<22} {:>8} {:>8} {:>14}", "group", "checked", "skipped", "max rel error");
    for g in &report.groups {
        println!("{:<22} {:>8} {:>8} {:>14.3e}", g.name, g.checked, g.skipped, g.max_rel_error);
    }
    println!(
        "{} parameters, max relative error {:.3e}, tolerance {:.1e}",
        report.parameter_count,
        report.max_rel_error(),
        report.tolerance
    );
    if report.passed() {
        println!("PASS");
        return Ok(());
    }
    for g in report.failures() {
        if let Some(w) = &g.worst {
            eprintln!(
                "{}: entry {} analytic {:e} numeric {:e} rel {:.3e}",
                g.name, w.index, w.analytic, w.numeric, w.rel_error
            );
        }
    }
    Err(Failure::Numerical(format!(
        "gradient check failed: max relative error {:.3e} exceeds {:.1e}",
        report.max_rel_error(),
        report.tolerance
    )))
}

fn cmd_benchmark(a: BenchmarkArgs) -> CliResult {
    let mut plan = match (&a.plan, &a.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            BenchmarkPlan::from_toml(&text)?
        }
        (None, Some(preset)) => {
            let generator: Generator = parse(a.generator.as_deref().unwrap_or_default())?;
            match preset.as_str() {
                "desk" => BenchmarkPlan::desk(generator),
                "full" => BenchmarkPlan::full(generator),
                other => return Err(Failure::Config(format!("unknown preset {other:?}"))),
            }
        }
        (None, None) => unreachable!("clap requires a plan or a preset"),
    };
    if let Some(methods) = &a.methods {
        plan.methods = methods.iter().map(|m| parse(m)).collect::<CliResult<_>>()?;
    }
    if let Some(n) = a.n {
        plan.n = n;
    }
    if let Some(sigma) = a.sigma {
        plan.sigma = sigma;
    }
    if let Some(r) = a.replications {
        plan.replications = r;
    }
    if let Some(j) = a.jobs {
        plan.jobs = j;
    }
    if let Some(s) = a.seed {
        plan.base_seed = s;
    }
    if a.no_timings {
        plan.timings = false;
    }
    plan.validate()?;
    let quiet = a.quiet;
    let outcome = run_benchmark_with(&plan, &|r| {
        if !quiet {
            eprintln!("{} N={} sigma={} rep={} rmse={:.6e}", r.method, r.n, r.sigma, r.rep, r.rmse);
        }
    })?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::Data(format!("{}: {e}", a.out.display())))?;
    write_metrics_csv(a.out.join("metrics.csv"), &outcome.records)?;
    for f in &outcome.failures {
        eprintln!("failed: {} N={} sigma={} rep={}: {}", f.method, f.n, f.sigma, f.rep, f.error);
    }
    if outcome.records.is_empty() {
        return Err(Failure::Numerical("every fit failed".into()));
    }
    let summary = summarize(&outcome)?;
    write_summary_json(a.out.join("summary.json"), &summary)?;
    print!("{}", summary.median_table());
    if !outcome.failures.is_empty() {
        println!("{} fits failed", outcome.failures.len());
    }
    debug_assert!(metrics_csv(&outcome.records).is_ok());
    Ok(())
}
