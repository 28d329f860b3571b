use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use stabsel::datagen::generate;
use stabsel::harness::{
    read_rows, run_external, run_scenario, summarize, ExternalConfig, MethodSpec, RunConfig, RESULTS_FILE,
};
use stabsel::rng::{self, SeedTree};
use stabsel::selection::Execution;
use stabsel::{BoostConfig, Dataset, Error, Task};

#[derive(Parser)]
#[command(name = "stabsel", version, about = "Loss-guided stability selection benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one generated dataset as CSV.
    Gen {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Repetition whose dataset is written (1-based).
        #[arg(long, default_value_t = 1)]
        repetition: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the true support (1-based) and coefficients as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run a scenario and write results.csv and summary.json.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Run the pipeline on a CSV dataset without ground truth.
    RunExternal {
        /// CSV with a header row; every column but the response is a predictor.
        #[arg(long)]
        data: PathBuf,
        /// regression or classification.
        #[arg(long, value_parser = parse_task)]
        task: Task,
        /// Name of the response column.
        #[arg(long, default_value = "y")]
        response: String,
        #[arg(long)]
        n_train: usize,
        #[arg(long)]
        n_val: usize,
        #[arg(long)]
        n_test: usize,
        #[arg(long)]
        n_sub: usize,
        /// Subsamples per stability selection run.
        #[arg(long = "B")]
        b: usize,
        #[arg(long, default_value_t = 10)]
        n_partitions: usize,
        #[arg(long)]
        seed: u64,
        /// JSON file holding a method array.
        #[arg(long)]
        methods: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        m_iter: usize,
        #[arg(long, default_value_t = 0.1)]
        kappa: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Recompute per-method aggregates from a results CSV.
    Report {
        /// results.csv, or a directory containing it.
        results: PathBuf,
    },
}

/// Scenario keys; flags override the config file.
#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_sub: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    s0: Option<usize>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    mu_beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    mu_x: Option<f64>,
    #[arg(long = "B")]
    b: Option<usize>,
    #[arg(long = "V")]
    v: Option<usize>,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    #[arg(long)]
    n_partitions: Option<usize>,
    #[arg(long)]
    m_iter: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExecArgs {
    /// Worker threads; 1 runs serially.
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    match s {
        "regression" => Ok(Task::Regression),
        "classification" => Ok(Task::Classification),
        _ => Err(format!("unknown task {s:?}, expected regression or classification")),
    }
}

impl ScenarioArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut obj = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                match serde_json::from_str::<Value>(&text).map_err(|e| Error::Config(e.to_string()))? {
                    Value::Object(m) => m,
                    _ => return Err(Error::Config("config must be a JSON object".into())),
                }
            }
            None => Map::new(),
        };
        let mut set = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                obj.insert(k.to_string(), v);
            }
        };
        set("name", self.name.clone().map(Value::from));
        set("p", self.p.map(Value::from));
        set("n_train", self.n_train.map(Value::from));
        set("n_sub", self.n_sub.map(Value::from));
        set("n_val", self.n_val.map(Value::from));
        set("n_test", self.n_test.map(Value::from));
        set("s0", self.s0.map(Value::from));
        set("snr", self.snr.map(Value::from));
        set("mu_beta", self.mu_beta.map(Value::from));
        set("mu_x", self.mu_x.map(Value::from));
        set("B", self.b.map(Value::from));
        set("V", self.v.map(Value::from));
        set("task", self.task.map(|t| serde_json::to_value(t).expect("task serializes")));
        set("n_partitions", self.n_partitions.map(Value::from));
        set("m_iter", self.m_iter.map(Value::from));
        set("kappa", self.kappa.map(Value::from));
        set("seed", self.seed.map(Value::from));
        let cfg = RunConfig::from_value(Value::Object(obj))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn with_pool<T: Send>(exec: &ExecArgs, f: impl FnOnce(Execution) -> T + Send) -> Result<T, Error> {
    match exec.threads {
        Some(1) => Ok(f(Execution::Serial)),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(|| f(Execution::Parallel)))
        }
        None => Ok(f(Execution::Parallel)),
    }
}

fn read_methods(path: &Path) -> Result<Vec<MethodSpec>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Gen { scenario, repetition, out, truth } => {
            let cfg = scenario.load()?;
            if repetition == 0 || repetition > cfg.scenario.v {
                return Err(Error::Config(format!("repetition must lie in 1..={}", cfg.scenario.v)));
            }
            let seeds = SeedTree::new(cfg.scenario.seed).path(&[rng::REPETITION, repetition as u64 - 1, rng::DATA]);
            let g = generate(&cfg.scenario, &mut seeds.rng())?;
            g.data.write_csv(fs::File::create(&out)?)?;
            if let Some(path) = truth {
                let doc = serde_json::json!({
                    "support": g.truth.support.iter().map(|j| j + 1).collect::<Vec<_>>(),
                    "beta": g.truth.beta.as_slice(),
                    "sigma_noise": g.truth.sigma_noise,
                    "inverse_nsr": g.inverse_nsr,
                });
                fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
            }
            Ok(())
        }
        Command::Run { scenario, out, exec } => {
            let cfg = scenario.load()?;
            if scenario.seed.is_none() {
                return Err(Error::Config("--seed is required for run".into()));
            }
            let report = with_pool(&exec, |e| run_scenario(&cfg, Some(&out), e))??;
            let mut text = summary_table(&serde_json::to_value(&report.summary)?);
            if let Some(nsr) = report.mean_inverse_nsr() {
                let _ = writeln!(text, "mean 1/NSR: {nsr:.1}");
            }
            emit(&text);
            Ok(())
        }
        Command::RunExternal {
            data,
            task,
            response,
            n_train,
            n_val,
            n_test,
            n_sub,
            b,
            n_partitions,
            seed,
            methods,
            m_iter,
            kappa,
            out,
            exec,
        } => {
            let file = fs::File::open(&data)
                .map_err(|e| Error::Data { line: 0, msg: format!("{}: {e}", data.display()) })?;
            let dataset = Dataset::read_csv(file, &response, task)?;
            let methods = methods.as_deref().map(read_methods).transpose()?.unwrap_or_default();
            let cfg = ExternalConfig {
                name: data.file_stem().and_then(|s| s.to_str()).unwrap_or("external").to_string(),
                task,
                n_train,
                n_val,
                n_test,
                n_sub,
                b,
                n_partitions,
                seed,
                methods,
                boost: BoostConfig { m_iter, kappa },
            };
            let report = with_pool(&exec, |e| run_external(&dataset, &cfg, Some(&out), e))??;
            emit(&summary_table(&serde_json::to_value(&report.summary)?));
            Ok(())
        }
        Command::Report { results } => {
            let path = if results.is_dir() { results.join(RESULTS_FILE) } else { results };
            let rows = read_rows(fs::File::open(&path)?)?;
            let summary = serde_json::to_value(summarize(&rows))?;
            emit(&(serde_json::to_string_pretty(&summary)? + "\n"));
            Ok(())
        }
    }
}

fn summary_table(summary: &Value) -> String {
    let fmt = |v: &Value| v.as_f64().map_or("-".to_string(), |x| format!("{x:.3}"));
    let mut text = format!(
        "{:<10} {:>8} {:>8} {:>9} {:>10} {:>6}\n",
        "method", "selected", "TP", "precision", "test_loss", "empty"
    );
    for m in summary.as_array().into_iter().flatten() {
        let _ = writeln!(
            text,
            "{:<10} {:>8} {:>8} {:>9} {:>10} {:>6}",
            m["method"].as_str().unwrap_or("?"),
            fmt(&m["mean_selected_count"]),
            fmt(&m["mean_tp_count"]),
            fmt(&m["mean_precision"]),
            fmt(&m["mean_test_loss"]),
            m["empty_models"],
        );
    }
    text
}

/// Writes to stdout, ignoring a reader that has gone away (`| head`).
fn emit(text: &str) {
    let mut out = io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
