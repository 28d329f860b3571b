//! Scenario runner: repetitions × partitions × methods, with CSV and JSON
//! reports.
//!
//! Every (repetition, partition) job draws its randomness from its own
//! [`SeedTree`] node, so a run on a worker pool produces the same rows, in the
//! same order, as a serial run.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::boosting::{fit_boost, BoostConfig, Loss};
use crate::data::{Dataset, Task};
use crate::datagen::{generate, make_partitions, split, GroundTruth, Partition, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimators::{evaluate_loss, fit_reduced_with_fallback, FittedSubmodel};
use crate::rng::{self, SeedTree};
use crate::selection::{build_profile, select, Execution, GridSpec, Method, PssConfig, PssStrategy, StabilityConfig};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    /// Boosting on train ∪ validation, no stability selection.
    RawBoost,
    Lss {
        #[serde(default)]
        grid: GridSpec,
    },
    PssEs { pi_thr: f64, q0: usize },
    PssFw { pi_thr: f64, q0: usize },
    PssBw { pi_thr: f64, q0: usize },
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::RawBoost => "raw_boost",
            MethodSpec::Lss { .. } => "lss",
            MethodSpec::PssEs { .. } => "pss_es",
            MethodSpec::PssFw { .. } => "pss_fw",
            MethodSpec::PssBw { .. } => "pss_bw",
        }
    }

    fn selection_method(&self) -> Option<Method> {
        let pss = |pi_thr, q0, strategy| Some(Method::Pss(PssConfig { pi_thr, q0, strategy }));
        match *self {
            MethodSpec::RawBoost => None,
            MethodSpec::Lss { ref grid } => Some(Method::Lss(grid.clone())),
            MethodSpec::PssEs { pi_thr, q0 } => pss(pi_thr, q0, PssStrategy::Exhaustive),
            MethodSpec::PssFw { pi_thr, q0 } => pss(pi_thr, q0, PssStrategy::Forward),
            MethodSpec::PssBw { pi_thr, q0 } => pss(pi_thr, q0, PssStrategy::Backward),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.selection_method() {
            None => Ok(()),
            Some(Method::Lss(grid)) => grid.validate(),
            Some(Method::Pss(cfg)) => cfg.validate(),
        }
    }

    /// Raw boosting, LSS on `q = 1..10` and the three subset searches with
    /// `pi_thr = 0.25`; `q0` is 20 for exhaustive search (15 for
    /// classification) and 50 for the greedy searches.
    pub fn defaults(task: Task) -> Vec<MethodSpec> {
        let q0_es = match task {
            Task::Regression => 20,
            Task::Classification => 15,
        };
        vec![
            MethodSpec::RawBoost,
            MethodSpec::Lss { grid: GridSpec::default() },
            MethodSpec::PssEs { pi_thr: 0.25, q0: q0_es },
            MethodSpec::PssFw { pi_thr: 0.25, q0: 50 },
            MethodSpec::PssBw { pi_thr: 0.25, q0: 50 },
        ]
    }
}

const CONFIG_KEYS: &[&str] = &[
    "name", "methods", "m_iter", "kappa", "p", "n_train", "n_sub", "n_val", "n_test", "s0", "snr", "mu_beta", "mu_x",
    "B", "b", "V", "v", "task", "n_partitions", "seed",
];

fn default_name() -> String {
    "scenario".into()
}

/// Contents of a scenario config file: the scenario keys, flat, plus the
/// method list and boosting parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub m_iter: Option<usize>,
    #[serde(default)]
    pub kappa: Option<f64>,
}

impl RunConfig {
    pub fn new(name: &str, scenario: ScenarioConfig, methods: Vec<MethodSpec>) -> Self {
        Self { name: name.into(), scenario, methods, m_iter: None, kappa: None }
    }

    pub fn boost(&self) -> BoostConfig {
        let d = BoostConfig::default();
        BoostConfig { m_iter: self.m_iter.unwrap_or(d.m_iter), kappa: self.kappa.unwrap_or(d.kappa) }
    }

    pub fn methods(&self) -> Vec<MethodSpec> {
        if self.methods.is_empty() {
            MethodSpec::defaults(self.scenario.task)
        } else {
            self.methods.clone()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?)
    }

    /// Parses a config object. Unknown keys are rejected here because the
    /// flattened scenario fields would otherwise swallow them.
    pub fn from_value(value: Value) -> Result<Self> {
        let Value::Object(map) = &value else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        if let Some(key) = map.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.boost().validate()?;
        let methods = self.methods();
        for m in &methods {
            m.validate()?;
        }
        let mut names: Vec<&str> = methods.iter().map(|m| m.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("each method may appear only once".into()));
        }
        Ok(())
    }
}

/// One (repetition, partition, method) outcome. Column order is the CSV
/// layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub repetition: usize,
    pub partition: usize,
    pub method: String,
    pub selected_count: Option<usize>,
    pub tp_count: Option<usize>,
    pub precision: Option<f64>,
    pub val_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub pfer_bound: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub selected_count: usize,
    pub tp_count: Option<usize>,
    pub precision: Option<f64>,
    pub test_loss: f64,
}

/// True positives and precision against the known support (when there is
/// one) plus the loss of `test_fit` on the test rows.
pub fn compute_metrics(
    selected: &[usize],
    truth: Option<&GroundTruth>,
    test_fit: &FittedSubmodel,
    test: &Dataset,
    loss: Loss,
) -> Metrics {
    let tp = truth.map(|t| selected.iter().filter(|j| t.support.binary_search(j).is_ok()).count());
    let precision = match (tp, selected.len()) {
        (Some(tp), n) if n > 0 => Some(tp as f64 / n as f64),
        _ => None,
    };
    Metrics {
        selected_count: selected.len(),
        tp_count: tp,
        precision,
        test_loss: evaluate_loss(test_fit, test, loss),
    }
}

/// Per-method means, first over partitions within a repetition and then over
/// repetitions. Missing values are skipped at both levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub rows: usize,
    pub failed_rows: usize,
    pub empty_models: usize,
    pub mean_selected_count: Option<f64>,
    pub mean_tp_count: Option<f64>,
    pub mean_precision: Option<f64>,
    pub mean_val_loss: Option<f64>,
    pub mean_test_loss: Option<f64>,
}

fn mean_of_means(groups: &BTreeMap<usize, Vec<f64>>) -> Option<f64> {
    let per_rep: Vec<f64> = groups
        .values()
        .filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .collect();
    (!per_rep.is_empty()).then(|| per_rep.iter().sum::<f64>() / per_rep.len() as f64)
}

pub fn summarize(rows: &[ResultRow]) -> Vec<MethodSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.method.as_str()) {
            order.push(&r.method);
        }
    }
    order
        .into_iter()
        .map(|method| {
            let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.method == method).collect();
            let collect = |f: &dyn Fn(&ResultRow) -> Option<f64>| {
                let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
                for r in &mine {
                    let entry = groups.entry(r.repetition).or_default();
                    if let Some(v) = f(r) {
                        entry.push(v);
                    }
                }
                mean_of_means(&groups)
            };
            MethodSummary {
                method: method.to_string(),
                rows: mine.len(),
                failed_rows: mine.iter().filter(|r| r.status != "ok").count(),
                empty_models: mine.iter().filter(|r| r.selected_count == Some(0)).count(),
                mean_selected_count: collect(&|r| r.selected_count.map(|v| v as f64)),
                mean_tp_count: collect(&|r| r.tp_count.map(|v| v as f64)),
                mean_precision: collect(&|r| r.precision),
                mean_val_loss: collect(&|r| r.val_loss),
                mean_test_loss: collect(&|r| r.test_loss),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<MethodSummary>,
    /// Realized `1 / NSR` per repetition (classification scenarios only).
    pub inverse_nsr: Vec<f64>,
}

impl RunReport {
    fn new(scenario: &str, rows: Vec<ResultRow>, inverse_nsr: Vec<f64>) -> Self {
        let summary = summarize(&rows);
        Self { scenario: scenario.into(), rows, summary, inverse_nsr }
    }

    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == name)
    }

    pub fn mean_inverse_nsr(&self) -> Option<f64> {
        (!self.inverse_nsr.is_empty()).then(|| self.inverse_nsr.iter().sum::<f64>() / self.inverse_nsr.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(&self.rows, out)
    }

    pub fn summary_json(&self) -> Value {
        json!({
            "scenario": self.scenario,
            "methods": self.summary,
            "inverse_nsr": self.inverse_nsr,
            "mean_inverse_nsr": self.mean_inverse_nsr(),
        })
    }

    /// Writes `results.csv` and `summary.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut csv = Vec::new();
        self.write_csv(&mut csv)?;
        fs::write(dir.join(RESULTS_FILE), csv)?;
        let mut text = serde_json::to_string_pretty(&self.summary_json())?;
        text.push('\n');
        fs::write(dir.join(SUMMARY_FILE), text)?;
        Ok(())
    }
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (k, rec) in rdr.deserialize().enumerate() {
        rows.push(rec.map_err(|e: csv::Error| Error::Data { line: k + 2, msg: e.to_string() })?);
    }
    Ok(rows)
}

/// Everything a partition job needs besides the data.
struct Plan<'a> {
    name: &'a str,
    n_sub: usize,
    b: usize,
    boost: BoostConfig,
    loss: Loss,
    methods: &'a [MethodSpec],
    exec: Execution,
}

fn error_row(plan: &Plan, v: usize, k: usize, method: &str, err: &Error) -> ResultRow {
    ResultRow {
        scenario: plan.name.to_string(),
        repetition: v + 1,
        partition: k + 1,
        method: method.to_string(),
        selected_count: None,
        tp_count: None,
        precision: None,
        val_loss: None,
        test_loss: None,
        pfer_bound: None,
        status: format!("error: {err}"),
    }
}

fn run_partition(
    plan: &Plan,
    seeds: SeedTree,
    v: usize,
    k: usize,
    data: &Dataset,
    truth: Option<&GroundTruth>,
    part: &Partition,
) -> Vec<ResultRow> {
    debug_assert!(
        part.test.iter().all(|i| part.train.binary_search(i).is_err() && part.val.binary_search(i).is_err()),
        "test rows leak into training or validation"
    );
    let train = data.rows(&part.train);
    let val = data.rows(&part.val);
    let test = data.rows(&part.test);
    let full = data.rows(&part.train_val());
    let stab = StabilityConfig { b: plan.b, n_sub: plan.n_sub, boost: plan.boost, loss: plan.loss };

    let needs_profile = plan.methods.iter().any(|m| m.selection_method().is_some());
    let profile = needs_profile
        .then(|| build_profile(&train, &stab, seeds.path(&[rng::SUBSAMPLES, k as u64]), plan.exec, false));

    plan.methods
        .iter()
        .map(|spec| {
            let outcome: Result<(Vec<usize>, FittedSubmodel, Option<f64>, Option<f64>)> = match spec.selection_method() {
                None => fit_boost(&full, plan.loss, &plan.boost).and_then(|m| {
                    let fit = fit_reduced_with_fallback(&full, &m.selected, plan.loss, &plan.boost)?;
                    Ok((m.selected, fit, None, None))
                }),
                Some(method) => match profile.as_ref().expect("profile built") {
                    Err(e) => Err(Error::Config(e.to_string())),
                    Ok(profile) => select(profile, &method, &train, &val, &full, plan.loss, &plan.boost)
                        .map(|sm| (sm.support, sm.submodel, Some(sm.val_loss), sm.pfer_bound)),
                },
            };
            match outcome {
                Ok((selected, fit, val_loss, pfer)) => {
                    let m = compute_metrics(&selected, truth, &fit, &test, plan.loss);
                    ResultRow {
                        scenario: plan.name.to_string(),
                        repetition: v + 1,
                        partition: k + 1,
                        method: spec.name().to_string(),
                        selected_count: Some(m.selected_count),
                        tp_count: m.tp_count,
                        precision: m.precision,
                        val_loss,
                        test_loss: Some(m.test_loss),
                        pfer_bound: pfer,
                        status: "ok".into(),
                    }
                }
                Err(e) => error_row(plan, v, k, spec.name(), &e),
            }
        })
        .collect()
}

fn map_ordered<T: Send, R: Send>(items: Vec<T>, exec: Execution, f: impl Fn(T) -> R + Sync + Send) -> Vec<R> {
    match exec {
        Execution::Serial => items.into_iter().map(f).collect(),
        Execution::Parallel => items.into_par_iter().map(f).collect(),
    }
}

/// Runs every method on `V` generated datasets and `n_partitions` splits of
/// each. Component failures become rows with an error status. When `out` is
/// given, `results.csv` and `summary.json` are written there.
pub fn run_scenario(cfg: &RunConfig, out: Option<&Path>, exec: Execution) -> Result<RunReport> {
    cfg.validate()?;
    let sc = &cfg.scenario;
    let methods = cfg.methods();
    let plan = Plan {
        name: &cfg.name,
        n_sub: sc.n_sub,
        b: sc.b,
        boost: cfg.boost(),
        loss: Loss::for_task(sc.task),
        methods: &methods,
        exec,
    };
    let root = SeedTree::new(sc.seed);

    let per_rep = map_ordered((0..sc.v).collect(), exec, |v| -> (Vec<ResultRow>, Option<f64>) {
        let rep = root.path(&[rng::REPETITION, v as u64]);
        let generated = generate(sc, &mut rep.child(rng::DATA).rng())
            .and_then(|g| make_partitions(g.data.n_rows(), sc, &mut rep.child(rng::PARTITIONS).rng()).map(|p| (g, p)));
        match generated {
            Err(e) => {
                let rows = (0..sc.n_partitions)
                    .flat_map(|k| methods.iter().map(move |m| (k, m)))
                    .map(|(k, m)| error_row(&plan, v, k, m.name(), &e))
                    .collect();
                (rows, None)
            }
            Ok((g, parts)) => {
                let jobs: Vec<(usize, &Partition)> = parts.iter().enumerate().collect();
                let rows = map_ordered(jobs, exec, |(k, part)| run_partition(&plan, rep, v, k, &g.data, Some(&g.truth), part));
                (rows.into_iter().flatten().collect(), g.inverse_nsr)
            }
        }
    });

    let mut rows = Vec::new();
    let mut inverse_nsr = Vec::new();
    for (r, nsr) in per_rep {
        rows.extend(r);
        inverse_nsr.extend(nsr);
    }
    let report = RunReport::new(&cfg.name, rows, inverse_nsr);
    if let Some(dir) = out {
        report.write_to(dir)?;
    }
    Ok(report)
}

/// Settings for running the pipeline on a user-supplied dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub task: Task,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_sub: usize,
    #[serde(rename = "B", alias = "b")]
    pub b: usize,
    pub n_partitions: usize,
    pub seed: u64,
    #[serde(default)]
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub boost: BoostConfig,
}

impl ExternalConfig {
    pub fn validate(&self, n_rows: usize) -> Result<()> {
        if self.n_train + self.n_val + self.n_test != n_rows {
            return Err(Error::Config(format!(
                "n_train + n_val + n_test = {} but the data has {n_rows} rows",
                self.n_train + self.n_val + self.n_test
            )));
        }
        if self.n_train < 2 || self.n_val == 0 || self.n_test == 0 || self.b == 0 || self.n_partitions == 0 {
            return Err(Error::Config("n_train >= 2 and n_val, n_test, B, n_partitions >= 1 required".into()));
        }
        if self.n_sub == 0 || self.n_sub >= self.n_train {
            return Err(Error::Config(format!("n_sub must lie in 1..{}", self.n_train)));
        }
        self.boost.validate()?;
        for m in &self.methods {
            m.validate()?;
        }
        Ok(())
    }
}

/// Same pipeline on external data: no ground truth, so only selected counts
/// and losses are reported.
pub fn run_external(data: &Dataset, cfg: &ExternalConfig, out: Option<&Path>, exec: Execution) -> Result<RunReport> {
    cfg.validate(data.n_rows())?;
    if data.task != cfg.task {
        return Err(Error::Config("dataset task does not match the configuration".into()));
    }
    let methods = if cfg.methods.is_empty() { MethodSpec::defaults(cfg.task) } else { cfg.methods.clone() };
    let plan = Plan {
        name: &cfg.name,
        n_sub: cfg.n_sub,
        b: cfg.b,
        boost: cfg.boost,
        loss: Loss::for_task(cfg.task),
        methods: &methods,
        exec,
    };
    let rep = SeedTree::new(cfg.seed).path(&[rng::REPETITION, 0]);
    let mut prng = rep.child(rng::PARTITIONS).rng();
    let parts: Vec<Partition> =
        (0..cfg.n_partitions).map(|_| split(data.n_rows(), cfg.n_train, cfg.n_val, &mut prng)).collect();
    let jobs: Vec<(usize, &Partition)> = parts.iter().enumerate().collect();
    let rows: Vec<ResultRow> = map_ordered(jobs, exec, |(k, part)| run_partition(&plan, rep, 0, k, data, None, part))
        .into_iter()
        .flatten()
        .collect();
    let report = RunReport::new(&cfg.name, rows, Vec::new());
    if let Some(dir) = out {
        report.write_to(dir)?;
    }
    Ok(report)
}
