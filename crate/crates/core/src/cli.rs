//! Batch driver behind the `teamcoord` binary.
//!
//! One JSON config fixes a run. Artifacts go to `<out>/<config hash>-s<seed>/`
//! and later subcommands read what earlier ones wrote there.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::belief::{Belief, GroundMetric};
use crate::bounds::{BoundsReport, MemorySchedule};
use crate::coordinator::{MemorySpec, PrescriptionSpace};
use crate::error::{Error, Result};
use crate::evalsim::{
    evaluate_centers, predictor_stability_experiment, Behavior, EvalTable, DEFAULT_TRUNC_EPS,
};
use crate::model::{validate_model, RawModel, TeamModel};
use crate::quantizer::{
    build_grid_codebook, build_quantized_mdp, build_reachable_codebook, Codebook, QuantizedMDP,
};
use crate::solver::{
    greedy_policy_visited, q_learning_with_restarts, value_iteration, Exploration, LiveEnv, QTable,
    ValueIteration,
};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "TEAMCOORD_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_MISSING_ARTIFACT: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "teamcoord",
    version,
    about = "Coordinator reductions, solvers and bounds for finite team problems"
)]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Directory that holds run directories.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Overrides `solver.seed` (default 0 when neither is given).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model file, or the model named by the config.
    Validate {
        /// Model JSON to check instead of the config's model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Dobrushin coefficients, mixing constants, error tables and the memory schedule.
    Bounds,
    /// Build the codebook and the quantized MDP.
    Reduce,
    /// Value iteration on the quantized MDP.
    Vi,
    /// Tabular Q-learning on the quantized MDP.
    Qlearn {
        /// Overrides `solver.steps` (default 1000000).
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Monte Carlo rollouts of the greedy policy from selected centers.
    Eval {
        /// Overrides `eval.episodes` (default 100000).
        #[arg(long)]
        episodes: Option<u64>,
    },
    /// Paired-predictor gap sequence.
    Stability,
    /// Merge vi, qlearn and eval outputs into a Markdown table.
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<RawModel>,
    /// Relative paths resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub reduction: ReductionConfig,
    #[serde(default)]
    pub quantizer: QuantizerConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_schedule: Option<MemorySchedule>,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            k: 1,
            memory_schedule: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerMode {
    Grid,
    #[default]
    Reachable,
    /// `seed_centers` followed by predictors reachable from the prior and the seeds, up to `budget`.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerConfig {
    #[serde(default)]
    pub mode: QuantizerMode,
    /// Grid resolution.
    #[serde(default = "default_grid_n")]
    pub n: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub metric: GroundMetric,
    #[serde(default)]
    pub seed_centers: Vec<Vec<f64>>,
}

fn default_grid_n() -> usize {
    4
}
fn default_depth() -> usize {
    3
}
fn default_budget() -> usize {
    64
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self {
            mode: QuantizerMode::default(),
            n: default_grid_n(),
            depth: default_depth(),
            budget: default_budget(),
            metric: GroundMetric::default(),
            seed_centers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Successor centers sampled from the quantized MDP rows.
    Surrogate,
    /// Successor centers from simulated periods of the true system.
    #[default]
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub mode: TrainingMode,
    #[serde(default)]
    pub exploration: Exploration,
    /// Center at which the learning trajectory starts.
    #[serde(default)]
    pub start: usize,
    /// Jump to a uniformly random center before every n-th step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart_every: Option<u64>,
}

fn default_steps() -> u64 {
    1_000_000
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iters() -> usize {
    100_000
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            seed: 0,
            tol: default_tol(),
            max_iters: default_max_iters(),
            mode: TrainingMode::default(),
            exploration: Exploration::default(),
            start: 0,
            restart_every: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicySource {
    #[default]
    Vi,
    Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_episodes")]
    pub episodes: u64,
    #[serde(default = "default_trunc_eps")]
    pub trunc_eps: f64,
    #[serde(default)]
    pub policy: PolicySource,
    /// Center indices to evaluate; defaults to the seed centers, or all centers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<usize>>,
}

fn default_episodes() -> u64 {
    100_000
}
fn default_trunc_eps() -> f64 {
    DEFAULT_TRUNC_EPS
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: default_episodes(),
            trunc_eps: default_trunc_eps(),
            policy: PolicySource::default(),
            centers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    /// True prior; defaults to the model's initial belief.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    /// False prior; defaults to uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episodes: Option<u64>,
    #[serde(default)]
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

/// A parsed config together with its resolved model.
pub struct Loaded {
    pub config: Config,
    pub model: TeamModel,
    pub seed: u64,
    pub run_dir: PathBuf,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Hex prefix of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Replaces `model_path` with the inline model so the hash covers the model contents.
    fn resolve_model(&mut self, base: &Path) -> Result<TeamModel> {
        let raw = match (&self.model, &self.model_path) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either model or model_path, not both".into(),
                ))
            }
            (Some(m), None) => m.clone(),
            (None, Some(p)) => {
                let p = if p.is_relative() {
                    base.join(p)
                } else {
                    p.clone()
                };
                let text = fs::read_to_string(&p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text)?
            }
            (None, None) => return Err(Error::Config("config names no model".into())),
        };
        let model = validate_model(&raw)?;
        self.model = Some(raw);
        self.model_path = None;
        Ok(model)
    }
}

fn load(cli: &Cli) -> Result<Loaded> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut config = Config::from_path(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let model = config.resolve_model(base)?;
    if config.reduction.k == 0 {
        return Err(Error::Config("reduction.K must be at least 1".into()));
    }
    let seed = cli.seed.unwrap_or(config.solver.seed);
    let run_dir = cli.out.join(format!("{}-s{seed}", config.hash()));
    fs::create_dir_all(&run_dir)?;
    Ok(Loaded {
        config,
        model,
        seed,
        run_dir,
    })
}

impl Loaded {
    pub fn memory(&self) -> Result<MemorySpec> {
        let k = self.config.reduction.k;
        match &self.config.reduction.memory_schedule {
            Some(s) => {
                MemorySchedule::new(s.stages().to_vec(), s.windows().to_vec(), k)?.to_memory_spec(k)
            }
            None => Ok(MemorySpec::full(k)),
        }
    }

    pub fn space(&self) -> Result<PrescriptionSpace> {
        Ok(PrescriptionSpace::new(&self.model, self.memory()?))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    fn read<T: DeserializeOwned>(&self, name: &str, producer: &str) -> Result<T> {
        let p = self.path(name);
        if !p.exists() {
            return Err(Error::MissingArtifact(format!(
                "{} (run `{producer}` first)",
                p.display()
            )));
        }
        Ok(serde_json::from_str(&fs::read_to_string(p)?)?)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(p)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, text)?;
        Ok(p)
    }

    fn load_mdp(&self) -> Result<QuantizedMDP> {
        QuantizedMDP::from_file(self.read("qmdp.json", "reduce")?)
    }
}

/// Builds the configured codebook; seeds for the reachable fill come from the run seed.
pub fn build_codebook(
    model: &TeamModel,
    space: &PrescriptionSpace,
    q: &QuantizerConfig,
    seed: u64,
) -> Result<Codebook> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match q.mode {
        QuantizerMode::Grid => build_grid_codebook(model.n_states(), q.n),
        QuantizerMode::Reachable => {
            build_reachable_codebook(model, space, q.depth, q.budget, &mut rng)
        }
        QuantizerMode::Explicit => {
            let centers = q
                .seed_centers
                .iter()
                .map(|c| Belief::new(c.clone()))
                .collect::<Result<Vec<_>>>()?;
            let mut roots = vec![model.initial().clone()];
            roots.extend(centers.iter().cloned());
            let mut cb = Codebook::from_centers(centers)?;
            cb.extend_reachable_from(model, space, &roots, q.depth, q.budget, &mut rng)?;
            Ok(cb)
        }
    }
}

fn cmd_validate(cli: &Cli, model: Option<&Path>) -> Result<String> {
    let m = match model {
        Some(p) => TeamModel::from_path(p)?,
        None => load(cli)?.model,
    };
    let agents: Vec<String> = (0..m.n_agents())
        .map(|i| format!("{}x{}", m.n_actions(i), m.n_measurements(i)))
        .collect();
    Ok(format!(
        "valid: {} states, {} agents (actions x measurements: {}), beta {}\n",
        m.n_states(),
        m.n_agents(),
        agents.join(", "),
        m.beta()
    ))
}

fn cmd_bounds(l: &Loaded) -> Result<String> {
    let report = BoundsReport::compute(&l.model, l.config.reduction.k, l.config.bounds.epsilon)?;
    let csv = report.to_csv();
    l.write_text("bounds.csv", &csv)?;
    Ok(csv)
}

fn cmd_reduce(l: &Loaded) -> Result<String> {
    let space = l.space()?;
    let codebook = build_codebook(&l.model, &space, &l.config.quantizer, l.seed)?;
    let blocks = space.enumerate()?;
    let mdp = build_quantized_mdp(&l.model, &codebook, &blocks, &l.config.quantizer.metric)?;
    let p = l.write_json("qmdp.json", &mdp.to_file())?;
    Ok(format!(
        "quantized MDP: {} centers ({:?}), {} blocks, discount {} -> {}\n",
        mdp.n_states(),
        codebook.mode(),
        mdp.n_actions(),
        mdp.discount(),
        p.display()
    ))
}

fn cmd_vi(l: &Loaded) -> Result<String> {
    let mdp = l.load_mdp()?;
    let vi = value_iteration(&mdp, l.config.solver.tol, l.config.solver.max_iters)?;
    let p = l.write_json("vi.json", &vi)?;
    Ok(format!(
        "value iteration: {} sweeps, residual {:e}, converged {} -> {}\n",
        vi.iterations,
        vi.residual,
        vi.converged,
        p.display()
    ))
}

fn cmd_qlearn(l: &Loaded, steps: Option<u64>) -> Result<String> {
    let mdp = l.load_mdp()?;
    let s = &l.config.solver;
    let steps = steps.unwrap_or(s.steps);
    let mut rng = ChaCha8Rng::seed_from_u64(l.seed);
    let q0 = QTable::zeros(mdp.n_states(), mdp.actions().to_vec());
    let q = match s.mode {
        TrainingMode::Surrogate => q_learning_with_restarts(
            &mdp,
            &s.exploration,
            steps,
            s.start,
            s.restart_every,
            &mut rng,
            q0,
        )?,
        TrainingMode::Live => {
            let space = l.space()?;
            let blocks = mdp
                .actions()
                .iter()
                .map(|&id| space.decode(id))
                .collect::<Result<Vec<_>>>()?;
            let env = LiveEnv::new(&l.model, &mdp, blocks)?;
            q_learning_with_restarts(
                &env,
                &s.exploration,
                steps,
                s.start,
                s.restart_every,
                &mut rng,
                q0,
            )?
        }
    };
    let visited = q.visited().count();
    let p = l.write_json("qtable.json", &q)?;
    Ok(format!(
        "q-learning: {steps} steps, {visited} of {} pairs visited -> {}\n",
        q.n_states() * q.n_actions(),
        p.display()
    ))
}

/// Row minima over visited entries; `None` for rows never visited.
fn row_minima(q: &QTable) -> Vec<Option<f64>> {
    let p = greedy_policy_visited(q);
    q.visit_counts
        .iter()
        .zip(p.values)
        .map(|(r, v)| r.iter().any(|&n| n > 0).then_some(v))
        .collect()
}

fn cmd_eval(l: &Loaded, episodes: Option<u64>) -> Result<String> {
    let mdp = l.load_mdp()?;
    let e = &l.config.eval;
    let vi: Option<ValueIteration> = l.read("vi.json", "vi").ok();
    let q: Option<QTable> = l.read("qtable.json", "qlearn").ok();
    let policy = match e.policy {
        PolicySource::Vi => match &vi {
            Some(v) => v.policy.clone(),
            None => return Err(l.read::<ValueIteration>("vi.json", "vi").unwrap_err()),
        },
        PolicySource::Q => match &q {
            Some(t) => greedy_policy_visited(t),
            None => return Err(l.read::<QTable>("qtable.json", "qlearn").unwrap_err()),
        },
    };
    let centers: Vec<usize> = match &e.centers {
        Some(c) => c.clone(),
        None if !l.config.quantizer.seed_centers.is_empty()
            && l.config.quantizer.mode == QuantizerMode::Explicit =>
        {
            (0..l.config.quantizer.seed_centers.len()).collect()
        }
        None => (0..mdp.n_states()).collect(),
    };
    let q_values = q.as_ref().map(row_minima);
    let table = evaluate_centers(
        &l.model,
        &l.space()?,
        &policy,
        mdp.codebook(),
        mdp.metric(),
        &centers,
        vi.as_ref().map(|v| v.values.as_slice()),
        q_values.as_deref(),
        episodes.unwrap_or(e.episodes),
        l.seed,
        e.trunc_eps,
    )?;
    l.write_json("eval.json", &table)?;
    let csv = table.to_csv();
    l.write_text("eval.csv", &csv)?;
    Ok(csv)
}

fn cmd_stability(l: &Loaded) -> Result<String> {
    let s = &l.config.stability;
    let n = l.model.n_states();
    let mu = match &s.mu {
        Some(w) => Belief::new(w.clone())?,
        None => l.model.initial().clone(),
    };
    let nu = match &s.nu {
        Some(w) => Belief::new(w.clone())?,
        None => Belief::uniform(n),
    };
    let gaps = predictor_stability_experiment(
        &l.model,
        &mu,
        &nu,
        &s.behavior,
        s.steps.unwrap_or(12),
        s.episodes.unwrap_or(10_000),
        l.seed,
    )?;
    let csv = gaps.to_csv();
    l.write_text("stability.csv", &csv)?;
    Ok(csv)
}

/// Markdown table with one row per evaluated center.
pub fn render_report(table: &EvalTable) -> String {
    let cell = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
    let mut out = String::from("| Bin Center | J_Sim | J_Q | J_EVI |\n|---|---|---|---|\n");
    for r in &table.rows {
        let c: Vec<String> = r.center.iter().map(|v| format!("{v:.5}")).collect();
        let _ = writeln!(
            out,
            "| [{}] | {:.4} ± {:.4} | {} | {} |",
            c.join(" "),
            r.j_sim,
            r.std_err,
            cell(r.j_q),
            cell(r.j_vi)
        );
    }
    let _ = writeln!(
        out,
        "\nEach row starts {} episodes at its bin center; rollouts run {} periods.",
        table.episodes, table.horizon
    );
    out
}

fn cmd_report(l: &Loaded) -> Result<String> {
    let mut table: EvalTable = l.read("eval.json", "eval")?;
    // fill columns from solver artifacts written after eval
    if let Ok(vi) = l.read::<ValueIteration>("vi.json", "vi") {
        for r in &mut table.rows {
            r.j_vi = vi.values.get(r.center_index).copied();
        }
    }
    if let Ok(q) = l.read::<QTable>("qtable.json", "qlearn") {
        let mins = row_minima(&q);
        for r in &mut table.rows {
            r.j_q = mins.get(r.center_index).copied().flatten();
        }
    }
    let md = render_report(&table);
    l.write_text("report.md", &md)?;
    Ok(md)
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingArtifact(_) => EXIT_MISSING_ARTIFACT,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Io(_) => EXIT_FAILURE,
        _ => EXIT_INVALID,
    }
}

fn configure_workers() {
    if let Some(n) = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// Runs one parsed command, writing its summary to stdout; returns the exit status.
pub fn run(cli: &Cli) -> i32 {
    configure_workers();
    let result = match &cli.command {
        Command::Validate { model } => cmd_validate(cli, model.as_deref()),
        other => load(cli).and_then(|l| {
            let out = match other {
                Command::Bounds => cmd_bounds(&l),
                Command::Reduce => cmd_reduce(&l),
                Command::Vi => cmd_vi(&l),
                Command::Qlearn { steps } => cmd_qlearn(&l, *steps),
                Command::Eval { episodes } => cmd_eval(&l, *episodes),
                Command::Stability => cmd_stability(&l),
                Command::Report => cmd_report(&l),
                Command::Validate { .. } => unreachable!(),
            }?;
            Ok(format!("{out}run directory: {}\n", l.run_dir.display()))
        }),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main_from_env() -> i32 {
    run(&Cli::parse())
}
