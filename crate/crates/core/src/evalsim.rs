//! Monte Carlo evaluation of coordinator policies on the true system and
//! paired-predictor stability experiments.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{
    k_step_update_indexed, predictor_update_indexed, tv_distance, Belief, GroundMetric,
};
use crate::coordinator::{reduced_cost_sup, simulate_period, PrescriptionSpace};
use crate::error::{Error, Result};
use crate::model::{sample_index, TeamModel};
use crate::quantizer::Codebook;
use crate::solver::CoordinatorPolicy;

/// Default truncation tolerance for discounted rollouts.
pub const DEFAULT_TRUNC_EPS: f64 = 1e-8;

fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// Smallest `Q >= 1` with `beta_tilde^Q |c_tilde| / (1 - beta_tilde) < trunc_eps`.
pub fn truncation_horizon(beta_tilde: f64, cost_sup: f64, trunc_eps: f64) -> Result<usize> {
    if !(trunc_eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "trunc_eps = {trunc_eps} must be positive"
        )));
    }
    if !(0.0..1.0).contains(&beta_tilde) {
        return Err(Error::InvalidArgument(format!(
            "discount {beta_tilde} outside [0,1)"
        )));
    }
    let mut q = 1;
    let mut tail = beta_tilde * cost_sup / (1.0 - beta_tilde);
    while tail >= trunc_eps {
        q += 1;
        tail *= beta_tilde;
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub mean: f64,
    pub std_error: f64,
    pub episodes: u64,
    /// Number of periods simulated per episode.
    pub horizon: usize,
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Discounted cost of `policy` on the true system started from `start`.
///
/// Each episode draws the initial state from `start`, tracks the exact
/// predictor, quantizes it to pick the block, and runs the block on the
/// realized private measurements. Episode `e` uses stream `e` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn rollout_cost(
    model: &TeamModel,
    space: &PrescriptionSpace,
    policy: &CoordinatorPolicy,
    codebook: &Codebook,
    metric: &GroundMetric,
    start: &Belief,
    episodes: u64,
    seed: u64,
    trunc_eps: f64,
) -> Result<RolloutStats> {
    if policy.len() != codebook.len() {
        return Err(Error::LengthMismatch(format!(
            "policy covers {} centers, codebook has {}",
            policy.len(),
            codebook.len()
        )));
    }
    if start.is_null() {
        return Err(Error::NullBelief("rollout start"));
    }
    if start.len() != model.n_states() {
        return Err(Error::LengthMismatch(
            "start belief size differs from the model".into(),
        ));
    }
    metric.validate(model.n_states())?;
    let k = space.horizon();
    let blocks = policy
        .actions
        .iter()
        .map(|&id| space.decode(id))
        .collect::<Result<Vec<_>>>()?;
    let beta_tilde = model.beta().powi(k as i32);
    let horizon = truncation_horizon(beta_tilde, reduced_cost_sup(model, k), trunc_eps)?;

    let costs = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = episode_rng(seed, e);
            let mut x = sample_index(start.weights(), &mut rng);
            let mut pi = start.clone();
            let mut total = 0.0;
            let mut disc = 1.0;
            for _ in 0..horizon {
                let s = codebook.nearest_unchecked(pi.weights(), metric);
                let period = simulate_period(model, x, &blocks[s], &mut rng);
                total += disc * period.cost;
                disc *= beta_tilde;
                pi = k_step_update_indexed(model, &pi, &period.actions, &period.measurements);
                if pi.is_null() {
                    return Err(Error::ImpossibleObservation(format!("episode {e}")));
                }
                x = period.terminal_state;
            }
            Ok(total)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std_error) = mean_and_se(&costs);
    Ok(RolloutStats {
        mean,
        std_error,
        episodes,
        horizon,
    })
}

/// How joint actions are chosen while probing predictor stability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// A uniformly random one-step prescription per agent and step.
    #[default]
    UniformRandom,
    /// The same joint action at every step.
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    /// `mean[t]` estimates `E tv(pi^mu_t, pi^nu_t)` for `t = 0..=T`.
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub episodes: u64,
}

impl GapEstimate {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mean_tv,std_error\n");
        for (t, (m, s)) in self.mean.iter().zip(&self.std_error).enumerate() {
            let _ = writeln!(out, "{t},{m},{s}");
        }
        out
    }
}

/// Runs predictors started from `mu` (true prior) and `nu` on the same
/// trajectories, with the true initial state drawn from `mu`.
pub fn predictor_stability_experiment(
    model: &TeamModel,
    mu: &Belief,
    nu: &Belief,
    behavior: &Behavior,
    steps: usize,
    episodes: u64,
    seed: u64,
) -> Result<GapEstimate> {
    let n = model.n_states();
    if mu.is_null() || nu.is_null() {
        return Err(Error::NullBelief("stability experiment"));
    }
    if mu.len() != n || nu.len() != n {
        return Err(Error::LengthMismatch(
            "prior size differs from the model".into(),
        ));
    }
    if let Some(x) = (0..n).find(|&x| mu.weights()[x] > 0.0 && nu.weights()[x] <= 0.0) {
        return Err(Error::NotAbsolutelyContinuous(format!(
            "state {x} has positive true prior but zero false prior"
        )));
    }
    let fixed = match behavior {
        Behavior::Fixed(u) => Some(model.joint_actions().encode(u)?),
        Behavior::UniformRandom => None,
    };
    let n_joint = model.joint_actions().len();
    let gap0 = tv_distance(mu, nu)?;

    let runs = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = episode_rng(seed, e);
            let mut gaps = Vec::with_capacity(steps + 1);
            gaps.push(gap0);
            let mut x = sample_index(mu.weights(), &mut rng);
            let mut zm = mu.clone();
            let mut zn = nu.clone();
            for t in 0..steps {
                let y = model.observe(x, &mut rng)?;
                // a uniformly random map applied to y is a uniform action independent of y
                let a = fixed.unwrap_or_else(|| rng.gen_range(0..n_joint));
                zm = predictor_update_indexed(model, &zm, a, &y);
                zn = predictor_update_indexed(model, &zn, a, &y);
                if zm.is_null() || zn.is_null() {
                    return Err(Error::ImpossibleObservation(format!(
                        "episode {e}, step {t}"
                    )));
                }
                gaps.push(tv_distance(&zm, &zn)?);
                x = model.step_indexed(x, a, &mut rng);
            }
            Ok(gaps)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let mut mean = Vec::with_capacity(steps + 1);
    let mut std_error = Vec::with_capacity(steps + 1);
    for t in 0..=steps {
        let col: Vec<f64> = runs.iter().map(|r| r[t]).collect();
        let (m, s) = mean_and_se(&col);
        mean.push(m);
        std_error.push(s);
    }
    Ok(GapEstimate {
        mean,
        std_error,
        episodes,
    })
}

/// One row of the evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub center_index: usize,
    pub center: Vec<f64>,
    pub j_sim: f64,
    pub std_err: f64,
    pub j_vi: Option<f64>,
    pub j_q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
    pub episodes: u64,
    pub horizon: usize,
}

impl EvalTable {
    pub fn to_csv(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from("center,J_sim,std_err,J_vi,J_q\n");
        for r in &self.rows {
            let c: Vec<String> = r.center.iter().map(|v| format!("{v:.5}")).collect();
            let _ = writeln!(
                out,
                "\"[{}]\",{},{},{},{}",
                c.join(" "),
                r.j_sim,
                r.std_err,
                fmt_opt(r.j_vi),
                fmt_opt(r.j_q)
            );
        }
        out
    }
}

/// Rolls out `policy` from each listed center and pairs the result with the
/// VI and Q-learning values at that center.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_centers(
    model: &TeamModel,
    space: &PrescriptionSpace,
    policy: &CoordinatorPolicy,
    codebook: &Codebook,
    metric: &GroundMetric,
    centers: &[usize],
    vi_values: Option<&[f64]>,
    q_values: Option<&[Option<f64>]>,
    episodes: u64,
    seed: u64,
    trunc_eps: f64,
) -> Result<EvalTable> {
    let mut rows = Vec::with_capacity(centers.len());
    let mut horizon = 0;
    for (row, &s) in centers.iter().enumerate() {
        if s >= codebook.len() {
            return Err(Error::IndexOutOfRange {
                what: "center",
                index: s,
                limit: codebook.len(),
            });
        }
        let center = codebook.center(s);
        // distinct streams per row so rows are independent estimates
        let stats = rollout_cost(
            model,
            space,
            policy,
            codebook,
            metric,
            center,
            episodes,
            seed.wrapping_add(row as u64),
            trunc_eps,
        )?;
        horizon = stats.horizon;
        rows.push(EvalRow {
            center_index: s,
            center: center.weights().to_vec(),
            j_sim: stats.mean,
            std_err: stats.std_error,
            j_vi: vi_values.map(|v| v[s]),
            j_q: q_values.and_then(|v| v[s]),
        });
    }
    Ok(EvalTable {
        rows,
        episodes,
        horizon,
    })
}
