//! Value iteration and tabular Q-learning on the quantized coordinator MDP.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::k_step_update_indexed;
use crate::coordinator::{simulate_period, JointPrescriptionBlock};
use crate::error::{Error, Result};
use crate::model::{sample_index, TeamModel};
use crate::quantizer::QuantizedMDP;

/// Tabular action values indexed `[center][action column]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub values: Vec<Vec<f64>>,
    pub visit_counts: Vec<Vec<u64>>,
    /// Block id of each action column.
    pub actions: Vec<u64>,
}

impl QTable {
    pub fn zeros(n_states: usize, actions: Vec<u64>) -> Self {
        let na = actions.len();
        Self {
            values: vec![vec![0.0; na]; n_states],
            visit_counts: vec![vec![0; na]; n_states],
            actions,
        }
    }

    pub fn from_values(values: Vec<Vec<f64>>, actions: Vec<u64>) -> Result<Self> {
        if values.iter().any(|r| r.len() != actions.len()) {
            return Err(Error::LengthMismatch(
                "Q row length differs from the action list".into(),
            ));
        }
        let visit_counts = vec![vec![0; actions.len()]; values.len()];
        Ok(Self {
            values,
            visit_counts,
            actions,
        })
    }

    pub fn n_states(&self) -> usize {
        self.values.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Pairs `(s, a)` with at least one update.
    pub fn visited(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.visit_counts.iter().enumerate().flat_map(|(s, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .map(move |(a, _)| (s, a))
        })
    }
}

/// A stationary coordinator policy over codebook centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinatorPolicy {
    /// Chosen block id per center.
    pub actions: Vec<u64>,
    /// Column of the chosen block in the source table.
    pub columns: Vec<usize>,
    pub values: Vec<f64>,
}

impl CoordinatorPolicy {
    pub fn action(&self, center: usize) -> u64 {
        self.actions[center]
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Row-wise argmin with ties going to the lowest block id.
pub fn greedy_policy(q: &QTable) -> CoordinatorPolicy {
    greedy_from_rows(&q.values, &q.actions)
}

/// Like [`greedy_policy`] but restricted to visited columns in rows that have
/// any visits, so untouched initial entries do not win the argmin.
pub fn greedy_policy_visited(q: &QTable) -> CoordinatorPolicy {
    let masks: Vec<Vec<bool>> = q
        .visit_counts
        .iter()
        .map(|r| {
            let any = r.iter().any(|&n| n > 0);
            r.iter().map(|&n| !any || n > 0).collect()
        })
        .collect();
    greedy_masked(&q.values, &q.actions, Some(&masks))
}

fn greedy_from_rows(rows: &[Vec<f64>], ids: &[u64]) -> CoordinatorPolicy {
    greedy_masked(rows, ids, None)
}

fn greedy_masked(rows: &[Vec<f64>], ids: &[u64], masks: Option<&[Vec<bool>]>) -> CoordinatorPolicy {
    let mut actions = Vec::with_capacity(rows.len());
    let mut columns = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (s, row) in rows.iter().enumerate() {
        let allowed = |a: usize| masks.is_none_or(|m| m[s][a]);
        let mut best = (0..row.len()).find(|&a| allowed(a)).unwrap_or(0);
        for a in best + 1..row.len() {
            if allowed(a) && (row[a] < row[best] || (row[a] == row[best] && ids[a] < ids[best])) {
                best = a;
            }
        }
        actions.push(ids[best]);
        columns.push(best);
        values.push(row[best]);
    }
    CoordinatorPolicy {
        actions,
        columns,
        values,
    }
}

/// `Q(s, a) = C(s, a) + discount * sum_s' P(s' | s, a) v(s')`.
pub fn bellman_q(mdp: &QuantizedMDP, v: &[f64]) -> Vec<Vec<f64>> {
    let d = mdp.discount();
    (0..mdp.n_states())
        .into_par_iter()
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| {
                    let ev: f64 = mdp.transitions(s, a).iter().map(|&(t, p)| p * v[t]).sum();
                    mdp.cost(s, a) + d * ev
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    pub policy: CoordinatorPolicy,
    pub q: QTable,
    /// `||T V - V||_inf` of the returned `values`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm change of each sweep.
    pub deltas: Vec<f64>,
}

/// Iterates the Bellman operator from zero until the sup-norm residual is at most `tol`.
pub fn value_iteration(mdp: &QuantizedMDP, tol: f64, max_iters: usize) -> Result<ValueIteration> {
    if !(mdp.discount() < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "discount {} is not below 1",
            mdp.discount()
        )));
    }
    if let Some(c) = mdp.costs().iter().flatten().find(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!("cost {c}")));
    }
    let mut v = vec![0.0; mdp.n_states()];
    let mut deltas = Vec::new();
    let mut q = bellman_q(mdp, &v);
    let mut converged = false;
    for _ in 0..max_iters.max(1) {
        let next: Vec<f64> = q
            .iter()
            .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if delta <= tol {
            converged = true;
            break;
        }
        deltas.push(delta);
        v = next;
        q = bellman_q(mdp, &v);
    }
    // q = T-backup of v here, so its row minima give T v
    let residual = q
        .iter()
        .zip(&v)
        .map(|(row, &vs)| (row.iter().copied().fold(f64::INFINITY, f64::min) - vs).abs())
        .fold(0.0, f64::max);
    let table = QTable::from_values(q, mdp.actions().to_vec())?;
    let policy = greedy_policy(&table);
    Ok(ValueIteration {
        values: v,
        policy,
        q: table,
        residual,
        iterations: deltas.len() + 1,
        converged,
        deltas,
    })
}

/// Sampling interface for Q-learning: exact costs, sampled successor centers.
pub trait Environment {
    fn n_states(&self) -> usize;
    fn action_ids(&self) -> &[u64];
    fn discount(&self) -> f64;
    fn cost(&self, s: usize, a: usize) -> f64;
    fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<usize>;
}

impl Environment for QuantizedMDP {
    fn n_states(&self) -> usize {
        QuantizedMDP::n_states(self)
    }

    fn action_ids(&self) -> &[u64] {
        self.actions()
    }

    fn discount(&self) -> f64 {
        QuantizedMDP::discount(self)
    }

    fn cost(&self, s: usize, a: usize) -> f64 {
        QuantizedMDP::cost(self, s, a)
    }

    fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<usize> {
        let row = self.transitions(s, a);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for &(t, p) in row {
            acc += p;
            if u < acc {
                return Ok(t);
            }
        }
        Ok(row.last().map(|e| e.0).unwrap_or(s))
    }
}

/// Runs the true system for one period from a state drawn from the current
/// center, updates the exact predictor on the realized data and quantizes it.
pub struct LiveEnv<'a> {
    model: &'a TeamModel,
    mdp: &'a QuantizedMDP,
    blocks: Vec<JointPrescriptionBlock>,
}

impl<'a> LiveEnv<'a> {
    /// `blocks` must be the MDP's action list in column order.
    pub fn new(
        model: &'a TeamModel,
        mdp: &'a QuantizedMDP,
        blocks: Vec<JointPrescriptionBlock>,
    ) -> Result<Self> {
        if blocks.len() != mdp.n_actions()
            || blocks
                .iter()
                .zip(mdp.actions())
                .any(|(b, &id)| b.id() != id)
        {
            return Err(Error::LengthMismatch(
                "blocks do not match the MDP action list".into(),
            ));
        }
        Ok(Self { model, mdp, blocks })
    }
}

impl Environment for LiveEnv<'_> {
    fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    fn action_ids(&self) -> &[u64] {
        self.mdp.actions()
    }

    fn discount(&self) -> f64 {
        self.mdp.discount()
    }

    fn cost(&self, s: usize, a: usize) -> f64 {
        self.mdp.cost(s, a)
    }

    fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<usize> {
        let center = self.mdp.codebook().center(s);
        let x0 = sample_index(center.weights(), rng);
        let period = simulate_period(self.model, x0, &self.blocks[a], rng);
        let next = k_step_update_indexed(self.model, center, &period.actions, &period.measurements);
        if next.is_null() {
            return Err(Error::ImpossibleObservation(format!(
                "realized measurements have zero probability under center {s}"
            )));
        }
        Ok(self
            .mdp
            .codebook()
            .nearest_unchecked(next.weights(), self.mdp.metric()))
    }
}

/// Action selection at every center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Exploration {
    #[default]
    Uniform,
    /// Unnormalized per-column weights, all strictly positive.
    Weighted(Vec<f64>),
}

enum Sampler {
    Uniform(usize),
    Weighted(WeightedIndex<f64>),
}

impl Sampler {
    fn new(exploration: &Exploration, n_actions: usize) -> Result<Self> {
        match exploration {
            Exploration::Uniform => Ok(Self::Uniform(n_actions)),
            Exploration::Weighted(w) => {
                if w.len() != n_actions {
                    return Err(Error::LengthMismatch(format!(
                        "{} exploration weights for {n_actions} actions",
                        w.len()
                    )));
                }
                if let Some(a) = w.iter().position(|&p| !(p > 0.0) || !p.is_finite()) {
                    return Err(Error::ZeroExploration(a));
                }
                Ok(Self::Weighted(
                    WeightedIndex::new(w).map_err(|e| Error::InvalidArgument(e.to_string()))?,
                ))
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            Self::Uniform(n) => rng.gen_range(0..*n),
            Self::Weighted(w) => w.sample(rng),
        }
    }
}

/// Asynchronous Q-learning along a single trajectory starting at `start`.
///
/// The step size for the visited pair is `1 / (1 + prior visits)`; no other
/// entry changes in that step.
pub fn q_learning<E: Environment, R: Rng + ?Sized>(
    env: &E,
    exploration: &Exploration,
    steps: u64,
    start: usize,
    rng: &mut R,
    q0: QTable,
) -> Result<QTable> {
    q_learning_with_restarts(env, exploration, steps, start, None, rng, q0)
}

/// [`q_learning`] where, with `restart_every = Some(n)`, the trajectory jumps to
/// a uniformly random center before every `n`-th step (including the first).
///
/// Restarts reach centers that the exploration chain from `start` never
/// visits; the update rule is unchanged.
pub fn q_learning_with_restarts<E: Environment, R: Rng + ?Sized>(
    env: &E,
    exploration: &Exploration,
    steps: u64,
    start: usize,
    restart_every: Option<u64>,
    rng: &mut R,
    q0: QTable,
) -> Result<QTable> {
    if restart_every == Some(0) {
        return Err(Error::InvalidArgument(
            "restart interval must be at least 1".into(),
        ));
    }
    let ns = env.n_states();
    let na = env.action_ids().len();
    if q0.n_states() != ns || q0.actions != env.action_ids() {
        return Err(Error::LengthMismatch(
            "initial table does not match the environment".into(),
        ));
    }
    if start >= ns {
        return Err(Error::IndexOutOfRange {
            what: "start center",
            index: start,
            limit: ns,
        });
    }
    if na == 0 {
        return Err(Error::InvalidArgument("environment has no actions".into()));
    }
    let sampler = Sampler::new(exploration, na)?;
    let mut q = q0;
    let beta = env.discount();
    let row_argmin = |row: &[f64]| {
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] < row[best] {
                best = a;
            }
        }
        best
    };
    let mut argmin: Vec<usize> = q.values.iter().map(|r| row_argmin(r)).collect();

    let mut s = start;
    for t in 0..steps {
        if restart_every.is_some_and(|n| t % n == 0) {
            s = rng.gen_range(0..ns);
        }
        let a = sampler.sample(rng);
        let next = env.sample_next(s, a, rng)?;
        let target = env.cost(s, a) + beta * q.values[next][argmin[next]];
        let n = q.visit_counts[s][a];
        let alpha = 1.0 / (1.0 + n as f64);
        let old = q.values[s][a];
        let new = old + alpha * (target - old);
        q.values[s][a] = new;
        q.visit_counts[s][a] = n + 1;
        if new < q.values[s][argmin[s]] {
            argmin[s] = a;
        } else if a == argmin[s] && new > old {
            argmin[s] = row_argmin(&q.values[s]);
        }
        s = next;
    }
    Ok(q)
}
