//! Dobrushin coefficients, mixing constants and the finite-memory,
//! sliding-window and predictor-stability bounds built from them.
//!
//! Total variation follows the `2 sup` convention used in [`crate::belief`].

use std::fmt::Write as _;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::coordinator::MemorySpec;
use crate::error::{Error, Result};
use crate::model::{TeamModel, STOCHASTIC_TOL};

/// Row-stochastic matrix, rows indexed by input symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    rows: Vec<Vec<f64>>,
}

impl KernelMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || width == 0 {
            return Err(Error::InvalidArgument(
                "kernel needs at least one input and one output".into(),
            ));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(Error::LengthMismatch(format!(
                    "kernel row {i} has {} entries, expected {width}",
                    r.len()
                )));
            }
            if r.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidArgument(format!(
                    "kernel row {i} has an entry outside [0,1]"
                )));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidArgument(format!(
                    "kernel row {i} sums to {s}"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.rows[0].len()
    }
}

fn overlap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.min(*q)).sum()
}

/// `min_{x,x'} sum_z min(K(z|x), K(z|x'))`; 1 for a single input.
pub fn dobrushin(kernel: &KernelMatrix) -> f64 {
    min_pairwise_overlap(kernel.rows.iter().map(Vec::as_slice), |_, _| true)
}

fn min_pairwise_overlap<'a>(
    rows: impl Iterator<Item = &'a [f64]>,
    admissible: impl Fn(usize, usize) -> bool,
) -> f64 {
    let rows: Vec<&[f64]> = rows.collect();
    let mut best = 1.0f64;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            if admissible(i, j) {
                best = best.min(overlap(rows[i], rows[j]));
            }
        }
    }
    best.clamp(0.0, 1.0)
}

/// State to joint measurement kernel.
pub fn joint_channel_kernel(model: &TeamModel) -> KernelMatrix {
    KernelMatrix {
        rows: (0..model.n_states())
            .map(|x| model.joint_channel_row(x).to_vec())
            .collect(),
    }
}

/// Dobrushin coefficient of the joint measurement channel.
pub fn delta_q(model: &TeamModel) -> f64 {
    dobrushin(&joint_channel_kernel(model))
}

/// `min_u dobrushin(tau(.|., u))`.
pub fn delta_tilde_tau(model: &TeamModel) -> f64 {
    (0..model.joint_actions().len())
        .map(|a| min_pairwise_overlap(model.tau_matrix(a).iter().map(Vec::as_slice), |_, _| true))
        .fold(1.0, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub delta_q: f64,
    pub delta_tilde_tau: f64,
    /// `(2 - delta_q) (1 - delta_tilde_tau)`.
    pub rate: f64,
    /// `rate < 1`; otherwise the test is inconclusive.
    pub certified: bool,
}

pub fn predictor_stability_certificate(model: &TeamModel) -> StabilityCertificate {
    let dq = delta_q(model);
    let dt = delta_tilde_tau(model);
    let rate = (2.0 - dq) * (1.0 - dt);
    StabilityCertificate {
        delta_q: dq,
        delta_tilde_tau: dt,
        rate,
        certified: rate < 1.0,
    }
}

pub fn predictor_stability_rate(model: &TeamModel) -> f64 {
    predictor_stability_certificate(model).rate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingMode {
    /// Joint law of next state and next measurement, `tau(x1|x,u) Q(y|x1)`.
    Tx,
    /// Next-state law `tau(.|x,u)` alone.
    TauX,
}

/// Joint conditional mixing constant over deterministic prescriptions.
///
/// A deterministic map can send two histories to two different joint actions
/// only if every agent with a single measurement symbol plays the same action
/// in both, so only such pairs enter the minimum.
pub fn joint_mixing_delta_bar(model: &TeamModel, mode: MixingMode) -> f64 {
    let ja = model.joint_actions();
    let fixed: Vec<usize> = (0..model.n_agents())
        .filter(|&i| model.n_measurements(i) == 1)
        .collect();
    let tuples: Vec<Vec<usize>> = (0..ja.len()).map(|a| ja.decode(a)).collect();
    let admissible = |a: usize, b: usize| fixed.iter().all(|&i| tuples[a][i] == tuples[b][i]);
    let ny = model.joint_measurements().len();
    let mut best = 1.0f64;
    for x in 0..model.n_states() {
        let rows: Vec<Vec<f64>> = (0..ja.len())
            .map(|a| {
                let t = model.tau_row(x, a);
                match mode {
                    MixingMode::TauX => t.to_vec(),
                    MixingMode::Tx => {
                        let mut law = Vec::with_capacity(t.len() * ny);
                        for (x1, &p) in t.iter().enumerate() {
                            law.extend(model.joint_channel_row(x1).iter().map(|q| p * q));
                        }
                        law
                    }
                }
            })
            .collect();
        best = best.min(min_pairwise_overlap(
            rows.iter().map(Vec::as_slice),
            admissible,
        ));
    }
    best
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} = {v} outside [0,1]"
        )))
    }
}

fn check_common(beta: f64, delta_bar: f64, cost_sup: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "beta = {beta} outside (0,1)"
        )));
    }
    check_unit("delta_bar", delta_bar)?;
    if !(cost_sup >= 0.0 && cost_sup.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "cost bound {cost_sup} is negative or not finite"
        )));
    }
    Ok(())
}

/// Loss from restricting the stage-`t` prescription to measurements `m..=t`:
/// `2 sum_{j=t}^{K-1} beta^j (1-delta_bar)^{t-m+1} |c|`.
pub fn err_bound(
    t: usize,
    m: usize,
    k: usize,
    beta: f64,
    delta_bar: f64,
    cost_sup: f64,
) -> Result<f64> {
    check_common(beta, delta_bar, cost_sup)?;
    if !(m <= t && t < k) {
        return Err(Error::InvalidArgument(format!(
            "need m <= t <= K-1, got m={m}, t={t}, K={k}"
        )));
    }
    let tail: f64 = (t..k).map(|j| beta.powi(j as i32)).sum();
    Ok(2.0 * tail * (1.0 - delta_bar).powi((t - m + 1) as i32) * cost_sup)
}

/// Stages `t_1 < ... < t_l` in `1..K` with window starts `m_k <= t_k`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub struct MemorySchedule {
    stages: Vec<usize>,
    windows: Vec<usize>,
}

impl MemorySchedule {
    pub fn new(stages: Vec<usize>, windows: Vec<usize>, k: usize) -> Result<Self> {
        if stages.len() != windows.len() {
            return Err(Error::InvalidMemory("one window per stage required".into()));
        }
        for (i, (&t, &m)) in stages.iter().zip(&windows).enumerate() {
            if t == 0 || t >= k {
                return Err(Error::InvalidMemory(format!("stage {t} outside 1..{k}")));
            }
            if m > t {
                return Err(Error::InvalidMemory(format!(
                    "window start {m} after stage {t}"
                )));
            }
            if i > 0 && stages[i - 1] >= t {
                return Err(Error::InvalidMemory(
                    "stages must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self { stages, windows })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn stages(&self) -> &[usize] {
        &self.stages
    }

    pub fn windows(&self) -> &[usize] {
        &self.windows
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.stages
            .iter()
            .copied()
            .zip(self.windows.iter().copied())
    }

    /// Per-stage window starts; unscheduled stages keep the full period history.
    pub fn to_memory_spec(&self, k: usize) -> Result<MemorySpec> {
        let mut starts = vec![0; k];
        for (t, m) in self.pairs() {
            if t >= k {
                return Err(Error::InvalidMemory(format!(
                    "stage {t} outside the period of length {k}"
                )));
            }
            starts[t] = m;
        }
        MemorySpec::new(starts)
    }
}

pub fn multi_err_bound(
    schedule: &MemorySchedule,
    k: usize,
    beta: f64,
    delta_bar: f64,
    cost_sup: f64,
) -> Result<f64> {
    check_common(beta, delta_bar, cost_sup)?;
    schedule
        .pairs()
        .map(|(t, m)| err_bound(t, m, k, beta, delta_bar, cost_sup))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlidingWindowBound {
    pub raw: f64,
    /// `raw` clamped at zero.
    pub certificate: f64,
}

/// Loss from letting every agent keep only its last `m` measurements within a period of length `K`:
///
/// `2|c| x^{m-1} (1 - x^{K-m}) / ((1-beta)(1-x))
///   - 2|c| (1-d)^{m-1} (1 - (1-d)^{K-m}) beta^{K-2} / ((1-beta) d)`
/// with `d = delta_bar` and `x = beta (1-d)`.
pub fn sliding_window_bound(
    m: usize,
    k: usize,
    beta: f64,
    delta_bar: f64,
    cost_sup: f64,
) -> Result<SlidingWindowBound> {
    check_common(beta, delta_bar, cost_sup)?;
    if delta_bar == 0.0 {
        return Err(Error::InvalidArgument(
            "delta_bar = 0 makes the bound undefined".into(),
        ));
    }
    if !(1 <= m && m <= k) || k < 2 {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= m <= K and K >= 2, got m={m}, K={k}"
        )));
    }
    let x = beta * (1.0 - delta_bar);
    let d1 = 1.0 - delta_bar;
    let span = (k - m) as i32;
    let first =
        2.0 * cost_sup * x.powi(m as i32 - 1) * (1.0 - x.powi(span)) / ((1.0 - beta) * (1.0 - x));
    let second =
        2.0 * cost_sup * d1.powi(m as i32 - 1) * (1.0 - d1.powi(span)) * beta.powi(k as i32 - 2)
            / ((1.0 - beta) * delta_bar);
    let raw = first - second;
    Ok(SlidingWindowBound {
        raw,
        certificate: raw.max(0.0),
    })
}

/// Expected predictor gaps `L_q` fed into the sliding-window common-information bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapSequence {
    Explicit(Vec<f64>),
    /// `L_q = 2 rate^{M (q+1)}` for `q >= 0`.
    Geometric {
        rate: f64,
        window: usize,
    },
}

const SERIES_TOL: f64 = 1e-12;

/// `K |c| / (1 - beta^K) * sum_q L_q`.
pub fn sliding_common_info_bound(
    k: usize,
    beta: f64,
    cost_sup: f64,
    gaps: &GapSequence,
) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "beta = {beta} outside (0,1)"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument(
            "period length must be at least 1".into(),
        ));
    }
    let total = match gaps {
        GapSequence::Explicit(l) => {
            if let Some(v) = l.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "gap {v} is negative or not finite"
                )));
            }
            l.iter().sum::<f64>()
        }
        GapSequence::Geometric { rate, window } => {
            let r = rate.powi(*window as i32);
            if !(*rate >= 0.0 && r < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "gap series diverges: rate {rate} with window {window}"
                )));
            }
            let mut sum = 0.0f64;
            let mut term = 2.0 * r;
            while term > SERIES_TOL * sum.max(1.0) * (1.0 - r) {
                sum += term;
                term *= r;
            }
            sum
        }
    };
    Ok(k as f64 * cost_sup * total / (1.0 - beta.powi(k as i32)))
}

/// `prod_i prod_r |U^i|^{|Y^i|^{window_len(r)}}`.
pub fn action_space_size(
    memory: &MemorySpec,
    n_actions: &[usize],
    n_measurements: &[usize],
) -> BigUint {
    let mut total = BigUint::from(1u32);
    for (&u, &y) in n_actions.iter().zip(n_measurements) {
        for r in 0..memory.horizon() {
            let hist = BigUint::from(y).pow(memory.window_len(r) as u32);
            let exp: u32 = hist.try_into().expect("history count fits in u32");
            total *= BigUint::from(u).pow(exp);
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryOptimization {
    pub schedule: MemorySchedule,
    /// Exact size of the restricted prescription-block space, in decimal.
    pub action_count: String,
    pub error: f64,
}

/// Smallest restricted action space whose total reduction error is within `epsilon`.
///
/// Searches every stage subset of `1..K` and every window start `1..=t`.
/// Ties go to the lexicographically smallest `(stage, window)` list. When only
/// the empty schedule is feasible it is returned with the full space.
pub fn optimize_memory(
    k: usize,
    beta: f64,
    delta_bar: f64,
    cost_sup: f64,
    epsilon: f64,
    n_actions: &[usize],
    n_measurements: &[usize],
) -> Result<MemoryOptimization> {
    check_common(beta, delta_bar, cost_sup)?;
    if !(epsilon > 0.0) {
        return Err(Error::Infeasible(format!(
            "epsilon = {epsilon} must be positive"
        )));
    }
    if !(delta_bar > 0.0) {
        return Err(Error::Infeasible(
            "delta_bar = 0 admits no memory reduction".into(),
        ));
    }
    if k == 0 || k > 12 {
        return Err(Error::InvalidArgument(format!(
            "period length {k} outside the searchable range 1..=12"
        )));
    }
    if n_actions.len() != n_measurements.len() {
        return Err(Error::LengthMismatch(
            "alphabet size lists differ in length".into(),
        ));
    }
    let table: Vec<Vec<f64>> = (0..k)
        .map(|t| {
            (0..=t)
                .map(|m| err_bound(t, m, k, beta, delta_bar, cost_sup))
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut best = MemoryOptimization {
        schedule: MemorySchedule::empty(),
        action_count: action_space_size(&MemorySpec::full(k), n_actions, n_measurements)
            .to_string(),
        error: 0.0,
    };
    let mut best_key: Option<(BigUint, Vec<(usize, usize)>)> = None;
    let stages: Vec<usize> = (1..k).collect();
    for mask in 1u32..(1 << stages.len()) {
        let chosen: Vec<usize> = stages
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &t)| t)
            .collect();
        let mut windows: Vec<usize> = vec![1; chosen.len()];
        loop {
            let err: f64 = chosen
                .iter()
                .zip(&windows)
                .map(|(&t, &m)| table[t][m])
                .sum();
            if err <= epsilon {
                let schedule = MemorySchedule::new(chosen.clone(), windows.clone(), k)?;
                let count =
                    action_space_size(&schedule.to_memory_spec(k)?, n_actions, n_measurements);
                let pairs: Vec<(usize, usize)> = schedule.pairs().collect();
                let better = match &best_key {
                    None => true,
                    Some((c, p)) => count < *c || (count == *c && pairs < *p),
                };
                if better {
                    best = MemoryOptimization {
                        schedule,
                        action_count: count.to_string(),
                        error: err,
                    };
                    best_key = Some((count, pairs));
                }
            }
            // odometer over m_k in 1..=t_k
            let mut i = 0;
            while i < windows.len() {
                if windows[i] < chosen[i] {
                    windows[i] += 1;
                    break;
                }
                windows[i] = 1;
                i += 1;
            }
            if i == windows.len() {
                break;
            }
        }
    }
    Ok(best)
}

/// Everything the `bounds` command reports for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub horizon: usize,
    pub beta: f64,
    pub cost_sup: f64,
    pub stability: StabilityCertificate,
    pub delta_bar_tx: f64,
    pub delta_bar_tau_x: f64,
    /// `(t, m, Err(t, m))` for `0 <= m <= t <= K-1`, using the `Tx` constant.
    pub err_table: Vec<(usize, usize, f64)>,
    /// `(m, raw, certificate)` for `1 <= m <= K`; empty when the mixing constant is 0.
    pub sliding: Vec<(usize, f64, f64)>,
    pub epsilon: Option<f64>,
    pub schedule: Option<MemoryOptimization>,
}

impl BoundsReport {
    /// Computes the report; `epsilon` triggers the memory optimization.
    pub fn compute(model: &TeamModel, k: usize, epsilon: Option<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument(
                "period length must be at least 1".into(),
            ));
        }
        let beta = model.beta();
        let cost_sup = model.cost_sup();
        let dbar = joint_mixing_delta_bar(model, MixingMode::Tx);
        let mut err_table = Vec::new();
        for t in 0..k {
            for m in 0..=t {
                err_table.push((t, m, err_bound(t, m, k, beta, dbar, cost_sup)?));
            }
        }
        let mut sliding = Vec::new();
        if dbar > 0.0 && k >= 2 {
            for m in 1..=k {
                let b = sliding_window_bound(m, k, beta, dbar, cost_sup)?;
                sliding.push((m, b.raw, b.certificate));
            }
        }
        let schedule = match epsilon {
            Some(eps) => {
                let na: Vec<usize> = (0..model.n_agents()).map(|i| model.n_actions(i)).collect();
                let ny: Vec<usize> = (0..model.n_agents())
                    .map(|i| model.n_measurements(i))
                    .collect();
                Some(optimize_memory(k, beta, dbar, cost_sup, eps, &na, &ny)?)
            }
            None => None,
        };
        Ok(Self {
            horizon: k,
            beta,
            cost_sup,
            stability: predictor_stability_certificate(model),
            delta_bar_tx: dbar,
            delta_bar_tau_x: joint_mixing_delta_bar(model, MixingMode::TauX),
            err_table,
            sliding,
            epsilon,
            schedule,
        })
    }

    /// Flat `key,value` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("key,value\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k},{v}");
        };
        kv("K", self.horizon.to_string());
        kv("beta", self.beta.to_string());
        kv("cost_sup", self.cost_sup.to_string());
        kv("delta_Q", self.stability.delta_q.to_string());
        kv(
            "delta_tilde_tau",
            self.stability.delta_tilde_tau.to_string(),
        );
        kv("rate", self.stability.rate.to_string());
        kv("rate_certified", self.stability.certified.to_string());
        kv("delta_bar_Tx", self.delta_bar_tx.to_string());
        kv("delta_bar_tau_x", self.delta_bar_tau_x.to_string());
        kv("delta_bar_class", "deterministic_prescriptions".into());
        for &(t, m, e) in &self.err_table {
            kv(&format!("err_t{t}_m{m}"), e.to_string());
        }
        for &(m, raw, cert) in &self.sliding {
            kv(&format!("sliding_m{m}_raw"), raw.to_string());
            kv(&format!("sliding_m{m}_certificate"), cert.to_string());
        }
        if let Some(eps) = self.epsilon {
            kv("epsilon", eps.to_string());
        }
        if let Some(opt) = &self.schedule {
            let sched: Vec<String> = opt
                .schedule
                .pairs()
                .map(|(t, m)| format!("{t}:{m}"))
                .collect();
            kv("schedule", sched.join(" "));
            kv("schedule_error", opt.error.to_string());
            kv("schedule_action_count", opt.action_count.clone());
        }
        out
    }
}
