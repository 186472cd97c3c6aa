//! Exact Bayes recursions over the finite state space and the distances used
//! to compare beliefs.
//!
//! The predictor update reweights the current predictor by the joint
//! likelihood of the shared measurements and pushes the result through the
//! transition kernel:
//!
//! ```text
//! F(Z, u, y)(x') = sum_x Z(x) prod_i h(x, y^i) tau(x' | x, u) / sum_x Z(x) prod_i h(x, y^i)
//! ```
//!
//! When the normalizer vanishes the update returns the null belief (all zeros).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TeamModel, STOCHASTIC_TOL};
use crate::transport::optimal_transport;

/// A probability vector over states, or the null value produced by a
/// zero-probability measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    is_null: bool,
}

impl Belief {
    /// Validates and renormalizes a probability vector.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidBelief("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidBelief(format!(
                "entry {w} is negative or not finite"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidBelief(format!("weights sum to {sum}")));
        }
        Ok(Self::normalized(weights, sum))
    }

    fn normalized(mut weights: Vec<f64>, sum: f64) -> Self {
        for w in &mut weights {
            *w /= sum;
        }
        Self {
            weights,
            is_null: false,
        }
    }

    /// Builds a belief from nonnegative unnormalized mass; `None` when the mass is zero.
    pub(crate) fn from_mass(weights: Vec<f64>) -> Option<Self> {
        let sum: f64 = weights.iter().sum();
        (sum > 0.0).then(|| Self::normalized(weights, sum))
    }

    pub fn null(n_states: usize) -> Self {
        Self {
            weights: vec![0.0; n_states],
            is_null: true,
        }
    }

    pub fn point(n_states: usize, x: usize) -> Self {
        let mut weights = vec![0.0; n_states];
        weights[x] = 1.0;
        Self {
            weights,
            is_null: false,
        }
    }

    pub fn uniform(n_states: usize) -> Self {
        Self {
            weights: vec![1.0 / n_states as f64; n_states],
            is_null: false,
        }
    }

    pub fn is_null(&self) -> bool {
        self.is_null
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Largest coordinate difference.
    pub fn sup_distance(&self, other: &Belief) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn require(&self, op: &'static str) -> Result<()> {
        if self.is_null {
            Err(Error::NullBelief(op))
        } else {
            Ok(())
        }
    }
}

/// Ground metric on the state space used by the Wasserstein distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GroundMetric {
    /// `d(x, x') = 1` whenever `x != x'`.
    #[default]
    Discrete,
    /// `d(x, x') = |x - x'|` on integer state labels.
    Line,
    /// An explicit symmetric metric matrix.
    Matrix(Vec<Vec<f64>>),
}

impl GroundMetric {
    /// Checks that a matrix is a metric on `n` points.
    pub fn validate(&self, n: usize) -> Result<()> {
        let GroundMetric::Matrix(d) = self else {
            return Ok(());
        };
        if d.len() != n || d.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMetric(format!("expected a {n}x{n} matrix")));
        }
        for i in 0..n {
            if d[i][i] != 0.0 {
                return Err(Error::InvalidMetric(format!("d({i},{i}) != 0")));
            }
            for j in 0..n {
                if !d[i][j].is_finite() || (i != j && d[i][j] <= 0.0) {
                    return Err(Error::InvalidMetric(format!("d({i},{j}) must be positive")));
                }
                if (d[i][j] - d[j][i]).abs() > 1e-12 {
                    return Err(Error::InvalidMetric(format!("d({i},{j}) != d({j},{i})")));
                }
                for k in 0..n {
                    if d[i][k] > d[i][j] + d[j][k] + 1e-12 {
                        return Err(Error::InvalidMetric(format!(
                            "triangle inequality fails for ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match self {
            GroundMetric::Discrete => f64::from(u8::from(i != j)),
            GroundMetric::Line => (i as f64 - j as f64).abs(),
            GroundMetric::Matrix(d) => d[i][j],
        }
    }

    pub fn matrix(&self, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| self.distance(i, j)).collect())
            .collect()
    }
}

fn check_action_and_measurement(
    model: &TeamModel,
    joint_action: &[usize],
    y: &[usize],
) -> Result<usize> {
    let a = model.joint_actions().encode(joint_action)?;
    model.check_measurement(y)?;
    Ok(a)
}

/// Reweights `weights` by the joint likelihood of `y` then pushes through
/// `tau(.|., a)`. Returns unnormalized mass and the normalizer.
pub(crate) fn predict_mass(
    model: &TeamModel,
    weights: &[f64],
    a: usize,
    y: &[usize],
) -> (Vec<f64>, f64) {
    let n = model.n_states();
    let mut out = vec![0.0; n];
    let mut norm = 0.0;
    for (x, &z) in weights.iter().enumerate() {
        if z == 0.0 {
            continue;
        }
        let w = z * model.likelihood(x, y);
        if w == 0.0 {
            continue;
        }
        norm += w;
        for (o, t) in out.iter_mut().zip(model.tau_row(x, a)) {
            *o += w * t;
        }
    }
    (out, norm)
}

/// One-step predictor update `F(Z, u, y)`.
pub fn predictor_update(
    model: &TeamModel,
    z: &Belief,
    joint_action: &[usize],
    y: &[usize],
) -> Result<Belief> {
    z.require("predictor_update")?;
    let a = check_action_and_measurement(model, joint_action, y)?;
    Ok(predictor_update_indexed(model, z, a, y))
}

pub(crate) fn predictor_update_indexed(
    model: &TeamModel,
    z: &Belief,
    a: usize,
    y: &[usize],
) -> Belief {
    let (mass, norm) = predict_mass(model, &z.weights, a, y);
    if norm > 0.0 {
        // renormalize the pushed-forward mass rather than dividing by `norm`
        // so drift in tau rows does not accumulate
        Belief::from_mass(mass).unwrap_or_else(|| Belief::null(model.n_states()))
    } else {
        Belief::null(model.n_states())
    }
}

/// Filter recursion: push through `tau(.|., u)` then condition on the
/// measurement taken at the new state.
pub fn filter_update(
    model: &TeamModel,
    filter: &Belief,
    joint_action: &[usize],
    y_next: &[usize],
) -> Result<Belief> {
    filter.require("filter_update")?;
    let a = check_action_and_measurement(model, joint_action, y_next)?;
    let n = model.n_states();
    let mut pushed = vec![0.0; n];
    for (x, &p) in filter.weights.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (o, t) in pushed.iter_mut().zip(model.tau_row(x, a)) {
            *o += p * t;
        }
    }
    for (x, w) in pushed.iter_mut().enumerate() {
        *w *= model.likelihood(x, y_next);
    }
    Ok(Belief::from_mass(pushed).unwrap_or_else(|| Belief::null(n)))
}

/// K-fold composition of [`predictor_update`] over one sharing period.
pub fn k_step_update(
    model: &TeamModel,
    pi: &Belief,
    actions: &[Vec<usize>],
    measurements: &[Vec<usize>],
) -> Result<Belief> {
    pi.require("k_step_update")?;
    if actions.len() != measurements.len() {
        return Err(Error::LengthMismatch(format!(
            "{} action stages but {} measurement stages",
            actions.len(),
            measurements.len()
        )));
    }
    if actions.is_empty() {
        return Err(Error::LengthMismatch(
            "period length must be at least 1".into(),
        ));
    }
    let mut cur = pi.clone();
    for (u, y) in actions.iter().zip(measurements) {
        cur = predictor_update(model, &cur, u, y)?;
        if cur.is_null() {
            break;
        }
    }
    Ok(cur)
}

pub(crate) fn k_step_update_indexed(
    model: &TeamModel,
    pi: &Belief,
    actions: &[usize],
    measurements: &[Vec<usize>],
) -> Belief {
    let mut cur = pi.clone();
    for (&a, y) in actions.iter().zip(measurements) {
        cur = predictor_update_indexed(model, &cur, a, y);
        if cur.is_null() {
            break;
        }
    }
    cur
}

/// Total variation in the `2 sup` convention, i.e. the l1 distance.
pub fn tv_distance(mu: &Belief, nu: &Belief) -> Result<f64> {
    mu.require("tv_distance")?;
    nu.require("tv_distance")?;
    if mu.len() != nu.len() {
        return Err(Error::LengthMismatch(
            "beliefs over different state spaces".into(),
        ));
    }
    Ok(l1(&mu.weights, &nu.weights))
}

pub(crate) fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Wasserstein-1 distance under `metric`.
pub fn w1_distance(mu: &Belief, nu: &Belief, metric: &GroundMetric) -> Result<f64> {
    mu.require("w1_distance")?;
    nu.require("w1_distance")?;
    if mu.len() != nu.len() {
        return Err(Error::LengthMismatch(
            "beliefs over different state spaces".into(),
        ));
    }
    metric.validate(mu.len())?;
    Ok(w1_unchecked(&mu.weights, &nu.weights, metric))
}

pub(crate) fn w1_unchecked(a: &[f64], b: &[f64], metric: &GroundMetric) -> f64 {
    match metric {
        GroundMetric::Discrete => 0.5 * l1(a, b),
        GroundMetric::Line => {
            let mut gap = 0.0;
            let mut total = 0.0;
            for (x, y) in a.iter().zip(b).take(a.len().saturating_sub(1)) {
                gap += x - y;
                total += gap.abs();
            }
            total
        }
        GroundMetric::Matrix(d) => optimal_transport(a, b, d).0,
    }
}
