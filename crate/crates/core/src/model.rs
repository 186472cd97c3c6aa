//! The finite team problem: alphabets, transition kernel, measurement channels,
//! stage cost and discount, plus sampling of the true dynamics.
//!
//! Joint actions and joint measurements are flattened with a mixed-radix index in
//! which agent 0 is the most significant digit, so index order equals the
//! lexicographic order of the tuples `[u1, ..., uN]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::error::{Error, Result, Violation};

pub(crate) const STOCHASTIC_TOL: f64 = 1e-9;

/// Mixed-radix flattening of per-agent tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointIndexer {
    radices: Vec<usize>,
    len: usize,
}

impl JointIndexer {
    pub fn new(radices: Vec<usize>) -> Self {
        let len = radices.iter().product();
        Self { radices, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn encode(&self, tuple: &[usize]) -> Result<usize> {
        if tuple.len() != self.radices.len() {
            return Err(Error::LengthMismatch(format!(
                "tuple has {} components, expected {}",
                tuple.len(),
                self.radices.len()
            )));
        }
        let mut idx = 0;
        for (&v, &r) in tuple.iter().zip(&self.radices) {
            if v >= r {
                return Err(Error::IndexOutOfRange {
                    what: "tuple component",
                    index: v,
                    limit: r,
                });
            }
            idx = idx * r + v;
        }
        Ok(idx)
    }

    pub fn decode(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.radices.len()];
        for (slot, &r) in out.iter_mut().zip(&self.radices).rev() {
            *slot = idx % r;
            idx /= r;
        }
        out
    }
}

/// Draws an index from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAgent {
    pub actions: usize,
    pub measurements: usize,
    /// Row-major `channel[x][y]`.
    pub channel: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTauEntry {
    pub action: Vec<usize>,
    /// `matrix[x][x']`.
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCostEntry {
    pub action: Vec<usize>,
    /// `values[x]`.
    pub values: Vec<f64>,
}

/// Unvalidated model description, the on-disk JSON form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawModel {
    pub states: usize,
    pub agents: Vec<RawAgent>,
    pub tau: Vec<RawTauEntry>,
    pub cost: Vec<RawCostEntry>,
    pub beta: f64,
    pub initial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Agent {
    n_actions: usize,
    n_measurements: usize,
    channel: Vec<Vec<f64>>,
}

/// A validated finite team problem. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamModel {
    n_states: usize,
    agents: Vec<Agent>,
    actions: JointIndexer,
    measurements: JointIndexer,
    /// `tau[joint_action][x][x']`
    tau: Vec<Vec<Vec<f64>>>,
    /// `cost[x][joint_action]`
    cost: Vec<Vec<f64>>,
    /// `joint_channel[x][joint_measurement]`, product of the agent channels.
    joint_channel: Vec<Vec<f64>>,
    beta: f64,
    initial: Belief,
}

fn check_row(field: &str, row: usize, values: &[f64], out: &mut Vec<Violation>) {
    if let Some(bad) = values
        .iter()
        .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
    {
        out.push(Violation {
            field: field.to_string(),
            row: Some(row),
            message: format!("entry {bad} outside [0,1]"),
        });
        return;
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        out.push(Violation {
            field: field.to_string(),
            row: Some(row),
            message: format!("row sums to {sum}"),
        });
    }
}

fn violation(field: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation {
        field: field.into(),
        row: None,
        message: message.into(),
    }
}

/// Checks a raw description and builds the model, or reports every violation found.
pub fn validate_model(raw: &RawModel) -> Result<TeamModel> {
    let mut v = Vec::new();
    let n = raw.states;
    if n == 0 {
        v.push(violation("states", "must be at least 1"));
    }
    if raw.agents.is_empty() {
        v.push(violation("agents", "at least one agent is required"));
    }
    for (i, a) in raw.agents.iter().enumerate() {
        let field = format!("agents[{i}].channel");
        if a.actions == 0 {
            v.push(violation(
                format!("agents[{i}].actions"),
                "must be at least 1",
            ));
        }
        if a.measurements == 0 {
            v.push(violation(
                format!("agents[{i}].measurements"),
                "must be at least 1",
            ));
        }
        if a.channel.len() != n {
            v.push(violation(
                &field,
                format!("has {} rows, expected {n} (one per state)", a.channel.len()),
            ));
            continue;
        }
        for (x, row) in a.channel.iter().enumerate() {
            if row.len() != a.measurements {
                v.push(Violation {
                    field: field.clone(),
                    row: Some(x),
                    message: format!("has {} columns, expected {}", row.len(), a.measurements),
                });
            } else {
                check_row(&field, x, row, &mut v);
            }
        }
    }
    if !(raw.beta > 0.0 && raw.beta < 1.0) {
        v.push(violation(
            "beta",
            format!("{} not strictly inside (0,1)", raw.beta),
        ));
    }
    if raw.initial.len() != n {
        v.push(violation(
            "initial",
            format!("has {} entries, expected {n}", raw.initial.len()),
        ));
    } else if n > 0 {
        check_row("initial", 0, &raw.initial, &mut v);
    }

    let actions = JointIndexer::new(raw.agents.iter().map(|a| a.actions).collect());
    let measurements = JointIndexer::new(raw.agents.iter().map(|a| a.measurements).collect());
    let mut tau: Vec<Option<Vec<Vec<f64>>>> = vec![None; actions.len()];
    let mut cost: Vec<Option<Vec<f64>>> = vec![None; actions.len()];

    for e in &raw.tau {
        let field = format!("tau{:?}", e.action);
        let idx = match actions.encode(&e.action) {
            Ok(i) => i,
            Err(err) => {
                v.push(violation(&field, err.to_string()));
                continue;
            }
        };
        if tau[idx].is_some() {
            v.push(violation(&field, "duplicate joint action"));
            continue;
        }
        if e.matrix.len() != n {
            v.push(violation(
                &field,
                format!("has {} rows, expected {n}", e.matrix.len()),
            ));
            continue;
        }
        let mut ok = true;
        for (x, row) in e.matrix.iter().enumerate() {
            if row.len() != n {
                ok = false;
                v.push(Violation {
                    field: field.clone(),
                    row: Some(x),
                    message: format!("has {} columns, expected {n}", row.len()),
                });
            } else {
                let before = v.len();
                check_row(&field, x, row, &mut v);
                ok &= v.len() == before;
            }
        }
        if ok {
            tau[idx] = Some(e.matrix.clone());
        }
    }
    for e in &raw.cost {
        let field = format!("cost{:?}", e.action);
        let idx = match actions.encode(&e.action) {
            Ok(i) => i,
            Err(err) => {
                v.push(violation(&field, err.to_string()));
                continue;
            }
        };
        if cost[idx].is_some() {
            v.push(violation(&field, "duplicate joint action"));
            continue;
        }
        if e.values.len() != n {
            v.push(violation(
                &field,
                format!("has {} entries, expected {n}", e.values.len()),
            ));
            continue;
        }
        if let Some((x, c)) = e
            .values
            .iter()
            .enumerate()
            .find(|(_, c)| !c.is_finite() || **c < 0.0)
        {
            v.push(Violation {
                field,
                row: Some(x),
                message: format!("cost {c} is negative or not finite"),
            });
            continue;
        }
        cost[idx] = Some(e.values.clone());
    }
    if v.is_empty() {
        for a in 0..actions.len() {
            let tuple = actions.decode(a);
            if tau[a].is_none() {
                v.push(violation(format!("tau{tuple:?}"), "missing joint action"));
            }
            if cost[a].is_none() {
                v.push(violation(format!("cost{tuple:?}"), "missing joint action"));
            }
        }
    }
    if !v.is_empty() {
        return Err(Error::InvalidModel(v));
    }

    let agents: Vec<Agent> = raw
        .agents
        .iter()
        .map(|a| Agent {
            n_actions: a.actions,
            n_measurements: a.measurements,
            channel: a.channel.clone(),
        })
        .collect();
    let tau: Vec<Vec<Vec<f64>>> = tau.into_iter().map(Option::unwrap).collect();
    let cost_by_action: Vec<Vec<f64>> = cost.into_iter().map(Option::unwrap).collect();
    let cost = (0..n)
        .map(|x| cost_by_action.iter().map(|c| c[x]).collect())
        .collect();
    let joint_channel = (0..n)
        .map(|x| {
            (0..measurements.len())
                .map(|y| {
                    measurements
                        .decode(y)
                        .iter()
                        .zip(&agents)
                        .map(|(&yi, a)| a.channel[x][yi])
                        .product()
                })
                .collect()
        })
        .collect();
    let initial = Belief::new(raw.initial.clone())?;
    Ok(TeamModel {
        n_states: n,
        agents,
        actions,
        measurements,
        tau,
        cost,
        joint_channel,
        beta: raw.beta,
        initial,
    })
}

impl TeamModel {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawModel = serde_json::from_str(s)?;
        validate_model(&raw)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Three states, two agents with binary actions and measurements. Agents see a
    /// fair coin in state 0 and always read 1 in states 1 and 2; disagreeing actions
    /// scramble the state uniformly, agreeing actions move it off its current value.
    /// Cost `(x - u1 - u2)^2 + u1^2 + u2^2`, discount 0.01, uniform prior.
    pub fn two_agent_example() -> Self {
        validate_model(&two_agent_example_raw()).expect("built-in example is valid")
    }

    pub fn to_raw(&self) -> RawModel {
        let n_actions = self.actions.len();
        RawModel {
            states: self.n_states,
            agents: self
                .agents
                .iter()
                .map(|a| RawAgent {
                    actions: a.n_actions,
                    measurements: a.n_measurements,
                    channel: a.channel.clone(),
                })
                .collect(),
            tau: (0..n_actions)
                .map(|a| RawTauEntry {
                    action: self.actions.decode(a),
                    matrix: self.tau[a].clone(),
                })
                .collect(),
            cost: (0..n_actions)
                .map(|a| RawCostEntry {
                    action: self.actions.decode(a),
                    values: (0..self.n_states).map(|x| self.cost[x][a]).collect(),
                })
                .collect(),
            beta: self.beta,
            initial: self.initial.weights().to_vec(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn n_actions(&self, agent: usize) -> usize {
        self.agents[agent].n_actions
    }

    pub fn n_measurements(&self, agent: usize) -> usize {
        self.agents[agent].n_measurements
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn initial(&self) -> &Belief {
        &self.initial
    }

    pub fn joint_actions(&self) -> &JointIndexer {
        &self.actions
    }

    pub fn joint_measurements(&self) -> &JointIndexer {
        &self.measurements
    }

    /// `Q^i(y | x)`.
    pub fn channel(&self, agent: usize) -> &[Vec<f64>] {
        &self.agents[agent].channel
    }

    /// Product channel `Q(y^1..y^N | x)` indexed by flattened joint measurement.
    pub fn joint_channel_row(&self, x: usize) -> &[f64] {
        &self.joint_channel[x]
    }

    /// `tau(. | x, u)` for a flattened joint action.
    pub fn tau_row(&self, x: usize, joint_action: usize) -> &[f64] {
        &self.tau[joint_action][x]
    }

    /// The full matrix `tau(. | ., u)` for one flattened joint action.
    pub fn tau_matrix(&self, joint_action: usize) -> &[Vec<f64>] {
        &self.tau[joint_action]
    }

    pub(crate) fn cost_at(&self, x: usize, joint_action: usize) -> f64 {
        self.cost[x][joint_action]
    }

    /// `||c||_inf`, the largest stage cost.
    pub fn cost_sup(&self) -> f64 {
        self.cost
            .iter()
            .flat_map(|r| r.iter().copied())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_state(&self, x: usize) -> Result<()> {
        if x >= self.n_states {
            return Err(Error::IndexOutOfRange {
                what: "state",
                index: x,
                limit: self.n_states,
            });
        }
        Ok(())
    }

    pub fn stage_cost(&self, x: usize, joint_action: &[usize]) -> Result<f64> {
        self.check_state(x)?;
        let a = self.actions.encode(joint_action)?;
        Ok(self.cost[x][a])
    }

    /// Samples `x_{t+1} ~ tau(. | x, u)`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        x: usize,
        joint_action: &[usize],
        rng: &mut R,
    ) -> Result<usize> {
        self.check_state(x)?;
        let a = self.actions.encode(joint_action)?;
        Ok(sample_index(&self.tau[a][x], rng))
    }

    pub(crate) fn step_indexed<R: Rng + ?Sized>(
        &self,
        x: usize,
        joint_action: usize,
        rng: &mut R,
    ) -> usize {
        sample_index(&self.tau[joint_action][x], rng)
    }

    /// Draws each agent's measurement independently from its channel row at `x`.
    pub fn observe<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Result<Vec<usize>> {
        self.check_state(x)?;
        Ok(self
            .agents
            .iter()
            .map(|a| sample_index(&a.channel[x], rng))
            .collect())
    }

    /// Product likelihood `prod_i h(x, y^i)` of a joint measurement.
    pub fn likelihood(&self, x: usize, joint_measurement: &[usize]) -> f64 {
        joint_measurement
            .iter()
            .zip(&self.agents)
            .map(|(&y, a)| a.channel[x][y])
            .product()
    }

    pub(crate) fn check_measurement(&self, y: &[usize]) -> Result<()> {
        self.measurements.encode(y).map(|_| ())
    }
}

pub(crate) fn two_agent_example_raw() -> RawModel {
    let channel = vec![vec![0.5, 0.5], vec![0.0, 1.0], vec![0.0, 1.0]];
    let agent = RawAgent {
        actions: 2,
        measurements: 2,
        channel,
    };
    let third = 1.0 / 3.0;
    let mut tau = Vec::new();
    let mut cost = Vec::new();
    for u1 in 0..2usize {
        for u2 in 0..2usize {
            let matrix = if u1 != u2 {
                vec![vec![third; 3]; 3]
            } else {
                vec![
                    vec![0.0, 0.5, 0.5],
                    vec![0.5, 0.0, 0.5],
                    vec![0.5, 0.5, 0.0],
                ]
            };
            tau.push(RawTauEntry {
                action: vec![u1, u2],
                matrix,
            });
            let values = (0..3)
                .map(|x| {
                    let d = x as f64 - u1 as f64 - u2 as f64;
                    d * d + (u1 * u1 + u2 * u2) as f64
                })
                .collect();
            cost.push(RawCostEntry {
                action: vec![u1, u2],
                values,
            });
        }
    }
    RawModel {
        states: 3,
        agents: vec![agent.clone(), agent],
        tau,
        cost,
        beta: 0.01,
        initial: vec![third; 3],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_raw() -> RawModel {
        RawModel {
            states: 1,
            agents: vec![RawAgent {
                actions: 1,
                measurements: 1,
                channel: vec![vec![1.0]],
            }],
            tau: vec![RawTauEntry {
                action: vec![0],
                matrix: vec![vec![1.0]],
            }],
            cost: vec![RawCostEntry {
                action: vec![0],
                values: vec![0.0],
            }],
            beta: 0.5,
            initial: vec![1.0],
        }
    }

    #[test]
    fn example_model_is_accepted() {
        let m = TeamModel::two_agent_example();
        assert_eq!(m.n_states(), 3);
        assert_eq!(m.n_agents(), 2);
        assert_eq!(m.joint_actions().len(), 4);
    }

    #[test]
    fn degenerate_identity_model_is_accepted() {
        let m = validate_model(&identity_raw()).unwrap();
        assert_eq!(m.cost_sup(), 0.0);
    }

    #[test]
    fn short_tau_row_is_rejected_with_row_index() {
        let mut raw = two_agent_example_raw();
        raw.tau[1].matrix[2] = vec![0.5, 0.4, 0.0];
        match validate_model(&raw) {
            Err(Error::InvalidModel(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].row, Some(2));
                assert!(v[0].field.contains("tau"));
                assert!(v[0].message.contains("0.9"));
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn other_violations_are_reported() {
        let mut raw = two_agent_example_raw();
        raw.cost[0].values[1] = -1.0;
        raw.beta = 1.0;
        raw.agents[0].channel.pop();
        let Err(Error::InvalidModel(v)) = validate_model(&raw) else {
            panic!("expected rejection");
        };
        let fields: Vec<_> = v.iter().map(|x| x.field.as_str()).collect();
        assert!(fields.contains(&"beta"));
        assert!(fields.iter().any(|f| f.starts_with("cost")));
        assert!(fields.contains(&"agents[0].channel"));

        let mut raw = two_agent_example_raw();
        raw.tau.pop();
        assert!(matches!(validate_model(&raw), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn stage_cost_lookups() {
        let m = TeamModel::two_agent_example();
        assert_eq!(m.stage_cost(2, &[0, 0]).unwrap(), 4.0);
        assert_eq!(m.stage_cost(2, &[1, 1]).unwrap(), 2.0);
        // exhaustive scan of the 12 entries
        let mut best = 0.0f64;
        for x in 0..3 {
            for u1 in 0..2 {
                for u2 in 0..2 {
                    best = best.max(m.stage_cost(x, &[u1, u2]).unwrap());
                }
            }
        }
        assert_eq!(best, 6.0);
        assert_eq!(m.cost_sup(), 6.0);
        assert!(m.stage_cost(3, &[0, 0]).is_err());
        assert!(m.stage_cost(0, &[2, 0]).is_err());
    }

    #[test]
    fn zero_cost_table() {
        let mut raw = two_agent_example_raw();
        for c in &mut raw.cost {
            c.values = vec![0.0; 3];
        }
        let m = validate_model(&raw).unwrap();
        assert_eq!(m.cost_sup(), 0.0);
        assert_eq!(m.stage_cost(1, &[1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn step_respects_zero_entries_and_deterministic_rows() {
        let m = TeamModel::two_agent_example();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            assert_ne!(m.step(0, &[0, 0], &mut rng).unwrap(), 0);
        }
        let mut raw = identity_raw();
        raw.states = 3;
        raw.agents[0].channel = vec![vec![1.0]; 3];
        raw.tau[0].matrix = vec![vec![0.0, 1.0, 0.0]; 3];
        raw.cost[0].values = vec![0.0; 3];
        raw.initial = vec![1.0, 0.0, 0.0];
        let m = validate_model(&raw).unwrap();
        for _ in 0..100 {
            assert_eq!(m.step(2, &[0], &mut rng).unwrap(), 1);
        }
        assert!(m.step(5, &[0], &mut rng).is_err());
    }

    #[test]
    fn observe_point_mass_rows() {
        let m = TeamModel::two_agent_example();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            assert_eq!(m.observe(1, &mut rng).unwrap(), vec![1, 1]);
        }
        let mut raw = identity_raw();
        raw.agents[0].measurements = 2;
        raw.agents[0].channel = vec![vec![1.0, 0.0]];
        let m = validate_model(&raw).unwrap();
        for _ in 0..100 {
            assert_eq!(m.observe(0, &mut rng).unwrap(), vec![0]);
        }
        assert!(m.observe(1, &mut rng).is_err());
    }

    #[test]
    fn json_round_trip_of_example() {
        let m = TeamModel::two_agent_example();
        let s = serde_json::to_string(&m.to_raw()).unwrap();
        assert_eq!(TeamModel::from_json_str(&s).unwrap(), m);
    }

    #[test]
    fn joint_indexer_is_lexicographic() {
        let ix = JointIndexer::new(vec![2, 3]);
        assert_eq!(ix.encode(&[0, 2]).unwrap(), 2);
        assert_eq!(ix.encode(&[1, 0]).unwrap(), 3);
        for i in 0..ix.len() {
            assert_eq!(ix.encode(&ix.decode(i)).unwrap(), i);
        }
    }
}
