//! The common-information reduction for K-step periodic sharing.
//!
//! The coordinator's state is the predictor `pi_q` of the state at the start of
//! period `q`; its action is a block of deterministic prescriptions, one map per
//! agent and stage, from the agent's private measurements since the start of the
//! period to an action. One-step delayed sharing is the `K = 1` case.
//!
//! Since prescriptions are deterministic, an agent's past actions inside the
//! period are functions of its past measurements, so prescription domains are
//! measurement histories only.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::model::{sample_index, TeamModel};

/// Successor beliefs closer than this in the sup norm are merged.
pub const MERGE_TOL: f64 = 1e-9;

/// Largest prescription space [`PrescriptionSpace::enumerate`] will materialize.
pub const MAX_ENUMERATED_BLOCKS: u64 = 1 << 22;

/// Per-stage window starts: the stage-`r` map sees `y_[start_r, r]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemorySpec {
    starts: Vec<usize>,
}

impl MemorySpec {
    pub fn full(horizon: usize) -> Self {
        Self {
            starts: vec![0; horizon],
        }
    }

    pub fn new(starts: Vec<usize>) -> Result<Self> {
        if starts.is_empty() {
            return Err(Error::InvalidMemory(
                "period length must be at least 1".into(),
            ));
        }
        if let Some((r, m)) = starts.iter().enumerate().find(|(r, m)| **m > *r) {
            return Err(Error::InvalidMemory(format!(
                "window start {m} exceeds stage {r}"
            )));
        }
        Ok(Self { starts })
    }

    pub fn horizon(&self) -> usize {
        self.starts.len()
    }

    pub fn start(&self, stage: usize) -> usize {
        self.starts[stage]
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn window_len(&self, stage: usize) -> usize {
        stage - self.starts[stage] + 1
    }
}

/// One agent's map at one stage, tabulated over its windowed history.
///
/// Histories are indexed with the earliest measurement as the most significant
/// digit, so table order is lexicographic in `(y_m, ..., y_r)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prescription {
    pub agent: usize,
    pub stage: usize,
    pub window_start: usize,
    n_measurements: usize,
    table: Vec<usize>,
}

impl Prescription {
    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn window_len(&self) -> usize {
        self.stage - self.window_start + 1
    }

    fn index(&self, history: &[usize]) -> usize {
        history
            .iter()
            .fold(0, |acc, &y| acc * self.n_measurements + y)
    }

    /// Looks up the action for a history of exactly [`Self::window_len`] measurements.
    pub fn action(&self, history: &[usize]) -> Result<usize> {
        if history.len() != self.window_len() {
            return Err(Error::LengthMismatch(format!(
                "stage {} map of agent {} expects {} measurements, got {}",
                self.stage,
                self.agent,
                self.window_len(),
                history.len()
            )));
        }
        if let Some(&y) = history.iter().find(|&&y| y >= self.n_measurements) {
            return Err(Error::IndexOutOfRange {
                what: "measurement",
                index: y,
                limit: self.n_measurements,
            });
        }
        Ok(self.table[self.index(history)])
    }
}

/// The coordinator's action: prescriptions for every agent and stage of a period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointPrescriptionBlock {
    id: u64,
    /// `maps[agent][stage]`
    maps: Vec<Vec<Prescription>>,
}

impl JointPrescriptionBlock {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn n_agents(&self) -> usize {
        self.maps.len()
    }

    pub fn horizon(&self) -> usize {
        self.maps.first().map_or(0, Vec::len)
    }

    pub fn prescription(&self, agent: usize, stage: usize) -> &Prescription {
        &self.maps[agent][stage]
    }

    /// Action of `agent` at `stage` given its full in-period history `y_[0, stage]`.
    pub(crate) fn act(&self, agent: usize, stage: usize, period_history: &[usize]) -> usize {
        let f = &self.maps[agent][stage];
        f.table[f.index(&period_history[f.window_start..=stage])]
    }

    /// Human-readable table dump, one line per (agent, stage).
    pub fn dump(&self) -> String {
        let mut s = format!("block {}\n", self.id);
        for per_agent in &self.maps {
            for f in per_agent {
                let _ = write!(
                    s,
                    "  agent {} stage {} y[{}..={}]:",
                    f.agent, f.stage, f.window_start, f.stage
                );
                for (h, u) in f.table.iter().enumerate() {
                    let mut digits = vec![0; f.window_len()];
                    let mut rest = h;
                    for d in digits.iter_mut().rev() {
                        *d = rest % f.n_measurements;
                        rest /= f.n_measurements;
                    }
                    let hist: Vec<String> = digits.iter().map(|d| d.to_string()).collect();
                    let _ = write!(s, " {}->{}", hist.join(""), u);
                }
                s.push('\n');
            }
        }
        s
    }

    fn check_model(&self, model: &TeamModel) -> Result<()> {
        if self.n_agents() != model.n_agents() {
            return Err(Error::LengthMismatch(format!(
                "block has {} agents, model has {}",
                self.n_agents(),
                model.n_agents()
            )));
        }
        for (i, per_agent) in self.maps.iter().enumerate() {
            if per_agent[0].n_measurements != model.n_measurements(i)
                || per_agent
                    .iter()
                    .flat_map(|f| &f.table)
                    .any(|&u| u >= model.n_actions(i))
            {
                return Err(Error::LengthMismatch(format!(
                    "block alphabets for agent {i} do not match the model"
                )));
            }
        }
        Ok(())
    }
}

/// `apply_prescription`: the action `agent` takes at `stage` given its windowed history.
pub fn apply_prescription(
    block: &JointPrescriptionBlock,
    agent: usize,
    stage: usize,
    history: &[usize],
) -> Result<usize> {
    if agent >= block.n_agents() {
        return Err(Error::IndexOutOfRange {
            what: "agent",
            index: agent,
            limit: block.n_agents(),
        });
    }
    if stage >= block.horizon() {
        return Err(Error::IndexOutOfRange {
            what: "stage",
            index: stage,
            limit: block.horizon(),
        });
    }
    block.maps[agent][stage].action(history)
}

/// All deterministic prescription blocks for given alphabets and windows,
/// indexed by a mixed-radix id.
///
/// Digits run over (agent, stage, history) in that nesting order, the first
/// digit being least significant; digit values are actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrescriptionSpace {
    n_actions: Vec<usize>,
    n_measurements: Vec<usize>,
    memory: MemorySpec,
    /// `histories[agent][stage]`: table length of that map.
    histories: Vec<Vec<usize>>,
    len: Option<u64>,
}

impl PrescriptionSpace {
    pub fn new(model: &TeamModel, memory: MemorySpec) -> Self {
        let n_actions = (0..model.n_agents()).map(|i| model.n_actions(i)).collect();
        let n_measurements = (0..model.n_agents())
            .map(|i| model.n_measurements(i))
            .collect();
        Self::from_sizes(n_actions, n_measurements, memory)
    }

    pub fn full(model: &TeamModel, horizon: usize) -> Self {
        Self::new(model, MemorySpec::full(horizon))
    }

    pub fn from_sizes(
        n_actions: Vec<usize>,
        n_measurements: Vec<usize>,
        memory: MemorySpec,
    ) -> Self {
        let histories: Vec<Vec<usize>> = n_measurements
            .iter()
            .map(|&ny| {
                (0..memory.horizon())
                    .map(|r| ny.saturating_pow(memory.window_len(r) as u32))
                    .collect()
            })
            .collect();
        let mut len = Some(1u64);
        for (per_agent, &nu) in histories.iter().zip(&n_actions) {
            for &h in per_agent {
                len = len.and_then(|l| {
                    u32::try_from(h)
                        .ok()
                        .and_then(|h| (nu as u64).checked_pow(h))
                        .and_then(|c| l.checked_mul(c))
                });
            }
        }
        Self {
            n_actions,
            n_measurements,
            memory,
            histories,
            len,
        }
    }

    pub fn memory(&self) -> &MemorySpec {
        &self.memory
    }

    pub fn horizon(&self) -> usize {
        self.memory.horizon()
    }

    /// Number of blocks, or `None` when it does not fit in a `u64`.
    pub fn len(&self) -> Option<u64> {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == Some(0)
    }

    /// `log2` of the number of blocks; finite even when [`Self::len`] overflows.
    pub fn log2_len(&self) -> f64 {
        self.histories
            .iter()
            .zip(&self.n_actions)
            .map(|(h, &nu)| {
                h.iter()
                    .map(|&c| c as f64 * (nu as f64).log2())
                    .sum::<f64>()
            })
            .sum()
    }

    fn checked_len(&self) -> Result<u64> {
        self.len
            .ok_or_else(|| Error::SpaceTooLarge(format!("2^{:.1} blocks", self.log2_len())))
    }

    pub fn decode(&self, id: u64) -> Result<JointPrescriptionBlock> {
        let len = self.checked_len()?;
        if id >= len {
            return Err(Error::InvalidArgument(format!(
                "block id {id} out of range 0..{len}"
            )));
        }
        let mut rest = id;
        let maps = self
            .histories
            .iter()
            .enumerate()
            .map(|(agent, per_agent)| {
                let nu = self.n_actions[agent] as u64;
                per_agent
                    .iter()
                    .enumerate()
                    .map(|(stage, &h)| {
                        let table = (0..h)
                            .map(|_| {
                                let d = rest % nu;
                                rest /= nu;
                                d as usize
                            })
                            .collect();
                        Prescription {
                            agent,
                            stage,
                            window_start: self.memory.start(stage),
                            n_measurements: self.n_measurements[agent],
                            table,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(JointPrescriptionBlock { id, maps })
    }

    /// Recomputes the id from table contents.
    pub fn encode(&self, block: &JointPrescriptionBlock) -> u64 {
        let mut id = 0u64;
        let mut scale = 1u64;
        for (agent, per_agent) in block.maps.iter().enumerate() {
            let nu = self.n_actions[agent] as u64;
            for f in per_agent {
                for &u in &f.table {
                    id += u as u64 * scale;
                    scale = scale.wrapping_mul(nu);
                }
            }
        }
        id
    }

    /// Builds a block from explicit tables `tables[agent][stage][history]`.
    pub fn block_from_tables(
        &self,
        tables: Vec<Vec<Vec<usize>>>,
    ) -> Result<JointPrescriptionBlock> {
        if tables.len() != self.histories.len() {
            return Err(Error::LengthMismatch(
                "one table list per agent required".into(),
            ));
        }
        let mut maps = Vec::with_capacity(tables.len());
        for (agent, per_agent) in tables.into_iter().enumerate() {
            if per_agent.len() != self.horizon() {
                return Err(Error::LengthMismatch(format!(
                    "agent {agent} needs {} stages",
                    self.horizon()
                )));
            }
            let mut row = Vec::new();
            for (stage, table) in per_agent.into_iter().enumerate() {
                if table.len() != self.histories[agent][stage] {
                    return Err(Error::LengthMismatch(format!(
                        "agent {agent} stage {stage} table must have {} entries",
                        self.histories[agent][stage]
                    )));
                }
                if let Some(&u) = table.iter().find(|&&u| u >= self.n_actions[agent]) {
                    return Err(Error::IndexOutOfRange {
                        what: "action",
                        index: u,
                        limit: self.n_actions[agent],
                    });
                }
                row.push(Prescription {
                    agent,
                    stage,
                    window_start: self.memory.start(stage),
                    n_measurements: self.n_measurements[agent],
                    table,
                });
            }
            maps.push(row);
        }
        let mut block = JointPrescriptionBlock { id: 0, maps };
        block.id = self.encode(&block);
        Ok(block)
    }

    /// Every block in id order.
    pub fn enumerate(&self) -> Result<Vec<JointPrescriptionBlock>> {
        let len = self.checked_len()?;
        if len > MAX_ENUMERATED_BLOCKS {
            return Err(Error::SpaceTooLarge(format!("{len} blocks")));
        }
        (0..len).map(|id| self.decode(id)).collect()
    }

    /// Draws a block uniformly at random.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<JointPrescriptionBlock> {
        let len = self.checked_len()?;
        self.decode(rng.gen_range(0..len))
    }
}

/// `enumerate_prescriptions`: all joint blocks for a model, period length and windows.
pub fn enumerate_prescriptions(
    model: &TeamModel,
    memory: &MemorySpec,
) -> Result<Vec<JointPrescriptionBlock>> {
    PrescriptionSpace::new(model, memory.clone()).enumerate()
}

/// One outcome of a period: the joint measurements and actions at every stage
/// and the state at the start of the next period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodOutcome {
    pub measurements: Vec<Vec<usize>>,
    pub actions: Vec<Vec<usize>>,
    pub terminal_state: usize,
    pub probability: f64,
}

/// Exact period expansion from a predictor under one block.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    /// Leaves of the measurement tree with positive probability.
    pub leaves: Vec<Leaf>,
    /// Expected discounted in-period cost `sum_r beta^r c(x_r, u_r)`.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    /// Flattened joint measurement per stage.
    pub measurements: Vec<usize>,
    /// Flattened joint action per stage.
    pub actions: Vec<usize>,
    pub probability: f64,
    /// Unnormalized law of the next period's initial state; sums to `probability`.
    pub terminal_mass: Vec<f64>,
}

struct Expander<'a> {
    model: &'a TeamModel,
    block: &'a JointPrescriptionBlock,
    meas: Vec<Vec<usize>>,
    discounts: Vec<f64>,
}

impl Expander<'_> {
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        stage: usize,
        alpha: &[f64],
        hist: &mut [Vec<usize>],
        ys: &mut Vec<usize>,
        acts: &mut Vec<usize>,
        cost: &mut f64,
        leaves: &mut Vec<Leaf>,
    ) {
        let m = self.model;
        let n = m.n_states();
        let n_agents = m.n_agents();
        let mut w = vec![0.0; n];
        let mut joint = vec![0usize; n_agents];
        for (yi, y) in self.meas.iter().enumerate() {
            let mut p = 0.0;
            for x in 0..n {
                w[x] = alpha[x] * m.joint_channel_row(x)[yi];
                p += w[x];
            }
            if p <= 0.0 {
                continue;
            }
            for i in 0..n_agents {
                hist[i].push(y[i]);
                joint[i] = self.block.act(i, stage, &hist[i]);
            }
            let a = m
                .joint_actions()
                .encode(&joint)
                .expect("block actions lie in the model alphabets");
            let mut next = vec![0.0; n];
            let mut c = 0.0;
            for (x, &wx) in w.iter().enumerate() {
                if wx == 0.0 {
                    continue;
                }
                c += wx * m.cost_at(x, a);
                for (o, t) in next.iter_mut().zip(m.tau_row(x, a)) {
                    *o += wx * t;
                }
            }
            *cost += self.discounts[stage] * c;
            ys.push(yi);
            acts.push(a);
            if stage + 1 == self.block.horizon() {
                leaves.push(Leaf {
                    measurements: ys.clone(),
                    actions: acts.clone(),
                    probability: p,
                    terminal_mass: next,
                });
            } else {
                self.run(stage + 1, &next, hist, ys, acts, cost, leaves);
            }
            ys.pop();
            acts.pop();
            for h in hist.iter_mut() {
                h.pop();
            }
        }
    }
}

/// Enumerates the measurement tree of one period exactly.
pub fn expand(model: &TeamModel, pi: &Belief, block: &JointPrescriptionBlock) -> Result<Expansion> {
    if pi.is_null() {
        return Err(Error::NullBelief("period expansion"));
    }
    if pi.len() != model.n_states() {
        return Err(Error::LengthMismatch(
            "belief size differs from the state count".into(),
        ));
    }
    block.check_model(model)?;
    let meas_ix = model.joint_measurements();
    let ex = Expander {
        model,
        block,
        meas: (0..meas_ix.len()).map(|y| meas_ix.decode(y)).collect(),
        discounts: (0..block.horizon())
            .map(|r| model.beta().powi(r as i32))
            .collect(),
    };
    let mut hist = vec![Vec::with_capacity(block.horizon()); model.n_agents()];
    let mut leaves = Vec::new();
    let mut cost = 0.0;
    ex.run(
        0,
        pi.weights(),
        &mut hist,
        &mut Vec::new(),
        &mut Vec::new(),
        &mut cost,
        &mut leaves,
    );
    Ok(Expansion { leaves, cost })
}

/// Joint law of (measurement sequence, action sequence, next-period initial state).
pub fn stage_distribution(
    model: &TeamModel,
    pi: &Belief,
    block: &JointPrescriptionBlock,
) -> Result<Vec<PeriodOutcome>> {
    let e = expand(model, pi, block)?;
    let (mi, ai) = (model.joint_measurements(), model.joint_actions());
    let mut out = Vec::new();
    for leaf in &e.leaves {
        let measurements: Vec<Vec<usize>> =
            leaf.measurements.iter().map(|&y| mi.decode(y)).collect();
        let actions: Vec<Vec<usize>> = leaf.actions.iter().map(|&a| ai.decode(a)).collect();
        for (x, &p) in leaf.terminal_mass.iter().enumerate() {
            if p > 0.0 {
                out.push(PeriodOutcome {
                    measurements: measurements.clone(),
                    actions: actions.clone(),
                    terminal_state: x,
                    probability: p,
                });
            }
        }
    }
    Ok(out)
}

/// `c~(pi, a)`: expected discounted cost over one period.
pub fn reduced_cost(model: &TeamModel, pi: &Belief, block: &JointPrescriptionBlock) -> Result<f64> {
    Ok(expand(model, pi, block)?.cost)
}

/// Upper bound `||c||_inf (1 - beta^K) / (1 - beta)` on the reduced cost.
pub fn reduced_cost_sup(model: &TeamModel, horizon: usize) -> f64 {
    let b = model.beta();
    model.cost_sup() * (1.0 - b.powi(horizon as i32)) / (1.0 - b)
}

impl Expansion {
    /// Successor predictors with their probabilities, merging near-identical ones.
    pub fn successors(&self) -> Vec<(Belief, f64)> {
        let mut out: Vec<(Belief, f64)> = Vec::new();
        for leaf in &self.leaves {
            let Some(b) = Belief::from_mass(leaf.terminal_mass.clone()) else {
                continue;
            };
            match out
                .iter_mut()
                .find(|(c, _)| c.sup_distance(&b) <= MERGE_TOL)
            {
                Some((_, p)) => *p += leaf.probability,
                None => out.push((b, leaf.probability)),
            }
        }
        out
    }
}

/// `theta(. | pi, a)`: the finite law of the next period's predictor.
pub fn kernel_theta(
    model: &TeamModel,
    pi: &Belief,
    block: &JointPrescriptionBlock,
) -> Result<Vec<(Belief, f64)>> {
    Ok(expand(model, pi, block)?.successors())
}

/// A realized period of the true system.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodSample {
    /// Joint measurement per stage.
    pub measurements: Vec<Vec<usize>>,
    /// Flattened joint action per stage.
    pub actions: Vec<usize>,
    /// Realized `sum_r beta^r c(x_r, u_r)`.
    pub cost: f64,
    pub terminal_state: usize,
}

/// Runs the true system for one period from state `x0` under `block`.
pub fn simulate_period<R: Rng + ?Sized>(
    model: &TeamModel,
    x0: usize,
    block: &JointPrescriptionBlock,
    rng: &mut R,
) -> PeriodSample {
    let k = block.horizon();
    let n_agents = model.n_agents();
    let mut hist = vec![Vec::with_capacity(k); n_agents];
    let mut measurements = Vec::with_capacity(k);
    let mut actions = Vec::with_capacity(k);
    let mut joint = vec![0usize; n_agents];
    let mut x = x0;
    let mut cost = 0.0;
    let mut discount = 1.0;
    for r in 0..k {
        let y: Vec<usize> = (0..n_agents)
            .map(|i| sample_index(&model.channel(i)[x], rng))
            .collect();
        for i in 0..n_agents {
            hist[i].push(y[i]);
            joint[i] = block.act(i, r, &hist[i]);
        }
        let a = model
            .joint_actions()
            .encode(&joint)
            .expect("block actions lie in the model alphabets");
        cost += discount * model.cost_at(x, a);
        discount *= model.beta();
        x = model.step_indexed(x, a, rng);
        measurements.push(y);
        actions.push(a);
    }
    PeriodSample {
        measurements,
        actions,
        cost,
        terminal_state: x,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{k_step_update, predictor_update};
    use crate::model::{two_agent_example_raw, validate_model};

    fn example() -> TeamModel {
        TeamModel::two_agent_example()
    }

    #[test]
    fn counts_for_example_alphabets() {
        let m = example();
        let full = PrescriptionSpace::full(&m, 2);
        assert_eq!(full.len(), Some(4096));
        let recent = PrescriptionSpace::new(&m, MemorySpec::new(vec![0, 1]).unwrap());
        assert_eq!(recent.len(), Some(256));
        assert_eq!(
            enumerate_prescriptions(&m, &MemorySpec::new(vec![0, 1]).unwrap())
                .unwrap()
                .len(),
            256
        );

        let mut raw = two_agent_example_raw();
        raw.agents.truncate(1);
        raw.tau = raw
            .tau
            .iter()
            .filter(|e| e.action[1] == 0)
            .cloned()
            .collect();
        raw.cost = raw
            .cost
            .iter()
            .filter(|e| e.action[1] == 0)
            .cloned()
            .collect();
        for e in &mut raw.tau {
            e.action.truncate(1);
        }
        for e in &mut raw.cost {
            e.action.truncate(1);
        }
        let single = validate_model(&raw).unwrap();
        assert_eq!(
            enumerate_prescriptions(&single, &MemorySpec::full(1))
                .unwrap()
                .len(),
            4
        );
    }

    #[test]
    fn window_start_past_stage_is_rejected() {
        assert!(matches!(
            MemorySpec::new(vec![0, 2]),
            Err(Error::InvalidMemory(_))
        ));
    }

    #[test]
    fn decode_encode_round_trip_and_lookups() {
        let m = example();
        let space = PrescriptionSpace::full(&m, 2);
        for id in [0, 1, 77, 1234, 4095] {
            let b = space.decode(id).unwrap();
            assert_eq!(space.encode(&b), id);
            let again = space
                .block_from_tables(
                    (0..2)
                        .map(|i| {
                            (0..2)
                                .map(|r| b.prescription(i, r).table().to_vec())
                                .collect()
                        })
                        .collect(),
                )
                .unwrap();
            assert_eq!(again, b);
        }
        assert!(space.decode(4096).is_err());
    }

    #[test]
    fn constant_and_identity_blocks() {
        let m = example();
        let space = PrescriptionSpace::full(&m, 1);
        let constant = space
            .block_from_tables(vec![vec![vec![1, 1]], vec![vec![1, 1]]])
            .unwrap();
        for y in 0..2 {
            assert_eq!(apply_prescription(&constant, 0, 0, &[y]).unwrap(), 1);
        }
        let identity = space
            .block_from_tables(vec![vec![vec![0, 1]], vec![vec![0, 1]]])
            .unwrap();
        assert_eq!(apply_prescription(&identity, 0, 0, &[1]).unwrap(), 1);
        assert_eq!(apply_prescription(&identity, 1, 0, &[0]).unwrap(), 0);
        assert!(apply_prescription(&identity, 0, 0, &[1, 0]).is_err());
        assert!(apply_prescription(&identity, 0, 1, &[1]).is_err());
    }

    #[test]
    fn windowed_maps_ignore_old_measurements() {
        let m = example();
        let space = PrescriptionSpace::new(&m, MemorySpec::new(vec![0, 1]).unwrap());
        let b = space.decode(173).unwrap();
        assert_eq!(b.prescription(0, 1).window_len(), 1);
        for y0 in 0..2 {
            for y1 in 0..2 {
                assert_eq!(
                    b.act(0, 1, &[y0, y1]),
                    apply_prescription(&b, 0, 1, &[y1]).unwrap()
                );
            }
        }
    }

    #[test]
    fn point_mass_one_step_distribution() {
        let m = example();
        let space = PrescriptionSpace::full(&m, 1);
        let b = space.decode(9).unwrap();
        let pi = Belief::point(3, 0);
        let dist = stage_distribution(&m, &pi, &b).unwrap();
        for y in 0..4 {
            let yv = m.joint_measurements().decode(y);
            let u: Vec<usize> = (0..2)
                .map(|i| apply_prescription(&b, i, 0, &[yv[i]]).unwrap())
                .collect();
            let a = m.joint_actions().encode(&u).unwrap();
            for x1 in 0..3 {
                let want = m.joint_channel_row(0)[y] * m.tau_row(0, a)[x1];
                let got: f64 = dist
                    .iter()
                    .filter(|o| o.measurements[0] == yv && o.terminal_state == x1)
                    .map(|o| {
                        assert_eq!(o.actions[0], u);
                        o.probability
                    })
                    .sum();
                assert!((got - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn distribution_is_normalized_and_point_mass_on_one() {
        let m = example();
        let space = PrescriptionSpace::full(&m, 2);
        let b = space.decode(2024).unwrap();
        let total: f64 = stage_distribution(&m, &Belief::uniform(3), &b)
            .unwrap()
            .iter()
            .map(|o| o.probability)
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
        let d = stage_distribution(&m, &Belief::point(3, 1), &b).unwrap();
        assert!(d.iter().all(|o| o.measurements[0] == vec![1, 1]));
    }

    #[test]
    fn reduced_cost_examples() {
        let m = example();
        let space = PrescriptionSpace::full(&m, 1);
        let both_one = space
            .block_from_tables(vec![vec![vec![1, 1]], vec![vec![1, 1]]])
            .unwrap();
        assert_eq!(
            reduced_cost(&m, &Belief::point(3, 2), &both_one).unwrap(),
            2.0
        );
        assert!(reduced_cost(&m, &Belief::null(3), &both_one).is_err());
    }

    #[test]
    fn theta_successors_match_k_step_update() {
        let m = example();
        let space = PrescriptionSpace::full(&m, 2);
        let pi = Belief::new(vec![0.2, 0.5, 0.3]).unwrap();
        let b = space.decode(3001).unwrap();
        let e = expand(&m, &pi, &b).unwrap();
        let mut mass = 0.0;
        for leaf in &e.leaves {
            let ys: Vec<Vec<usize>> = leaf
                .measurements
                .iter()
                .map(|&y| m.joint_measurements().decode(y))
                .collect();
            let us: Vec<Vec<usize>> = leaf
                .actions
                .iter()
                .map(|&a| m.joint_actions().decode(a))
                .collect();
            let g = k_step_update(&m, &pi, &us, &ys).unwrap();
            let leaf_b = Belief::from_mass(leaf.terminal_mass.clone()).unwrap();
            assert!(g.sup_distance(&leaf_b) < 1e-12);
            mass += leaf.probability;
        }
        assert!((mass - 1.0).abs() < 1e-12);
        let succ = kernel_theta(&m, &Belief::point(3, 0), &b).unwrap();
        assert!(succ.len() <= 16);
        assert!((succ.iter().map(|s| s.1).sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn one_step_theta_is_eta() {
        let m = example();
        let space = PrescriptionSpace::full(&m, 1);
        let pi = Belief::new(vec![0.6, 0.1, 0.3]).unwrap();
        for id in 0..space.len().unwrap() {
            let b = space.decode(id).unwrap();
            let theta = kernel_theta(&m, &pi, &b).unwrap();
            // eta built directly from F
            let mut eta: Vec<(Belief, f64)> = Vec::new();
            for y in 0..4 {
                let yv = m.joint_measurements().decode(y);
                let p: f64 = (0..3)
                    .map(|x| pi.weights()[x] * m.joint_channel_row(x)[y])
                    .sum();
                if p == 0.0 {
                    continue;
                }
                let u: Vec<usize> = (0..2)
                    .map(|i| apply_prescription(&b, i, 0, &[yv[i]]).unwrap())
                    .collect();
                let f = predictor_update(&m, &pi, &u, &yv).unwrap();
                match eta
                    .iter_mut()
                    .find(|(c, _)| c.sup_distance(&f) <= MERGE_TOL)
                {
                    Some((_, q)) => *q += p,
                    None => eta.push((f, p)),
                }
            }
            assert_eq!(theta.len(), eta.len());
            for ((a, p), (b2, q)) in theta.iter().zip(&eta) {
                assert!(a.sup_distance(b2) < 1e-12 && (p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uninformative_constant_block_is_deterministic() {
        let mut raw = two_agent_example_raw();
        for a in &mut raw.agents {
            a.channel = vec![vec![0.5, 0.5]; 3];
        }
        let m = validate_model(&raw).unwrap();
        let space = PrescriptionSpace::full(&m, 2);
        let b = space.decode(0).unwrap();
        let pi = Belief::new(vec![0.7, 0.2, 0.1]).unwrap();
        let succ = kernel_theta(&m, &pi, &b).unwrap();
        assert_eq!(succ.len(), 1);
        let mut push = pi.weights().to_vec();
        for _ in 0..2 {
            push = (0..3)
                .map(|x2| (0..3).map(|x| push[x] * m.tau_row(x, 0)[x2]).sum())
                .collect();
        }
        assert!((succ[0].1 - 1.0).abs() < 1e-12);
        for x in 0..3 {
            assert!((succ[0].0.weights()[x] - push[x]).abs() < 1e-12);
        }
    }
}
