//! Finite codebooks over the predictor simplex and the finite MDP they induce.
//!
//! A predictor is mapped to its nearest center; policies are constant over
//! the bins. The quantized MDP's transition row for `(center, block)` is the
//! exact period kernel from that center with every successor replaced by its
//! nearest center.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{w1_unchecked, Belief, GroundMetric};
use crate::coordinator::{expand, JointPrescriptionBlock, PrescriptionSpace, MERGE_TOL};
use crate::error::{Error, Result};
use crate::model::TeamModel;

/// Blocks sampled per frontier node when growing a reachable codebook.
pub const REACHABLE_BLOCKS_PER_NODE: usize = 4096;

const ROW_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookMode {
    /// All simplex points with coordinates `k / n`.
    Grid,
    /// Predictors reached from the prior under sampled blocks.
    Reachable,
    /// Caller-supplied centers, possibly extended with reachable fill.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    centers: Vec<Belief>,
    mode: CodebookMode,
    /// Grid resolution `n`, or the size budget for reachable codebooks.
    parameter: usize,
}

impl Codebook {
    /// Explicit codebook; centers must be valid and pairwise distinct.
    pub fn from_centers(centers: Vec<Belief>) -> Result<Self> {
        let mut cb = Self {
            centers: Vec::with_capacity(centers.len()),
            mode: CodebookMode::Explicit,
            parameter: centers.len(),
        };
        for (i, c) in centers.into_iter().enumerate() {
            if c.is_null() {
                return Err(Error::NullBelief("codebook center"));
            }
            if cb.push_distinct(c).is_none() {
                return Err(Error::InvalidArgument(format!(
                    "center {i} duplicates an earlier center"
                )));
            }
        }
        Ok(cb)
    }

    pub fn centers(&self) -> &[Belief] {
        &self.centers
    }

    pub fn center(&self, i: usize) -> &Belief {
        &self.centers[i]
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn mode(&self) -> CodebookMode {
        self.mode
    }

    pub fn parameter(&self) -> usize {
        self.parameter
    }

    /// Index of a center within [`MERGE_TOL`] of `b`.
    pub fn index_of(&self, b: &Belief) -> Option<usize> {
        self.centers
            .iter()
            .position(|c| c.sup_distance(b) <= MERGE_TOL)
    }

    /// Appends `b` unless it is already present; returns the new index.
    pub fn push_distinct(&mut self, b: Belief) -> Option<usize> {
        if self.index_of(&b).is_some() {
            return None;
        }
        self.centers.push(b);
        Some(self.centers.len() - 1)
    }

    /// Nearest center under W1 with the given ground metric; ties go to the lowest index.
    pub fn nearest(&self, pi: &Belief, metric: &GroundMetric) -> Result<usize> {
        if self.centers.is_empty() {
            return Err(Error::EmptyCodebook);
        }
        if pi.is_null() {
            return Err(Error::NullBelief("nearest"));
        }
        if pi.len() != self.centers[0].len() {
            return Err(Error::LengthMismatch(
                "belief size differs from the codebook".into(),
            ));
        }
        metric.validate(pi.len())?;
        Ok(self.nearest_unchecked(pi.weights(), metric))
    }

    pub(crate) fn nearest_unchecked(&self, w: &[f64], metric: &GroundMetric) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centers.iter().enumerate() {
            let d = w1_unchecked(w, c.weights(), metric);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Grows the codebook breadth-first from `start` through exact period
    /// kernels under sampled blocks until `depth` periods or `budget` centers.
    pub fn extend_reachable<R: Rng + ?Sized>(
        &mut self,
        model: &TeamModel,
        space: &PrescriptionSpace,
        start: &Belief,
        depth: usize,
        budget: usize,
        rng: &mut R,
    ) -> Result<()> {
        self.extend_reachable_from(
            model,
            space,
            std::slice::from_ref(start),
            depth,
            budget,
            rng,
        )
    }

    /// Breadth-first growth from several roots at once; roots not yet present are added first.
    pub fn extend_reachable_from<R: Rng + ?Sized>(
        &mut self,
        model: &TeamModel,
        space: &PrescriptionSpace,
        roots: &[Belief],
        depth: usize,
        budget: usize,
        rng: &mut R,
    ) -> Result<()> {
        if depth == 0 {
            return Err(Error::InvalidArgument(
                "reachable depth must be at least 1".into(),
            ));
        }
        for r in roots {
            if self.len() >= budget {
                return Ok(());
            }
            self.push_distinct(r.clone());
        }
        let len = space
            .len()
            .ok_or_else(|| Error::SpaceTooLarge(format!("2^{:.1} blocks", space.log2_len())))?;
        let mut frontier = roots.to_vec();
        for _ in 0..depth {
            let mut next = Vec::new();
            for node in &frontier {
                let ids: Vec<u64> = if len <= REACHABLE_BLOCKS_PER_NODE as u64 {
                    (0..len).collect()
                } else {
                    (0..REACHABLE_BLOCKS_PER_NODE)
                        .map(|_| rng.gen_range(0..len))
                        .collect()
                };
                for id in ids {
                    let block = space.decode(id)?;
                    for (succ, _) in expand(model, node, &block)?.successors() {
                        if self.len() >= budget {
                            return Ok(());
                        }
                        if self.push_distinct(succ.clone()).is_some() {
                            next.push(succ);
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        Ok(())
    }
}

/// All points of the simplex over `n_states` states with coordinates `k / n`.
pub fn build_grid_codebook(n_states: usize, n: usize) -> Result<Codebook> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "grid resolution must be at least 1".into(),
        ));
    }
    if n_states == 0 {
        return Err(Error::InvalidArgument(
            "state count must be at least 1".into(),
        ));
    }
    fn fill(rest: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            cur.push(rest);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in (0..=rest).rev() {
            cur.push(k);
            fill(rest - k, slots - 1, cur, out);
            cur.pop();
        }
    }
    let mut counts = Vec::new();
    fill(n, n_states, &mut Vec::new(), &mut counts);
    let centers = counts
        .into_iter()
        .map(|c| Belief::new(c.into_iter().map(|k| k as f64 / n as f64).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Codebook {
        centers,
        mode: CodebookMode::Grid,
        parameter: n,
    })
}

/// Predictors reachable from the model's prior within `depth` periods,
/// in first-visit order, truncated to `budget`.
pub fn build_reachable_codebook<R: Rng + ?Sized>(
    model: &TeamModel,
    space: &PrescriptionSpace,
    depth: usize,
    budget: usize,
    rng: &mut R,
) -> Result<Codebook> {
    let mut cb = Codebook {
        centers: Vec::new(),
        mode: CodebookMode::Reachable,
        parameter: budget,
    };
    cb.extend_reachable(model, space, model.initial(), depth, budget, rng)?;
    Ok(cb)
}

pub fn nearest(codebook: &Codebook, pi: &Belief, metric: &GroundMetric) -> Result<usize> {
    codebook.nearest(pi, metric)
}

/// Finite surrogate MDP over codebook centers and prescription blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMDP {
    codebook: Codebook,
    metric: GroundMetric,
    horizon: usize,
    actions: Vec<u64>,
    /// `transitions[s][a]`: sparse successor distribution, sorted by center.
    transitions: Vec<Vec<Vec<(usize, f64)>>>,
    costs: Vec<Vec<f64>>,
    discount: f64,
}

impl QuantizedMDP {
    /// Assembles an MDP from explicit tables, checking row sums and dimensions.
    pub fn from_tables(
        codebook: Codebook,
        metric: GroundMetric,
        horizon: usize,
        actions: Vec<u64>,
        transitions: Vec<Vec<Vec<(usize, f64)>>>,
        costs: Vec<Vec<f64>>,
        discount: f64,
    ) -> Result<Self> {
        let ns = codebook.len();
        if transitions.len() != ns || costs.len() != ns {
            return Err(Error::LengthMismatch(
                "one transition and cost row per center required".into(),
            ));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidArgument(format!(
                "discount {discount} outside [0,1)"
            )));
        }
        for (s, (rows, c)) in transitions.iter().zip(&costs).enumerate() {
            if rows.len() != actions.len() || c.len() != actions.len() {
                return Err(Error::LengthMismatch(format!(
                    "center {s} has the wrong number of actions"
                )));
            }
            for (a, row) in rows.iter().enumerate() {
                let sum: f64 = row.iter().map(|e| e.1).sum();
                if (sum - 1.0).abs() > ROW_TOL || row.iter().any(|e| e.0 >= ns || e.1 < 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "row ({s},{a}) is not a distribution"
                    )));
                }
            }
            if let Some(v) = c.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("cost {v} at center {s}")));
            }
        }
        Ok(Self {
            codebook,
            metric,
            horizon,
            actions,
            transitions,
            costs,
            discount,
        })
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn metric(&self) -> &GroundMetric {
        &self.metric
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Prescription block ids, in column order.
    pub fn actions(&self) -> &[u64] {
        &self.actions
    }

    pub fn n_states(&self) -> usize {
        self.codebook.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn transitions(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s][a]
    }

    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.costs[s][a]
    }

    pub fn costs(&self) -> &[Vec<f64>] {
        &self.costs
    }

    /// `beta^K`.
    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn to_file(&self) -> QuantizedMdpFile {
        let mut transitions = Vec::new();
        for (s, rows) in self.transitions.iter().enumerate() {
            for (a, row) in rows.iter().enumerate() {
                transitions.extend(row.iter().map(|&(t, p)| (s, a, t, p)));
            }
        }
        QuantizedMdpFile {
            centers: self.codebook.centers.clone(),
            codebook_mode: self.codebook.mode,
            codebook_parameter: self.codebook.parameter,
            metric: self.metric.clone(),
            horizon: self.horizon,
            discount: self.discount,
            actions: self.actions.clone(),
            transitions,
            costs: self.costs.clone(),
        }
    }

    pub fn from_file(f: QuantizedMdpFile) -> Result<Self> {
        for c in &f.centers {
            Belief::new(c.weights().to_vec())?;
        }
        let mut codebook = Codebook::from_centers(f.centers)?;
        codebook.mode = f.codebook_mode;
        codebook.parameter = f.codebook_parameter;
        let ns = codebook.len();
        let na = f.actions.len();
        let mut transitions = vec![vec![Vec::new(); na]; ns];
        for (s, a, t, p) in f.transitions {
            if s >= ns || a >= na {
                return Err(Error::IndexOutOfRange {
                    what: "transition triplet",
                    index: s.max(a),
                    limit: ns.max(na),
                });
            }
            transitions[s][a].push((t, p));
        }
        Self::from_tables(
            codebook,
            f.metric,
            f.horizon,
            f.actions,
            transitions,
            f.costs,
            f.discount,
        )
    }
}

/// On-disk form of a [`QuantizedMDP`]: dense costs, sparse `(s, a, s', p)` triplets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedMdpFile {
    pub centers: Vec<Belief>,
    pub codebook_mode: CodebookMode,
    pub codebook_parameter: usize,
    pub metric: GroundMetric,
    pub horizon: usize,
    pub discount: f64,
    pub actions: Vec<u64>,
    pub transitions: Vec<(usize, usize, usize, f64)>,
    pub costs: Vec<Vec<f64>>,
}

type TransitionRows = Vec<Vec<(usize, f64)>>;

/// Exact transition rows and reduced costs for every (center, block) pair.
pub fn build_quantized_mdp(
    model: &TeamModel,
    codebook: &Codebook,
    actions: &[JointPrescriptionBlock],
    metric: &GroundMetric,
) -> Result<QuantizedMDP> {
    if codebook.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    if actions.is_empty() {
        return Err(Error::InvalidArgument("action list is empty".into()));
    }
    metric.validate(model.n_states())?;
    let horizon = actions[0].horizon();
    if actions.iter().any(|b| b.horizon() != horizon) {
        return Err(Error::LengthMismatch(
            "blocks with different period lengths".into(),
        ));
    }
    let rows: Vec<(TransitionRows, Vec<f64>)> = codebook
        .centers()
        .par_iter()
        .map(|center| {
            let mut trans = Vec::with_capacity(actions.len());
            let mut costs = Vec::with_capacity(actions.len());
            let mut dense = vec![0.0; codebook.len()];
            for block in actions {
                let e = expand(model, center, block)?;
                for (succ, p) in e.successors() {
                    dense[codebook.nearest_unchecked(succ.weights(), metric)] += p;
                }
                let mut row = Vec::new();
                for (t, p) in dense.iter_mut().enumerate() {
                    if *p > 0.0 {
                        row.push((t, *p));
                        *p = 0.0;
                    }
                }
                trans.push(row);
                costs.push(e.cost);
            }
            Ok((trans, costs))
        })
        .collect::<Result<_>>()?;
    let (transitions, costs): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    QuantizedMDP::from_tables(
        codebook.clone(),
        metric.clone(),
        horizon,
        actions.iter().map(|b| b.id()).collect(),
        transitions,
        costs,
        model.beta().powi(horizon as i32),
    )
}
