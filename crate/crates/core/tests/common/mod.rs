#![allow(dead_code)]

use rand::Rng;
use teamcoord::coordinator::PrescriptionSpace;
use teamcoord::model::{validate_model, RawAgent, RawCostEntry, RawModel, RawTauEntry};
use teamcoord::quantizer::Codebook;
use teamcoord::{Belief, TeamModel};

/// Bin centers listed in the published results table, as exact fractions.
pub fn table_centers() -> Vec<Belief> {
    let rows: [[f64; 3]; 8] = [
        [0.4, 0.1, 0.5],
        [7.0 / 17.0, 4.0 / 17.0, 6.0 / 17.0],
        [5.0 / 12.0, 3.0 / 12.0, 4.0 / 12.0],
        [8.0 / 19.0, 4.0 / 19.0, 7.0 / 19.0],
        [8.0 / 19.0, 5.0 / 19.0, 6.0 / 19.0],
        [6.0 / 14.0, 3.0 / 14.0, 5.0 / 14.0],
        [9.0 / 21.0, 5.0 / 21.0, 7.0 / 21.0],
        [7.0 / 16.0, 7.0 / 16.0, 2.0 / 16.0],
    ];
    rows.iter()
        .map(|r| Belief::new(r.to_vec()).unwrap())
        .collect()
}

/// Table centers first, then predictors reachable from the prior and the centers.
pub fn example_codebook<R: Rng>(
    model: &TeamModel,
    space: &PrescriptionSpace,
    rng: &mut R,
) -> Codebook {
    let seeds = table_centers();
    let mut roots = vec![model.initial().clone()];
    roots.extend(seeds.iter().cloned());
    let mut cb = Codebook::from_centers(seeds).unwrap();
    cb.extend_reachable_from(model, space, &roots, 5, 64, rng)
        .unwrap();
    cb
}

/// A random probability vector; roughly one entry in four is forced to zero.
pub fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.25) {
                    0.0
                } else {
                    rng.gen::<f64>()
                }
            })
            .collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            return w.into_iter().map(|v| v / s).collect();
        }
    }
}

pub fn random_stochastic<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| random_distribution(rng, cols)).collect()
}

/// Random finite team model with the given size caps.
pub fn random_model<R: Rng>(
    rng: &mut R,
    max_states: usize,
    max_agents: usize,
    max_alphabet: usize,
) -> TeamModel {
    let n = rng.gen_range(1..=max_states);
    let agents: Vec<RawAgent> = (0..rng.gen_range(1..=max_agents))
        .map(|_| {
            let measurements = rng.gen_range(1..=max_alphabet);
            RawAgent {
                actions: rng.gen_range(1..=max_alphabet),
                measurements,
                channel: random_stochastic(rng, n, measurements),
            }
        })
        .collect();
    let radices: Vec<usize> = agents.iter().map(|a| a.actions).collect();
    let joint = radices.iter().product::<usize>();
    let mut tau = Vec::new();
    let mut cost = Vec::new();
    for a in 0..joint {
        let action = decode(&radices, a);
        tau.push(RawTauEntry {
            action: action.clone(),
            matrix: random_stochastic(rng, n, n),
        });
        cost.push(RawCostEntry {
            action,
            values: (0..n).map(|_| rng.gen_range(0.0..5.0)).collect(),
        });
    }
    let raw = RawModel {
        states: n,
        agents,
        tau,
        cost,
        beta: rng.gen_range(0.05..0.95),
        initial: random_distribution(rng, n),
    };
    validate_model(&raw).unwrap()
}

/// Mixed-radix decode with the first digit most significant.
pub fn decode(radices: &[usize], mut idx: usize) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for i in (0..radices.len()).rev() {
        out[i] = idx % radices[i];
        idx /= radices[i];
    }
    out
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
