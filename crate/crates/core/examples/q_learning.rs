//! Q-learning on the surrogate MDP and on simulated periods, compared with value iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use teamcoord::quantizer::{build_grid_codebook, build_quantized_mdp};
use teamcoord::solver::{q_learning_with_restarts, value_iteration, Exploration, LiveEnv, QTable};
use teamcoord::{GroundMetric, PrescriptionSpace, TeamModel};

fn main() -> teamcoord::Result<()> {
    let model = TeamModel::two_agent_example();
    let space = PrescriptionSpace::full(&model, 1);
    let blocks = space.enumerate()?;
    let codebook = build_grid_codebook(3, 4)?;
    let mdp = build_quantized_mdp(&model, &codebook, &blocks, &GroundMetric::Discrete)?;
    let vi = value_iteration(&mdp, 1e-12, 1000)?;

    let live = LiveEnv::new(&model, &mdp, blocks)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q0 = QTable::zeros(mdp.n_states(), mdp.actions().to_vec());
    let q = q_learning_with_restarts(
        &live,
        &Exploration::Uniform,
        500_000,
        0,
        Some(1),
        &mut rng,
        q0,
    )?;

    let worst = q
        .visited()
        .map(|(s, a)| (q.values[s][a] - vi.q.values[s][a]).abs())
        .fold(0.0, f64::max);
    println!(
        "{} of {} pairs visited",
        q.visited().count(),
        q.n_states() * q.n_actions()
    );
    println!("max |Q - Q_vi| over visited pairs: {worst:.2e}");
    Ok(())
}
