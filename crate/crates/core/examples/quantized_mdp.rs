//! Grid and reachable codebooks, and the finite MDP built on them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use teamcoord::quantizer::{build_grid_codebook, build_quantized_mdp, build_reachable_codebook};
use teamcoord::{GroundMetric, PrescriptionSpace, TeamModel};

fn main() -> teamcoord::Result<()> {
    let model = TeamModel::two_agent_example();
    let space = PrescriptionSpace::full(&model, 1);
    let blocks = space.enumerate()?;

    let grid = build_grid_codebook(3, 5)?;
    let mdp = build_quantized_mdp(&model, &grid, &blocks, &GroundMetric::Discrete)?;
    println!(
        "grid n=5: {} centers x {} blocks, discount {}",
        mdp.n_states(),
        mdp.n_actions(),
        mdp.discount()
    );
    for (next, p) in mdp.transitions(0, 0) {
        println!("  center 0, block 0 -> center {next} w.p. {p:.4}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let reach = build_reachable_codebook(&model, &space, 4, 32, &mut rng)?;
    let mdp = build_quantized_mdp(&model, &reach, &blocks, &GroundMetric::Line)?;
    println!("reachable depth 4: {} centers", mdp.n_states());
    for c in reach.centers().iter().take(5) {
        println!("  {:?}", c.weights());
    }
    Ok(())
}
