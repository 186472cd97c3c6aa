//! Value iteration on a quantized K=2 model.

use teamcoord::quantizer::{build_grid_codebook, build_quantized_mdp};
use teamcoord::solver::value_iteration;
use teamcoord::{GroundMetric, PrescriptionSpace, TeamModel};

fn main() -> teamcoord::Result<()> {
    let model = TeamModel::two_agent_example();
    let space = PrescriptionSpace::full(&model, 2);
    let codebook = build_grid_codebook(3, 4)?;
    let mdp = build_quantized_mdp(
        &model,
        &codebook,
        &space.enumerate()?,
        &GroundMetric::Discrete,
    )?;
    let vi = value_iteration(&mdp, 1e-10, 1000)?;
    println!("{} sweeps, residual {:e}", vi.iterations, vi.residual);
    for (s, c) in codebook.centers().iter().enumerate() {
        println!(
            "{:?}  V = {:.4}  block {}",
            c.weights(),
            vi.values[s],
            vi.policy.action(s)
        );
    }
    Ok(())
}
