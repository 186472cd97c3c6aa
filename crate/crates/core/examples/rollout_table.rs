//! Monte Carlo evaluation of the value-iteration policy, printed as a Markdown table.

use teamcoord::cli::render_report;
use teamcoord::evalsim::{evaluate_centers, DEFAULT_TRUNC_EPS};
use teamcoord::quantizer::{build_grid_codebook, build_quantized_mdp};
use teamcoord::solver::value_iteration;
use teamcoord::{GroundMetric, PrescriptionSpace, TeamModel};

fn main() -> teamcoord::Result<()> {
    let model = TeamModel::two_agent_example();
    let space = PrescriptionSpace::full(&model, 1);
    let codebook = build_grid_codebook(3, 4)?;
    let mdp = build_quantized_mdp(
        &model,
        &codebook,
        &space.enumerate()?,
        &GroundMetric::Discrete,
    )?;
    let vi = value_iteration(&mdp, 1e-10, 1000)?;
    let centers: Vec<usize> = (0..codebook.len()).collect();
    let table = evaluate_centers(
        &model,
        &space,
        &vi.policy,
        &codebook,
        &GroundMetric::Discrete,
        &centers,
        Some(&vi.values),
        None,
        20_000,
        11,
        DEFAULT_TRUNC_EPS,
    )?;
    print!("{}", render_report(&table));
    Ok(())
}
