//! Mixing coefficients, approximation bounds and a memory schedule for the example.

use teamcoord::bounds::{err_bound, optimize_memory, BoundsReport};
use teamcoord::TeamModel;

fn main() -> teamcoord::Result<()> {
    let model = TeamModel::two_agent_example();
    let report = BoundsReport::compute(&model, 3, Some(0.05))?;
    print!("{}", report.to_csv());

    println!();
    for m in 0..=2 {
        println!(
            "err_bound(t=2, m={m}, K=3) = {:.5}",
            err_bound(2, m, 3, model.beta(), 2.0 / 3.0, model.cost_sup())?
        );
    }
    let opt = optimize_memory(4, 0.5, 2.0 / 3.0, model.cost_sup(), 0.5, &[2, 2], &[2, 2])?;
    println!(
        "K=4, beta=0.5, eps=0.5: schedule {:?}, {} blocks, error {:.4}",
        opt.schedule.pairs().collect::<Vec<_>>(),
        opt.action_count,
        opt.error
    );
    Ok(())
}
