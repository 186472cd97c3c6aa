//! Predictor, filter and multi-step updates on the example model.

use teamcoord::belief::{filter_update, k_step_update, predictor_update, tv_distance};
use teamcoord::TeamModel;

fn main() -> teamcoord::Result<()> {
    let model = TeamModel::two_agent_example();
    let prior = model.initial();

    let z = predictor_update(&model, prior, &[0, 1], &[0, 1])?;
    println!("predictor after u=(0,1), y=(0,1): {:?}", z.weights());

    let f = filter_update(&model, prior, &[1, 1], &[1, 1])?;
    println!("filter after u=(1,1), y'=(1,1):    {:?}", f.weights());

    let two = k_step_update(
        &model,
        prior,
        &[vec![0, 1], vec![1, 1]],
        &[vec![0, 1], vec![1, 1]],
    )?;
    println!("two-step predictor:                 {:?}", two.weights());
    println!("tv to prior: {:.4}", tv_distance(&two, prior)?);

    // y = (0, 0) has probability zero from states 1 and 2
    let null = predictor_update(&model, &teamcoord::Belief::point(3, 1), &[0, 0], &[0, 0])?;
    println!(
        "impossible observation gives null belief: {}",
        null.is_null()
    );
    Ok(())
}
