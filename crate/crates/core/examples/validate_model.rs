//! Load a model from JSON (or the built-in example) and print its shape.
//!
//! `cargo run --example validate_model -- fixtures/two_agent_three_state.json`

use teamcoord::TeamModel;

fn main() -> teamcoord::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(path) => TeamModel::from_path(path)?,
        None => TeamModel::two_agent_example(),
    };
    println!("states: {}", model.n_states());
    for i in 0..model.n_agents() {
        println!(
            "agent {i}: {} actions, {} measurements",
            model.n_actions(i),
            model.n_measurements(i)
        );
    }
    println!("beta: {}", model.beta());
    println!("sup |c|: {}", model.cost_sup());
    println!("initial: {:?}", model.initial().weights());
    Ok(())
}
