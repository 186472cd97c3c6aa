//! Prescription spaces under full and sliding-window memory.

use teamcoord::bounds::action_space_size;
use teamcoord::{MemorySpec, PrescriptionSpace, TeamModel};

fn main() -> teamcoord::Result<()> {
    let model = TeamModel::two_agent_example();
    let na = [2, 2];
    let ny = [2, 2];
    for k in 1..=3 {
        let full = MemorySpec::full(k);
        println!(
            "K={k} full memory: {} joint blocks",
            action_space_size(&full, &na, &ny)
        );
    }
    let space = PrescriptionSpace::full(&model, 2);
    println!("K=2 blocks enumerated: {:?}", space.len());
    let block = space.decode(1234)?;
    println!("block 1234: {block:?}");

    let window = MemorySpec::new(vec![0, 0, 1, 2])?;
    println!(
        "K=4, two-symbol windows from stage 2: {} blocks",
        action_space_size(&window, &na, &ny)
    );
    println!(
        "K=4 full: {} blocks",
        action_space_size(&MemorySpec::full(4), &na, &ny)
    );
    Ok(())
}
