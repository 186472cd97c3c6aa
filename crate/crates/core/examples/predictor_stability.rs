//! Paired predictors from a wrong prior, against the certified geometric envelope.

use teamcoord::belief::tv_distance;
use teamcoord::bounds::predictor_stability_certificate;
use teamcoord::evalsim::{predictor_stability_experiment, Behavior};
use teamcoord::{Belief, TeamModel};

fn main() -> teamcoord::Result<()> {
    let model = TeamModel::two_agent_example();
    let cert = predictor_stability_certificate(&model);
    println!(
        "delta(Q) = {}, delta~(tau) = {}, rate = {}",
        cert.delta_q, cert.delta_tilde_tau, cert.rate
    );

    let mu = Belief::new(vec![0.98, 0.01, 0.01])?;
    let nu = Belief::uniform(3);
    let tv0 = tv_distance(&mu, &nu)?;
    let gaps =
        predictor_stability_experiment(&model, &mu, &nu, &Behavior::UniformRandom, 10, 10_000, 1)?;
    println!("t  mean_tv    std_err    envelope");
    for t in 0..gaps.mean.len() {
        println!(
            "{t:<2} {:.3e}  {:.3e}  {:.3e}",
            gaps.mean[t],
            gaps.std_error[t],
            tv0 * cert.rate.powi(t as i32)
        );
    }
    Ok(())
}
