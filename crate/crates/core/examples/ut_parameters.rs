//! Self-consistent variational (polaron) displacements for the physical-bath
//! initial state, and their image on the chain.

use sbzeno::model::solve_ut;
use sbzeno::spectral::{chain_map, discretize, displacement_to_chain, SpectralDensity};

fn main() -> sbzeno::Result<()> {
    let delta = 0.1;
    for alpha in [0.05, 0.2, 0.4, 0.8] {
        let sd = SpectralDensity::unit_cutoff(1.0, alpha)?;
        let bath = discretize(&sd, 2000)?;
        let ut = solve_ut(delta, &bath, 1e-12, 10_000)?;
        let chain = chain_map(&bath, 12)?;
        let mu = displacement_to_chain(&chain, &ut.lambda_star)?;
        println!(
            "alpha = {alpha:<5} eta = {:.6}  iterations = {:>4}  residual = {:.1e}  renormalized gap = {:.3e}",
            ut.eta, ut.iterations, ut.residual, ut.eta * delta
        );
        let head: Vec<String> = mu.iter().take(6).map(|m| format!("{m:+.4}")).collect();
        println!("    chain displacements: {} ...", head.join(" "));
    }
    Ok(())
}
