//! Whole-system decay rate γ(τ) = -(2/τ) ln|⟨ψ0|e^{-iHτ}|ψ0⟩| for the bare
//! bath, and its Zeno / anti-Zeno classification.

use sbzeno::cli::prepare;
use sbzeno::config::RunConfig;
use sbzeno::zeno::{sweep_tau, Scheme, ZenoSetup};
use std::f64::consts::PI;

fn main() -> sbzeno::Result<()> {
    let cfg = RunConfig::parse_with_overrides("", &["model.alpha=0.4".to_string()])?;
    let p = prepare(&cfg, cfg.n_sites(PI / cfg.delta, false))?;
    let setup = ZenoSetup { psi0: p.state(), mpo: &p.mpo, delta: cfg.delta, spin: p.measured_spin(), n: None };
    let taus: Vec<f64> = [0.05, 0.1, 0.2, 0.3, 0.4, 0.6, 1.0].iter().map(|dt| dt / cfg.delta).collect();
    let curve = sweep_tau(&setup, Scheme::WholeSystem, &taus, &cfg.tdvp, cfg.zeno.eps_mono)?;
    for (tau, g) in curve.taus().iter().zip(curve.gammas()) {
        println!("delta*tau = {:4.2}  gamma = {g:.5}", tau * cfg.delta);
    }
    println!("{}", curve.summary());
    Ok(())
}
