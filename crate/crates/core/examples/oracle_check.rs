//! TDVP against exact Krylov propagation of the truncated Hamiltonian on a
//! chain small enough to store the full state vector.

use sbzeno::cli::prepare;
use sbzeno::config::RunConfig;
use sbzeno::oracle::{compare, dense_state, dense_trajectory, DenseSystem, DEFAULT_DIM_CAP};
use sbzeno::tdvp::evolve;

fn main() -> sbzeno::Result<()> {
    let overrides: Vec<String> = ["mps.bond_dim=8", "mps.local_dim=6", "mps.obb_dim=6"].iter().map(|s| s.to_string()).collect();
    let cfg = RunConfig::parse_with_overrides("", &overrides)?;
    let (sites, d, t_final) = (6, 6, 10.0);
    let p = prepare(&cfg, sites)?;
    let sys = DenseSystem::new(cfg.delta, &p.chain, sites, d, DEFAULT_DIM_CAP)?;
    let v0 = dense_state(&p.spec, &p.chain, &sys)?;
    let exact = dense_trajectory(&sys, &v0, t_final, 1.0, 1e-10)?;
    let (_, rec) = evolve(p.state(), &p.mpo, &cfg.tdvp, t_final, 10)?;
    let pair = |t: &[f64], v: &[f64]| t.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    let report = compare("sigma_z", &pair(&rec.times, &rec.sigma_z), &pair(&exact.times, &exact.sigma_z), 1e-3)?;
    print!("{}", report.to_csv());
    println!("{} (Hilbert space dimension {})", report.summary(), sys.dim);
    Ok(())
}
