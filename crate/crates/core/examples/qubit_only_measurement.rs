//! Measuring only the qubit: the bath keeps its post-measurement state, so
//! slow measurements pile up excitations in the environment.

use num_complex::Complex64 as C64;
use sbzeno::cli::prepare;
use sbzeno::config::RunConfig;
use sbzeno::zeno::{horizon_count, run_qubit_only, RecordOptions};

fn main() -> sbzeno::Result<()> {
    let cfg = RunConfig::parse_with_overrides("", &["model.s=0.5".to_string(), "model.alpha=0.2".to_string()])?;
    let p = prepare(&cfg, cfg.n_sites(std::f64::consts::PI / cfg.delta, false))?;
    let up = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    for tau in [1.0, 6.0] {
        let n = horizon_count(tau, cfg.delta);
        let opts = RecordOptions { record_every: 0, star_modes: Some(&p.chain) };
        let run = run_qubit_only(p.state(), &p.mpo, up, tau, n, &cfg.tdvp, opts)?;
        println!("tau = {tau}: {n} measurements, gamma = {:.5}", run.gamma);
        for (k, f) in run.fidelity_after.iter().enumerate() {
            let high: f64 = run.star_occ[k].iter().filter(|(w, _)| *w > 0.5).map(|(_, n)| n).sum();
            println!(
                "  k = {:2}  P_s = {:.5}  fidelity = {:.5}  bath photons = {:.4}  (omega > 0.5: {:.4})",
                k + 1,
                run.cumulative[k],
                f,
                run.chain_total[k],
                high
            );
        }
    }
    Ok(())
}
