//! The four commands behind the `sbzeno` binary. Each writes its CSVs (with
//! the resolved configuration as a comment header) into the output
//! directory and returns a short report.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{build_mpo, prepare_initial_state, solve_ut, InitialKind, InitialStateSpec, ModelParams, PreparedState, SPIN_PLUS};
use crate::mpo::Mpo;
use crate::mps::{MpsState, SPIN_UP};
use crate::oracle::{compare, dense_state, dense_trajectory, DenseSystem};
use crate::spectral::{chain_map, discretize, ChainSystem, DiscretizedBath};
use crate::tdvp::{check_chain_length, evolve, split_interval, Evolver, TrajectoryRecord};
use crate::zeno::{sweep_tau_with, Classification, RecordOptions, ZenoSetup};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Exit code for an error: bad input is a configuration error, everything
/// raised during the computation a numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::DimensionMismatch { .. } | Error::Checkpoint(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    /// False when a verification failed.
    pub passed: bool,
}

impl Outcome {
    fn new() -> Self {
        Self { passed: true, ..Default::default() }
    }

    fn write(&mut self, cfg: &RunConfig, name: &str, body: &str) -> Result<()> {
        let dir = Path::new(&cfg.out_dir);
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        fs::write(&path, format!("{}{}", cfg.header(), body))?;
        self.files.push(path);
        Ok(())
    }
}

/// Everything a run needs, built from the configuration.
pub struct Problem {
    pub bath: DiscretizedBath,
    pub chain: ChainSystem,
    pub model: ModelParams,
    pub spec: InitialStateSpec,
    pub prepared: PreparedState,
    pub mpo: Mpo,
}

impl Problem {
    pub fn state(&self) -> &MpsState {
        &self.prepared.state
    }

    /// The spin state the qubit-only scheme projects onto.
    pub fn measured_spin(&self) -> [num_complex::Complex64; 2] {
        match self.spec.kind {
            InitialKind::CoherencePlus => SPIN_PLUS,
            _ => SPIN_UP,
        }
    }
}

pub fn prepare(cfg: &RunConfig, n_sites: usize) -> Result<Problem> {
    let bath = discretize(&cfg.density, cfg.m)?;
    let chain = chain_map(&bath, n_sites)?;
    let model = ModelParams::new(cfg.delta, chain.clone())?;
    let ut = if cfg.initial.needs_ut() { Some(solve_ut(cfg.delta, &bath, cfg.ut_tol, cfg.ut_max_iter)?) } else { None };
    let spec = InitialStateSpec { kind: cfg.initial, ut };
    let prepared = prepare_initial_state(&spec, &model, chain.n_sites(), &cfg.mps)?;
    let mpo = build_mpo(&model, &prepared.state.fock_dims())?;
    Ok(Problem { bath, chain, model, spec, prepared, mpo })
}

/// Chain coefficients for the configured bath.
pub fn cmd_chain(cfg: &RunConfig, chain_double: bool) -> Result<Outcome> {
    let n = cfg.n_sites(cfg.t_final, chain_double);
    let bath = discretize(&cfg.density, cfg.m)?;
    let chain = chain_map(&bath, n)?;
    let mut out = Outcome::new();
    if cfg.density.alpha == 0.0 {
        log::warn!("alpha = 0: the qubit is decoupled and every chain coupling vanishes");
        out.summary.push("warning: alpha = 0, all couplings are zero".into());
    }
    out.write(cfg, "chain.csv", &chain.to_csv())?;
    out.summary.push(format!("{} chain sites, c0 = {}", chain.n_sites(), chain.c0));
    Ok(out)
}

/// One trajectory with observables, occupations and a final checkpoint.
pub fn cmd_evolve(cfg: &RunConfig, chain_double: bool) -> Result<Outcome> {
    let t_end = cfg.resume_time + cfg.t_final;
    let n = cfg.n_sites(t_end, chain_double);
    let p = prepare(cfg, n)?;
    check_chain_length(p.chain.n_sites(), cfg.density.omega_c, t_end);
    let start = match &cfg.resume {
        Some(path) => {
            let f = fs::File::open(path).map_err(|e| Error::Config(format!("cannot open checkpoint {path}: {e}")))?;
            let st = MpsState::read_checkpoint(std::io::BufReader::new(f))?;
            if st.fock_dims() != p.state().fock_dims() {
                return Err(Error::Checkpoint("checkpoint does not match the configured chain".into()));
            }
            st
        }
        None => p.state().clone(),
    };
    let mut out = Outcome::new();
    let dir = Path::new(&cfg.out_dir);
    fs::create_dir_all(dir)?;
    let ckpt = dir.join("checkpoint.bin");
    let save = |st: &MpsState| -> Result<()> {
        let f = fs::File::create(&ckpt)?;
        st.write_checkpoint(std::io::BufWriter::new(f))
    };
    let (steps, dt) = split_interval(cfg.t_final, cfg.tdvp.dt);
    let every = cfg.record_every.max(1);
    let psi0 = p.state();
    let mut ev = Evolver::new(start, &p.mpo, &cfg.tdvp)?;
    let mut rec = TrajectoryRecord::default();
    rec.push(cfg.resume_time, psi0, ev.state(), &p.mpo)?;
    for k in 1..=steps {
        ev.step(dt)?;
        if k % every == 0 || k == steps {
            rec.push(cfg.resume_time + k as f64 * dt, psi0, ev.state(), &p.mpo)?;
        }
        if cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0 {
            save(ev.state())?;
        }
    }
    save(ev.state())?;
    out.files.push(ckpt.clone());
    out.write(cfg, "trajectory.csv", &rec.to_csv())?;
    out.write(cfg, "occupations.csv", &rec.occupations_csv())?;
    out.summary.push(format!(
        "t = {}: sigma_z = {:.6}, sigma_x = {:.6}, norm deviation {:.2e}, relative energy drift {:.2e}",
        t_end,
        rec.sigma_z.last().copied().unwrap_or(f64::NAN),
        rec.sigma_x.last().copied().unwrap_or(f64::NAN),
        rec.norm_deviation(),
        rec.energy_drift()
    ));
    Ok(out)
}

/// Time range the chain has to cover: the measured evolution lasts up to
/// the horizon `π/Δ` (or `n·τ` with an explicit `n`) under either scheme.
fn zeno_horizon(cfg: &RunConfig) -> f64 {
    let tau_max = cfg.zeno.taus.last().copied().unwrap_or(0.0);
    let t = match cfg.zeno.n {
        Some(n) => n as f64 * tau_max,
        None => PI / cfg.delta,
    };
    t.max(tau_max)
}

fn tau_tag(tau: f64) -> String {
    format!("{tau}").replace('.', "p")
}

/// Decay-rate curves for each configured scheme with classification.
pub fn cmd_zeno(cfg: &RunConfig, chain_double: bool) -> Result<Outcome> {
    let horizon = zeno_horizon(cfg);
    let p = prepare(cfg, cfg.n_sites(horizon, chain_double))?;
    check_chain_length(p.chain.n_sites(), cfg.density.omega_c, horizon);
    let setup = ZenoSetup { psi0: p.state(), mpo: &p.mpo, delta: cfg.delta, spin: p.measured_spin(), n: cfg.zeno.n };
    let opts = RecordOptions { record_every: cfg.zeno.record_every, star_modes: cfg.zeno.star_occupations.then_some(&p.chain) };
    let mut out = Outcome::new();
    for &scheme in &cfg.zeno.schemes {
        let (curve, runs) = sweep_tau_with(&setup, scheme, &cfg.zeno.taus, &cfg.tdvp, cfg.zeno.eps_mono, opts)?;
        out.write(cfg, &format!("decay_{scheme}.csv"), &curve.to_csv())?;
        out.write(cfg, &format!("survival_{scheme}.csv"), &curve.survivals_csv())?;
        for run in runs.iter().flatten() {
            let tag = tau_tag(run.tau);
            out.write(cfg, &format!("measurements_{scheme}_tau{tag}.csv"), &run.measurements_csv())?;
            if cfg.zeno.record_every > 0 {
                out.write(cfg, &format!("fidelity_{scheme}_tau{tag}.csv"), &run.fidelity_csv())?;
            }
            if cfg.zeno.star_occupations {
                out.write(cfg, &format!("star_{scheme}_tau{tag}.csv"), &run.star_csv())?;
            }
        }
        if curve.classification == Classification::Indeterminate {
            log::warn!("{scheme}: gamma(tau) is neither monotone nor peaked on this grid");
        }
        out.summary.push(curve.summary());
    }
    let summary = out.summary.join("\n") + "\n";
    out.write(cfg, "zeno_summary.txt", &summary)?;
    Ok(out)
}

/// TDVP against exact propagation on a small truncated system.
pub fn cmd_verify(cfg: &RunConfig, chain_double: bool) -> Result<Outcome> {
    let v = &cfg.verify;
    let n = if chain_double { 2 * v.sites } else { v.sites };
    let p = prepare(cfg, n)?;
    let sys = DenseSystem::new(cfg.delta, &p.chain, p.chain.n_sites(), v.d, v.dim_cap)?;
    let v0 = dense_state(&p.spec, &p.chain, &sys)?;
    let ratio = v.record_dt / cfg.tdvp.dt;
    let every = ratio.round() as usize;
    if every == 0 || (ratio - every as f64).abs() > 1e-9 {
        return Err(Error::Config(format!("verify.record_dt {} must be a multiple of tdvp.dt {}", v.record_dt, cfg.tdvp.dt)));
    }
    let dense = dense_trajectory(&sys, &v0, v.t_final, v.record_dt, v.krylov_tol)?;
    let (_, rec) = evolve(p.state(), &p.mpo, &cfg.tdvp, v.t_final, every)?;
    let a: Vec<(f64, f64)> = rec.times.iter().copied().zip(rec.sigma_z.iter().copied()).collect();
    let b: Vec<(f64, f64)> = dense.times.iter().copied().zip(dense.sigma_z.iter().copied()).collect();
    let report = compare("sigma_z", &a, &b, v.tol)?;
    let mut out = Outcome::new();
    out.write(cfg, "verify.csv", &report.to_csv())?;
    out.passed = report.pass;
    out.summary.push(format!("{} [preset {}, {} sites, d = {}, dim = {}]", report.summary(), v.preset, sys.n_bosons, sys.d, sys.dim));
    if !report.pass {
        let worst = report.rows.iter().max_by(|x, y| x.3.total_cmp(&y.3)).expect("non-empty");
        out.summary.push(format!(
            "diagnostic: largest deviation at t = {} (mps {:.6}, exact {:.6}); check tdvp.dt, mps.bond_dim and the Fock cutoffs",
            worst.0, worst.1, worst.2
        ));
    }
    Ok(out)
}
