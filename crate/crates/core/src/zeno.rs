//! Repeated projective measurements: survival probabilities, effective decay
//! rates γ(τ), τ sweeps and QZE / QAZE classification.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mpo::Mpo;
use crate::mps::MpsState;
use crate::spectral::{self, ChainSystem};
use crate::tdvp::{split_interval, Evolver, TdvpConfig};

/// Reported in place of γ when the survival amplitude vanishes.
pub const GAMMA_OVERFLOW: f64 = f64::INFINITY;

/// Default relative noise band of the monotonicity test.
pub const EPS_MONO: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Project the total state onto the initial total state.
    WholeSystem,
    /// Project only the qubit onto its initial spin state.
    QubitOnly,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "whole" | "wholesystem" => Ok(Scheme::WholeSystem),
            "qubit" | "qubitonly" => Ok(Scheme::QubitOnly),
            _ => Err(Error::Config(format!("unknown measurement scheme '{s}' (whole | qubit)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::WholeSystem => "whole",
            Scheme::QubitOnly => "qubit",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Number of measurements fitting into the bare Rabi half period `π/Δ`.
pub fn horizon_count(tau: f64, delta: f64) -> usize {
    // tolerate τ that divide π/Δ up to rounding
    ((PI / (delta * tau)) * (1.0 + 1e-12)).floor().max(1.0) as usize
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZenoProtocol {
    pub scheme: Scheme,
    pub tau: f64,
    pub n: usize,
    /// Require `n·τ ≤ π/Δ`.
    pub horizon_cap: bool,
}

impl ZenoProtocol {
    /// As many measurements as the horizon `π/Δ` allows (at least one).
    pub fn for_horizon(scheme: Scheme, tau: f64, delta: f64) -> Self {
        Self { scheme, tau, n: horizon_count(tau, delta), horizon_cap: true }
    }

    pub fn validate(&self, delta: f64) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Domain(format!("measurement interval must be > 0, got {}", self.tau)));
        }
        if self.n == 0 {
            return Err(Error::Domain("need at least one measurement".into()));
        }
        let horizon = PI / delta;
        if self.horizon_cap && self.n > 1 && self.n as f64 * self.tau > horizon * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "{} measurements of interval {} exceed the horizon pi/Delta = {horizon}",
                self.n, self.tau
            )));
        }
        Ok(())
    }
}

fn check_normalized(psi: &MpsState) -> Result<()> {
    let n = psi.norm_sqr();
    if (n - 1.0).abs() > 1e-8 {
        return Err(Error::Domain(format!("initial state must be normalized, norm^2 = {n}")));
    }
    Ok(())
}

/// `A(τ) = ⟨ψ0| e^{-iHτ} |ψ0⟩`.
pub fn survival_amplitude(psi0: &MpsState, mpo: &Mpo, tau: f64, cfg: &TdvpConfig) -> Result<C64> {
    check_normalized(psi0)?;
    let mut ev = Evolver::new(psi0.clone(), mpo, cfg)?;
    ev.advance(tau)?;
    psi0.overlap(ev.state())
}

/// `γ = -(2/τ) ln|A|`, or [`GAMMA_OVERFLOW`] when `A` vanishes.
pub fn gamma_from_amplitude(a: C64, tau: f64) -> f64 {
    let m = a.norm();
    if m <= f64::MIN_POSITIVE {
        log::warn!("survival amplitude vanished at tau = {tau}; decay rate reported as overflow");
        return GAMMA_OVERFLOW;
    }
    -2.0 * m.ln() / tau
}

/// Whole-system decay rate. Every measurement resets the full state, so a
/// single interval determines `P_s(nτ) = |A(τ)|^{2n}` exactly.
pub fn decay_rate_whole(psi0: &MpsState, mpo: &Mpo, tau: f64, cfg: &TdvpConfig) -> Result<f64> {
    Ok(gamma_from_amplitude(survival_amplitude(psi0, mpo, tau, cfg)?, tau))
}

/// Cumulative survival after each of `n` explicit whole-system projections.
pub fn whole_system_survival(psi0: &MpsState, mpo: &Mpo, tau: f64, n: usize, cfg: &TdvpConfig) -> Result<Vec<f64>> {
    check_normalized(psi0)?;
    let mut state = psi0.clone();
    let mut cum = 1.0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut ev = Evolver::new(state, mpo, cfg)?;
        ev.advance(tau)?;
        let a = psi0.overlap(ev.state())?;
        let p = a.norm_sqr();
        if p < 1e-14 {
            return Err(Error::MeasurementAnnihilated(p));
        }
        cum *= p;
        out.push(cum);
        // (|ψ0⟩⟨ψ0|ψ⟩) / |⟨ψ0|ψ⟩| keeps the phase, which no later probability sees
        state = psi0.clone();
    }
    Ok(out)
}

/// Least-squares slope through the origin of `-ln P_s(kτ)` against `kτ`.
pub fn fit_gamma(tau: f64, cumulative: &[f64]) -> f64 {
    if cumulative.iter().any(|&p| p <= 0.0) {
        return GAMMA_OVERFLOW;
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, p) in cumulative.iter().enumerate() {
        let t = (k + 1) as f64 * tau;
        sxy += -t * p.ln();
        sxx += t * t;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// What to record during a qubit-only run besides the survival series.
#[derive(Clone, Copy, Debug, Default)]
pub struct RecordOptions<'a> {
    /// Sample the fidelity every this many TDVP steps inside each interval
    /// (0: only at measurement times).
    pub record_every: usize,
    /// Reconstruct star-mode occupations after each measurement.
    pub star_modes: Option<&'a ChainSystem>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QubitOnlyRun {
    pub tau: f64,
    /// Success probability `p_k` of measurement `k`.
    pub per_step: Vec<f64>,
    /// `P_s(kτ) = Π_{i≤k} p_i`.
    pub cumulative: Vec<f64>,
    pub gamma: f64,
    /// `|⟨ψ0|ψ(kτ⁻)⟩|²`, just before measurement `k`.
    pub fidelity_before: Vec<f64>,
    /// `|⟨ψ0|ψ(kτ⁺)⟩|²`, just after measurement `k`.
    pub fidelity_after: Vec<f64>,
    /// `(t, fidelity)`; measurement times appear twice (before, after).
    pub trace: Vec<(f64, f64)>,
    /// Star-mode `(ω_j, n_j)` after each measurement, when requested.
    pub star_occ: Vec<Vec<(f64, f64)>>,
    /// Chain total photon number after each measurement.
    pub chain_total: Vec<f64>,
    /// Set when a measurement annihilated the state; the record stops there.
    pub aborted: Option<f64>,
}

impl QubitOnlyRun {
    /// `k,t,p_k,survival,fidelity_before,fidelity_after`.
    pub fn measurements_csv(&self) -> String {
        let mut out = String::from("k,t,p_k,survival,fidelity_before,fidelity_after\n");
        for (k, p) in self.cumulative.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                k + 1,
                (k + 1) as f64 * self.tau,
                self.per_step[k],
                p,
                self.fidelity_before[k],
                self.fidelity_after[k]
            );
        }
        out
    }

    /// `t,fidelity`.
    pub fn fidelity_csv(&self) -> String {
        let mut out = String::from("t,fidelity\n");
        for (t, f) in &self.trace {
            let _ = writeln!(out, "{t},{f}");
        }
        out
    }

    /// `k,omega,n` after each measurement `k`.
    pub fn star_csv(&self) -> String {
        let mut out = String::from("k,omega,n\n");
        for (k, occ) in self.star_occ.iter().enumerate() {
            for (w, n) in occ {
                let _ = writeln!(out, "{},{w},{n}", k + 1);
            }
        }
        out
    }
}

/// Evolve for `τ`, project the qubit onto `spin`, renormalize, repeat `n`
/// times.
pub fn run_qubit_only(
    psi0: &MpsState,
    mpo: &Mpo,
    spin: [C64; 2],
    tau: f64,
    n: usize,
    cfg: &TdvpConfig,
    opts: RecordOptions,
) -> Result<QubitOnlyRun> {
    check_normalized(psi0)?;
    if !(tau > 0.0) || n == 0 {
        return Err(Error::Domain(format!("need tau > 0 and n >= 1, got tau={tau}, n={n}")));
    }
    let (steps, dt) = split_interval(tau, cfg.dt);
    let mut run = QubitOnlyRun { tau, ..Default::default() };
    run.trace.push((0.0, 1.0));
    let mut state = psi0.clone();
    let mut cum = 1.0;
    for k in 0..n {
        let t0 = k as f64 * tau;
        let mut ev = Evolver::new(state, mpo, cfg)?;
        for j in 1..=steps {
            ev.step(dt)?;
            if opts.record_every > 0 && j % opts.record_every == 0 && j < steps {
                let f = psi0.overlap(ev.state())?.norm_sqr();
                run.trace.push((t0 + j as f64 * dt, f));
            }
        }
        let t = (k + 1) as f64 * tau;
        let before = ev.into_state();
        let fb = psi0.overlap(&before)?.norm_sqr();
        run.fidelity_before.push(fb);
        run.trace.push((t, fb));
        let (after, p) = match before.project_qubit(spin) {
            Ok(x) => x,
            Err(Error::MeasurementAnnihilated(p)) => {
                log::warn!("measurement {} at t = {t} annihilated the state (p = {p:e}); stopping", k + 1);
                run.per_step.push(p);
                run.aborted = Some(p);
                run.gamma = GAMMA_OVERFLOW;
                return Ok(run);
            }
            Err(e) => return Err(e),
        };
        cum *= p;
        run.per_step.push(p);
        run.cumulative.push(cum);
        let fa = psi0.overlap(&after)?.norm_sqr();
        run.fidelity_after.push(fa);
        run.trace.push((t, fa));
        if let Some(cs) = opts.star_modes {
            let corr = after.one_body_correlations();
            run.chain_total.push(corr.diagonal().iter().map(|z| z.re).sum());
            run.star_occ.push(spectral::star_occupations(cs, &corr)?);
        }
        state = after;
    }
    run.gamma = fit_gamma(tau, &run.cumulative);
    Ok(run)
}

/// Fidelity `|⟨ψ0|ψ(t)⟩|²` across a qubit-only measured evolution, sampled
/// every `record_every` steps and on both sides of each measurement.
pub fn fidelity_trace(psi0: &MpsState, mpo: &Mpo, spin: [C64; 2], tau: f64, n: usize, cfg: &TdvpConfig, record_every: usize) -> Result<Vec<(f64, f64)>> {
    let opts = RecordOptions { record_every: record_every.max(1), star_modes: None };
    Ok(run_qubit_only(psi0, mpo, spin, tau, n, cfg, opts)?.trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    /// γ nondecreasing across the grid within the noise band.
    QzeOnly,
    /// γ has an interior maximum standing out of the noise band.
    QzeToQaze,
    /// Neither: γ falls beyond the band without an interior maximum.
    Indeterminate,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::QzeOnly => "QZE-only",
            Classification::QzeToQaze => "QZE→QAZE",
            Classification::Indeterminate => "indeterminate",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Absolute floor of the noise band; γ below this is round-off.
pub const GAMMA_NOISE: f64 = 1e-10;

/// Monotonicity test with band `max(eps · max γ, GAMMA_NOISE)`. Returns the class and the index
/// of the first interior peak, if any.
///
/// A peak is an interior local maximum exceeding some earlier and some later
/// point by more than the band; with a fine grid around a broad maximum the
/// immediate neighbours alone can sit inside the band.
pub fn classify(gammas: &[f64], eps: f64) -> (Classification, Option<usize>) {
    let finite: Vec<f64> = gammas.iter().copied().filter(|g| g.is_finite()).collect();
    let max = finite.iter().copied().fold(0.0_f64, f64::max);
    let band = (eps * max).max(GAMMA_NOISE);
    let n = gammas.len();
    for i in 1..n.saturating_sub(1) {
        let g = gammas[i];
        if !(g >= gammas[i - 1] && g >= gammas[i + 1]) {
            continue;
        }
        let left = gammas[..i].iter().copied().fold(f64::INFINITY, f64::min);
        let right = gammas[i + 1..].iter().copied().fold(f64::INFINITY, f64::min);
        if g - left > band && g - right > band {
            return (Classification::QzeToQaze, Some(i));
        }
    }
    let mut running = f64::NEG_INFINITY;
    for &g in gammas {
        if g < running - band {
            return (Classification::Indeterminate, None);
        }
        running = running.max(g);
    }
    (Classification::QzeOnly, None)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayPoint {
    pub tau: f64,
    pub gamma: f64,
    pub scheme: Scheme,
    /// Per-measurement success probabilities (one entry for the whole-system
    /// scheme).
    pub survivals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayRateCurve {
    pub delta: f64,
    pub scheme: Scheme,
    pub points: Vec<DecayPoint>,
    pub classification: Classification,
    pub peak_tau: Option<f64>,
    pub eps_mono: f64,
}

impl DecayRateCurve {
    pub fn from_points(delta: f64, scheme: Scheme, points: Vec<DecayPoint>, eps_mono: f64) -> Self {
        let gammas: Vec<f64> = points.iter().map(|p| p.gamma).collect();
        let (classification, peak) = classify(&gammas, eps_mono);
        let peak_tau = peak.map(|i| points[i].tau);
        Self { delta, scheme, points, classification, peak_tau, eps_mono }
    }

    pub fn taus(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.tau).collect()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.gamma).collect()
    }

    pub fn summary(&self) -> String {
        match self.peak_tau {
            Some(t) => format!("{} {} peak_tau={} peak_delta_tau={}", self.scheme, self.classification, t, t * self.delta),
            None => format!("{} {}", self.scheme, self.classification),
        }
    }

    /// `tau,delta_tau,gamma,scheme,classification,is_peak`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,delta_tau,gamma,scheme,classification,is_peak\n");
        for p in &self.points {
            let peak = self.peak_tau == Some(p.tau);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.tau,
                p.tau * self.delta,
                p.gamma,
                p.scheme,
                self.classification,
                u8::from(peak)
            );
        }
        out
    }

    /// `tau,k,p_k,survival`.
    pub fn survivals_csv(&self) -> String {
        let mut out = String::from("tau,k,p_k,survival\n");
        for p in &self.points {
            let mut cum = 1.0;
            for (k, pk) in p.survivals.iter().enumerate() {
                cum *= pk;
                let _ = writeln!(out, "{},{},{},{}", p.tau, k + 1, pk, cum);
            }
        }
        out
    }
}

/// Initial state, Hamiltonian and measured spin state of a sweep.
#[derive(Clone, Copy)]
pub struct ZenoSetup<'a> {
    pub psi0: &'a MpsState,
    pub mpo: &'a Mpo,
    pub delta: f64,
    pub spin: [C64; 2],
    /// Measurements per qubit-only run; `None` applies the horizon rule.
    pub n: Option<usize>,
}

/// γ at a single τ, plus the full qubit-only record when that scheme runs.
pub fn decay_point_with(setup: &ZenoSetup, scheme: Scheme, tau: f64, cfg: &TdvpConfig, opts: RecordOptions) -> Result<(DecayPoint, Option<QubitOnlyRun>)> {
    let mut proto = ZenoProtocol::for_horizon(scheme, tau, setup.delta);
    if let Some(n) = setup.n {
        proto.n = n;
    }
    proto.validate(setup.delta)?;
    match scheme {
        Scheme::WholeSystem => {
            let a = survival_amplitude(setup.psi0, setup.mpo, tau, cfg)?;
            Ok((DecayPoint { tau, gamma: gamma_from_amplitude(a, tau), scheme, survivals: vec![a.norm_sqr()] }, None))
        }
        Scheme::QubitOnly => {
            let run = run_qubit_only(setup.psi0, setup.mpo, setup.spin, tau, proto.n, cfg, opts)?;
            Ok((DecayPoint { tau, gamma: run.gamma, scheme, survivals: run.per_step.clone() }, Some(run)))
        }
    }
}

/// γ at a single τ.
pub fn decay_point(setup: &ZenoSetup, scheme: Scheme, tau: f64, cfg: &TdvpConfig) -> Result<DecayPoint> {
    Ok(decay_point_with(setup, scheme, tau, cfg, RecordOptions::default())?.0)
}

/// Like [`sweep_tau`], keeping the qubit-only records (recorded per `opts`).
pub fn sweep_tau_with(
    setup: &ZenoSetup,
    scheme: Scheme,
    taus: &[f64],
    cfg: &TdvpConfig,
    eps_mono: f64,
    opts: RecordOptions,
) -> Result<(DecayRateCurve, Vec<Option<QubitOnlyRun>>)> {
    if taus.is_empty() {
        return Err(Error::Domain("empty tau grid".into()));
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("tau grid must be strictly increasing".into()));
    }
    let results = taus.par_iter().map(|&tau| decay_point_with(setup, scheme, tau, cfg, opts)).collect::<Result<Vec<_>>>()?;
    let (points, runs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((DecayRateCurve::from_points(setup.delta, scheme, points, eps_mono), runs))
}

/// γ over a strictly increasing τ grid. Points run as independent jobs on
/// the current rayon pool and are merged in grid order.
pub fn sweep_tau(setup: &ZenoSetup, scheme: Scheme, taus: &[f64], cfg: &TdvpConfig, eps_mono: f64) -> Result<DecayRateCurve> {
    Ok(sweep_tau_with(setup, scheme, taus, cfg, eps_mono, RecordOptions::default())?.0)
}
