//! Run configuration: line-oriented `key = value` text with `[section]`
//! headers. Every key has a default; unknown keys are rejected.
//!
//! ```text
//! [model]
//! s = 1
//! alpha = 0.05
//!
//! [zeno]
//! scheme = both
//! delta_tau = 0.05, 0.1, 0.2
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::InitialKind;
use crate::mps::MpsConfig;
use crate::spectral::{self, SpectralDensity};
use crate::tdvp::TdvpConfig;
use crate::zeno::Scheme;

/// `(key, default, description)`.
const KEYS: &[(&str, &str, &str)] = &[
    ("model.s", "1", "bath exponent"),
    ("model.alpha", "0.05", "coupling strength"),
    ("model.omega_c", "1", "cutoff frequency"),
    ("model.delta", "0.1", "qubit splitting"),
    ("bath.m", "2000", "quadrature points"),
    ("chain.l", "auto", "chain length L (L+1 boson sites) or auto"),
    ("chain.t_max", "auto", "time the chain must cover when L is auto"),
    ("mps.bond_dim", "6", "bond dimension D"),
    ("mps.local_dim", "40", "Fock dimension d_k"),
    ("mps.obb_dim", "16", "optimized-basis dimension d_O"),
    ("mps.max_local_dim", "200", "largest d_k for coherent states"),
    ("mps.deficit_target", "1e-10", "coherent truncation deficit"),
    ("tdvp.dt", "0.1", "time step"),
    ("tdvp.krylov_dim", "20", "Lanczos vectors per local update"),
    ("tdvp.krylov_tol", "1e-12", "local exponential tolerance"),
    ("tdvp.symmetric", "true", "symmetric second-order sweep"),
    ("initial.kind", "bare", "bare | physical | coherence_plus"),
    ("initial.ut_tol", "1e-12", "UT self-consistency tolerance"),
    ("initial.ut_max_iter", "2000", "UT iteration cap"),
    ("evolve.t_final", "30", "trajectory length"),
    ("evolve.record_every", "1", "steps between records"),
    ("evolve.checkpoint_every", "0", "steps between checkpoints (0: final only)"),
    ("evolve.resume", "none", "checkpoint to continue from"),
    ("evolve.resume_time", "0", "time of the resumed state"),
    ("zeno.scheme", "whole", "whole | qubit | both"),
    ("zeno.tau", "none", "explicit tau grid (overrides delta_tau)"),
    ("zeno.delta_tau", "0.025, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 2", "grid in units of 1/Delta"),
    ("zeno.n", "auto", "measurements per run (auto: horizon pi/Delta)"),
    ("zeno.eps_mono", "0.02", "relative monotonicity band"),
    ("zeno.record_every", "0", "fidelity sampling in steps (0: measurement times)"),
    ("zeno.star_occupations", "false", "star-mode occupations after each measurement"),
    ("verify.preset", "custom", "small | coarse | decoupled | custom"),
    ("verify.sites", "6", "boson sites of the exact system"),
    ("verify.d", "6", "uniform Fock cutoff of the exact system"),
    ("verify.t_final", "20", "comparison window"),
    ("verify.record_dt", "1", "comparison grid spacing"),
    ("verify.tol", "1e-3", "max |<sigma_z>| deviation"),
    ("verify.krylov_tol", "1e-10", "exact propagation tolerance"),
    ("verify.dim_cap", "4000000", "largest exact Hilbert space"),
    ("output.dir", "out", "output directory"),
    ("output.deterministic", "true", "fixed reduction order (no RNG is used)"),
];

/// Values filled in for `verify.preset` unless set explicitly.
fn preset(name: &str) -> Result<&'static [(&'static str, &'static str)]> {
    const SMALL: &[(&str, &str)] = &[
        ("model.s", "1"),
        ("model.alpha", "0.05"),
        ("model.delta", "0.1"),
        ("initial.kind", "bare"),
        ("verify.sites", "6"),
        ("verify.d", "6"),
        ("mps.bond_dim", "8"),
        ("mps.local_dim", "6"),
        ("mps.obb_dim", "6"),
        ("tdvp.dt", "0.1"),
        ("verify.t_final", "20"),
        ("verify.tol", "1e-3"),
    ];
    const COARSE: &[(&str, &str)] = &[
        ("model.s", "1"),
        ("model.alpha", "0.05"),
        ("model.delta", "0.1"),
        ("initial.kind", "bare"),
        ("verify.sites", "6"),
        ("verify.d", "6"),
        ("mps.bond_dim", "8"),
        ("mps.local_dim", "6"),
        ("mps.obb_dim", "6"),
        ("tdvp.dt", "1"),
        ("tdvp.symmetric", "false"),
        ("verify.t_final", "20"),
        ("verify.tol", "1e-3"),
    ];
    const DECOUPLED: &[(&str, &str)] = &[
        ("model.s", "1"),
        ("model.alpha", "0"),
        ("model.delta", "0.1"),
        ("initial.kind", "bare"),
        ("verify.sites", "4"),
        ("verify.d", "4"),
        ("mps.bond_dim", "4"),
        ("mps.local_dim", "4"),
        ("mps.obb_dim", "4"),
        ("verify.t_final", "20"),
        ("verify.tol", "1e-10"),
    ];
    match name {
        "custom" => Ok(&[]),
        "small" => Ok(SMALL),
        "coarse" => Ok(COARSE),
        "decoupled" => Ok(DECOUPLED),
        _ => Err(Error::Config(format!("unknown verify preset '{name}' (small | coarse | decoupled | custom)"))),
    }
}

/// Raw key/value table with defaults, tracking which keys were set.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigTable {
    values: Vec<String>,
    explicit: BTreeSet<usize>,
}

impl Default for ConfigTable {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|k| k.1.to_string()).collect(), explicit: BTreeSet::new() }
    }
}

fn index_of(key: &str) -> Result<usize> {
    KEYS.iter().position(|k| k.0 == key).ok_or_else(|| Error::Config(format!("unknown key '{key}'")))
}

impl ConfigTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut t = Self::default();
        let mut section = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                section = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: malformed section header", ln + 1)))?
                    .trim()
                    .to_ascii_lowercase();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", ln + 1)))?;
            let key = if section.is_empty() { k.trim().to_ascii_lowercase() } else { format!("{section}.{}", k.trim().to_ascii_lowercase()) };
            t.set(&key, v.trim()).map_err(|e| Error::Config(format!("line {}: {e}", ln + 1)))?;
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let i = index_of(key)?;
        self.values[i] = value.to_string();
        self.explicit.insert(i);
        Ok(())
    }

    /// Apply a `section.key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("override '{kv}' is not key=value")))?;
        self.set(&k.trim().to_ascii_lowercase(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        &self.values[index_of(key).expect("known key")]
    }

    /// Fill in the verify preset for keys that were not set explicitly.
    fn apply_preset(&mut self) -> Result<()> {
        for (k, v) in preset(self.get("verify.preset"))? {
            let i = index_of(k)?;
            if !self.explicit.contains(&i) {
                self.values[i] = v.to_string();
            }
        }
        Ok(())
    }

    /// Every key with its resolved value, as `# key = value` lines. The
    /// output directory is left out so identical runs give identical files.
    pub fn header(&self) -> String {
        KEYS.iter()
            .zip(&self.values)
            .filter(|((k, _, _), _)| *k != "output.dir")
            .map(|((k, _, _), v)| format!("# {k} = {v}\n"))
            .collect()
    }

    /// Documented defaults, in config-file syntax.
    pub fn template() -> String {
        let mut out = String::new();
        let mut section = "";
        for (k, v, doc) in KEYS {
            let (s, name) = k.split_once('.').expect("sectioned key");
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{s}]\n"));
                section = s;
            }
            out.push_str(&format!("{name} = {v}  # {doc}\n"));
        }
        out
    }
}

fn num<T: std::str::FromStr>(t: &ConfigTable, key: &str) -> Result<T> {
    let v = t.get(key);
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn flag(t: &ConfigTable, key: &str) -> Result<bool> {
    match t.get(key).to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        v => Err(Error::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

fn auto<T: std::str::FromStr>(t: &ConfigTable, key: &str) -> Result<Option<T>> {
    if t.get(key).eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        num(t, key).map(Some)
    }
}

fn list(t: &ConfigTable, key: &str) -> Result<Option<Vec<f64>>> {
    let v = t.get(key);
    if v.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    v.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Config(format!("{key}: cannot parse '{x}'"))))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Which schemes a Zeno run covers.
#[derive(Clone, Debug, PartialEq)]
pub struct ZenoSettings {
    pub schemes: Vec<Scheme>,
    pub taus: Vec<f64>,
    pub n: Option<usize>,
    pub eps_mono: f64,
    pub record_every: usize,
    pub star_occupations: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifySettings {
    pub preset: String,
    pub sites: usize,
    pub d: usize,
    pub t_final: f64,
    pub record_dt: f64,
    pub tol: f64,
    pub krylov_tol: f64,
    pub dim_cap: usize,
}

/// Typed, validated configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub table: ConfigTable,
    pub density: SpectralDensity,
    pub delta: f64,
    pub m: usize,
    pub chain_length: Option<usize>,
    pub chain_t_max: Option<f64>,
    pub mps: MpsConfig,
    pub tdvp: TdvpConfig,
    pub initial: InitialKind,
    pub ut_tol: f64,
    pub ut_max_iter: usize,
    pub t_final: f64,
    pub record_every: usize,
    pub checkpoint_every: usize,
    pub resume: Option<String>,
    pub resume_time: f64,
    pub zeno: ZenoSettings,
    pub verify: VerifySettings,
    pub out_dir: String,
    pub deterministic: bool,
}

impl RunConfig {
    /// Resolve and validate a table.
    pub fn from_table(mut table: ConfigTable) -> Result<Self> {
        table.apply_preset()?;
        let t = &table;
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        let density = SpectralDensity::new(num(t, "model.s")?, num(t, "model.alpha")?, num(t, "model.omega_c")?).map_err(cfg_err)?;
        let delta: f64 = num(t, "model.delta")?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!("model.delta must be > 0, got {delta}")));
        }
        let m: usize = num(t, "bath.m")?;
        if m < 2 {
            return Err(Error::Config("bath.m must be >= 2".into()));
        }
        let mps = MpsConfig {
            bond_dim: num(t, "mps.bond_dim")?,
            local_dim: num(t, "mps.local_dim")?,
            obb_dim: num(t, "mps.obb_dim")?,
            obb_dims: None,
            max_local_dim: num(t, "mps.max_local_dim")?,
            deficit_target: num(t, "mps.deficit_target")?,
            ..MpsConfig::default()
        };
        mps.validate().map_err(cfg_err)?;
        let tdvp = TdvpConfig {
            dt: num(t, "tdvp.dt")?,
            krylov_dim: num(t, "tdvp.krylov_dim")?,
            krylov_tol: num(t, "tdvp.krylov_tol")?,
            symmetric: flag(t, "tdvp.symmetric")?,
        };
        tdvp.validate().map_err(cfg_err)?;
        let initial = InitialKind::parse(t.get("initial.kind")).map_err(cfg_err)?;
        let schemes = match t.get("zeno.scheme").to_ascii_lowercase().as_str() {
            "both" => vec![Scheme::WholeSystem, Scheme::QubitOnly],
            s => vec![Scheme::parse(s).map_err(cfg_err)?],
        };
        let taus = match list(t, "zeno.tau")? {
            Some(v) => v,
            None => list(t, "zeno.delta_tau")?.unwrap_or_default().iter().map(|x| x / delta).collect(),
        };
        if taus.is_empty() || taus.iter().any(|x| !(*x > 0.0)) || taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("tau grid must be positive and strictly increasing".into()));
        }
        let n = auto(t, "zeno.n")?;
        if n == Some(0) {
            return Err(Error::Config("zeno.n must be >= 1".into()));
        }
        let zeno = ZenoSettings {
            schemes,
            taus,
            n,
            eps_mono: num(t, "zeno.eps_mono")?,
            record_every: num(t, "zeno.record_every")?,
            star_occupations: flag(t, "zeno.star_occupations")?,
        };
        let verify = VerifySettings {
            preset: t.get("verify.preset").to_string(),
            sites: num(t, "verify.sites")?,
            d: num(t, "verify.d")?,
            t_final: num(t, "verify.t_final")?,
            record_dt: num(t, "verify.record_dt")?,
            tol: num(t, "verify.tol")?,
            krylov_tol: num(t, "verify.krylov_tol")?,
            dim_cap: num(t, "verify.dim_cap")?,
        };
        let t_final: f64 = num(t, "evolve.t_final")?;
        if !(t_final >= 0.0) {
            return Err(Error::Config(format!("evolve.t_final must be >= 0, got {t_final}")));
        }
        let resume = match t.get("evolve.resume") {
            v if v.eq_ignore_ascii_case("none") => None,
            v => Some(v.to_string()),
        };
        Ok(Self {
            density,
            delta,
            m,
            chain_length: auto(t, "chain.l")?,
            chain_t_max: auto(t, "chain.t_max")?,
            mps,
            tdvp,
            initial,
            ut_tol: num(t, "initial.ut_tol")?,
            ut_max_iter: num(t, "initial.ut_max_iter")?,
            t_final,
            record_every: num(t, "evolve.record_every")?,
            checkpoint_every: num(t, "evolve.checkpoint_every")?,
            resume,
            resume_time: num(t, "evolve.resume_time")?,
            zeno,
            verify,
            out_dir: t.get("output.dir").to_string(),
            deterministic: flag(t, "output.deterministic")?,
            table: table.clone(),
        })
    }

    /// Parse text, then apply `key=value` overrides in order.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table = ConfigTable::parse(text)?;
        for o in overrides {
            table.apply_override(o)?;
        }
        Self::from_table(table)
    }

    /// Number of boson sites: explicit `L + 1`, or enough to cover `t_max`
    /// (explicit `chain.t_max` wins over the command's horizon), doubled on
    /// request.
    pub fn n_sites(&self, horizon: f64, double: bool) -> usize {
        let n = match self.chain_length {
            Some(l) => l + 1,
            None => spectral::chain_sites_for_time(self.density.omega_c, self.chain_t_max.unwrap_or(horizon)).max(2),
        };
        if double {
            2 * n
        } else {
            n
        }
    }

    pub fn header(&self) -> String {
        self.table.header()
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_table(ConfigTable::default()).expect("defaults are valid")
    }
}
