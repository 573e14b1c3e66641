//! Run configuration and orchestration behind the `subharnack` binary.
//!
//! Configuration is flat `key = value` text grouped in `[section]`s; keys are
//! addressed as `section.key`. Command-line flags are merged on top of the
//! file. Every artifact written by a run is listed in `manifest.csv` with its
//! size and SHA-256.

use crate::action::{minimize_action, oracle_action, ActionOptions, ConstantPotential, Domain};
use crate::coefficients::{
    condition_residuals, family_cor1, family_cor2, family_cor3, family_sasakian, log_grid, ConditionResiduals,
    CurvatureConstants,
};
use crate::error::{Error, Result};
use crate::geometry::{Geometry, HPoint};
use crate::grid::{invariant_bump, GridScalarField, GridSpec};
use crate::harnack::{check_baga, check_bound, check_sasakian, HarnackReport};
use crate::identities::{verify_all, verify_fact, IdentityResult};
use crate::solver::{
    estimate_constants, integrate, make_initial_density, make_smooth_density, steps_to, DiffusionState,
    InitialDensity, ProblemSpec, SmoothDensity,
};
use crate::transport::{flow_map, keylem_along, mainlem1_along, riccati_along, standard_adapted_frame, test_family, transport, RiccatiTrace};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Identity residual threshold for `verify`.
pub const IDENTITY_TOLERANCE: f64 = 1e-8;
/// Residual threshold for `coeffs` condition reports.
pub const CONDITION_TOLERANCE: f64 = 1e-8;
/// Lower limit on the key-inequality margin for `riccati`.
pub const KEYLEM_TOLERANCE: f64 = 1e-3;

/// Every key the configuration accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "run.command",
    "run.seed",
    "run.output",
    "run.tolerance",
    "grid.n",
    "grid.nz",
    "grid.order",
    "time.t_start",
    "time.t_end",
    "time.snap_every",
    "model.dimension",
    "model.k",
    "model.u1",
    "model.u2",
    "initial.kind",
    "initial.amplitude",
    "initial.smoothing_steps",
    "initial.floor",
    "verify.trials",
    "verify.dimensions",
    "verify.all",
    "harnack.preset",
    "harnack.kappa1",
    "harnack.kappa2",
    "coeffs.family",
    "coeffs.c",
    "coeffs.kappa1",
    "coeffs.kappa2",
    "coeffs.t_min",
    "coeffs.t_max",
    "coeffs.points",
    "geodesic.x0",
    "geodesic.x1",
    "geodesic.s0",
    "geodesic.s1",
    "geodesic.w",
    "geodesic.segments",
    "geodesic.restarts",
    "geodesic.domain",
    "geodesic.oracle",
    "riccati.x0",
    "riccati.t_end",
    "riccati.dt",
];

/// Raw `section.key → value` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    /// Parses config text. `#` and `;` start comments; keys before the first
    /// section header belong to `run`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::default();
        let mut section = "run".to_string();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::invalid(format!("line {}: unterminated section header", lineno + 1)))?
                    .trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(Error::invalid(format!("line {}: bad section name", lineno + 1)));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key = value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::invalid(format!("line {}: empty key", lineno + 1)));
            }
            out.set(&format!("{section}.{k}"), v);
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Overlays `other` on `self`.
    pub fn merge(&mut self, other: &ConfigMap) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::invalid(format!("{key}: cannot parse '{v}'"))),
        }
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1" | "on") => Ok(true),
            Some("false" | "no" | "0" | "off") => Ok(false),
            Some(v) => Err(Error::invalid(format!("{key}: expected a boolean, got '{v}'"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::invalid(format!("{key}: bad number '{s}'"))))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Simulate,
    Harnack,
    Coeffs,
    Geodesic,
    Riccati,
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "verify" => Command::Verify,
            "simulate" => Command::Simulate,
            "harnack" => Command::Harnack,
            "coeffs" => Command::Coeffs,
            "geodesic" => Command::Geodesic,
            "riccati" => Command::Riccati,
            other => return Err(Error::invalid(format!("unknown command '{other}'"))),
        })
    }
}

/// Scalar field source for `U₁`, `U₂`.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSource {
    Zero,
    /// `ε` times the lattice-invariant bump with σ = 0.3.
    Bump(f64),
    /// Binary snapshot (`.bin`) or grid CSV.
    File(PathBuf),
}

impl std::str::FromStr for PotentialSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "zero" {
            return Ok(Self::Zero);
        }
        if let Some(eps) = s.strip_prefix("bump:") {
            let e: f64 = eps.parse().map_err(|_| Error::invalid(format!("bad bump amplitude '{eps}'")))?;
            if !e.is_finite() {
                return Err(Error::invalid("bump amplitude must be finite"));
            }
            return Ok(Self::Bump(e));
        }
        if let Some(p) = s.strip_prefix("file:") {
            return Ok(Self::File(PathBuf::from(p)));
        }
        Err(Error::invalid(format!("unknown potential '{s}' (zero, bump:<eps>, file:<path>)")))
    }
}

impl PotentialSource {
    pub fn sample(&self, grid: GridSpec) -> Result<GridScalarField> {
        match self {
            Self::Zero => Ok(GridScalarField::zeros(grid)),
            Self::Bump(e) => Ok(GridScalarField::from_field(grid, &(invariant_bump(0.3, 0.0) * *e), 0.0)),
            Self::File(p) => {
                let f = if p.extension().is_some_and(|e| e == "bin") {
                    GridScalarField::read_binary(p)?.0
                } else {
                    GridScalarField::read_csv(p, grid)?
                };
                if f.spec != grid {
                    return Err(Error::invalid(format!("{}: grid does not match the run grid", p.display())));
                }
                Ok(f)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialKind {
    /// Seeded lattice-invariant analytic density.
    Smooth,
    /// Heat-smoothed grid noise.
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarnackPreset {
    /// Pure heat flow: pure-heat form and the linear-family form.
    Heat,
    /// Potential run: Sasakian form with κ₁, κ₂ estimated or given.
    Sasakian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyChoice {
    Cor1,
    Cor2,
    Cor3,
    Sasakian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WPreset {
    Zero,
    Constant(f64),
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub output: PathBuf,
    pub tolerance: f64,
    pub grid: GridSpec,
    pub order: u8,
    pub t_start: f64,
    pub t_end: f64,
    pub snap_every: f64,
    pub dimension: usize,
    pub k: f64,
    pub u1: PotentialSource,
    pub u2: PotentialSource,
    pub initial: InitialKind,
    pub amplitude: Option<f64>,
    pub smoothing_steps: usize,
    pub floor: f64,
    pub trials: usize,
    pub dimensions: Vec<usize>,
    pub verify_all: bool,
    pub harnack_preset: HarnackPreset,
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    pub family: FamilyChoice,
    pub c: Option<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    pub x0: Option<Vec<f64>>,
    pub x1: Option<Vec<f64>>,
    pub s0: f64,
    pub s1: f64,
    pub w: WPreset,
    pub segments: usize,
    pub restarts: usize,
    pub domain: Domain,
    pub oracle: bool,
    pub riccati_t_end: f64,
    pub riccati_dt: f64,
}

impl RunConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::invalid("empty configuration"));
        }
        for key in map.entries.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::invalid(format!("unknown key '{key}'")));
            }
        }
        let command: Command =
            map.get("run.command").ok_or_else(|| Error::invalid("no command given"))?.parse()?;
        let n: usize = map.or("grid.n", 16)?;
        let nz: usize = map.or("grid.nz", 2 * n)?;
        let grid = GridSpec::new(n, nz)?;
        let order: u8 = map.or("grid.order", 2)?;
        if order != 2 && order != 4 {
            return Err(Error::invalid("grid.order must be 2 or 4"));
        }
        let dimension: usize = map.or("model.dimension", 1)?;
        if dimension == 0 {
            return Err(Error::invalid("model.dimension must be positive"));
        }
        let initial = match map.get("initial.kind").unwrap_or("smooth") {
            "smooth" => InitialKind::Smooth,
            "noise" => InitialKind::Noise,
            other => return Err(Error::invalid(format!("initial.kind: unknown '{other}'"))),
        };
        let harnack_preset = match map.get("harnack.preset").unwrap_or("heat") {
            "heat" => HarnackPreset::Heat,
            "sasakian" => HarnackPreset::Sasakian,
            other => return Err(Error::invalid(format!("harnack.preset: unknown '{other}'"))),
        };
        let family = match map.get("coeffs.family").unwrap_or("cor2") {
            "cor1" => FamilyChoice::Cor1,
            "cor2" => FamilyChoice::Cor2,
            "cor3" => FamilyChoice::Cor3,
            "sasakian" => FamilyChoice::Sasakian,
            other => return Err(Error::invalid(format!("coeffs.family: unknown '{other}'"))),
        };
        let w = match map.get("geodesic.w").unwrap_or("zero") {
            "zero" => WPreset::Zero,
            s => match s.strip_prefix("const:").map(str::parse::<f64>) {
                Some(Ok(v)) if v.is_finite() => WPreset::Constant(v),
                _ => return Err(Error::invalid(format!("geodesic.w: expected zero or const:<value>, got '{s}'"))),
            },
        };
        let domain = match map.get("geodesic.domain").unwrap_or("cover") {
            "cover" => Domain::Cover,
            "nilmanifold" => Domain::Nilmanifold,
            other => return Err(Error::invalid(format!("geodesic.domain: unknown '{other}'"))),
        };
        let dimensions = match map.get("verify.dimensions") {
            None => vec![1, 2],
            Some(s) => s
                .split(',')
                .map(|d| d.trim().parse::<usize>().ok().filter(|&d| d > 0))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::invalid(format!("verify.dimensions: bad list '{s}'")))?,
        };
        let cfg = Self {
            command,
            seed: map.or("run.seed", 7)?,
            output: PathBuf::from(map.get("run.output").unwrap_or("out")),
            tolerance: map.or("run.tolerance", crate::harnack::DEFAULT_TOLERANCE)?,
            grid,
            order,
            t_start: map.or("time.t_start", 0.05)?,
            t_end: map.or("time.t_end", 1.0)?,
            snap_every: map.or("time.snap_every", 0.1)?,
            dimension,
            k: map.or("model.k", 0.0)?,
            u1: map.or("model.u1", PotentialSource::Zero)?,
            u2: map.or("model.u2", PotentialSource::Zero)?,
            initial,
            amplitude: map.parsed("initial.amplitude")?,
            smoothing_steps: map.or("initial.smoothing_steps", 40)?,
            floor: map.or("initial.floor", 0.05)?,
            trials: map.or("verify.trials", 100)?,
            dimensions,
            verify_all: map.bool_or("verify.all", false)?,
            harnack_preset,
            kappa1: map.parsed("harnack.kappa1")?.or(map.parsed("coeffs.kappa1")?),
            kappa2: map.parsed("harnack.kappa2")?.or(map.parsed("coeffs.kappa2")?),
            family,
            c: map.parsed("coeffs.c")?,
            t_min: map.or("coeffs.t_min", 0.01)?,
            t_max: map.or("coeffs.t_max", 10.0)?,
            points: map.or("coeffs.points", 50)?,
            x0: map.list("geodesic.x0")?.or(map.list("riccati.x0")?),
            x1: map.list("geodesic.x1")?,
            s0: map.or("geodesic.s0", 0.0)?,
            s1: map.or("geodesic.s1", 1.0)?,
            w,
            segments: map.or("geodesic.segments", 32)?,
            restarts: map.or("geodesic.restarts", 8)?,
            domain,
            oracle: map.bool_or("geodesic.oracle", false)?,
            riccati_t_end: map.or("riccati.t_end", 0.3)?,
            riccati_dt: map.or("riccati.dt", 1e-3)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be positive and finite")))
            }
        };
        pos(self.t_end, "time.t_end")?;
        pos(self.snap_every, "time.snap_every")?;
        pos(self.t_start, "time.t_start")?;
        pos(self.tolerance, "run.tolerance")?;
        pos(self.floor, "initial.floor")?;
        pos(self.riccati_dt, "riccati.dt")?;
        pos(self.riccati_t_end, "riccati.t_end")?;
        if !self.k.is_finite() {
            return Err(Error::invalid("model.k must be finite"));
        }
        if self.t_start > self.t_end {
            return Err(Error::invalid("time.t_start must not exceed time.t_end"));
        }
        if matches!(self.command, Command::Simulate | Command::Harnack) && self.dimension != 1 {
            return Err(Error::invalid("grid runs live on the 3-dimensional nilmanifold; model.dimension must be 1"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("verify.trials must be positive"));
        }
        if !(self.t_min > 0.0) || !(self.t_max > self.t_min) || self.points < 2 {
            return Err(Error::invalid("coeffs needs 0 < t_min < t_max and at least 2 points"));
        }
        if self.command == Command::Geodesic {
            let (a, b) = match (&self.x0, &self.x1) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::invalid("geodesic needs x0 and x1")),
            };
            if a.len() != b.len() || a.len() % 2 == 0 {
                return Err(Error::invalid("geodesic endpoints need 2n+1 matching coordinates"));
            }
            if !(self.s1 > self.s0) || self.s0 < 0.0 {
                return Err(Error::invalid("geodesic needs 0 <= s0 < s1"));
            }
        }
        if self.command == Command::Riccati {
            if let Some(x) = &self.x0 {
                if x.len() != 2 * self.dimension + 1 {
                    return Err(Error::invalid("riccati.x0 must have 2n+1 coordinates"));
                }
            }
        }
        if self.command == Command::Harnack && self.harnack_preset == HarnackPreset::Heat {
            if self.u1 != PotentialSource::Zero || self.u2 != PotentialSource::Zero || self.k != 0.0 {
                return Err(Error::invalid("the heat preset needs U1 = U2 = 0 and K = 0"));
            }
        }
        Ok(())
    }

    /// Snapshot times: `t_start`, then multiples of `snap_every` above it, then `t_end`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut out = vec![self.t_start];
        let mut m = (self.t_start / self.snap_every).floor() as usize + 1;
        loop {
            let t = m as f64 * self.snap_every;
            if t >= self.t_end - 1e-12 {
                break;
            }
            if t > self.t_start + 1e-12 {
                out.push(t);
            }
            m += 1;
        }
        if self.t_end > self.t_start + 1e-12 {
            out.push(self.t_end);
        }
        out
    }

    fn initial_density(&self) -> Result<GridScalarField> {
        match self.initial {
            InitialKind::Smooth => {
                let mut p = SmoothDensity { seed: self.seed, ..Default::default() };
                if let Some(a) = self.amplitude {
                    p.amplitude = a;
                }
                make_smooth_density(self.grid, &p)
            }
            InitialKind::Noise => {
                let mut p = InitialDensity {
                    seed: self.seed,
                    smoothing_steps: self.smoothing_steps,
                    floor: self.floor,
                    ..Default::default()
                };
                if let Some(a) = self.amplitude {
                    p.amplitude = a;
                }
                make_initial_density(self.grid, &p)
            }
        }
    }

    fn problem(&self) -> Result<ProblemSpec> {
        ProblemSpec::new(self.u1.sample(self.grid)?, self.u2.sample(self.grid)?, self.k, self.order)
    }
}

/// What a run produced.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    /// Artifact paths relative to the output directory, manifest last.
    pub artifacts: Vec<PathBuf>,
    /// Human-readable lines for stdout.
    pub messages: Vec<String>,
    /// Set when a verification threshold was missed; artifacts are still written.
    pub failure: Option<String>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, rel: &str, body: &str) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, body)?;
        self.files.push(PathBuf::from(rel));
        Ok(())
    }

    fn snapshot(&mut self, rel: &str, field: &GridScalarField, t: f64) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        field.write_binary(&path, t)?;
        self.files.push(PathBuf::from(rel));
        Ok(())
    }

    fn finish(mut self) -> Result<Vec<PathBuf>> {
        let mut body = String::from("file,bytes,sha256\n");
        for rel in &self.files {
            let bytes = std::fs::read(self.dir.join(rel))?;
            let digest = hex::encode(Sha256::digest(&bytes));
            let _ = writeln!(body, "{},{},{}", rel.display(), bytes.len(), digest);
        }
        std::fs::write(self.dir.join("manifest.csv"), body)?;
        self.files.push(PathBuf::from("manifest.csv"));
        Ok(self.files)
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

/// Executes a validated configuration.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let mut out = Outputs::new(&cfg.output)?;
    let mut summary = RunSummary::default();
    match cfg.command {
        Command::Verify => run_verify(cfg, &mut out, &mut summary)?,
        Command::Simulate => run_simulate(cfg, &mut out, &mut summary)?,
        Command::Harnack => run_harnack(cfg, &mut out, &mut summary)?,
        Command::Coeffs => run_coeffs(cfg, &mut out, &mut summary)?,
        Command::Geodesic => run_geodesic(cfg, &mut out, &mut summary)?,
        Command::Riccati => run_riccati(cfg, &mut out, &mut summary)?,
    }
    summary.artifacts = out.finish()?;
    Ok(summary)
}

fn run_verify(cfg: &RunConfig, out: &mut Outputs, summary: &mut RunSummary) -> Result<()> {
    let mut results: Vec<IdentityResult> = Vec::new();
    for &n in &cfg.dimensions {
        if cfg.verify_all {
            results.extend(verify_all(n, cfg.trials, cfg.seed)?);
        } else {
            for id in 1..=13 {
                results.push(verify_fact(id, n, cfg.trials, cfg.seed)?);
            }
        }
    }
    out.write("identities.csv", &csv(IdentityResult::CSV_HEADER, results.iter().map(IdentityResult::csv_row)))?;
    let worst = results.iter().map(|r| r.max_residual).fold(0.0, f64::max);
    summary.messages.push(format!("{} identity checks, worst residual {worst:.3e}", results.len()));
    let bad: Vec<String> = results
        .iter()
        .filter(|r| !(r.max_residual < IDENTITY_TOLERANCE))
        .map(|r| format!("{} (n={})", r.identity_id, r.n))
        .collect();
    if !bad.is_empty() {
        summary.failure = Some(format!("identity residual above {IDENTITY_TOLERANCE:e}: {}", bad.join(", ")));
    }
    Ok(())
}

/// Integrates from `state` through `times`, returning the snapshots.
fn run_to(state: &DiffusionState, spec: &ProblemSpec, times: &[f64]) -> Result<Vec<DiffusionState>> {
    let mut s = state.clone();
    let mut snaps = Vec::with_capacity(times.len());
    for &t in times {
        if t > s.t {
            let (_, dt) = steps_to(t - s.t, spec.dt_max());
            s = integrate(&s, spec, dt, t, |_| Ok(()))?;
        }
        snaps.push(s.clone());
    }
    Ok(snaps)
}

fn run_simulate(cfg: &RunConfig, out: &mut Outputs, summary: &mut RunSummary) -> Result<()> {
    let spec = cfg.problem()?;
    let s0 = DiffusionState::new(cfg.initial_density()?, 0.0)?;
    let mut times = vec![0.0];
    let mut m = 1usize;
    while (m as f64) * cfg.snap_every < cfg.t_end - 1e-12 {
        times.push(m as f64 * cfg.snap_every);
        m += 1;
    }
    times.push(cfg.t_end);
    let snaps = run_to(&s0, &spec, &times)?;
    let mut rows = Vec::new();
    for (idx, s) in snaps.iter().enumerate() {
        out.snapshot(&format!("snapshots/rho_{idx:04}.bin"), &s.rho, s.t)?;
        rows.push(format!("{:.6e},{:.12e},{:.12e},{:.12e}", s.t, s.mass(), s.rho.min(), s.rho.max()));
    }
    out.write("run.csv", &csv("t,mass,min_rho,max_rho", rows))?;
    let last = snaps.last().expect("at least one snapshot");
    summary.messages.push(format!(
        "simulated to t = {} on N = {}, Nz = {}; final mass {:.12e}",
        last.t, cfg.grid.n, cfg.grid.nz, last.mass()
    ));
    Ok(())
}

fn report_failure(rep: &HarnackReport, name: &str, summary: &mut RunSummary) {
    summary.messages.push(format!(
        "{name}: min relative margin {:.4}, worst violation {:.3e}",
        rep.min_relative_margin(),
        rep.worst_violation()
    ));
    if !rep.passed() {
        let msg = format!("{name} bound exceeded beyond tolerance {}", rep.tolerance);
        summary.failure = Some(match summary.failure.take() {
            Some(prev) => format!("{prev}; {msg}"),
            None => msg,
        });
    }
}

fn run_harnack(cfg: &RunConfig, out: &mut Outputs, summary: &mut RunSummary) -> Result<()> {
    let spec = cfg.problem()?;
    let s0 = DiffusionState::new(cfg.initial_density()?, 0.0)?;
    let snaps = run_to(&s0, &spec, &cfg.snapshot_times())?;
    match cfg.harnack_preset {
        HarnackPreset::Heat => {
            let baga = check_baga(&snaps, &spec, 1, cfg.tolerance)?;
            let fam = family_cor2(&CurvatureConstants::heisenberg(1))?;
            let general = check_bound(&snaps, &spec, &fam, None, cfg.tolerance)?;
            out.write("harnack_heat.csv", &csv(HarnackReport::CSV_HEADER, baga.csv_rows()))?;
            out.write("harnack_linear.csv", &csv(HarnackReport::CSV_HEADER, general.csv_rows()))?;
            report_failure(&baga, "heat form", summary);
            report_failure(&general, "linear-family form", summary);
        }
        HarnackPreset::Sasakian => {
            let est = estimate_constants(&spec, 1e6)?;
            let kappa1 = cfg.kappa1.unwrap_or(est.kappa1.max(0.0));
            let kappa2 = match cfg.kappa2 {
                Some(k) => k,
                None => match est.kappa2 {
                    Some(k) if k > 0.0 => k,
                    // every κ₂ > 0 is admissible
                    Some(_) => 1.0,
                    None => return Err(Error::invalid("no feasible kappa2 for this potential")),
                },
            };
            summary.messages.push(format!("kappa1 = {kappa1:.6e}, kappa2 = {kappa2:.6e}"));
            let rep = check_sasakian(&snaps, &spec, 1, kappa1, kappa2, cfg.tolerance)?;
            out.write("harnack_sasakian.csv", &csv(HarnackReport::CSV_HEADER, rep.csv_rows()))?;
            report_failure(&rep, "Sasakian form", summary);
        }
    }
    Ok(())
}

fn run_coeffs(cfg: &RunConfig, out: &mut Outputs, summary: &mut RunSummary) -> Result<()> {
    let n = cfg.dimension;
    let saturating = matches!(cfg.family, FamilyChoice::Cor3 | FamilyChoice::Sasakian);
    let kappa2 = cfg.kappa2.unwrap_or(if saturating { 1.0 } else { 0.0 });
    let consts = CurvatureConstants::heisenberg_with_potential(n, cfg.kappa1.unwrap_or(0.0), kappa2);
    // midpoint of the admissible window 4K₃/K₂ < c < 8K₃/K₂
    let c = cfg.c.unwrap_or(3.0 / n as f64);
    let family = match cfg.family {
        FamilyChoice::Cor1 => family_cor1(&consts, c)?,
        FamilyChoice::Cor2 => family_cor2(&consts)?,
        FamilyChoice::Cor3 => family_cor3(&consts, c)?,
        FamilyChoice::Sasakian => family_sasakian(n, cfg.kappa1.unwrap_or(0.0), cfg.kappa2.unwrap_or(1.0))?,
    };
    let grid = log_grid(cfg.t_min, cfg.t_max, cfg.points);
    let res = condition_residuals(&family, &grid);
    let rows = res.rows.iter().map(|r| {
        let f = |v: f64| if v.is_nan() { "nan".to_string() } else { format!("{v:.9e}") };
        format!(
            "{:.9e},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            f(r.a[0]),
            f(r.a[1]),
            f(r.a[2]),
            f(r.a[3]),
            f(r.r),
            f(r.res[0]),
            f(r.res[1]),
            f(r.res[2]),
            f(r.res[3]),
            f(r.res[4])
        )
    });
    out.write("coeffs.csv", &csv(ConditionResiduals::CSV_HEADER, rows))?;
    let worst = res.max();
    summary.messages.push(format!("family {:?}: max condition residual {worst:.3e}", cfg.family));
    if !(worst < CONDITION_TOLERANCE) {
        summary.failure = Some(format!("condition residual {worst:.3e} above {CONDITION_TOLERANCE:e}"));
    }
    Ok(())
}

fn run_geodesic(cfg: &RunConfig, out: &mut Outputs, summary: &mut RunSummary) -> Result<()> {
    let x0 = HPoint::new(cfg.x0.clone().expect("validated"));
    let x1 = HPoint::new(cfg.x1.clone().expect("validated"));
    let w = ConstantPotential(match cfg.w {
        WPreset::Zero => 0.0,
        WPreset::Constant(v) => v,
    });
    let opts = ActionOptions {
        segments: cfg.segments,
        restarts: cfg.restarts,
        seed: cfg.seed,
        domain: cfg.domain,
        ..Default::default()
    };
    let res = minimize_action(&x0, &x1, cfg.s0, cfg.s1, &w, &opts)?;
    summary.messages.push(format!("cost {:.9e}", res.cost));
    summary.messages.push(format!("endpoint error {:.3e}", res.endpoint_error));
    let dim = x0.coords.len();
    let mut header = String::from("s");
    for i in 0..dim {
        let _ = write!(header, ",q{i}");
    }
    let m = res.path.knots.len() - 1;
    let rows = res.path.knots.iter().enumerate().map(|(i, p)| {
        let s = cfg.s0 + (cfg.s1 - cfg.s0) * i as f64 / m as f64;
        let mut row = format!("{s:.9e}");
        for c in &p.coords {
            let _ = write!(row, ",{c:.12e}");
        }
        row
    });
    out.write("path.csv", &csv(&header, rows))?;
    let mut summary_rows = vec![format!("{:.12e},{:.6e},{}", res.cost, res.endpoint_error, res.restarts_used)];
    let mut head = "cost,endpoint_error,restarts_used".to_string();
    if cfg.oracle {
        let oc = oracle_action(&x0, &x1, cfg.s0, cfg.s1, &w)?;
        summary.messages.push(format!("oracle cost {oc:.9e}"));
        head.push_str(",oracle_cost");
        let _ = write!(summary_rows[0], ",{oc:.12e}");
    }
    out.write("geodesic.csv", &csv(&head, summary_rows.drain(..)))?;
    Ok(())
}

fn run_riccati(cfg: &RunConfig, out: &mut Outputs, summary: &mut RunSummary) -> Result<()> {
    let n = cfg.dimension;
    let geom = Geometry::heisenberg(n);
    let f = test_family(n);
    let x0 = HPoint::new(match &cfg.x0 {
        Some(x) => x.clone(),
        None => (0..2 * n + 1).map(|i| 0.1 * (i + 1) as f64).collect(),
    });
    let path = flow_map(&geom, &f, &x0, cfg.riccati_t_end, cfg.riccati_dt)?;
    let frame = transport(&geom, &path, &standard_adapted_frame(&geom))?;
    let ric = riccati_along(&geom, &f, &frame)?;
    let key = keylem_along(&geom, &f, &path)?;
    let main = mainlem1_along(&geom, &f, cfg.k, &path)?;
    let g = |v: f64| if v.is_nan() { "nan".to_string() } else { format!("{v:.9e}") };
    let rows = (0..ric.times.len()).map(|s| {
        format!(
            "{:.9e},{},{},{},{},{}",
            ric.times[s],
            g(ric.residual[s]),
            g(key.margin[s]),
            g(main.residuals[0][s]),
            g(main.residuals[1][s]),
            g(main.residuals[2][s])
        )
    });
    out.write("riccati.csv", &csv(RiccatiTrace::CSV_HEADER, rows))?;
    let mm = main.max_residuals();
    summary.messages.push(format!(
        "riccati residual {:.3e}, key margin {:.4e}, transport residuals {:.3e} {:.3e} {:.3e}",
        ric.max_residual(),
        key.min_margin(),
        mm[0],
        mm[1],
        mm[2]
    ));
    if key.min_margin() < -KEYLEM_TOLERANCE {
        summary.failure = Some(format!("key inequality margin {:.3e} below -{KEYLEM_TOLERANCE:e}", key.min_margin()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_comments_and_overrides() {
        let mut m = ConfigMap::parse("command = verify\n# note\n[grid]\nn = 24 ; inline\n[verify]\ntrials=5\n").unwrap();
        assert_eq!(m.get("run.command"), Some("verify"));
        assert_eq!(m.get("grid.n"), Some("24"));
        let mut flags = ConfigMap::default();
        flags.set("grid.n", "32");
        m.merge(&flags);
        let cfg = RunConfig::from_map(&m).unwrap();
        assert_eq!(cfg.grid.n, 32);
        assert_eq!(cfg.trials, 5);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_map(&ConfigMap::default()).is_err());
        assert!(ConfigMap::parse("[grid\nn=3").is_err());
        assert!(ConfigMap::parse("novalue").is_err());
        let m = ConfigMap::parse("command = verify\n[grid]\nwidth = 3\n").unwrap();
        assert_eq!(RunConfig::from_map(&m).unwrap_err().exit_code(), 2);
        let m = ConfigMap::parse("command = harnack\n[model]\nu2 = bump:0.1\n").unwrap();
        assert!(RunConfig::from_map(&m).is_err());
    }

    #[test]
    fn snapshot_times_cover_the_window() {
        let m = ConfigMap::parse("command = harnack\n[time]\nt_start = 0.05\nt_end = 0.35\nsnap_every = 0.1\n").unwrap();
        let cfg = RunConfig::from_map(&m).unwrap();
        let t = cfg.snapshot_times();
        let expect = [0.05, 0.1, 0.2, 0.3, 0.35];
        assert_eq!(t.len(), expect.len());
        for (a, b) in t.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
