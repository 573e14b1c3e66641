//! Explicit time integration of
//!
//! ```text
//! ρ̇ = Δ_hor ρ + ⟨∇_hor U₁, ∇_hor ρ⟩ + U₂ ρ + K ρ log ρ
//! ```
//!
//! on the nilmanifold lattice, and the derived fields `f = −2 log ρ − U₁`
//! and `ḟ = Δ_hor f − ½|∇_hor f|² + V + K f`, the latter always evaluated
//! from a single snapshot.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{discrete_sub_laplacian, frame_derivative, Direction, GridScalarField, GridSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Values at or below this threshold count as lost positivity.
pub const POSITIVITY_GUARD: f64 = 1e-300;

/// Potentials, nonlinearity constant and grid of one diffusion problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub grid: GridSpec,
    pub u1: GridScalarField,
    pub u2: GridScalarField,
    pub k: f64,
    pub order: u8,
    xu1: GridScalarField,
    yu1: GridScalarField,
    v: GridScalarField,
}

impl ProblemSpec {
    pub fn new(u1: GridScalarField, u2: GridScalarField, k: f64, order: u8) -> Result<Self> {
        if u1.spec != u2.spec {
            return Err(Error::invalid("U1 and U2 live on different grids"));
        }
        if !k.is_finite() {
            return Err(Error::invalid("K must be finite"));
        }
        let grid = u1.spec;
        let xu1 = frame_derivative(&u1, Direction::X, order)?;
        let yu1 = frame_derivative(&u1, Direction::Y, order)?;
        let lap = discrete_sub_laplacian(&u1, order)?;
        let grad_sq = xu1.mul(&xu1).add(&yu1.mul(&yu1));
        // V = Δ_hor U₁ + K U₁ + ½|∇_hor U₁|² − 2U₂
        let v = lap.add(&u1.scale(k)).add(&grad_sq.scale(0.5)).sub(&u2.scale(2.0));
        Ok(Self { grid, u1, u2, k, order, xu1, yu1, v })
    }

    /// `U₁ = U₂ = 0`, given `K`.
    pub fn free(grid: GridSpec, k: f64, order: u8) -> Result<Self> {
        Self::new(GridScalarField::zeros(grid), GridScalarField::zeros(grid), k, order)
    }

    pub fn v(&self) -> &GridScalarField {
        &self.v
    }

    pub fn has_drift(&self) -> bool {
        self.u1.norm_inf() > 0.0
    }

    /// Explicit stability bound `0.2 h² / (1 + s²·max(x²+y²)/4 + c)` with
    /// `s = Nz/(2N)` (the z-resolution ratio) and `c = 0, 1` for stencil
    /// orders 2 and 4.
    pub fn dt_max(&self) -> f64 {
        dt_max(self.grid, self.order)
    }

    /// Right-hand side of the semi-discrete system.
    pub fn rhs(&self, rho: &GridScalarField) -> Result<GridScalarField> {
        let lap = discrete_sub_laplacian(rho, self.order)?;
        if self.k == 0.0 && !self.has_drift() && self.u2.norm_inf() == 0.0 {
            return Ok(lap);
        }
        let drift = self.has_drift();
        let (xr, yr) = if drift {
            (
                Some(frame_derivative(rho, Direction::X, self.order)?),
                Some(frame_derivative(rho, Direction::Y, self.order)?),
            )
        } else {
            (None, None)
        };
        let k = self.k;
        let mut out = lap.values;
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let r = rho.values[i];
            let mut v = *o + self.u2.values[i] * r;
            if k != 0.0 {
                v += k * r * r.ln();
            }
            if let (Some(xr), Some(yr)) = (&xr, &yr) {
                v += self.xu1.values[i] * xr.values[i] + self.yu1.values[i] * yr.values[i];
            }
            *o = v;
        });
        Ok(GridScalarField { spec: rho.spec, values: out })
    }
}

pub fn dt_max(grid: GridSpec, order: u8) -> f64 {
    let h = grid.h();
    let s = grid.nz as f64 / (2.0 * grid.n as f64);
    let xmax = 1.0 - h;
    let c = if order == 4 { 1.0 } else { 0.0 };
    0.2 * h * h / (1.0 + s * s * (2.0 * xmax * xmax) / 4.0 + c)
}

/// Density snapshot.
#[derive(Debug, Clone)]
pub struct DiffusionState {
    pub rho: GridScalarField,
    pub t: f64,
}

impl DiffusionState {
    pub fn new(rho: GridScalarField, t: f64) -> Result<Self> {
        check_positive(&rho)?;
        Ok(Self { rho, t })
    }

    pub fn mass(&self) -> f64 {
        self.rho.sum() / self.rho.spec.len() as f64
    }
}

fn check_positive(rho: &GridScalarField) -> Result<()> {
    let m = rho.min();
    if !(m > POSITIVITY_GUARD) || rho.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::PositivityLost(format!("min rho = {m:e}")));
    }
    Ok(())
}

/// One classical RK4 step.
pub fn step(state: &DiffusionState, spec: &ProblemSpec, dt: f64) -> Result<DiffusionState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt = {dt} must be positive")));
    }
    let r0 = &state.rho;
    let stage = |k: &GridScalarField, a: f64| GridScalarField {
        spec: r0.spec,
        values: r0.values.iter().zip(&k.values).map(|(r, v)| r + a * v).collect(),
    };
    let k1 = spec.rhs(r0)?;
    let r1 = stage(&k1, 0.5 * dt);
    if spec.k != 0.0 {
        check_positive(&r1)?;
    }
    let k2 = spec.rhs(&r1)?;
    let r2 = stage(&k2, 0.5 * dt);
    if spec.k != 0.0 {
        check_positive(&r2)?;
    }
    let k3 = spec.rhs(&r2)?;
    let r3 = stage(&k3, dt);
    if spec.k != 0.0 {
        check_positive(&r3)?;
    }
    let k4 = spec.rhs(&r3)?;
    let w = dt / 6.0;
    let values: Vec<f64> = (0..r0.values.len())
        .map(|i| r0.values[i] + w * (k1.values[i] + 2.0 * k2.values[i] + 2.0 * k3.values[i] + k4.values[i]))
        .collect();
    let rho = GridScalarField { spec: r0.spec, values };
    check_positive(&rho)?;
    Ok(DiffusionState { rho, t: state.t + dt })
}

/// Step that retries with halved `dt` (up to four times) on lost positivity.
/// Returns the new state and the step actually taken.
pub fn robust_step(state: &DiffusionState, spec: &ProblemSpec, dt: f64) -> Result<(DiffusionState, f64)> {
    let mut h = dt;
    for attempt in 0..=4 {
        match step(state, spec, h) {
            Ok(s) => return Ok((s, h)),
            Err(Error::PositivityLost(_)) if attempt < 4 => h *= 0.5,
            Err(e) => return Err(e),
        }
    }
    unreachable!("loop returns on the last attempt")
}

/// Integrates to `t_end`, calling `observe` after every step.
pub fn integrate<F>(
    state: &DiffusionState,
    spec: &ProblemSpec,
    dt: f64,
    t_end: f64,
    mut observe: F,
) -> Result<DiffusionState>
where
    F: FnMut(&DiffusionState) -> Result<()>,
{
    if dt > spec.dt_max() * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("dt = {dt:e} exceeds dt_max = {:e}", spec.dt_max())));
    }
    let mut s = state.clone();
    while s.t < t_end - 1e-14 * t_end.max(1.0) {
        let h = dt.min(t_end - s.t);
        let (next, _) = robust_step(&s, spec, h)?;
        s = next;
        observe(&s)?;
    }
    Ok(s)
}

/// Number of equal steps of size at most `dt` that land exactly on `t`.
pub fn steps_to(t: f64, dt: f64) -> (usize, f64) {
    let n = (t / dt).ceil().max(1.0) as usize;
    (n, t / n as f64)
}

/// `f = −2 log ρ − U₁`.
pub fn f_field(state: &DiffusionState, spec: &ProblemSpec) -> Result<GridScalarField> {
    check_positive(&state.rho)?;
    Ok(state.rho.zip_map(&spec.u1, |r, u| -2.0 * r.ln() - u))
}

/// `ḟ = Δ_hor f − ½|∇_hor f|² + V + K f`, from the snapshot alone.
pub fn f_dot_field(state: &DiffusionState, spec: &ProblemSpec) -> Result<GridScalarField> {
    let f = f_field(state, spec)?;
    f_dot_from_f(&f, spec)
}

pub fn f_dot_from_f(f: &GridScalarField, spec: &ProblemSpec) -> Result<GridScalarField> {
    let lap = discrete_sub_laplacian(f, spec.order)?;
    let xf = frame_derivative(f, Direction::X, spec.order)?;
    let yf = frame_derivative(f, Direction::Y, spec.order)?;
    let k = spec.k;
    let values = (0..f.values.len())
        .into_par_iter()
        .map(|i| {
            let g2 = xf.values[i] * xf.values[i] + yf.values[i] * yf.values[i];
            lap.values[i] - 0.5 * g2 + spec.v.values[i] + k * f.values[i]
        })
        .collect();
    Ok(GridScalarField { spec: f.spec, values })
}

/// Parameters of the seeded smooth initial density.
#[derive(Debug, Clone, Copy)]
pub struct InitialDensity {
    pub seed: u64,
    pub smoothing_steps: usize,
    pub floor: f64,
    /// Amplitude of the smoothed noise before exponentiation.
    pub amplitude: f64,
}

impl Default for InitialDensity {
    fn default() -> Self {
        Self { seed: 7, smoothing_steps: 40, floor: 0.05, amplitude: 3.0 }
    }
}

/// One step of a compact, frame-aligned smoother: second differences along
/// the integral curves `p·exp(±hX)`, `p·exp(±hY)` (z-offsets `±½yh`, `∓½xh`
/// resolved by linear interpolation between z cells) plus the z direction.
fn smooth_once(g: &GridScalarField, lambda: f64) -> GridScalarField {
    let spec = g.spec;
    let nz = spec.nz as f64;
    let h = spec.h();
    GridScalarField::from_index_fn(spec, |i, j, k| {
        let (ii, jj, kk) = (i as i64, j as i64, k as i64);
        let c = g.values[spec.flat(i, j, k)];
        let along = |di: i64, dj: i64, dz: f64| {
            let zc = kk as f64 + dz * nz;
            let k0 = zc.floor();
            let t = zc - k0;
            let k0 = k0 as i64;
            (1.0 - t) * g.get(ii + di, jj + dj, k0) + t * g.get(ii + di, jj + dj, k0 + 1)
        };
        let (x, y) = (i as f64 * h, j as f64 * h);
        let lx = along(1, 0, 0.5 * y * h) + along(-1, 0, -0.5 * y * h) - 2.0 * c;
        let ly = along(0, 1, -0.5 * x * h) + along(0, -1, 0.5 * x * h) - 2.0 * c;
        let lz = g.get(ii, jj, kk + 1) + g.get(ii, jj, kk - 1) - 2.0 * c;
        c + lambda * (lx + ly + lz)
    })
}

/// Positive, deck-compatible initial density: `exp` of smoothed seeded noise,
/// shifted so that its minimum equals `floor`.
pub fn make_initial_density(grid: GridSpec, params: &InitialDensity) -> Result<GridScalarField> {
    if !(params.floor > 0.0) {
        return Err(Error::invalid("floor must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut g = GridScalarField::from_values(grid, noise)?;
    for _ in 0..params.smoothing_steps {
        g = smooth_once(&g, 1.0 / 6.0);
    }
    let (lo, hi) = (g.min(), g.max());
    let span = (hi - lo).max(1e-300);
    // normalize to [−1, 1] before scaling so the amplitude is resolution independent
    let g = g.map(|v| params.amplitude * (2.0 * (v - lo) / span - 1.0));
    let e = g.map(f64::exp);
    let m = e.min();
    Ok(e.map(|v| v - m + params.floor))
}

/// Parameters of the seeded analytic initial density `exp(g)`, where `g` is
/// a lattice-invariant sum of translated bumps and periodic planar modes
/// with `|g| ≤ amplitude`. The same continuous density is sampled at every
/// resolution, which makes refinement comparisons meaningful.
#[derive(Debug, Clone, Copy)]
pub struct SmoothDensity {
    pub seed: u64,
    pub bumps: usize,
    pub planar_modes: usize,
    pub amplitude: f64,
}

impl Default for SmoothDensity {
    fn default() -> Self {
        Self { seed: 7, bumps: 4, planar_modes: 3, amplitude: 2.0 }
    }
}

/// Left translate by `c⁻¹` of the lattice sum of a Gaussian-envelope bump
/// `exp(−(x²+y²)/σ²)·cos(2πm z + ψ)` on H¹. Invariant under the lattice
/// because the sum runs over left lattice translates and `cos` has integer
/// z-frequency; images with |a| or |b| > 3 are dropped, which is exact to
/// rounding for points with planar coordinates in [−1, 2].
fn lattice_bump(c: [f64; 3], sigma: f64, m: f64, psi: f64) -> Field {
    let (x, y, z) = (Field::coord(0), Field::coord(1), Field::coord(2));
    let mut total = Field::constant(0.0);
    for a in -3i32..=3 {
        for b in -3i32..=3 {
            let (af, bf) = (a as f64, b as f64);
            // q = γ_ab·p with γ_ab = (a, b, −ab/2)
            let qx = x.clone() + af;
            let qy = y.clone() + bf;
            let qz = z.clone() + (-0.5 * af * bf) + 0.5 * bf * x.clone() + (-0.5 * af) * y.clone();
            // c⁻¹·q
            let rx = qx.clone() + (-c[0]);
            let ry = qy.clone() + (-c[1]);
            let rz = qz + (-c[2]) + 0.5 * c[0] * qy + (-0.5 * c[1]) * qx;
            let env = ((-1.0 / (sigma * sigma)) * (rx.powi(2) + ry.powi(2))).exp();
            total = total + env * (2.0 * std::f64::consts::PI * m * rz + psi).cos();
        }
    }
    total
}

/// The log-density `g` of [`SmoothDensity`] as a closed-form field.
pub fn smooth_log_density(params: &SmoothDensity) -> Field {
    use std::f64::consts::TAU;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut terms = Vec::new();
    for _ in 0..params.bumps {
        let c = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let sigma = rng.gen_range(0.25..0.35);
        let m = rng.gen_range(0..=2) as f64;
        let psi = rng.gen_range(0.0..TAU);
        terms.push(lattice_bump(c, sigma, m, psi));
    }
    let (x, y) = (Field::coord(0), Field::coord(1));
    for _ in 0..params.planar_modes {
        let (k, l) = loop {
            let k = rng.gen_range(-2i32..=2);
            let l = rng.gen_range(-2i32..=2);
            if k != 0 || l != 0 {
                break (k as f64, l as f64);
            }
        };
        let psi = rng.gen_range(0.0..TAU);
        terms.push((TAU * k * x.clone() + TAU * l * y.clone() + psi).cos());
    }
    let weights: Vec<f64> =
        (0..terms.len()).map(|_| rng.gen_range(0.5..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let norm: f64 = weights.iter().map(|w| w.abs()).sum();
    let mut g = Field::constant(0.0);
    for (t, w) in terms.into_iter().zip(weights) {
        g = g + t * (params.amplitude * w / norm.max(1e-300));
    }
    g
}

pub fn make_smooth_density(grid: GridSpec, params: &SmoothDensity) -> Result<GridScalarField> {
    if !(params.amplitude >= 0.0) || !params.amplitude.is_finite() {
        return Err(Error::invalid("amplitude must be finite and nonnegative"));
    }
    let g = smooth_log_density(params);
    Ok(GridScalarField::from_field(grid, &g, 0.0).map(f64::exp))
}

/// Curvature-type constants read off a potential `V`.
#[derive(Debug, Clone)]
pub struct ConstantsReport {
    /// `max V` (the bound κ₁ = K₄).
    pub kappa1: f64,
    /// Smallest feasible κ₂ (= K₆), `None` if infeasible below `cap`.
    pub kappa2: Option<f64>,
    pub feasible: bool,
    pub cap: f64,
    pub max_lap_v: f64,
    pub max_rv_sq: f64,
}

/// Bounds for `V ≤ κ₁` and `Δ_hor V + ((n+3)²/(3κ₂))|∇_ver V|² ≤ κ₂` (n = 1).
pub fn estimate_constants(spec: &ProblemSpec, cap: f64) -> Result<ConstantsReport> {
    let v = spec.v();
    let kappa1 = v.max();
    let lap = discrete_sub_laplacian(v, spec.order)?;
    let rv = frame_derivative(v, Direction::R, spec.order)?;
    let rv_sq = rv.mul(&rv);
    let coef = 16.0 / 3.0;
    let lhs = |k2: f64| -> f64 {
        lap.values
            .iter()
            .zip(&rv_sq.values)
            .map(|(l, r)| l + coef / k2 * r)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let max_lap_v = lap.max();
    let max_rv_sq = rv_sq.max();
    let h = |k2: f64| lhs(k2) - k2;
    let report = |kappa2: Option<f64>, feasible: bool| ConstantsReport {
        kappa1,
        kappa2,
        feasible,
        cap,
        max_lap_v,
        max_rv_sq,
    };
    if max_rv_sq == 0.0 {
        // no vertical gradient: any κ₂ ≥ max ΔV works (κ₂ → 0⁺ if that is ≤ 0)
        let k2 = max_lap_v.max(0.0);
        return Ok(if k2 <= cap { report(Some(k2), true) } else { report(None, false) });
    }
    if h(cap) > 0.0 {
        return Ok(report(None, false));
    }
    let (mut lo, mut hi) = (0.0f64, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 || h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1e-300) {
            break;
        }
    }
    Ok(report(Some(hi), true))
}
