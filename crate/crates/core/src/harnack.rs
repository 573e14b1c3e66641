//! Harnack quantities on lattice snapshots.
//!
//! * general form `F_t = Δ_hor f + a₁ ḟ + (a₂/2)|∇_ver f|² + a₃ f ≤ r(t)`;
//! * Sasakian form on H^n with potential bounds κ₁, κ₂;
//! * pure heat form `(1+3/n)ḟ + ½|∇_hor f|² + (tn/3)|∇_ver f|² ≤ 2n(1+3/n)²/t`;
//! * the integrated two-point inequality along horizontal curves.
//!
//! `ḟ` always comes from the spatial identity, never from time differences.

use crate::coefficients::{baga_bound, sasakian_constants, CoefficientFamily};
use crate::error::{Error, Result};
use crate::grid::{discrete_sub_laplacian, frame_derivative, Direction, GridScalarField};
use crate::solver::{f_dot_from_f, f_field, DiffusionState, ProblemSpec};
use std::fmt;

/// Relative violation tolerance attributed to spatial discretization.
pub const DEFAULT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarnackForm {
    General,
    Sasakian,
    Baga,
}

impl fmt::Display for HarnackForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HarnackForm::General => "general",
            HarnackForm::Sasakian => "sasakian",
            HarnackForm::Baga => "baga",
        })
    }
}

/// Snapshot fields shared by every form.
struct Derived {
    f: GridScalarField,
    f_dot: GridScalarField,
    lap: GridScalarField,
    grad_hor_sq: GridScalarField,
    grad_ver_sq: GridScalarField,
}

fn derive(state: &DiffusionState, spec: &ProblemSpec) -> Result<Derived> {
    let f = f_field(state, spec)?;
    let f_dot = f_dot_from_f(&f, spec)?;
    let lap = discrete_sub_laplacian(&f, spec.order)?;
    let xf = frame_derivative(&f, Direction::X, spec.order)?;
    let yf = frame_derivative(&f, Direction::Y, spec.order)?;
    let rf = frame_derivative(&f, Direction::R, spec.order)?;
    let grad_hor_sq = xf.mul(&xf).add(&yf.mul(&yf));
    let grad_ver_sq = rf.mul(&rf);
    Ok(Derived { f, f_dot, lap, grad_hor_sq, grad_ver_sq })
}

/// `F_t = Δ_hor f + a₁ ḟ + (a₂/2)|∇_ver f|² + a₃ f` at time `t`.
pub fn harnack_quantity(
    state: &DiffusionState,
    spec: &ProblemSpec,
    family: &CoefficientFamily,
    t: f64,
) -> Result<GridScalarField> {
    if !(t > 0.0) {
        return Err(Error::invalid("Harnack quantity needs t > 0"));
    }
    let d = derive(state, spec)?;
    let [a1, a2, a3, _] = family.coeffs(t);
    let values = (0..d.f.values.len())
        .map(|i| d.lap.values[i] + a1 * d.f_dot.values[i] + 0.5 * a2 * d.grad_ver_sq.values[i] + a3 * d.f.values[i])
        .collect();
    Ok(GridScalarField { spec: d.f.spec, values })
}

/// Sasakian-form left side field and right side scalar on H¹ (n = 1).
pub fn sasakian_lhs_rhs(
    state: &DiffusionState,
    spec: &ProblemSpec,
    n: usize,
    kappa1: f64,
    kappa2: f64,
    t: f64,
) -> Result<(GridScalarField, f64)> {
    if !(kappa2 > 0.0) || !(t > 0.0) {
        return Err(Error::invalid("Sasakian form needs kappa2 > 0 and t > 0"));
    }
    let d = derive(state, spec)?;
    let (c2, vert, fdot_coef) = sasakian_constants(n, kappa2);
    let tanh = (c2 * t).tanh();
    let v = spec.v();
    let values = (0..d.f.values.len())
        .map(|i| {
            fdot_coef * d.f_dot.values[i] + 0.5 * d.grad_hor_sq.values[i] - v.values[i]
                + vert * tanh * d.grad_ver_sq.values[i]
        })
        .collect();
    let rhs = kappa2 / c2 / (c2 * t).tanh() + 3.0 * kappa1 / n as f64;
    Ok((GridScalarField { spec: d.f.spec, values }, rhs))
}

/// Pure heat form (requires `U₁ = U₂ = K = 0`).
pub fn baga_lhs_rhs(state: &DiffusionState, spec: &ProblemSpec, n: usize, t: f64) -> Result<(GridScalarField, f64)> {
    if spec.u1.norm_inf() != 0.0 || spec.u2.norm_inf() != 0.0 || spec.k != 0.0 {
        return Err(Error::invalid("heat form requires U1 = U2 = K = 0"));
    }
    if !(t > 0.0) {
        return Err(Error::invalid("heat form needs t > 0"));
    }
    let d = derive(state, spec)?;
    let nf = n as f64;
    let values = (0..d.f.values.len())
        .map(|i| {
            (1.0 + 3.0 / nf) * d.f_dot.values[i]
                + 0.5 * d.grad_hor_sq.values[i]
                + t * nf / 3.0 * d.grad_ver_sq.values[i]
        })
        .collect();
    Ok((GridScalarField { spec: d.f.spec, values }, baga_bound(n, t)))
}

/// Time series of `max F_t` against the bound.
#[derive(Debug, Clone)]
pub struct HarnackReport {
    pub form: HarnackForm,
    pub times: Vec<f64>,
    pub lhs_max: Vec<f64>,
    pub bound: Vec<f64>,
    pub margin: Vec<f64>,
    pub argmax: Vec<(usize, usize, usize)>,
    pub tolerance: f64,
}

impl HarnackReport {
    pub const CSV_HEADER: &'static str = "t,lhs_max,bound,margin,argmax_i,argmax_j,argmax_k";

    fn new(form: HarnackForm, tolerance: f64) -> Self {
        Self {
            form,
            times: Vec::new(),
            lhs_max: Vec::new(),
            bound: Vec::new(),
            margin: Vec::new(),
            argmax: Vec::new(),
            tolerance,
        }
    }

    fn push(&mut self, t: f64, field: &GridScalarField, bound: f64) {
        let idx = field.argmax();
        let lhs = field.values[idx];
        self.times.push(t);
        self.lhs_max.push(lhs);
        self.bound.push(bound);
        self.margin.push(bound - lhs);
        self.argmax.push(field.spec.unflat(idx));
    }

    /// Margin relative to the bound, `(bound − lhs)/|bound|`.
    pub fn relative_margins(&self) -> Vec<f64> {
        self.margin.iter().zip(&self.bound).map(|(m, b)| m / b.abs()).collect()
    }

    pub fn min_relative_margin(&self) -> f64 {
        self.relative_margins().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `max(0, −min relative margin)`: zero when no sample exceeds its bound.
    pub fn worst_violation(&self) -> f64 {
        (-self.min_relative_margin()).max(0.0)
    }

    /// Times at which `margin < −tol·|bound|`.
    pub fn violations(&self) -> Vec<f64> {
        self.times
            .iter()
            .zip(self.relative_margins())
            .filter(|(_, m)| *m < -self.tolerance)
            .map(|(t, _)| *t)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn csv_rows(&self) -> Vec<String> {
        (0..self.times.len())
            .map(|i| {
                let (a, b, c) = self.argmax[i];
                format!(
                    "{:.6e},{:.9e},{:.9e},{:.9e},{a},{b},{c}",
                    self.times[i], self.lhs_max[i], self.bound[i], self.margin[i]
                )
            })
            .collect()
    }
}

/// General-form report over a run; the bound is the family's closed-form
/// `r(t)` unless `r_table` supplies `(t, r)` values.
pub fn check_bound(
    states: &[DiffusionState],
    spec: &ProblemSpec,
    family: &CoefficientFamily,
    r_table: Option<&[(f64, f64)]>,
    tolerance: f64,
) -> Result<HarnackReport> {
    let mut rep = HarnackReport::new(HarnackForm::General, tolerance);
    for (idx, s) in states.iter().enumerate() {
        let bound = match r_table {
            Some(tab) => tab
                .get(idx)
                .filter(|(t, _)| (t - s.t).abs() <= 1e-9 * s.t.max(1.0))
                .map(|(_, r)| *r)
                .ok_or_else(|| Error::invalid(format!("no r value for t = {}", s.t)))?,
            None => family
                .r(s.t)
                .ok_or_else(|| Error::invalid("family has no closed-form r; pass a table"))?,
        };
        let field = harnack_quantity(s, spec, family, s.t)?;
        rep.push(s.t, &field, bound);
    }
    Ok(rep)
}

/// Sasakian-form report over a run.
pub fn check_sasakian(
    states: &[DiffusionState],
    spec: &ProblemSpec,
    n: usize,
    kappa1: f64,
    kappa2: f64,
    tolerance: f64,
) -> Result<HarnackReport> {
    let mut rep = HarnackReport::new(HarnackForm::Sasakian, tolerance);
    for s in states {
        let (field, rhs) = sasakian_lhs_rhs(s, spec, n, kappa1, kappa2, s.t)?;
        rep.push(s.t, &field, rhs);
    }
    Ok(rep)
}

/// Pure-heat-form report over a run.
pub fn check_baga(states: &[DiffusionState], spec: &ProblemSpec, n: usize, tolerance: f64) -> Result<HarnackReport> {
    let mut rep = HarnackReport::new(HarnackForm::Baga, tolerance);
    for s in states {
        let (field, rhs) = baga_lhs_rhs(s, spec, n, s.t)?;
        rep.push(s.t, &field, rhs);
    }
    Ok(rep)
}

/// Outcome of the two-point integrated inequality.
#[derive(Debug, Clone)]
pub struct IntegratedReport {
    pub ratio: f64,
    pub rhs: f64,
    /// `(ratio − rhs)/rhs`; NaN when skipped.
    pub slack: f64,
    pub cost: f64,
    pub skipped: Option<String>,
}

impl IntegratedReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.skipped.is_none() && self.slack >= -tolerance
    }
}

/// Right side `(sinh(c₂s₁)/sinh(c₂s₀))^{−(n+3)}·exp(−½(U₁(x₁) − U₁(x₀) + (1+3/n)·cost))`.
/// For `κ₂ = 0` the sinh ratio is replaced by its limit `s₁/s₀`.
pub fn integrated_rhs(n: usize, kappa2: f64, s0: f64, s1: f64, du1: f64, cost: f64) -> f64 {
    let nf = n as f64;
    let ratio = if kappa2 > 0.0 {
        let (c2, _, _) = sasakian_constants(n, kappa2);
        // log-space sinh ratio avoids overflow for large c₂s
        let ls = |s: f64| (c2 * s) + (-(-2.0 * c2 * s).exp_m1()).ln() - std::f64::consts::LN_2;
        (ls(s1) - ls(s0)).exp()
    } else {
        s1 / s0
    };
    ratio.powf(-(nf + 3.0)) * (-0.5 * (du1 + (1.0 + 3.0 / nf) * cost)).exp()
}

/// Checks `ρ_{s₁}(x₁)/ρ_{s₀}(x₀) ≥ RHS(cost)` at lattice points `x0`, `x1`.
/// Since the right side decreases in `cost`, any upper bound on the optimal
/// cost gives a valid (weaker) check.
#[allow(clippy::too_many_arguments)]
pub fn integrated_harnack_check(
    rho_s0: &GridScalarField,
    rho_s1: &GridScalarField,
    x0: (usize, usize, usize),
    x1: (usize, usize, usize),
    s0: f64,
    s1: f64,
    u1: &GridScalarField,
    n: usize,
    kappa2: f64,
    cost: f64,
) -> IntegratedReport {
    let skip = |msg: &str| IntegratedReport {
        ratio: f64::NAN,
        rhs: f64::NAN,
        slack: f64::NAN,
        cost,
        skipped: Some(msg.to_string()),
    };
    if !(s0 > 0.0) || !(s1 > s0 * (1.0 + 1e-12)) {
        return skip("degenerate time pair: need 0 < s0 < s1");
    }
    if !cost.is_finite() || cost < 0.0 && cost.abs() > 1e-12 {
        return skip("cost must be finite and nonnegative");
    }
    let sp = rho_s0.spec;
    let r0 = rho_s0.values[sp.flat(x0.0, x0.1, x0.2)];
    let r1 = rho_s1.values[sp.flat(x1.0, x1.1, x1.2)];
    let du1 = u1.values[sp.flat(x1.0, x1.1, x1.2)] - u1.values[sp.flat(x0.0, x0.1, x0.2)];
    let ratio = r1 / r0;
    let rhs = integrated_rhs(n, kappa2, s0, s1, du1, cost);
    IntegratedReport { ratio, rhs, slack: (ratio - rhs) / rhs, cost, skipped: None }
}
