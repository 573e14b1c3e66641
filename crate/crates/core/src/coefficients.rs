//! Coefficient families `(a₁, a₂, a₃, a₄, r)` for the general differential
//! Harnack estimate, their closed forms, ODE-residual checks and the
//! stable-solution integrator for `r`.
//!
//! The coefficients must satisfy, for constants `K, K₁..K₆` and horizontal
//! rank `k`,
//!
//! ```text
//! (5) a₃ + 4K₃/a₂ ≥ 0
//! (6) ȧ₁ + 2a₁a₄/k + (a₁+1)(2K₁ − a₃ − 8K₃/a₂) = 0
//! (7) ȧ₂/2 − K₂ − 4K₃ + a₂(a₂/(4K₅) − a₃/2 + a₄/k − K/2 + K₁) = 0
//! (8) ȧ₃ + 2a₃a₄/k + (K − a₃)(a₃ + 8K₃/a₂ − 2K₁) = 0
//! ṙ = a₄²/k + K₆ + 2(a₃ + 4K₃/a₂)K₄ + (a₃ − 2a₄/k + K + 8K₃/a₂ − 2K₁) r,   r → ∞ as t → 0⁺
//! ```
//!
//! `K₅ = ∞` is allowed and drops the `a₂/(4K₅)` term.

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

/// Curvature and potential constants. `kappa1 = K₄`, `kappa2 = K₆` in the
/// Sasakian specialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    /// Coefficient of the `ρ log ρ` nonlinearity.
    pub k: f64,
    /// Rank of the horizontal distribution.
    pub rank: usize,
    /// Sasakian `n` (dimension 2n+1).
    pub n: usize,
}

impl CurvatureConstants {
    /// H^n: `K₁ = 0`, `K₂ = n/2`, `K₃ = ¼`, `k = 2n`, no potential.
    pub fn heisenberg(n: usize) -> Self {
        Self {
            k1: 0.0,
            k2: n as f64 / 2.0,
            k3: 0.25,
            k4: 0.0,
            k5: f64::INFINITY,
            k6: 0.0,
            k: 0.0,
            rank: 2 * n,
            n,
        }
    }

    /// Heisenberg preset with potential bounds `V ≤ κ₁` and the κ₂ condition.
    pub fn heisenberg_with_potential(n: usize, kappa1: f64, kappa2: f64) -> Self {
        Self { k4: kappa1, k6: kappa2, ..Self::heisenberg(n) }
    }

    /// `K₂, K₃, K₅ > 0`; `K₁, K₄, K₆ ≥ 0` (zero values are admitted because
    /// the corollaries use them).
    pub fn validate(&self) -> Result<()> {
        let all = [self.k1, self.k2, self.k3, self.k4, self.k6, self.k];
        if all.iter().any(|v| !v.is_finite()) || self.k5.is_nan() {
            return Err(Error::invalid("constants must be finite (K5 may be +inf)"));
        }
        if !(self.k2 > 0.0 && self.k3 > 0.0 && self.k5 > 0.0) {
            return Err(Error::invalid("K2, K3, K5 must be positive"));
        }
        if self.k1 < 0.0 || self.k4 < 0.0 || self.k6 < 0.0 {
            return Err(Error::invalid("K1, K4, K6 must be nonnegative"));
        }
        if self.rank == 0 {
            return Err(Error::invalid("horizontal rank must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Cor1,
    Cor2,
    Cor3,
    Sasakian,
    Numeric,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FamilyKind::Cor1 => "cor1",
            FamilyKind::Cor2 => "cor2",
            FamilyKind::Cor3 => "cor3",
            FamilyKind::Sasakian => "sasakian",
            FamilyKind::Numeric => "numeric",
        };
        f.write_str(s)
    }
}

type CoefFn = Arc<dyn Fn(f64) -> [f64; 4] + Send + Sync>;

/// A coefficient family; closed forms for the named families, an
/// arbitrary closure for `Numeric`.
#[derive(Clone)]
pub struct CoefficientFamily {
    pub kind: FamilyKind,
    pub consts: CurvatureConstants,
    /// `a₁ ≡ c` for the closed-form families.
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    custom: Option<CoefFn>,
}

impl fmt::Debug for CoefficientFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientFamily")
            .field("kind", &self.kind)
            .field("consts", &self.consts)
            .field("c", &self.c)
            .field("c1", &self.c1)
            .field("c2", &self.c2)
            .finish()
    }
}

fn check_c_window(consts: &CurvatureConstants, c: f64) -> Result<()> {
    let lo = 4.0 * consts.k3 / consts.k2;
    let hi = 8.0 * consts.k3 / consts.k2;
    if !(c > lo && c < hi) {
        return Err(Error::invalid(format!("c = {c} outside the open interval ({lo}, {hi})")));
    }
    Ok(())
}

/// Linear-growth family for the pure sub-elliptic heat equation.
pub fn family_cor1(consts: &CurvatureConstants, c: f64) -> Result<CoefficientFamily> {
    consts.validate()?;
    check_c_window(consts, c)?;
    let mut k = *consts;
    k.k1 = 0.0;
    k.k = 0.0;
    k.k4 = 0.0;
    k.k6 = 0.0;
    k.k5 = f64::INFINITY;
    Ok(CoefficientFamily { kind: FamilyKind::Cor1, consts: k, c, c1: f64::NAN, c2: f64::NAN, custom: None })
}

/// `c = 6K₃/K₂`, giving `r = k(1+c)²/t`.
pub fn family_cor2(consts: &CurvatureConstants) -> Result<CoefficientFamily> {
    let c = 6.0 * consts.k3 / consts.k2;
    let mut f = family_cor1(consts, c)?;
    f.kind = FamilyKind::Cor2;
    Ok(f)
}

/// Saturating family for equations with potentials: `a₂ = c₁ tanh(c₂ t)`.
pub fn family_cor3(consts: &CurvatureConstants, c: f64) -> Result<CoefficientFamily> {
    consts.validate()?;
    check_c_window(consts, c)?;
    if !(consts.k6 > 0.0) {
        return Err(Error::invalid("K6 must be positive for the saturating family"));
    }
    let mut k = *consts;
    k.k1 = 0.0;
    k.k = 0.0;
    let kk = k.rank as f64;
    k.k5 = 4.0 * kk * (c + 1.0).powi(2) * k.k3 * k.k3 / (c * k.k6 * (8.0 * k.k3 - c * k.k2));
    let c1 = 2.0 * (k.k5 * (k.k2 - 4.0 * k.k3 / c)).sqrt();
    let c2 = ((c * k.k2 - 4.0 * k.k3) / (c * k.k5)).sqrt();
    Ok(CoefficientFamily { kind: FamilyKind::Cor3, consts: k, c, c1, c2, custom: None })
}

/// Saturating family with the Heisenberg preset, `c = 3/n`, `K₄ = κ₁`,
/// `K₆ = κ₂`.
pub fn family_sasakian(n: usize, kappa1: f64, kappa2: f64) -> Result<CoefficientFamily> {
    let consts = CurvatureConstants::heisenberg_with_potential(n, kappa1, kappa2);
    let mut f = family_cor3(&consts, 3.0 / n as f64)?;
    f.kind = FamilyKind::Sasakian;
    Ok(f)
}

/// Arbitrary tabulated/closure family `t ↦ [a₁, a₂, a₃, a₄]`.
pub fn family_numeric<F>(consts: &CurvatureConstants, coeffs: F) -> Result<CoefficientFamily>
where
    F: Fn(f64) -> [f64; 4] + Send + Sync + 'static,
{
    consts.validate()?;
    Ok(CoefficientFamily {
        kind: FamilyKind::Numeric,
        consts: *consts,
        c: f64::NAN,
        c1: f64::NAN,
        c2: f64::NAN,
        custom: Some(Arc::new(coeffs)),
    })
}

/// Five-point central difference.
fn fd5<F: Fn(f64) -> f64>(f: F, t: f64) -> f64 {
    let h = 1e-3 * t.max(1e-6);
    (-f(t + 2.0 * h) + 8.0 * f(t + h) - 8.0 * f(t - h) + f(t - 2.0 * h)) / (12.0 * h)
}

impl CoefficientFamily {
    fn rank(&self) -> f64 {
        self.consts.rank as f64
    }

    fn is_linear(&self) -> bool {
        matches!(self.kind, FamilyKind::Cor1 | FamilyKind::Cor2)
    }

    /// `[a₁, a₂, a₃, a₄]` at `t > 0`.
    pub fn coeffs(&self, t: f64) -> [f64; 4] {
        if let Some(f) = &self.custom {
            return f(t);
        }
        let k = &self.consts;
        let a2 = if self.is_linear() {
            2.0 * (k.k2 - 4.0 * k.k3 / self.c) * t
        } else {
            self.c1 * (self.c2 * t).tanh()
        };
        let a4 = 4.0 * (self.c + 1.0) * self.rank() * k.k3 / (self.c * a2);
        [self.c, a2, 0.0, a4]
    }

    /// Time derivatives; closed form when available, else 5-point differences.
    pub fn coeffs_dot(&self, t: f64) -> [f64; 4] {
        if self.custom.is_some() {
            let mut out = [0.0; 4];
            for (i, o) in out.iter_mut().enumerate() {
                *o = fd5(|s| self.coeffs(s)[i], t);
            }
            return out;
        }
        let k = &self.consts;
        let [_, a2, _, a4] = self.coeffs(t);
        let a2_dot = if self.is_linear() {
            2.0 * (k.k2 - 4.0 * k.k3 / self.c)
        } else {
            let ch = (self.c2 * t).cosh();
            self.c1 * self.c2 / (ch * ch)
        };
        [0.0, a2_dot, 0.0, -a4 * a2_dot / a2]
    }

    /// Closed-form `r`, if the family has one.
    pub fn r_closed(&self, t: f64) -> Option<f64> {
        let k = &self.consts;
        let kk = self.rank();
        match self.kind {
            FamilyKind::Cor1 | FamilyKind::Cor2 => Some(
                4.0 * (self.c + 1.0).powi(2) * kk * k.k3 * k.k3
                    / ((self.c * k.k2 - 4.0 * k.k3) * (8.0 * k.k3 - self.c * k.k2) * t),
            ),
            FamilyKind::Cor3 | FamilyKind::Sasakian => {
                Some(k.k6 / self.c2 / (self.c2 * t).tanh() + self.c * k.k4)
            }
            FamilyKind::Numeric => None,
        }
    }

    pub fn r_closed_dot(&self, t: f64) -> Option<f64> {
        let k = &self.consts;
        match self.kind {
            FamilyKind::Cor1 | FamilyKind::Cor2 => self.r_closed(t).map(|r| -r / t),
            FamilyKind::Cor3 | FamilyKind::Sasakian => {
                let s = (self.c2 * t).sinh();
                Some(-k.k6 / (s * s))
            }
            FamilyKind::Numeric => None,
        }
    }

    /// `(P, Q)` with `ṙ = P(t) + Q(t) r`.
    pub fn r_ode_coeffs(&self, t: f64) -> (f64, f64) {
        let k = &self.consts;
        let kk = self.rank();
        let [_, a2, a3, a4] = self.coeffs(t);
        let p = a4 * a4 / kk + k.k6 + 2.0 * (a3 + 4.0 * k.k3 / a2) * k.k4;
        let q = a3 - 2.0 * a4 / kk + k.k + 8.0 * k.k3 / a2 - 2.0 * k.k1;
        (p, q)
    }

    pub fn r_rhs(&self, t: f64, r: f64) -> f64 {
        let (p, q) = self.r_ode_coeffs(t);
        p + q * r
    }

    /// Leading singular behaviour `B/t` of the blow-up solution, from
    /// `P ≈ A/t²`, `Q ≈ −γ/t` at `t`: `B = A/(γ − 1)`.
    pub fn singular_match(&self, t: f64) -> Result<f64> {
        let (p, q) = self.r_ode_coeffs(t);
        let a = p * t * t;
        let gamma = -q * t;
        if !(gamma > 1.0) {
            return Err(Error::invalid(format!(
                "no B/t blow-up solution: local exponent {gamma} must exceed 1"
            )));
        }
        Ok(a / (gamma - 1.0) / t)
    }

    /// `r(t)`: closed form when available, else `None`.
    pub fn r(&self, t: f64) -> Option<f64> {
        self.r_closed(t)
    }
}

/// Per-condition maxima of the scaled residuals.
#[derive(Debug, Clone, Default)]
pub struct ConditionResiduals {
    /// `max(0, −(a₃ + 4K₃/a₂))`.
    pub res5: f64,
    pub res6: f64,
    pub res7: f64,
    pub res8: f64,
    /// r-ODE residual (closed-form families only; NaN otherwise).
    pub res_r: f64,
    pub rows: Vec<ConditionRow>,
}

#[derive(Debug, Clone)]
pub struct ConditionRow {
    pub t: f64,
    pub a: [f64; 4],
    pub r: f64,
    pub res: [f64; 5],
}

impl ConditionResiduals {
    pub const CSV_HEADER: &'static str = "t,a1,a2,a3,a4,r,res5,res6,res7,res8,resR";

    pub fn max(&self) -> f64 {
        [self.res5, self.res6, self.res7, self.res8]
            .into_iter()
            .chain((!self.res_r.is_nan()).then_some(self.res_r))
            .fold(0.0, f64::max)
    }
}

/// `|Σ terms| / max(1, max |term|)`: absolute for O(1) terms, relative when
/// the individual terms blow up near `t = 0`.
fn scaled(terms: &[f64]) -> f64 {
    let s: f64 = terms.iter().sum();
    let m = terms.iter().fold(1.0f64, |m, t| m.max(t.abs()));
    s.abs() / m
}

/// Residuals of conditions (5)–(8) and of the r-ODE on `t_grid`.
pub fn condition_residuals(family: &CoefficientFamily, t_grid: &[f64]) -> ConditionResiduals {
    let k = &family.consts;
    let kk = k.rank as f64;
    let mut out = ConditionResiduals { res_r: if family.r_closed(1.0).is_some() { 0.0 } else { f64::NAN }, ..Default::default() };
    for &t in t_grid {
        let a = family.coeffs(t);
        let d = family.coeffs_dot(t);
        let [a1, a2, a3, a4] = a;
        let r5 = (-(a3 + 4.0 * k.k3 / a2)).max(0.0);
        let g = 2.0 * k.k1 - a3 - 8.0 * k.k3 / a2;
        let r6 = scaled(&[d[0], 2.0 * a1 * a4 / kk, (a1 + 1.0) * g]);
        let a2_over = if k.k5.is_infinite() { 0.0 } else { a2 / (4.0 * k.k5) };
        let r7 = scaled(&[
            d[1] / 2.0,
            -k.k2,
            -4.0 * k.k3,
            a2 * a2_over,
            -a2 * a3 / 2.0,
            a2 * a4 / kk,
            -a2 * k.k / 2.0,
            a2 * k.k1,
        ]);
        let r8 = scaled(&[d[2], 2.0 * a3 * a4 / kk, (k.k - a3) * (a3 + 8.0 * k.k3 / a2 - 2.0 * k.k1)]);
        let (rv, rr) = match (family.r_closed(t), family.r_closed_dot(t)) {
            (Some(r), Some(rd)) => {
                let (p, q) = family.r_ode_coeffs(t);
                (r, scaled(&[rd, -p, -q * r]))
            }
            _ => (f64::NAN, f64::NAN),
        };
        out.res5 = out.res5.max(r5);
        out.res6 = out.res6.max(r6);
        out.res7 = out.res7.max(r7);
        out.res8 = out.res8.max(r8);
        if !rr.is_nan() {
            out.res_r = out.res_r.max(rr);
        }
        out.rows.push(ConditionRow { t, a, r: rv, res: [r5, r6, r7, r8, rr] });
    }
    out
}

/// Tabulated `r_ε`.
#[derive(Debug, Clone)]
pub struct RTable {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
}

/// Integrates `ṙ_ε = P(t) + Q(t) r_ε + ε` forward from `t0` with RK4,
/// `dt = min(1e−3, t/100)`, reporting values at `t_grid` (increasing,
/// `≥ t0`). The start value is `r0` if given, otherwise the leading singular
/// behaviour at `t0`. As ε → 0 the tables converge to the ε = 0 solution
/// `r`, which is what the bound uses.
pub fn integrate_stable_r(
    family: &CoefficientFamily,
    epsilon: f64,
    t0: f64,
    t_grid: &[f64],
    r0: Option<f64>,
) -> Result<RTable> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid("epsilon must be nonnegative"));
    }
    if !(t0 > 0.0) {
        return Err(Error::invalid("t0 must be positive"));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) || t_grid.first().is_some_and(|&t| t < t0) {
        return Err(Error::invalid("t_grid must be increasing and start at or after t0"));
    }
    let mut r = match r0 {
        Some(v) => v,
        None => family.singular_match(t0)?,
    };
    let mut t = t0;
    let f = |t: f64, r: f64| family.r_rhs(t, r) + epsilon;
    let mut out = RTable { t: Vec::with_capacity(t_grid.len()), r: Vec::with_capacity(t_grid.len()) };
    for &target in t_grid {
        while t < target {
            let h = (1e-3f64).min(t / 100.0).min(target - t);
            let k1 = f(t, r);
            let k2 = f(t + 0.5 * h, r + 0.5 * h * k1);
            let k3 = f(t + 0.5 * h, r + 0.5 * h * k2);
            let k4 = f(t + h, r + h * k3);
            r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t = if target - (t + h) < 1e-15 * target { target } else { t + h };
            if !r.is_finite() || r.abs() > 1e300 {
                return Err(Error::BlowUp(format!("r blew up near t = {t:e}")));
            }
        }
        out.t.push(target);
        out.r.push(r);
    }
    Ok(out)
}

/// Bound of the pure heat estimate on H^n: `2n(1+3/n)²/t`.
pub fn baga_bound(n: usize, t: f64) -> f64 {
    let nf = n as f64;
    2.0 * nf * (1.0 + 3.0 / nf).powi(2) / t
}

/// Constants of the Sasakian estimate on H^n: `(c₂, vertical coefficient
/// prefactor (1+n/3)√(n/(2κ₂)), ḟ coefficient 1+3/n)`.
pub fn sasakian_constants(n: usize, kappa2: f64) -> (f64, f64, f64) {
    let nf = n as f64;
    let c2 = (nf * kappa2 / 2.0).sqrt() / (nf + 3.0);
    let vert = (1.0 + nf / 3.0) * (nf / (2.0 * kappa2)).sqrt();
    (c2, vert, 1.0 + 3.0 / nf)
}

/// Log-spaced grid on `[a, b]`.
pub fn log_grid(a: f64, b: f64, m: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..m).map(|i| (la + (lb - la) * i as f64 / (m - 1).max(1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cor1_heisenberg_values() {
        let k = CurvatureConstants::heisenberg(1);
        let f = family_cor1(&k, 3.0).unwrap();
        assert!((f.coeffs(1.0)[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((f.r_closed(1.0).unwrap() - 32.0).abs() < 1e-12);
        assert!(family_cor1(&k, 2.0).is_err());
        assert!(family_cor1(&k, 4.0).is_err());
    }

    #[test]
    fn cor2_is_k_one_plus_c_squared_over_t() {
        for n in 1..=3 {
            let k = CurvatureConstants::heisenberg(n);
            let f = family_cor2(&k).unwrap();
            let c = 6.0 * k.k3 / k.k2;
            let t = 0.37;
            let expect = k.rank as f64 * (1.0 + c).powi(2) / t;
            assert!((f.r_closed(t).unwrap() - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn cor3_heisenberg_constants() {
        for n in 1..=3 {
            let kappa2 = 0.7;
            let f = family_sasakian(n, 0.2, kappa2).unwrap();
            let nf = n as f64;
            assert!((f.consts.k5 - (nf + 3.0).powi(2) / (3.0 * kappa2)).abs() < 1e-12);
            let (c2, vert, _) = sasakian_constants(n, kappa2);
            assert!((f.c2 - c2).abs() < 1e-14);
            assert!((f.c1 / 2.0 - vert).abs() < 1e-12);
            let r_inf = f.consts.k6 / f.c2 + f.c * f.consts.k4;
            assert!((f.r_closed(200.0).unwrap() - r_inf).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_forms_satisfy_conditions() {
        let grid: Vec<f64> = (0..1000).map(|i| 0.01 + (10.0 - 0.01) * i as f64 / 999.0).collect();
        for n in 1..=3 {
            let k = CurvatureConstants::heisenberg(n);
            let c = 3.0 / n as f64;
            let r1 = condition_residuals(&family_cor1(&k, c * 1.1).unwrap(), &grid);
            assert!(r1.max() < 1e-8, "cor1 n={n}: {:?}", (r1.res5, r1.res6, r1.res7, r1.res8, r1.res_r));
            let r3 = condition_residuals(&family_sasakian(n, 0.3, 1.2).unwrap(), &grid);
            assert!(r3.max() < 1e-8, "cor3 n={n}: {:?}", (r3.res5, r3.res6, r3.res7, r3.res8, r3.res_r));
        }
    }

    #[test]
    fn perturbed_a2_is_detected() {
        let k = CurvatureConstants::heisenberg(1);
        let base = family_cor1(&k, 3.0).unwrap();
        let b = base.clone();
        let pert = family_numeric(&base.consts, move |t| {
            let mut a = b.coeffs(t);
            a[1] += 0.01;
            a
        })
        .unwrap();
        let grid = log_grid(0.01, 10.0, 200);
        assert!(condition_residuals(&pert, &grid).res7 > 1e-3);
    }

    #[test]
    fn stable_r_matches_cor2() {
        let k = CurvatureConstants::heisenberg(1);
        let f = family_cor2(&k).unwrap();
        let grid = log_grid(0.05, 1.0, 30);
        let tab = integrate_stable_r(&f, 0.0, 1e-3, &grid, None).unwrap();
        for (t, r) in tab.t.iter().zip(&tab.r) {
            let exact = f.r_closed(*t).unwrap();
            assert!(((r - exact) / exact).abs() < 1e-4);
        }
    }

    #[test]
    fn epsilon_family_is_monotone() {
        let k = CurvatureConstants::heisenberg(1);
        let f = family_cor2(&k).unwrap();
        let grid = log_grid(0.05, 1.0, 10);
        let base = integrate_stable_r(&f, 0.0, 1e-3, &grid, None).unwrap();
        let mut prev: Option<RTable> = None;
        for eps in [0.1, 0.01, 0.001] {
            let tab = integrate_stable_r(&f, eps, 1e-3, &grid, None).unwrap();
            for i in 0..grid.len() {
                assert!(tab.r[i] >= base.r[i]);
                if let Some(p) = &prev {
                    assert!(tab.r[i] <= p.r[i]);
                }
            }
            prev = Some(tab);
        }
    }

    #[test]
    fn zero_rhs_is_linear() {
        let k = CurvatureConstants::heisenberg(1);
        let k3 = k.k3;
        // a₄ = 0 and a₃ = −8K₃/a₂ make P = Q = 0 when K = K₁ = K₄ = K₆ = 0
        let f = family_numeric(&k, move |t| [1.0, t, -8.0 * k3 / t, 0.0]).unwrap();
        let tab = integrate_stable_r(&f, 0.5, 0.1, &[0.2, 1.0], Some(3.0)).unwrap();
        assert!((tab.r[0] - (3.0 + 0.5 * 0.1)).abs() < 1e-12);
        assert!((tab.r[1] - (3.0 + 0.5 * 0.9)).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let mut k = CurvatureConstants::heisenberg(1);
        assert!(k.validate().is_ok());
        k.k2 = 0.0;
        assert!(k.validate().is_err());
        let k = CurvatureConstants::heisenberg(1);
        assert!(family_cor3(&k, 3.0).is_err());
    }
}
