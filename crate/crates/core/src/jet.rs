//! Truncated multivariate Taylor jets of order 3.
//!
//! A [`Jet`] stores every Taylor coefficient of total degree ≤ 3 of a
//! scalar function around a base point, in a fixed number of variables.
//! Arithmetic propagates the coefficients exactly (forward-mode automatic
//! differentiation), so value, gradient, Hessian and third derivatives come
//! out at machine precision.
//!
//! Differentiating a jet ([`Jet::partial`]) lowers its valid order by one.
//! The validity order is tracked so that compositions which would need
//! fourth derivatives are caught by debug assertions instead of silently
//! returning zeros.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock};

/// Maximum number of independent variables supported by the tables.
pub const MAX_VARS: usize = 8;
/// Highest stored Taylor degree.
pub const MAX_ORDER: u8 = 3;

type Exps = [u8; MAX_VARS];

/// Monomial bookkeeping for a given number of variables.
#[derive(Debug)]
pub struct JetSpace {
    nvars: usize,
    exps: Vec<Exps>,
    degree: Vec<u8>,
    /// `(i, j, k)`: coefficient `k` of a product receives `a[i] * b[j]`.
    mul: Vec<(u16, u16, u16)>,
    /// Per variable: `(src, dst, factor)` for ∂/∂x_var.
    diff: Vec<Vec<(u16, u16, f64)>>,
    /// Index of the degree-1 monomial of each variable.
    linear: Vec<usize>,
}

impl JetSpace {
    fn build(nvars: usize) -> Self {
        assert!(nvars <= MAX_VARS);
        let mut exps: Vec<Exps> = vec![[0; MAX_VARS]];
        let mut frontier = vec![[0u8; MAX_VARS]];
        for _deg in 1..=MAX_ORDER {
            let mut next = Vec::new();
            for e in &frontier {
                // non-decreasing variable order avoids duplicates
                let last = (0..nvars).rev().find(|&v| e[v] > 0).unwrap_or(0);
                for v in last..nvars {
                    let mut m = *e;
                    m[v] += 1;
                    next.push(m);
                }
            }
            exps.extend(next.iter().copied());
            frontier = next;
        }
        let degree: Vec<u8> = exps.iter().map(|e| e.iter().sum()).collect();
        let index_of = |e: &Exps| exps.iter().position(|m| m == e);

        let mut mul = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                if degree[i] + degree[j] > MAX_ORDER {
                    continue;
                }
                let mut m = [0u8; MAX_VARS];
                for v in 0..MAX_VARS {
                    m[v] = a[v] + b[v];
                }
                let k = index_of(&m).expect("product monomial");
                mul.push((i as u16, j as u16, k as u16));
            }
        }

        let mut diff = vec![Vec::new(); nvars];
        for (v, table) in diff.iter_mut().enumerate() {
            for (src, e) in exps.iter().enumerate() {
                if e[v] == 0 {
                    continue;
                }
                let mut m = *e;
                m[v] -= 1;
                let dst = index_of(&m).expect("derivative monomial");
                table.push((src as u16, dst as u16, e[v] as f64));
            }
        }

        let linear = (0..nvars)
            .map(|v| {
                let mut m = [0u8; MAX_VARS];
                m[v] = 1;
                index_of(&m).unwrap()
            })
            .collect();

        Self { nvars, exps, degree, mul, diff, linear }
    }

    /// Shared table for `nvars` variables.
    pub fn get(nvars: usize) -> Arc<JetSpace> {
        static SPACES: OnceLock<Vec<Arc<JetSpace>>> = OnceLock::new();
        let spaces =
            SPACES.get_or_init(|| (0..=MAX_VARS).map(|n| Arc::new(JetSpace::build(n))).collect());
        spaces[nvars].clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    fn index(&self, e: &Exps) -> usize {
        self.exps.iter().position(|m| m == e).expect("monomial in space")
    }
}

/// Order-3 Taylor jet of a scalar function.
#[derive(Clone, Debug)]
pub struct Jet {
    space: Arc<JetSpace>,
    coef: Vec<f64>,
    order: u8,
}

impl Jet {
    pub fn constant(nvars: usize, value: f64) -> Self {
        let space = JetSpace::get(nvars);
        let mut coef = vec![0.0; space.len()];
        coef[0] = value;
        Self { space, coef, order: MAX_ORDER }
    }

    /// The independent variable `var` evaluated at `value`.
    pub fn variable(nvars: usize, var: usize, value: f64) -> Self {
        let mut j = Self::constant(nvars, value);
        let idx = j.space.linear[var];
        j.coef[idx] = 1.0;
        j
    }

    pub fn zero(nvars: usize) -> Self {
        Self::constant(nvars, 0.0)
    }

    /// Constant with the same variable count and validity as `self`.
    pub fn lift(&self, value: f64) -> Self {
        let mut coef = vec![0.0; self.space.len()];
        coef[0] = value;
        Self { space: self.space.clone(), coef, order: MAX_ORDER }
    }

    pub fn nvars(&self) -> usize {
        self.space.nvars
    }

    /// Highest derivative order that is still exact.
    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.coef[0]
    }

    /// First partial derivative ∂f/∂x_v at the base point.
    pub fn d1(&self, v: usize) -> f64 {
        debug_assert!(self.order >= 1);
        self.coef[self.space.linear[v]]
    }

    /// Second partial derivative.
    pub fn d2(&self, v: usize, w: usize) -> f64 {
        debug_assert!(self.order >= 2);
        let mut e = [0u8; MAX_VARS];
        e[v] += 1;
        e[w] += 1;
        let c = self.coef[self.space.index(&e)];
        if v == w {
            2.0 * c
        } else {
            c
        }
    }

    /// Third partial derivative.
    pub fn d3(&self, u: usize, v: usize, w: usize) -> f64 {
        debug_assert!(self.order >= 3);
        let mut e = [0u8; MAX_VARS];
        e[u] += 1;
        e[v] += 1;
        e[w] += 1;
        let c = self.coef[self.space.index(&e)];
        let mult: f64 = e.iter().map(|&k| factorial(k)).product();
        c * mult
    }

    /// Jet of ∂f/∂x_v; valid to one order less.
    pub fn partial(&self, v: usize) -> Self {
        debug_assert!(self.order >= 1, "differentiating an order-0 jet");
        let mut coef = vec![0.0; self.space.len()];
        for &(src, dst, factor) in &self.space.diff[v] {
            coef[dst as usize] += factor * self.coef[src as usize];
        }
        let order = self.order.saturating_sub(1);
        truncate(&self.space, &mut coef, order);
        Self { space: self.space.clone(), coef, order }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            space: self.space.clone(),
            coef: self.coef.iter().map(|c| c * s).collect(),
            order: self.order,
        }
    }

    /// Applies a univariate function given its value and first three
    /// derivatives at the base value.
    pub fn compose(&self, derivs: [f64; 4]) -> Self {
        let mut h = self.clone();
        h.coef[0] = 0.0;
        let h2 = &h * &h;
        let h3 = &h2 * &h;
        let mut out = self.lift(derivs[0]);
        out.order = self.order;
        for k in 1..out.coef.len() {
            out.coef[k] = derivs[1] * h.coef[k] + 0.5 * derivs[2] * h2.coef[k]
                + derivs[3] / 6.0 * h3.coef[k];
        }
        truncate(&self.space, &mut out.coef, out.order);
        out
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([s, c, -s, -c])
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([c, -s, -c, s])
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose([e; 4])
    }

    pub fn ln(&self) -> Self {
        let x = self.value();
        self.compose([x.ln(), 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x)])
    }

    pub fn tanh(&self) -> Self {
        let t = self.value().tanh();
        let s = 1.0 - t * t;
        self.compose([t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)])
    }

    pub fn sqrt(&self) -> Self {
        let x = self.value();
        let r = x.sqrt();
        self.compose([r, 0.5 / r, -0.25 / (r * x), 0.375 / (r * x * x)])
    }

    pub fn recip(&self) -> Self {
        let x = self.value();
        self.compose([1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x), -6.0 / (x * x * x * x)])
    }

    pub fn powi(&self, k: i32) -> Self {
        match k {
            0 => self.lift(1.0),
            1 => self.clone(),
            2 => self * self,
            _ => {
                let x = self.value();
                let kf = k as f64;
                self.compose([
                    x.powi(k),
                    kf * x.powi(k - 1),
                    kf * (kf - 1.0) * x.powi(k - 2),
                    kf * (kf - 1.0) * (kf - 2.0) * x.powi(k - 3),
                ])
            }
        }
    }
}

fn factorial(k: u8) -> f64 {
    (1..=k as u32).product::<u32>() as f64
}

fn truncate(space: &JetSpace, coef: &mut [f64], order: u8) {
    if order < MAX_ORDER {
        for (c, &d) in coef.iter_mut().zip(&space.degree) {
            if d > order {
                *c = 0.0;
            }
        }
    }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        debug_assert_eq!(self.space.nvars, rhs.space.nvars);
        let mut coef = vec![0.0; self.space.len()];
        for &(i, j, k) in &self.space.mul {
            coef[k as usize] += self.coef[i as usize] * rhs.coef[j as usize];
        }
        let order = self.order.min(rhs.order);
        truncate(&self.space, &mut coef, order);
        Jet { space: self.space.clone(), coef, order }
    }
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        Jet {
            space: self.space.clone(),
            coef: self.coef.iter().zip(&rhs.coef).map(|(a, b)| a + b).collect(),
            order: self.order.min(rhs.order),
        }
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        Jet {
            space: self.space.clone(),
            coef: self.coef.iter().zip(&rhs.coef).map(|(a, b)| a - b).collect(),
            order: self.order.min(rhs.order),
        }
    }
}

impl<'a> Div<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn div(self, rhs: &Jet) -> Jet {
        self * &rhs.recip()
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        for (a, b) in self.coef.iter_mut().zip(&rhs.coef) {
            *a += b;
        }
        self.order = self.order.min(rhs.order);
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                (&self).$m(rhs)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                self.$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Add<f64> for &Jet {
    type Output = Jet;
    fn add(self, rhs: f64) -> Jet {
        let mut out = self.clone();
        out.coef[0] += rhs;
        out
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.coef[0] += rhs;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(n: usize, v: usize, x: f64) -> Jet {
        Jet::variable(n, v, x)
    }

    #[test]
    fn space_sizes() {
        // C(n+3, 3)
        assert_eq!(JetSpace::get(1).len(), 4);
        assert_eq!(JetSpace::get(3).len(), 20);
        assert_eq!(JetSpace::get(4).len(), 35);
        assert_eq!(JetSpace::get(6).len(), 84);
    }

    #[test]
    fn polynomial_derivatives_exact() {
        // f = x^2 y + 3 y z^3 at (1.5, -2, 0.5)
        let (x, y, z) = (var(3, 0, 1.5), var(3, 1, -2.0), var(3, 2, 0.5));
        let f = &(&x * &x) * &y + (&y * &z.powi(3)) * 3.0;
        assert!((f.value() - (2.25 * -2.0 + 3.0 * -2.0 * 0.125)).abs() < 1e-15);
        assert!((f.d1(0) - 2.0 * 1.5 * -2.0).abs() < 1e-14);
        assert!((f.d1(2) - 9.0 * -2.0 * 0.25).abs() < 1e-14);
        assert!((f.d2(0, 0) - 2.0 * -2.0).abs() < 1e-14);
        assert!((f.d2(0, 1) - 3.0).abs() < 1e-14);
        assert!((f.d2(2, 2) - 18.0 * -2.0 * 0.5).abs() < 1e-14);
        assert!((f.d3(0, 0, 1) - 2.0).abs() < 1e-14);
        assert!((f.d3(2, 2, 2) - 18.0 * -2.0).abs() < 1e-14);
        assert!((f.d3(1, 2, 2) - 9.0).abs() < 1e-14);
    }

    #[test]
    fn transcendental_chain_rule() {
        // g = sin(x y), third derivative d^3/dx^3 = -y^3 cos(x y)
        let (x0, y0) = (0.3, 1.7);
        let g = (var(2, 0, x0) * var(2, 1, y0)).sin();
        let c = (x0 * y0).cos();
        let s = (x0 * y0).sin();
        assert!((g.d1(0) - y0 * c).abs() < 1e-14);
        assert!((g.d2(0, 1) - (c - x0 * y0 * s)).abs() < 1e-14);
        assert!((g.d3(0, 0, 0) + y0.powi(3) * c).abs() < 1e-13);
        let e = var(1, 0, 0.4).exp().ln();
        assert!((e.d1(0) - 1.0).abs() < 1e-14);
        assert!(e.d2(0, 0).abs() < 1e-14);
        assert!(e.d3(0, 0, 0).abs() < 1e-13);
    }

    #[test]
    fn partial_lowers_order() {
        let x = var(2, 0, 0.7);
        let y = var(2, 1, -0.2);
        let f = (&x * &y).exp();
        let fx = f.partial(0);
        assert_eq!(fx.order(), 2);
        // ∂x f = y e^{xy}; ∂y∂x f = (1 + xy) e^{xy}
        let e = (0.7f64 * -0.2).exp();
        assert!((fx.value() - -0.2 * e).abs() < 1e-15);
        assert!((fx.d1(1) - (1.0 - 0.14) * e).abs() < 1e-14);
        assert!((fx.d2(0, 1) - f.d3(0, 0, 1)).abs() < 1e-14);
    }

    #[test]
    fn tanh_and_sqrt_match_closed_forms() {
        let t = var(1, 0, 0.8).tanh();
        let th = 0.8f64.tanh();
        assert!((t.d1(0) - (1.0 - th * th)).abs() < 1e-15);
        assert!((t.d3(0, 0, 0) - (1.0 - th * th) * (6.0 * th * th - 2.0)).abs() < 1e-14);
        let r = var(1, 0, 2.0).sqrt();
        assert!((r.d3(0, 0, 0) - 0.375 * 2.0f64.powf(-2.5)).abs() < 1e-15);
    }
}
