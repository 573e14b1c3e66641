//! Horizontal action `inf ∫ ½|γ̇|² + W(γ) ds` over horizontal curves on H^n.
//!
//! Curves are parametrized by piecewise-constant frame controls
//! `γ̇ = Σ u_a e_a` over `M` equal segments, so horizontality holds by
//! construction. On H^n a straight horizontal segment moves `z` by
//! `(h/2) Σ (y_i u_{x_i} − x_i u_{y_i})` exactly, which makes the midpoint
//! reconstruction exact. The endpoint is enforced by an augmented
//! Lagrangian; inner problems use L-BFGS with adjoint gradients.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::HPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::VecDeque;

/// `W = (n/(n+3))² V + 3n K₄/(n+3)²`.
pub fn potential_w(n: usize, v: f64, k4: f64) -> f64 {
    let nf = n as f64;
    (nf / (nf + 3.0)).powi(2) * v + 3.0 * nf * k4 / (nf + 3.0).powi(2)
}

pub trait Potential: Sync + Send {
    /// Value and coordinate gradient at `x`.
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>);

    /// A known lower bound for `W`, if any.
    fn lower_bound(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantPotential(pub f64);

impl Potential for ConstantPotential {
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.0, vec![0.0; x.len()])
    }

    fn lower_bound(&self) -> Option<f64> {
        Some(self.0)
    }
}

/// Closed-form potential.
#[derive(Debug, Clone)]
pub struct AnalyticPotential {
    pub field: Field,
    pub lower: Option<f64>,
}

impl AnalyticPotential {
    pub fn new(field: Field, lower: Option<f64>) -> Self {
        Self { field, lower }
    }

    /// `W` built from a closed-form `V`; `v_lower` is a lower bound for `V`.
    pub fn from_v(n: usize, v: &Field, k4: f64, v_lower: Option<f64>) -> Self {
        let nf = n as f64;
        let a = (nf / (nf + 3.0)).powi(2);
        let field = v.clone() * a + Field::constant(3.0 * nf * k4 / (nf + 3.0).powi(2));
        Self { field, lower: v_lower.map(|l| potential_w(n, l, k4)) }
    }

    /// Adds a constant to the potential.
    pub fn shifted(&self, w: f64) -> Self {
        Self { field: self.field.clone() + Field::constant(w), lower: self.lower.map(|l| l + w) }
    }
}

impl Potential for AnalyticPotential {
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.field.value_grad(x, 0.0)
    }

    fn lower_bound(&self) -> Option<f64> {
        self.lower
    }
}

/// Action of the lattice element labelled `g = (a, b, m)` on H^n. Its centre
/// is `c = m − ½ a·b`, so every integer label is a lattice element and
/// `g·x = (a + x, c + x_z + ½ Σ(x_i b_i − a_i y_i))`.
pub fn lattice_translate(g: &[i64], x: &[f64]) -> Vec<f64> {
    let n = (x.len() - 1) / 2;
    let gf: Vec<f64> = g.iter().map(|&v| v as f64).collect();
    let mut out: Vec<f64> = (0..2 * n).map(|i| gf[i] + x[i]).collect();
    let mut z = gf[2 * n] + x[2 * n];
    for i in 0..n {
        z += 0.5 * (x[i] * gf[n + i] - gf[i] * x[n + i] - gf[i] * gf[n + i]);
    }
    out.push(z);
    out
}

/// A horizontal polygon given by its controls.
#[derive(Debug, Clone)]
pub struct HorizontalPath {
    pub s0: f64,
    pub s1: f64,
    /// `controls[m]`: frame components `(u_{x_1..n}, u_{y_1..n})` on segment m.
    pub controls: Vec<Vec<f64>>,
    pub knots: Vec<HPoint>,
}

fn step(n: usize, p: &[f64], u: &[f64], h: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    let mut dz = 0.0;
    for i in 0..n {
        q[i] += h * u[i];
        q[n + i] += h * u[n + i];
        dz += p[n + i] * u[i] - p[i] * u[n + i];
    }
    q[2 * n] += 0.5 * h * dz;
    q
}

fn midpoint(n: usize, p: &[f64], u: &[f64], h: f64) -> Vec<f64> {
    step(n, p, u, 0.5 * h)
}

impl HorizontalPath {
    pub fn from_controls(start: &HPoint, s0: f64, s1: f64, controls: Vec<Vec<f64>>) -> Self {
        let n = start.n();
        let h = (s1 - s0) / controls.len() as f64;
        let mut knots = vec![start.clone()];
        for u in &controls {
            let next = step(n, &knots.last().unwrap().coords, u, h);
            knots.push(HPoint::new(next));
        }
        Self { s0, s1, controls, knots }
    }

    pub fn segment_length(&self) -> f64 {
        (self.s1 - self.s0) / self.controls.len() as f64
    }

    /// Difference between stored knots and knots rebuilt from the controls.
    pub fn knot_mismatch(&self) -> f64 {
        let rebuilt = Self::from_controls(&self.knots[0], self.s0, self.s1, self.controls.clone());
        rebuilt
            .knots
            .iter()
            .zip(&self.knots)
            .flat_map(|(a, b)| a.coords.iter().zip(&b.coords).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.controls.iter().map(|u| u.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }

    /// Sub-Riemannian length.
    pub fn length(&self) -> f64 {
        self.speeds().iter().sum::<f64>() * self.segment_length()
    }

    /// `max |speed − mean| / mean`.
    pub fn speed_variation(&self) -> f64 {
        let s = self.speeds();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        if mean == 0.0 {
            return 0.0;
        }
        s.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) / mean
    }

    /// Action by the same midpoint quadrature used in the minimizer.
    pub fn action(&self, w: &dyn Potential) -> f64 {
        let n = self.knots[0].n();
        let h = self.segment_length();
        self.controls
            .iter()
            .zip(&self.knots)
            .map(|(u, p)| {
                let kin: f64 = 0.5 * u.iter().map(|v| v * v).sum::<f64>();
                h * (kin + w.value_grad(&midpoint(n, &p.coords, u, h)).0)
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Curves in H^n between the given points.
    Cover,
    /// Curves on the quotient: best over lattice images of the target.
    Nilmanifold,
}

#[derive(Debug, Clone)]
pub struct ActionOptions {
    pub segments: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Accepted endpoint error.
    pub tol: f64,
    /// Inner gradient tolerance (sup norm).
    pub gtol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Penalty growth factor when the endpoint error stalls.
    pub mu_growth: f64,
    pub domain: Domain,
    /// Lattice images with all components in `[−deck_range, deck_range]`.
    pub deck_range: i64,
}

impl Default for ActionOptions {
    fn default() -> Self {
        Self {
            segments: 32,
            restarts: 8,
            seed: 7,
            tol: 1e-6,
            gtol: 1e-8,
            max_outer: 40,
            max_inner: 4000,
            mu_growth: 10.0,
            domain: Domain::Cover,
            deck_range: 2,
        }
    }
}

impl ActionOptions {
    /// Settings of the refinement oracle: 10× segments, 50 restarts,
    /// slower penalty growth.
    pub fn oracle(base: &ActionOptions) -> Self {
        Self {
            segments: base.segments * 10,
            restarts: 50,
            seed: base.seed ^ 0x5eed_0ac1e_u64,
            mu_growth: 2.0,
            max_outer: 120,
            max_inner: 20000,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActionResult {
    pub cost: f64,
    pub endpoint_error: f64,
    pub path: HorizontalPath,
    pub restarts_used: usize,
    /// Lattice element whose image of the target was reached.
    pub deck: Vec<i64>,
}

/// Objective pieces for one control vector.
struct Eval {
    lagrangian: f64,
    grad: Vec<f64>,
    cost: f64,
    mismatch: Vec<f64>,
}

struct Problem<'a> {
    n: usize,
    m: usize,
    h: f64,
    start: Vec<f64>,
    target: Vec<f64>,
    w: &'a dyn Potential,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.m * 2 * self.n
    }

    fn eval(&self, u: &[f64], lambda: &[f64], mu: f64) -> Eval {
        let (n, h, k) = (self.n, self.h, 2 * self.n);
        let mut states = Vec::with_capacity(self.m + 1);
        states.push(self.start.clone());
        let mut cost = 0.0;
        let mut wgrads = Vec::with_capacity(self.m);
        for s in 0..self.m {
            let us = &u[s * k..(s + 1) * k];
            let p = states.last().unwrap();
            let (wv, wg) = self.w.value_grad(&midpoint(n, p, us, h));
            cost += h * (0.5 * us.iter().map(|v| v * v).sum::<f64>() + wv);
            wgrads.push(wg);
            let next = step(n, p, us, h);
            states.push(next);
        }
        let end = states.last().unwrap();
        let mismatch: Vec<f64> = end.iter().zip(&self.target).map(|(a, b)| a - b).collect();
        let lagrangian = cost
            + mismatch.iter().zip(lambda).map(|(c, l)| c * l).sum::<f64>()
            + 0.5 * mu * mismatch.iter().map(|c| c * c).sum::<f64>();
        // adjoint sweep
        let mut adj: Vec<f64> = mismatch.iter().zip(lambda).map(|(c, l)| l + mu * c).collect();
        let mut grad = vec![0.0; u.len()];
        for s in (0..self.m).rev() {
            let us = &u[s * k..(s + 1) * k];
            let p = &states[s];
            let gw = &wgrads[s];
            let az = adj[2 * n];
            let wz = gw[2 * n];
            let g = &mut grad[s * k..(s + 1) * k];
            for i in 0..n {
                // ∂σ/∂u_x = y, ∂σ/∂u_y = −x, σ = Σ(y u_x − x u_y)
                let (x, y) = (p[i], p[n + i]);
                g[i] = h * (us[i] + 0.5 * h * gw[i] + 0.25 * h * wz * y) + h * adj[i] + 0.5 * h * az * y;
                g[n + i] =
                    h * (us[n + i] + 0.5 * h * gw[n + i] - 0.25 * h * wz * x) + h * adj[n + i] - 0.5 * h * az * x;
            }
            let mut new_adj = adj.clone();
            for i in 0..n {
                // ∂σ/∂x = −u_y, ∂σ/∂y = u_x
                let (ux, uy) = (us[i], us[n + i]);
                new_adj[i] = adj[i] + h * (gw[i] - 0.25 * h * wz * uy) - 0.5 * h * az * uy;
                new_adj[n + i] = adj[n + i] + h * (gw[n + i] + 0.25 * h * wz * ux) + 0.5 * h * az * ux;
            }
            new_adj[2 * n] = az + h * wz;
            adj = new_adj;
        }
        Eval { lagrangian, grad, cost, mismatch }
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS with Armijo backtracking. Returns the final point and gradient sup-norm.
fn lbfgs<F>(mut x: Vec<f64>, mut f: F, gtol: f64, max_iter: usize) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    const MEM: usize = 12;
    let (mut fx, mut g) = f(&x);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEM);
    for _ in 0..max_iter {
        let gn = sup(&g);
        if gn < gtol || !fx.is_finite() {
            return (x, gn);
        }
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = hist.back().map(|(s, y, _)| dot(s, y) / dot(y, y)).unwrap_or(1.0 / gn.max(1.0));
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = g.iter().map(|v| -v / gn.max(1.0)).collect();
            slope = dot(&g, &dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let (fnew, gnew) = f(&xn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            return (x, gn);
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if hist.len() == MEM {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fnew;
        g = gnew;
    }
    let gn = sup(&g);
    (x, gn)
}

struct Attempt {
    cost: f64,
    err: f64,
    controls: Vec<f64>,
}

fn solve_from(pb: &Problem<'_>, mut u: Vec<f64>, opts: &ActionOptions) -> Attempt {
    let nc = pb.target.len();
    let mut lambda = vec![0.0; nc];
    let span = pb.h * pb.m as f64;
    let mut mu = 10.0 / span;
    let mut prev_err = f64::INFINITY;
    let mut last = pb.eval(&u, &lambda, mu);
    for _ in 0..opts.max_outer {
        let (un, gn) = lbfgs(
            u,
            |x| {
                let e = pb.eval(x, &lambda, mu);
                (e.lagrangian, e.grad)
            },
            opts.gtol,
            opts.max_inner,
        );
        u = un;
        last = pb.eval(&u, &lambda, mu);
        let err = dot(&last.mismatch, &last.mismatch).sqrt();
        if err < 1e-2 * opts.tol && gn < opts.gtol {
            break;
        }
        for (l, c) in lambda.iter_mut().zip(&last.mismatch) {
            *l += mu * c;
        }
        if err > 0.25 * prev_err {
            mu *= opts.mu_growth;
        }
        prev_err = err;
        if mu > 1e14 {
            break;
        }
    }
    let err = dot(&last.mismatch, &last.mismatch).sqrt();
    Attempt { cost: last.cost, err, controls: u }
}

fn initial_controls(pb: &Problem<'_>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (n, m) = (pb.n, pb.m);
    let k = 2 * n;
    let span = pb.h * m as f64;
    let base: Vec<f64> = (0..k).map(|a| (pb.target[a] - pb.start[a]) / span).collect();
    // rough loop speed for the required vertical displacement
    let dz = (pb.target[2 * n] - pb.start[2 * n]).abs();
    let amp = (2.0 * std::f64::consts::PI * (dz / std::f64::consts::PI).sqrt() + 0.2) / span;
    let modes = 3;
    let coefs: Vec<[f64; 2]> =
        (0..k * modes).map(|_| [rng.gen_range(-1.0..1.0) * amp, rng.gen_range(-1.0..1.0) * amp]).collect();
    let mut u = vec![0.0; m * k];
    for s in 0..m {
        let tau = (s as f64 + 0.5) / m as f64;
        for a in 0..k {
            let mut v = base[a];
            for j in 0..modes {
                let [c, d] = coefs[a * modes + j];
                let w = 2.0 * std::f64::consts::PI * (j + 1) as f64 * tau;
                v += (c * w.cos() + d * w.sin()) / (j + 1) as f64;
            }
            u[s * k + a] = v;
        }
    }
    // remove the discretization drift so the planar endpoint starts exact
    for a in 0..k {
        let mean: f64 = (0..m).map(|s| u[s * k + a]).sum::<f64>() / m as f64;
        for s in 0..m {
            u[s * k + a] += base[a] - mean;
        }
    }
    u
}

fn minimize_to(
    x0: &HPoint,
    target: &[f64],
    s0: f64,
    s1: f64,
    w: &dyn Potential,
    opts: &ActionOptions,
) -> Option<Attempt> {
    let n = x0.n();
    let pb = Problem { n, m: opts.segments, h: (s1 - s0) / opts.segments as f64, start: x0.coords.clone(), target: target.to_vec(), w };
    let attempts: Vec<Attempt> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64 + 1);
            let u0 = if r == 0 && pb.start == pb.target { vec![0.0; pb.dim()] } else { initial_controls(&pb, &mut rng) };
            solve_from(&pb, u0, opts)
        })
        .collect();
    attempts
        .into_iter()
        .filter(|a| a.err <= opts.tol && a.cost.is_finite())
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
}

fn lattice_elements(n: usize, range: i64) -> Vec<Vec<i64>> {
    let d = 2 * n + 1;
    let side = (2 * range + 1) as usize;
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|_| {
                    let v = (idx % side) as i64 - range;
                    idx /= side;
                    v
                })
                .collect()
        })
        .collect()
}

/// Lower bound on the length of a horizontal curve from `a` to `b` on H^n.
/// The vertical excess over the straight chord is a sum of signed areas
/// enclosed by the planar projections; the isoperimetric inequality bounds
/// it by `Σ (L_i + d_i)²/4π ≤ (L² + d²)/2π`.
pub fn length_lower_bound(a: &[f64], b: &[f64]) -> f64 {
    let n = (a.len() - 1) / 2;
    let d2: f64 = (0..2 * n).map(|i| (b[i] - a[i]).powi(2)).sum();
    let chord = step(n, a, &(0..2 * n).map(|i| b[i] - a[i]).collect::<Vec<_>>(), 1.0);
    let excess = (b[2 * n] - chord[2 * n]).abs();
    d2.max(2.0 * std::f64::consts::PI * excess - d2).sqrt()
}

/// Minimizes the discretized action; the cost is an upper bound on the
/// infimum (local minimization with restarts).
pub fn minimize_action(
    x0: &HPoint,
    x1: &HPoint,
    s0: f64,
    s1: f64,
    w: &dyn Potential,
    opts: &ActionOptions,
) -> Result<ActionResult> {
    if !(s0 >= 0.0) || !(s1 > s0) {
        return Err(Error::invalid("need s1 > s0 >= 0"));
    }
    if opts.segments < 16 {
        return Err(Error::invalid("need at least 16 segments"));
    }
    if opts.restarts == 0 {
        return Err(Error::invalid("need at least one restart"));
    }
    if x0.coords.len() != x1.coords.len() || x0.coords.len() % 2 == 0 {
        return Err(Error::invalid("endpoints must lie in the same H^n"));
    }
    let n = x0.n();
    let span = s1 - s0;
    let w_low = w.lower_bound().unwrap_or(f64::NEG_INFINITY);
    let mut candidates: Vec<(f64, Vec<i64>, Vec<f64>)> = match opts.domain {
        Domain::Cover => vec![(0.0, vec![0; 2 * n + 1], x1.coords.clone())],
        Domain::Nilmanifold => lattice_elements(n, opts.deck_range)
            .into_iter()
            .map(|g| {
                let target = lattice_translate(&g, &x1.coords);
                let len = length_lower_bound(&x0.coords, &target);
                (0.5 * len * len / span + span * w_low, g, target)
            })
            .collect(),
    };
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut best: Option<(Attempt, Vec<i64>)> = None;
    for (bound, g, target) in candidates {
        if let Some((b, _)) = &best {
            if bound >= b.cost {
                continue;
            }
        }
        if let Some(a) = minimize_to(x0, &target, s0, s1, w, opts) {
            if best.as_ref().map_or(true, |(b, _)| a.cost < b.cost) {
                best = Some((a, g));
            }
        }
    }
    let (a, deck) = best.ok_or_else(|| {
        Error::NoConvergence(format!("endpoint not reached within {} after {} restarts", opts.tol, opts.restarts))
    })?;
    let k = 2 * n;
    let controls: Vec<Vec<f64>> = a.controls.chunks(k).map(|c| c.to_vec()).collect();
    let path = HorizontalPath::from_controls(x0, s0, s1, controls);
    let planar: f64 = (0..k).map(|i| (path.knots.last().unwrap().coords[i] - x0.coords[i]).powi(2)).sum();
    if w_low >= 0.0 && a.cost < 0.5 * planar / span * (1.0 - 1e-9) - 1e-12 {
        return Err(Error::Verification(format!("planar lower bound violated: cost {}", a.cost)));
    }
    Ok(ActionResult { cost: a.cost, endpoint_error: a.err, path, restarts_used: opts.restarts, deck })
}

/// Refinement oracle: the same transcription at 10× resolution with 50
/// restarts and slower penalty growth.
pub fn oracle_action(x0: &HPoint, x1: &HPoint, s0: f64, s1: f64, w: &dyn Potential) -> Result<f64> {
    let opts = ActionOptions::oracle(&ActionOptions::default());
    minimize_action(x0, x1, s0, s1, w, &opts).map(|r| r.cost)
}
