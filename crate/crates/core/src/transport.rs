//! Parallel adapted frames along curves and the Riccati law for `∇X_t`
//! along flows of `X_t = ∇_hor f_t`.
//!
//! Frames are stored as matrices whose rows are frame vectors written in the
//! left-invariant basis; vertical members come first, horizontal second.
//! All spatial derivatives of `f` are exact (jets); only time derivatives
//! along the flow are taken by central differences.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::{values, Calc, Connection, Geometry, HPoint, VField};
use nalgebra::DMatrix;

/// A curve sampled at uniform times with its velocity in frame components.
#[derive(Debug, Clone)]
pub struct Path {
    pub times: Vec<f64>,
    pub points: Vec<HPoint>,
    pub velocity: Vec<Vec<f64>>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

fn steps_for(t0: f64, t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_end >= t0) || !dt.is_finite() || !t_end.is_finite() {
        return Err(Error::invalid("path integration needs dt > 0 and t_end >= t0"));
    }
    Ok(((t_end - t0) / dt).round() as usize)
}

fn coordinate_velocity(geom: &Geometry, x: &[f64], comps: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; x.len()];
    for (a, &c) in comps.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for (vi, e) in v.iter_mut().zip(geom.model().frame_coords(a, x)) {
            *vi += c * e;
        }
    }
    v
}

/// RK4 in coordinates for `γ̇ = Σ_a u^a(t, γ) e_a(γ)`, where `vel` returns
/// the frame components `u^a`.
pub fn integrate_path<F>(geom: &Geometry, x0: &HPoint, t0: f64, t_end: f64, dt: f64, vel: F) -> Result<Path>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let steps = steps_for(t0, t_end, dt)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    let mut velocity = Vec::with_capacity(steps + 1);
    let mut x = x0.coords.clone();
    let rhs = |t: f64, x: &[f64]| coordinate_velocity(geom, x, &vel(t, x));
    let axpy = |x: &[f64], h: f64, k: &[f64]| x.iter().zip(k).map(|(a, b)| a + h * b).collect::<Vec<_>>();
    for s in 0..=steps {
        let t = t0 + s as f64 * dt;
        times.push(t);
        points.push(HPoint::new(x.clone()));
        velocity.push(vel(t, &x));
        if s == steps {
            break;
        }
        let k1 = rhs(t, &x);
        let k2 = rhs(t + 0.5 * dt, &axpy(&x, 0.5 * dt, &k1));
        let k3 = rhs(t + 0.5 * dt, &axpy(&x, 0.5 * dt, &k2));
        let k4 = rhs(t + dt, &axpy(&x, dt, &k3));
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp(format!("path left the finite range at t = {t}")));
        }
    }
    Ok(Path { times, points, velocity })
}

/// Frame components of `∇_hor f_t` at `x`.
pub fn horizontal_gradient(geom: &Geometry, f: &Field, t: f64, x: &[f64]) -> Vec<f64> {
    let calc = geom.calc(&HPoint::new(x.to_vec()), None);
    let fj = calc.field(f, t);
    values(&calc.grad_hor(&fj))
}

/// Flow line of `∇_hor f_t` from `x0` on `[0, t_end]`.
pub fn flow_map(geom: &Geometry, f: &Field, x0: &HPoint, t_end: f64, dt: f64) -> Result<Path> {
    integrate_path(geom, x0, 0.0, t_end, dt, |t, x| horizontal_gradient(geom, f, t, x))
}

/// A parallel adapted frame along a path.
#[derive(Debug, Clone)]
pub struct TransportedFrame {
    pub path: Path,
    /// Rows: frame vectors in left-invariant components, vertical first.
    pub frames: Vec<DMatrix<f64>>,
    pub n_vertical: usize,
}

fn vertical_indices(geom: &Geometry) -> Vec<usize> {
    (0..geom.dim()).filter(|&a| !geom.model().is_horizontal(a)).collect()
}

/// The left-invariant frame in adapted order `(R; X₁, Y₁, …)`.
pub fn standard_adapted_frame(geom: &Geometry) -> DMatrix<f64> {
    let d = geom.dim();
    let order: Vec<usize> = vertical_indices(geom).into_iter().chain(geom.horizontal_indices()).collect();
    DMatrix::from_fn(d, d, |i, j| if order[i] == j { 1.0 } else { 0.0 })
}

fn orthonormality_defect(f: &DMatrix<f64>) -> f64 {
    let d = f.nrows();
    (f * f.transpose() - DMatrix::identity(d, d)).amax()
}

fn check_adapted(geom: &Geometry, frame: &DMatrix<f64>, nv: usize) -> Result<()> {
    let d = geom.dim();
    if frame.nrows() != d || frame.ncols() != d {
        return Err(Error::invalid(format!("frame must be {d}×{d}")));
    }
    if orthonormality_defect(frame) > 1e-10 {
        return Err(Error::invalid("initial frame is not orthonormal"));
    }
    for i in 0..d {
        for j in 0..d {
            let wrong_block = (i < nv) == geom.model().is_horizontal(j);
            if wrong_block && frame[(i, j)].abs() > 1e-12 {
                return Err(Error::invalid("initial frame is not adapted"));
            }
        }
    }
    Ok(())
}

/// `A_{ca} = Σ_b u^b Γ(b, a, c)` restricted to same-type pairs.
fn block_connection(geom: &Geometry, vel: &[f64]) -> DMatrix<f64> {
    let d = geom.dim();
    let m = geom.model();
    DMatrix::from_fn(d, d, |c, a| {
        if m.is_horizontal(a) != m.is_horizontal(c) {
            return 0.0;
        }
        (0..d).map(|b| vel[b] * geom.gamma(Connection::LeviCivita, b, a, c)).sum()
    })
}

/// Transports an adapted frame so that horizontal members have vertical
/// covariant derivative and vertical members horizontal. Each step is the
/// Cayley map of the skew block generator at the midpoint velocity, so
/// orthonormality holds to rounding.
pub fn transport(geom: &Geometry, path: &Path, initial: &DMatrix<f64>) -> Result<TransportedFrame> {
    let nv = vertical_indices(geom).len();
    check_adapted(geom, initial, nv)?;
    let d = geom.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let mut frames = Vec::with_capacity(path.len());
    let mut cur = initial.clone();
    frames.push(cur.clone());
    for s in 1..path.len() {
        let h = path.times[s] - path.times[s - 1];
        let mid: Vec<f64> = path.velocity[s - 1].iter().zip(&path.velocity[s]).map(|(a, b)| 0.5 * (a + b)).collect();
        let a = block_connection(geom, &mid) * (0.5 * h);
        let lhs = &id + &a;
        let rhs = &id - &a;
        let cay = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NoConvergence("singular Cayley step".into()))?;
        cur = &cur * cay.transpose();
        if orthonormality_defect(&cur) > 1e-8 {
            return Err(Error::NoConvergence(format!(
                "frame orthonormality drifted at t = {}; reduce dt",
                path.times[s]
            )));
        }
        frames.push(cur.clone());
    }
    Ok(TransportedFrame { path: path.clone(), frames, n_vertical: nv })
}

impl TransportedFrame {
    /// Covariant derivative of frame row `i` at interior sample `s`,
    /// components by central differences plus the exact connection term.
    fn covariant_rate(&self, geom: &Geometry, s: usize, i: usize) -> Vec<f64> {
        let d = geom.dim();
        let h = self.path.times[s + 1] - self.path.times[s - 1];
        let vel = &self.path.velocity[s];
        let w = self.frames[s].row(i);
        (0..d)
            .map(|c| {
                let mut r = (self.frames[s + 1][(i, c)] - self.frames[s - 1][(i, c)]) / h;
                for a in 0..d {
                    for (b, vb) in vel.iter().enumerate() {
                        r += vb * w[a] * geom.gamma(Connection::LeviCivita, b, a, c);
                    }
                }
                r
            })
            .collect()
    }

    /// Largest violation of the defining conditions: horizontal part of
    /// `v̇_i` and vertical part of `u̇_j` over interior samples.
    pub fn adaptedness_defect(&self, geom: &Geometry) -> f64 {
        let d = geom.dim();
        let m = geom.model();
        let mut worst: f64 = 0.0;
        for s in 1..self.frames.len().saturating_sub(1) {
            for i in 0..d {
                let rate = self.covariant_rate(geom, s, i);
                let vertical_member = i < self.n_vertical;
                for (c, r) in rate.iter().enumerate() {
                    if m.is_horizontal(c) != vertical_member {
                        worst = worst.max(r.abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest horizontal component of a vertical member or vice versa.
    pub fn block_leak(&self, geom: &Geometry) -> f64 {
        let m = geom.model();
        let mut worst: f64 = 0.0;
        for f in &self.frames {
            for i in 0..f.nrows() {
                for j in 0..f.ncols() {
                    if (i < self.n_vertical) == m.is_horizontal(j) {
                        worst = worst.max(f[(i, j)].abs());
                    }
                }
            }
        }
        worst
    }

    pub fn max_orthonormality_defect(&self) -> f64 {
        self.frames.iter().map(orthonormality_defect).fold(0.0, f64::max)
    }
}

/// Matrices of the Riccati law along one flow line.
#[derive(Debug, Clone)]
pub struct RiccatiTrace {
    pub times: Vec<f64>,
    pub n: Vec<DMatrix<f64>>,
    /// `W_ij = ⟨u̇_i, v_j⟩`, size (vertical × horizontal).
    pub w: Vec<DMatrix<f64>>,
    pub frak_w: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub m: Vec<DMatrix<f64>>,
    /// `‖Ṅ + N² + N𝔚 + 𝔚ᵀN + R − M‖∞` at interior samples (NaN at the ends).
    pub residual: Vec<f64>,
    /// `‖𝒩₁₀ − Wᵀ‖∞` per sample.
    pub n10_defect: Vec<f64>,
    /// `|tr 𝒩₁₁ − Δ_hor f|` per sample.
    pub trace_defect: Vec<f64>,
    pub n_vertical: usize,
}

impl RiccatiTrace {
    pub const CSV_HEADER: &'static str = "t,residual,margin_keylem,res_mainlem1_1,res_mainlem1_2,res_mainlem1_3";

    pub fn blocks(&self, s: usize) -> [DMatrix<f64>; 4] {
        let nv = self.n_vertical;
        let d = self.n[s].nrows();
        let nh = d - nv;
        let n = &self.n[s];
        [
            n.view((0, 0), (nv, nv)).into_owned(),
            n.view((0, nv), (nv, nh)).into_owned(),
            n.view((nv, 0), (nh, nv)).into_owned(),
            n.view((nv, nv), (nh, nh)).into_owned(),
        ]
    }

    /// Maximum residual over the interior.
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().filter(|r| r.is_finite()).fold(0.0, |a, &b| a.max(b))
    }
}

fn frame_rows(calc: &Calc<'_>, frame: &DMatrix<f64>) -> Vec<VField> {
    (0..frame.nrows())
        .map(|i| calc.constant_vector(&frame.row(i).iter().copied().collect::<Vec<_>>()))
        .collect()
}

fn gram(calc: &Calc<'_>, rows: &[VField], f: impl Fn(&VField) -> VField) -> DMatrix<f64> {
    let d = rows.len();
    let images: Vec<VField> = rows.iter().map(&f).collect();
    DMatrix::from_fn(d, d, |i, j| calc.inner(&images[i], &rows[j]).value())
}

/// Builds `N, W, 𝔚, R, M` along the flow of `∇_hor f_t` and evaluates the
/// Riccati residual with `Ṅ` from central differences.
pub fn riccati_residual(geom: &Geometry, f: &Field, x0: &HPoint, t_end: f64, dt: f64) -> Result<RiccatiTrace> {
    let path = flow_map(geom, f, x0, t_end, dt)?;
    let tf = transport(geom, &path, &standard_adapted_frame(geom))?;
    riccati_along(geom, f, &tf)
}

/// Riccati matrices along an already transported flow line of `∇_hor f_t`.
pub fn riccati_along(geom: &Geometry, f: &Field, tf: &TransportedFrame) -> Result<RiccatiTrace> {
    let d = geom.dim();
    let nv = tf.n_vertical;
    let nh = d - nv;
    let len = tf.path.len();
    let mut trace = RiccatiTrace {
        times: tf.path.times.clone(),
        n: Vec::with_capacity(len),
        w: Vec::with_capacity(len),
        frak_w: Vec::with_capacity(len),
        r: Vec::with_capacity(len),
        m: Vec::with_capacity(len),
        residual: vec![f64::NAN; len],
        n10_defect: Vec::with_capacity(len),
        trace_defect: Vec::with_capacity(len),
        n_vertical: nv,
    };
    for s in 0..len {
        let t = tf.path.times[s];
        let calc = geom.calc(&tf.path.points[s], Some(t));
        let fj = calc.field(f, t);
        let x = calc.grad_hor(&fj);
        let rows = frame_rows(&calc, &tf.frames[s]);
        let n = gram(&calc, &rows, |e| calc.nabla(e, &x));
        let r = gram(&calc, &rows, |e| calc.rm(e, &x, &x, Connection::LeviCivita));
        let accel = calc.add(&calc.grad_hor(&calc.dt(&fj)), &calc.nabla(&x, &x));
        let m = gram(&calc, &rows, |e| calc.nabla(e, &accel));
        let vel = &tf.path.velocity[s];
        let frame = &tf.frames[s];
        let w = DMatrix::from_fn(nv, nh, |i, j| {
            let mut acc = 0.0;
            for c in 0..d {
                let vj = frame[(nv + j, c)];
                if vj == 0.0 {
                    continue;
                }
                for a in 0..d {
                    for (b, vb) in vel.iter().enumerate() {
                        acc += vb * frame[(i, a)] * geom.gamma(Connection::LeviCivita, b, a, c) * vj;
                    }
                }
            }
            acc
        });
        let mut frak = DMatrix::zeros(d, d);
        frak.view_mut((0, nv), (nv, nh)).copy_from(&w);
        frak.view_mut((nv, 0), (nh, nv)).copy_from(&(-w.transpose()));
        let n10 = n.view((nv, 0), (nh, nv)).into_owned();
        trace.n10_defect.push((n10 - w.transpose()).amax());
        let lap = calc.sub_laplacian(&fj).value();
        let tr11: f64 = (nv..d).map(|i| n[(i, i)]).sum();
        trace.trace_defect.push((tr11 - lap).abs());
        trace.n.push(n);
        trace.w.push(w);
        trace.frak_w.push(frak);
        trace.r.push(r);
        trace.m.push(m);
    }
    for s in 1..len.saturating_sub(1) {
        let h = trace.times[s + 1] - trace.times[s - 1];
        let n_dot = (&trace.n[s + 1] - &trace.n[s - 1]) / h;
        let n = &trace.n[s];
        let fw = &trace.frak_w[s];
        let rhs = -(n * n) - n * fw - fw.transpose() * n - &trace.r[s] + &trace.m[s];
        trace.residual[s] = (n_dot - rhs).amax();
    }
    Ok(trace)
}

/// Differential inequality for `Δ_hor f_t` along the flow.
#[derive(Debug, Clone)]
pub struct KeylemTrace {
    pub times: Vec<f64>,
    /// `d/dt Δ_hor f_t(φ_t)` by central differences (NaN at the ends).
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// `rhs − lhs`.
    pub margin: Vec<f64>,
}

impl KeylemTrace {
    pub fn min_margin(&self) -> f64 {
        self.margin.iter().filter(|m| m.is_finite()).fold(f64::INFINITY, |a, &b| a.min(b))
    }
}

fn central_rates(times: &[f64], vals: &[f64]) -> Vec<f64> {
    let len = vals.len();
    (0..len)
        .map(|s| {
            if s == 0 || s + 1 == len {
                f64::NAN
            } else {
                (vals[s + 1] - vals[s - 1]) / (times[s + 1] - times[s - 1])
            }
        })
        .collect()
}

/// Evaluates both sides of the bound
/// `d/dt Δf ≤ −(Δf)²/k + Δ(ḟ + ½|∇_hor f|²) − ric^hor(∇f,∇f) + ric^ver(∇_hor f,∇_hor f) − 4⟨∇_{∇_hor f}R, ∇_R ∇_hor f⟩`.
pub fn keylem_check(geom: &Geometry, f: &Field, x0: &HPoint, t_end: f64, dt: f64) -> Result<KeylemTrace> {
    let path = flow_map(geom, f, x0, t_end, dt)?;
    keylem_along(geom, f, &path)
}

pub fn keylem_along(geom: &Geometry, f: &Field, path: &Path) -> Result<KeylemTrace> {
    let k = geom.horizontal_rank() as f64;
    let mut lap_series = Vec::with_capacity(path.len());
    let mut rhs = Vec::with_capacity(path.len());
    for (s, p) in path.points.iter().enumerate() {
        let t = path.times[s];
        let calc = geom.calc(p, Some(t));
        let fj = calc.field(f, t);
        let grad = calc.grad(&fj);
        let gh = calc.grad_hor(&fj);
        let lap = calc.sub_laplacian(&fj).value();
        let inner = calc.dt(&fj) + calc.norm_sq(&gh).scale(0.5);
        let reeb = calc.reeb_field();
        let twist = calc.inner(&calc.nabla(&gh, &reeb), &calc.nabla(&reeb, &gh)).value();
        let r = -lap * lap / k + calc.sub_laplacian(&inner).value() - calc.ric_hor(&grad, &grad).value()
            + calc.ric_ver(&gh, &gh).value()
            - 4.0 * twist;
        lap_series.push(lap);
        rhs.push(r);
    }
    let lhs = central_rates(&path.times, &lap_series);
    let margin = rhs.iter().zip(&lhs).map(|(r, l)| r - l).collect();
    Ok(KeylemTrace { times: path.times.clone(), lhs, rhs, margin })
}

/// Residuals of the three transport identities for a manufactured solution
/// of `ḟ = Δ_hor f − ½|∇_hor f|² + V + Kf` with `V := ḟ + ½|∇_hor f|² − Δ_hor f − Kf`.
#[derive(Debug, Clone)]
pub struct MainlemTrace {
    pub times: Vec<f64>,
    pub residuals: [Vec<f64>; 3],
}

impl MainlemTrace {
    pub fn max_residuals(&self) -> [f64; 3] {
        let m = |v: &Vec<f64>| v.iter().filter(|r| r.is_finite()).fold(0.0f64, |a, &b| a.max(b));
        [m(&self.residuals[0]), m(&self.residuals[1]), m(&self.residuals[2])]
    }
}

/// Item (2) carries `∂_t V`, which vanishes for time-independent `V`;
/// item (3) carries `K|∇_ver f|²`.
pub fn mainlem1_check(geom: &Geometry, f: &Field, k: f64, x0: &HPoint, t_end: f64, dt: f64) -> Result<MainlemTrace> {
    let path = flow_map(geom, f, x0, t_end, dt)?;
    mainlem1_along(geom, f, k, &path)
}

pub fn mainlem1_along(geom: &Geometry, f: &Field, k: f64, path: &Path) -> Result<MainlemTrace> {
    let len = path.len();
    let mut tracked = [Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len)];
    let mut predicted = [Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len)];
    for (s, p) in path.points.iter().enumerate() {
        let t = path.times[s];
        let calc = geom.calc(p, Some(t));
        let fj = calc.field(f, t);
        let fd = calc.dt(&fj);
        let gh = calc.grad_hor(&fj);
        let gv = calc.grad_ver(&fj);
        let lap = calc.sub_laplacian(&fj);
        let v = &(&fd + &calc.norm_sq(&gh).scale(0.5)) - &(&lap + &fj.scale(k));
        let reeb = calc.reeb_field();
        let ver_half = calc.norm_sq(&gv).scale(0.5);

        tracked[0].push(fj.value());
        predicted[0].push(-fd.value() + 2.0 * lap.value() + 2.0 * v.value() + 2.0 * k * fj.value());

        tracked[1].push(fd.value());
        predicted[1].push(calc.sub_laplacian(&fd).value() + k * fd.value() + calc.dt(&v).value());

        let twist = calc.proj_hor(&calc.sub(&calc.nabla(&reeb, &gh), &calc.nabla(&gh, &reeb)));
        tracked[2].push(ver_half.value());
        predicted[2].push(
            calc.sub_laplacian(&ver_half).value() + k * 2.0 * ver_half.value() - calc.norm_sq(&twist).value()
                + calc.inner(&gv, &calc.grad(&v)).value(),
        );
    }
    let residuals = [0, 1, 2].map(|i| {
        central_rates(&path.times, &tracked[i])
            .iter()
            .zip(&predicted[i])
            .map(|(l, r)| (l - r).abs())
            .collect::<Vec<_>>()
    });
    Ok(MainlemTrace { times: path.times.clone(), residuals })
}

/// Fixed smooth time-dependent family used by the transport checks.
pub fn test_family(n: usize) -> Field {
    let c = crate::field::Coords { n };
    let t = Field::time();
    let mut f = (c.x(0) * 0.7 + c.y(0) * 0.4).sin() * 0.5 + (c.z() * 0.9 + t.clone() * 0.3).cos() * 0.3;
    f = f + c.x(0) * c.y(0) * 0.2 + (c.y(0) - t * 0.5).powi(2) * 0.1;
    for i in 1..n {
        f = f + (c.x(i) * 0.8 - c.y(i) * 0.3).cos() * 0.25;
    }
    f
}
