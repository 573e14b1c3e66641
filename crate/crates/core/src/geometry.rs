//! Differential geometry of the Heisenberg group H^n as a Sasakian manifold.
//!
//! Everything is expressed in the left-invariant orthonormal frame
//! `e = (X_1..X_n, Y_1..Y_n, R)` with
//!
//! ```text
//! X_i = ∂x_i + ½ y_i ∂z,   Y_i = ∂y_i − ½ x_i ∂z,   R = ∂z.
//! ```
//!
//! Consumers only see the [`FrameModel`] accessors (frame coefficients,
//! structure constants, J, Reeb index), so another Sasakian example with a
//! constant-structure frame can be added without touching them.
//!
//! The Levi-Civita table is obtained once from the structure constants via
//! the Koszul formula; the Tanaka table follows from it. Curvature tensors
//! are evaluated on frame-constant extensions.

use crate::field::Field;
use crate::jet::Jet;
use nalgebra::DMatrix;
use std::sync::Arc;

/// A point of H^n in global coordinates `(x_1..x_n, y_1..y_n, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPoint {
    pub coords: Vec<f64>,
}

impl HPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        debug_assert!(coords.len() % 2 == 1, "H^n has odd dimension");
        debug_assert!(coords.iter().all(|c| c.is_finite()));
        Self { coords }
    }

    pub fn origin(n: usize) -> Self {
        Self { coords: vec![0.0; 2 * n + 1] }
    }

    pub fn n(&self) -> usize {
        (self.coords.len() - 1) / 2
    }
}

/// Tangent vector in frame components: `h` along X_1..X_n,Y_1..Y_n and `v`
/// along R.
#[derive(Debug, Clone, PartialEq)]
pub struct HTangent {
    pub base: HPoint,
    pub h: Vec<f64>,
    pub v: f64,
}

impl HTangent {
    pub fn new(base: HPoint, h: Vec<f64>, v: f64) -> Self {
        debug_assert_eq!(h.len(), 2 * base.n());
        Self { base, h, v }
    }

    pub fn from_components(base: HPoint, comps: &[f64]) -> Self {
        let k = comps.len() - 1;
        Self { base, h: comps[..k].to_vec(), v: comps[k] }
    }

    /// Frame vector `e_a` at `base`.
    pub fn basis(base: HPoint, a: usize) -> Self {
        let mut comps = vec![0.0; base.coords.len()];
        comps[a] = 1.0;
        Self::from_components(base, &comps)
    }

    pub fn components(&self) -> Vec<f64> {
        let mut c = self.h.clone();
        c.push(self.v);
        c
    }

    pub fn norm_sq(&self) -> f64 {
        self.h.iter().map(|x| x * x).sum::<f64>() + self.v * self.v
    }

    pub fn horizontal(&self) -> Self {
        Self { base: self.base.clone(), h: self.h.clone(), v: 0.0 }
    }

    pub fn vertical(&self) -> Self {
        Self { base: self.base.clone(), h: vec![0.0; self.h.len()], v: self.v }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.components(), &other.components())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A Lie-group frame model with constant structure coefficients.
pub trait FrameModel: Send + Sync + std::fmt::Debug {
    /// Sasakian `n`; the manifold has dimension 2n+1.
    fn n(&self) -> usize;

    fn dim(&self) -> usize {
        2 * self.n() + 1
    }

    /// Index of the Reeb field R in the frame.
    fn reeb(&self) -> usize {
        2 * self.n()
    }

    fn is_horizontal(&self, a: usize) -> bool {
        a != self.reeb()
    }

    /// Coordinate components of `e_a` at `coords`.
    fn frame_coords(&self, a: usize, coords: &[f64]) -> Vec<f64>;

    /// `⟨[e_a, e_b], e_c⟩`.
    fn structure(&self, a: usize, b: usize, c: usize) -> f64;

    /// `⟨J e_b, e_c⟩` stored as `j[(c, b)]`.
    fn j_matrix(&self) -> DMatrix<f64>;

    /// `e_a`'s coordinate components as affine functions: `(constant, Σ slope·coord)`.
    fn frame_affine(&self, a: usize) -> Vec<AffineCoef>;
}

/// Coordinate coefficient of a frame field, affine in the coordinates.
#[derive(Debug, Clone, Default)]
pub struct AffineCoef {
    pub constant: f64,
    pub slopes: Vec<(usize, f64)>,
}

/// The Heisenberg group H^n.
#[derive(Debug, Clone, Copy)]
pub struct Heisenberg {
    pub n: usize,
}

impl Heisenberg {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "H^n needs n >= 1");
        Self { n }
    }
}

impl FrameModel for Heisenberg {
    fn n(&self) -> usize {
        self.n
    }

    fn frame_coords(&self, a: usize, coords: &[f64]) -> Vec<f64> {
        self.frame_affine(a)
            .iter()
            .map(|c| c.constant + c.slopes.iter().map(|&(i, s)| s * coords[i]).sum::<f64>())
            .collect()
    }

    fn frame_affine(&self, a: usize) -> Vec<AffineCoef> {
        let n = self.n;
        let z = 2 * n;
        let mut out = vec![AffineCoef::default(); 2 * n + 1];
        if a < n {
            out[a].constant = 1.0;
            out[z].slopes.push((n + a, 0.5));
        } else if a < 2 * n {
            let i = a - n;
            out[a].constant = 1.0;
            out[z].slopes.push((i, -0.5));
        } else {
            out[z].constant = 1.0;
        }
        out
    }

    fn structure(&self, a: usize, b: usize, c: usize) -> f64 {
        let n = self.n;
        if c != 2 * n {
            return 0.0;
        }
        // [X_i, Y_i] = −R
        if a < n && b == a + n {
            -1.0
        } else if b < n && a == b + n {
            1.0
        } else {
            0.0
        }
    }

    fn j_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut j = DMatrix::zeros(2 * n + 1, 2 * n + 1);
        for i in 0..n {
            // J X_i = −Y_i, J Y_i = X_i
            j[(n + i, i)] = -1.0;
            j[(i, n + i)] = 1.0;
        }
        j
    }
}

/// Which connection to differentiate with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connection {
    LeviCivita,
    Tanaka,
}

/// Constant connection coefficients `⟨∇_{e_a} e_b, e_c⟩`.
#[derive(Debug, Clone)]
pub struct ConnectionTable {
    pub dim: usize,
    pub gamma: Vec<f64>,
    pub tanaka_gamma: Vec<f64>,
}

impl ConnectionTable {
    #[inline]
    pub fn idx(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.dim + b) * self.dim + c
    }

    #[inline]
    pub fn get(&self, conn: Connection, a: usize, b: usize, c: usize) -> f64 {
        let i = self.idx(a, b, c);
        match conn {
            Connection::LeviCivita => self.gamma[i],
            Connection::Tanaka => self.tanaka_gamma[i],
        }
    }
}

/// Levi-Civita (Koszul) and Tanaka tables of a frame model.
pub fn build_connection_tables(model: &dyn FrameModel) -> ConnectionTable {
    let d = model.dim();
    let r = model.reeb();
    let jm = model.j_matrix();
    let mut gamma = vec![0.0; d * d * d];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                let s = |x, y, z| model.structure(x, y, z);
                gamma[(a * d + b) * d + c] = 0.5 * (s(a, b, c) - s(b, c, a) + s(c, a, b));
            }
        }
    }
    // ∇̄_a e_b = ∇_a e_b + ½⟨R,e_a⟩ J e_b + ½⟨R,e_b⟩ J e_a − ½⟨J e_a, e_b⟩ R
    let mut tanaka = gamma.clone();
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                let mut extra = 0.0;
                if a == r {
                    extra += 0.5 * jm[(c, b)];
                }
                if b == r {
                    extra += 0.5 * jm[(c, a)];
                }
                if c == r {
                    extra -= 0.5 * jm[(b, a)];
                }
                tanaka[(a * d + b) * d + c] += extra;
            }
        }
    }
    ConnectionTable { dim: d, gamma, tanaka_gamma: tanaka }
}

/// Geometry bundle: frame model plus derived connection and curvature data.
#[derive(Debug, Clone)]
pub struct Geometry {
    model: Arc<dyn FrameModel>,
    pub table: ConnectionTable,
    structure: Vec<f64>,
    j: DMatrix<f64>,
    /// `⟨Rm(e_a,e_b)e_c, e_d⟩`, Levi-Civita.
    rm: Vec<f64>,
    /// Same for the Tanaka connection.
    rm_bar: Vec<f64>,
}

impl Geometry {
    pub fn new(model: Arc<dyn FrameModel>) -> Self {
        let d = model.dim();
        let table = build_connection_tables(model.as_ref());
        let mut structure = vec![0.0; d * d * d];
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    structure[(a * d + b) * d + c] = model.structure(a, b, c);
                }
            }
        }
        let j = model.j_matrix();
        let mut g = Self { model, table, structure, j, rm: Vec::new(), rm_bar: Vec::new() };
        g.rm = g.curvature_tensor(Connection::LeviCivita);
        g.rm_bar = g.curvature_tensor(Connection::Tanaka);
        g
    }

    pub fn heisenberg(n: usize) -> Self {
        Self::new(Arc::new(Heisenberg::new(n)))
    }

    pub fn model(&self) -> &dyn FrameModel {
        self.model.as_ref()
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn reeb(&self) -> usize {
        self.model.reeb()
    }

    /// Rank of the horizontal distribution.
    pub fn horizontal_rank(&self) -> usize {
        self.dim() - 1
    }

    pub fn horizontal_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim()).filter(move |&a| self.model.is_horizontal(a))
    }

    #[inline]
    pub fn structure(&self, a: usize, b: usize, c: usize) -> f64 {
        let d = self.dim();
        self.structure[(a * d + b) * d + c]
    }

    #[inline]
    pub fn gamma(&self, conn: Connection, a: usize, b: usize, c: usize) -> f64 {
        self.table.get(conn, a, b, c)
    }

    pub fn j_matrix(&self) -> &DMatrix<f64> {
        &self.j
    }

    #[inline]
    pub fn rm(&self, conn: Connection, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let n = self.dim();
        let i = ((a * n + b) * n + c) * n + d;
        match conn {
            Connection::LeviCivita => self.rm[i],
            Connection::Tanaka => self.rm_bar[i],
        }
    }

    fn curvature_tensor(&self, conn: Connection) -> Vec<f64> {
        let n = self.dim();
        let g = |a, b, c| self.gamma(conn, a, b, c);
        let mut out = vec![0.0; n * n * n * n];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let mut s = 0.0;
                        for e in 0..n {
                            s += g(b, c, e) * g(a, e, d) - g(a, c, e) * g(b, e, d)
                                - self.structure(a, b, e) * g(e, c, d);
                        }
                        out[((a * n + b) * n + c) * n + d] = s;
                    }
                }
            }
        }
        out
    }

    /// Coordinate vectors of the frame at `p`.
    pub fn frame_at(&self, p: &HPoint) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|a| self.model.frame_coords(a, &p.coords)).collect()
    }

    /// `[e_a, e_b]` in frame components.
    pub fn bracket(&self, a: usize, b: usize) -> Vec<f64> {
        (0..self.dim()).map(|c| self.structure(a, b, c)).collect()
    }

    pub fn j_components(&self, w: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|c| (0..d).map(|b| self.j[(c, b)] * w[b]).sum()).collect()
    }

    pub fn j_apply(&self, w: &HTangent) -> HTangent {
        HTangent::from_components(w.base.clone(), &self.j_components(&w.components()))
    }

    /// α(w): the contact form reads the R component in this frame.
    pub fn contact_form(&self, w: &HTangent) -> f64 {
        w.components()[self.reeb()]
    }

    /// `R(w1,w2)w3` in frame components for pointwise frame-constant vectors.
    pub fn riemann_components(&self, w1: &[f64], w2: &[f64], w3: &[f64], conn: Connection) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for a in 0..n {
            if w1[a] == 0.0 {
                continue;
            }
            for b in 0..n {
                if w2[b] == 0.0 {
                    continue;
                }
                for c in 0..n {
                    let s = w1[a] * w2[b] * w3[c];
                    if s == 0.0 {
                        continue;
                    }
                    for (d, o) in out.iter_mut().enumerate() {
                        *o += s * self.rm(conn, a, b, c, d);
                    }
                }
            }
        }
        out
    }

    pub fn riemann(&self, w1: &HTangent, w2: &HTangent, w3: &HTangent, conn: Connection) -> HTangent {
        let c = self.riemann_components(&w1.components(), &w2.components(), &w3.components(), conn);
        HTangent::from_components(w1.base.clone(), &c)
    }

    /// `Σ_{i∈I} ⟨Rm(e_i, v) v, e_i⟩` over the frame indices in `I`.
    fn ricci_over(&self, v: &[f64], conn: Connection, horizontal: Option<bool>) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim() {
            let keep = match horizontal {
                Some(h) => self.model.is_horizontal(i) == h,
                None => true,
            };
            if !keep {
                continue;
            }
            let mut e = vec![0.0; self.dim()];
            e[i] = 1.0;
            s += self.riemann_components(&e, v, v, conn)[i];
        }
        s
    }

    /// Bilinear horizontal Ricci form `Σ_i ⟨Rm(v_i, a) b, v_i⟩`.
    pub fn ric_hor_bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in self.horizontal_indices() {
            let mut e = vec![0.0; self.dim()];
            e[i] = 1.0;
            s += self.riemann_components(&e, a, b, Connection::LeviCivita)[i];
        }
        s
    }

    pub fn ric_hor(&self, v: &HTangent) -> f64 {
        self.ricci_over(&v.components(), Connection::LeviCivita, Some(true))
    }

    pub fn ric_ver(&self, v: &HTangent) -> f64 {
        self.ricci_over(&v.components(), Connection::LeviCivita, Some(false))
    }

    pub fn tanaka_ric(&self, v: &HTangent) -> f64 {
        self.ricci_over(&v.components(), Connection::Tanaka, None)
    }

    pub fn ric(&self, v: &HTangent) -> f64 {
        self.ricci_over(&v.components(), Connection::LeviCivita, None)
    }

    /// Jet calculus at `p`; with `time = Some(t)` the last jet variable is time.
    pub fn calc(&self, p: &HPoint, time: Option<f64>) -> Calc<'_> {
        Calc::new(self, p, time)
    }

    /// `∇_w F` for a vector field given by frame-component functions.
    pub fn covariant_derivative(&self, w: &HTangent, field: &[Field], conn: Connection) -> HTangent {
        let c = self.calc(&w.base, None);
        let f: VField = field.iter().map(|fi| c.field(fi, 0.0)).collect();
        let wv = c.constant_vector(&w.components());
        let out = c.covariant(&wv, &f, conn);
        HTangent::from_components(w.base.clone(), &values(&out))
    }

    pub fn grad(&self, f: &Field, p: &HPoint) -> HTangent {
        let c = self.calc(p, None);
        let g = c.grad(&c.field(f, 0.0));
        HTangent::from_components(p.clone(), &values(&g))
    }

    pub fn grad_hor(&self, f: &Field, p: &HPoint) -> HTangent {
        self.grad(f, p).horizontal()
    }

    pub fn grad_ver(&self, f: &Field, p: &HPoint) -> HTangent {
        self.grad(f, p).vertical()
    }

    /// Hessian `∇²f(e_a, e_b)` in the frame.
    pub fn hessian(&self, f: &Field, p: &HPoint) -> DMatrix<f64> {
        let c = self.calc(p, None);
        let fj = c.field(f, 0.0);
        let d = self.dim();
        DMatrix::from_fn(d, d, |a, b| c.hessian(&fj, a, b).value())
    }

    pub fn sub_laplacian(&self, f: &Field, p: &HPoint) -> f64 {
        let c = self.calc(p, None);
        c.sub_laplacian(&c.field(f, 0.0)).value()
    }
}

/// A vector field as frame-component jets.
pub type VField = Vec<Jet>;

pub fn values(v: &VField) -> Vec<f64> {
    v.iter().map(Jet::value).collect()
}

/// Frame coefficient jet: skips multiplications for constant entries.
#[derive(Debug, Clone)]
enum Coef {
    Zero,
    Const(f64),
    Var(Jet),
}

/// Exact jet calculus at a point: frame derivatives, covariant derivatives,
/// brackets and curvature applied to jet-valued functions and fields.
pub struct Calc<'g> {
    pub geom: &'g Geometry,
    pub nvars: usize,
    pub point: HPoint,
    time_var: Option<usize>,
    t: f64,
    /// `coef[a][μ]`: coordinate component μ of `e_a`.
    coef: Vec<Vec<Coef>>,
}

impl<'g> Calc<'g> {
    pub fn new(geom: &'g Geometry, p: &HPoint, time: Option<f64>) -> Self {
        let d = geom.dim();
        let nvars = d + usize::from(time.is_some());
        let coef = (0..d)
            .map(|a| {
                geom.model()
                    .frame_affine(a)
                    .into_iter()
                    .map(|ac| {
                        if ac.slopes.is_empty() {
                            if ac.constant == 0.0 {
                                Coef::Zero
                            } else {
                                Coef::Const(ac.constant)
                            }
                        } else {
                            let mut j = Jet::constant(nvars, ac.constant);
                            for (i, s) in ac.slopes {
                                j = j + Jet::variable(nvars, i, p.coords[i]).scale(s);
                            }
                            Coef::Var(j)
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            geom,
            nvars,
            point: p.clone(),
            time_var: time.map(|_| d),
            t: time.unwrap_or(0.0),
            coef,
        }
    }

    pub fn dim(&self) -> usize {
        self.geom.dim()
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn field(&self, f: &Field, t: f64) -> Jet {
        let t = if self.time_var.is_some() { self.t } else { t };
        f.jet(&self.point.coords, t, self.time_var.is_some())
    }

    pub fn constant(&self, v: f64) -> Jet {
        Jet::constant(self.nvars, v)
    }

    pub fn constant_vector(&self, comps: &[f64]) -> VField {
        comps.iter().map(|&c| self.constant(c)).collect()
    }

    pub fn zero_vector(&self) -> VField {
        vec![self.constant(0.0); self.dim()]
    }

    /// `∂_t` of a jet; requires a time variable.
    pub fn dt(&self, f: &Jet) -> Jet {
        f.partial(self.time_var.expect("calc built without time"))
    }

    /// `e_a(f)`.
    pub fn d(&self, a: usize, f: &Jet) -> Jet {
        let mut out = self.constant(0.0);
        let mut first = true;
        for (mu, c) in self.coef[a].iter().enumerate() {
            let term = match c {
                Coef::Zero => continue,
                Coef::Const(k) => f.partial(mu).scale(*k),
                Coef::Var(j) => j * &f.partial(mu),
            };
            if first {
                out = term;
                first = false;
            } else {
                out += &term;
            }
        }
        out
    }

    pub fn grad(&self, f: &Jet) -> VField {
        (0..self.dim()).map(|a| self.d(a, f)).collect()
    }

    pub fn grad_hor(&self, f: &Jet) -> VField {
        self.proj_hor(&self.grad(f))
    }

    pub fn grad_ver(&self, f: &Jet) -> VField {
        self.proj_ver(&self.grad(f))
    }

    pub fn proj_hor(&self, v: &VField) -> VField {
        let r = self.geom.reeb();
        v.iter().enumerate().map(|(a, x)| if a == r { x.lift(0.0) } else { x.clone() }).collect()
    }

    pub fn proj_ver(&self, v: &VField) -> VField {
        let r = self.geom.reeb();
        v.iter().enumerate().map(|(a, x)| if a == r { x.clone() } else { x.lift(0.0) }).collect()
    }

    /// Directional derivative `w(f)`.
    pub fn apply(&self, w: &VField, f: &Jet) -> Jet {
        let mut out = self.constant(0.0);
        for (a, wa) in w.iter().enumerate() {
            out += &(wa * &self.d(a, f));
        }
        out
    }

    pub fn inner(&self, a: &VField, b: &VField) -> Jet {
        let mut out = self.constant(0.0);
        for (x, y) in a.iter().zip(b) {
            out += &(x * y);
        }
        out
    }

    pub fn norm_sq(&self, a: &VField) -> Jet {
        self.inner(a, a)
    }

    pub fn add(&self, a: &VField, b: &VField) -> VField {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    pub fn sub(&self, a: &VField, b: &VField) -> VField {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    pub fn scale(&self, s: &Jet, a: &VField) -> VField {
        a.iter().map(|x| s * x).collect()
    }

    pub fn scale_f(&self, s: f64, a: &VField) -> VField {
        a.iter().map(|x| x.scale(s)).collect()
    }

    /// Frame field `e_a` as a constant-component vector field.
    pub fn basis(&self, a: usize) -> VField {
        let mut v = self.zero_vector();
        v[a] = self.constant(1.0);
        v
    }

    pub fn reeb_field(&self) -> VField {
        self.basis(self.geom.reeb())
    }

    pub fn j(&self, w: &VField) -> VField {
        let d = self.dim();
        let jm = self.geom.j_matrix();
        (0..d)
            .map(|c| {
                let mut out = self.constant(0.0);
                for (b, wb) in w.iter().enumerate() {
                    let k = jm[(c, b)];
                    if k != 0.0 {
                        out += &wb.scale(k);
                    }
                }
                out
            })
            .collect()
    }

    /// `∇_w F = Σ (w F^c) e_c + Σ w^a F^b Γ_ab^c e_c`.
    pub fn covariant(&self, w: &VField, f: &VField, conn: Connection) -> VField {
        let d = self.dim();
        let mut out: VField = (0..d).map(|c| self.apply(w, &f[c])).collect();
        for a in 0..d {
            for b in 0..d {
                let wf = &w[a] * &f[b];
                for (c, o) in out.iter_mut().enumerate() {
                    let g = self.geom.gamma(conn, a, b, c);
                    if g != 0.0 {
                        *o += &wf.scale(g);
                    }
                }
            }
        }
        out
    }

    pub fn nabla(&self, w: &VField, f: &VField) -> VField {
        self.covariant(w, f, Connection::LeviCivita)
    }

    /// Lie bracket `[A, B]`.
    pub fn bracket(&self, a: &VField, b: &VField) -> VField {
        let d = self.dim();
        let mut out: VField =
            (0..d).map(|c| self.apply(a, &b[c]) - self.apply(b, &a[c])).collect();
        for i in 0..d {
            for k in 0..d {
                let ab = &a[i] * &b[k];
                for (c, o) in out.iter_mut().enumerate() {
                    let s = self.geom.structure(i, k, c);
                    if s != 0.0 {
                        *o += &ab.scale(s);
                    }
                }
            }
        }
        out
    }

    /// Hessian `∇²f(e_a, e_b) = e_a e_b f − (∇_{e_a} e_b) f`.
    pub fn hessian(&self, f: &Jet, a: usize, b: usize) -> Jet {
        let mut h = self.d(a, &self.d(b, f));
        for c in 0..self.dim() {
            let g = self.geom.gamma(Connection::LeviCivita, a, b, c);
            if g != 0.0 {
                h = h - self.d(c, f).scale(g);
            }
        }
        h
    }

    /// `Δ_hor f = Σ_i ∇²f(v_i, v_i)` over the horizontal frame.
    pub fn sub_laplacian(&self, f: &Jet) -> Jet {
        let mut out = self.constant(0.0);
        for i in self.geom.horizontal_indices() {
            out += &self.hessian(f, i, i);
        }
        out
    }

    /// `Δ_hor f` as `Σ_i ⟨∇_{v_i} ∇f, v_i⟩` for an arbitrary orthonormal
    /// horizontal frame field `frame`.
    pub fn sub_laplacian_in_frame(&self, f: &Jet, frame: &[VField]) -> Jet {
        let g = self.grad(f);
        let mut out = self.constant(0.0);
        for v in frame {
            out += &self.inner(&self.nabla(v, &g), v);
        }
        out
    }

    /// `Rm(A,B)C` (frame-constant tensor applied pointwise to jet fields).
    pub fn rm(&self, a: &VField, b: &VField, c: &VField, conn: Connection) -> VField {
        let n = self.dim();
        let mut out = self.zero_vector();
        for i in 0..n {
            for j in 0..n {
                let ab = &a[i] * &b[j];
                for k in 0..n {
                    let mut coefs = [0.0f64; 16];
                    let mut any = false;
                    for (d, slot) in coefs.iter_mut().enumerate().take(n) {
                        *slot = self.geom.rm(conn, i, j, k, d);
                        any |= *slot != 0.0;
                    }
                    if !any {
                        continue;
                    }
                    let abc = &ab * &c[k];
                    for (d, o) in out.iter_mut().enumerate() {
                        if coefs[d] != 0.0 {
                            *o += &abc.scale(coefs[d]);
                        }
                    }
                }
            }
        }
        out
    }

    /// `ric^hor(A, B) = Σ_i ⟨Rm(e_i, A) B, e_i⟩`, i horizontal.
    pub fn ric_hor(&self, a: &VField, b: &VField) -> Jet {
        let mut out = self.constant(0.0);
        for i in self.geom.horizontal_indices() {
            let e = self.basis(i);
            out += &self.rm(&e, a, b, Connection::LeviCivita)[i];
        }
        out
    }

    /// `ric^ver(A, B) = Σ_u ⟨Rm(u, A) B, u⟩`, u vertical.
    pub fn ric_ver(&self, a: &VField, b: &VField) -> Jet {
        let r = self.geom.reeb();
        let e = self.basis(r);
        self.rm(&e, a, b, Connection::LeviCivita)[r].clone()
    }

    /// Second path to Δ_hor: raw coordinate partials of f contracted with
    /// the frame coefficients, independent of the jet composition in
    /// [`Calc::sub_laplacian`].
    pub fn sub_laplacian_coordinates(&self, f: &Jet) -> f64 {
        let d = self.dim();
        let model = self.geom.model();
        let p = &self.point.coords;
        let mut total = 0.0;
        for i in self.geom.horizontal_indices() {
            let e = model.frame_coords(i, p);
            let aff = model.frame_affine(i);
            for mu in 0..d {
                for nu in 0..d {
                    total += e[mu] * e[nu] * f.d2(mu, nu);
                }
            }
            // (e_i e_i^ν) ∂_ν f
            for (nu, c) in aff.iter().enumerate() {
                let dir: f64 = c.slopes.iter().map(|&(k, s)| e[k] * s).sum();
                total += dir * f.d1(nu);
            }
            for c in 0..d {
                let g = self.geom.gamma(Connection::LeviCivita, i, i, c);
                if g != 0.0 {
                    let ec = model.frame_coords(c, p);
                    total -= g * (0..d).map(|mu| ec[mu] * f.d1(mu)).sum::<f64>();
                }
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Coords;

    fn h1() -> Geometry {
        Geometry::heisenberg(1)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn frame_at_origin_and_shifted() {
        let g = h1();
        let f0 = g.frame_at(&HPoint::origin(1));
        assert_eq!(f0, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let f1 = g.frame_at(&HPoint::new(vec![0.0, 2.0, 0.0]));
        assert_eq!(f1[0], vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn brackets() {
        let g = Geometry::heisenberg(2);
        // [X_1, Y_1] = −R, [X_1, Y_2] = 0, [X_1, X_2] = 0
        assert_eq!(g.bracket(0, 2), vec![0.0, 0.0, 0.0, 0.0, -1.0]);
        assert_eq!(g.bracket(0, 3), vec![0.0; 5]);
        assert_eq!(g.bracket(0, 1), vec![0.0; 5]);
        for a in 0..5 {
            assert_eq!(g.bracket(a, a), vec![0.0; 5]);
        }
    }

    #[test]
    fn connection_table_values_n1() {
        let g = h1();
        let lc = Connection::LeviCivita;
        // ∇_X Y = −½R, ∇_X R = ½Y, ∇_R R = 0, ∇_X X = 0, ∇_R X = ½Y
        assert_eq!(g.gamma(lc, 0, 1, 2), -0.5);
        assert_eq!(g.gamma(lc, 0, 2, 1), 0.5);
        assert_eq!(g.gamma(lc, 2, 0, 1), 0.5);
        for c in 0..3 {
            assert_eq!(g.gamma(lc, 2, 2, c), 0.0);
            assert_eq!(g.gamma(lc, 0, 0, c), 0.0);
        }
        // ∇̄_X Y = 0
        for c in 0..3 {
            assert_eq!(g.gamma(Connection::Tanaka, 0, 1, c), 0.0);
        }
    }

    #[test]
    fn connection_table_invariants() {
        for n in 1..=3 {
            let g = Geometry::heisenberg(n);
            let d = g.dim();
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        for conn in [Connection::LeviCivita, Connection::Tanaka] {
                            assert_eq!(g.gamma(conn, a, b, c), -g.gamma(conn, a, c, b));
                        }
                        let torsion = g.gamma(Connection::LeviCivita, a, b, c)
                            - g.gamma(Connection::LeviCivita, b, a, c);
                        assert_eq!(torsion, g.structure(a, b, c));
                    }
                }
            }
        }
    }

    #[test]
    fn j_and_contact_form() {
        let g = h1();
        let o = HPoint::origin(1);
        let x = HTangent::basis(o.clone(), 0);
        let r = HTangent::basis(o.clone(), 2);
        assert_eq!(g.j_apply(&x).components(), vec![0.0, -1.0, 0.0]);
        assert_eq!(g.j_apply(&r).components(), vec![0.0; 3]);
        assert_eq!(g.j_apply(&g.j_apply(&x)).components(), vec![-1.0, 0.0, 0.0]);
        assert_eq!(g.contact_form(&r), 1.0);
        assert_eq!(g.contact_form(&x), 0.0);
        let w = HTangent::new(o, vec![0.3, -0.7], 0.5);
        assert_eq!(g.contact_form(&w), 0.5);
    }

    #[test]
    fn curvature_values_n1() {
        let g = h1();
        let o = HPoint::origin(1);
        let x = HTangent::basis(o.clone(), 0);
        let y = HTangent::basis(o.clone(), 1);
        let r = HTangent::basis(o.clone(), 2);
        let lc = Connection::LeviCivita;
        assert!(close(g.riemann(&y, &x, &x, lc).dot(&y), -0.75, 1e-15));
        assert!(close(g.riemann(&r, &x, &x, lc).dot(&r), 0.25, 1e-15));
        let w = HTangent::new(o.clone(), vec![0.3, 0.8], -0.4);
        assert!(g.riemann(&w, &w, &w, lc).norm_sq() < 1e-30);
        assert!(close(g.ric_ver(&x), 0.25, 1e-15));
        assert!(close(g.ric_hor(&r), 0.5, 1e-15));
        assert!(close(g.ric_hor(&x), -0.75, 1e-15));
        assert!(close(g.tanaka_ric(&x), 0.0, 1e-15));
    }

    #[test]
    fn covariant_derivative_examples() {
        let g = h1();
        let p = HPoint::new(vec![0.4, -1.1, 2.0]);
        let x = HTangent::basis(p.clone(), 0);
        let r = HTangent::basis(p.clone(), 2);
        let reeb_field = [Field::constant(0.0), Field::constant(0.0), Field::constant(1.0)];
        let x_field = [Field::constant(1.0), Field::constant(0.0), Field::constant(0.0)];
        let zero = [Field::constant(0.0), Field::constant(0.0), Field::constant(0.0)];
        let lc = Connection::LeviCivita;
        assert_eq!(g.covariant_derivative(&x, &reeb_field, lc).components(), vec![0.0, 0.5, 0.0]);
        assert_eq!(g.covariant_derivative(&r, &x_field, lc).components(), vec![0.0, 0.5, 0.0]);
        assert_eq!(g.covariant_derivative(&x, &zero, lc).components(), vec![0.0; 3]);
    }

    #[test]
    fn differential_operators_examples() {
        let g = h1();
        let c = Coords { n: 1 };
        let p = HPoint::new(vec![0.7, -0.3, 1.9]);
        let f = c.x(0).powi(2) + c.y(0).powi(2);
        assert!(close(g.sub_laplacian(&f, &p), 4.0, 1e-13));
        let z = c.z();
        assert!(close(g.sub_laplacian(&z, &p), 0.0, 1e-15));
        assert!(close(g.grad_ver(&z, &p).norm_sq(), 1.0, 1e-15));
        let k = Field::constant(3.0);
        assert_eq!(g.grad(&k, &p).norm_sq(), 0.0);
        assert_eq!(g.sub_laplacian(&k, &p), 0.0);
        assert_eq!(g.hessian(&k, &p).norm(), 0.0);
    }

    #[test]
    fn sub_laplacian_two_paths_agree() {
        let g = Geometry::heisenberg(2);
        let c = Coords { n: 2 };
        let f = (c.x(0) * c.z()).sin() + c.y(1).powi(3) * c.x(1) + (c.z() * c.y(0)).exp();
        let p = HPoint::new(vec![0.2, -0.5, 0.9, 0.1, -0.3]);
        let calc = g.calc(&p, None);
        let fj = calc.field(&f, 0.0);
        let a = calc.sub_laplacian(&fj).value();
        let b = calc.sub_laplacian_coordinates(&fj);
        assert!(close(a, b, 1e-11), "{a} vs {b}");
    }
}
