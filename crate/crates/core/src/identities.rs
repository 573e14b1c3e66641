//! Randomized verification of pointwise geometric identities on H^n.
//!
//! Every trial draws a point, random analytic test functions and random
//! vector fields from a seeded family, evaluates both sides through the
//! exact jet calculus and records `max |LHS − RHS|`. Trials run in parallel
//! but each owns an RNG stream derived from `(seed, trial)`, so results are
//! bit-reproducible regardless of scheduling.

use crate::error::{Error, Result};
use crate::field::{random_test_field, Field};
use crate::geometry::{Calc, Connection, Geometry, HPoint, VField};
use crate::jet::Jet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;

/// Which identity a result refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityId {
    /// Flow-calculation facts 1..=13 (item 13 in its per-(i,k) form).
    Fact(u8),
    /// Item 13 with the index pattern `⟨Rm(v_j,R_i)R_j,v_j⟩`.
    Fact13Header,
    /// Sasakian properties 1..=4.
    SasakianProp(u8),
    /// Sasakian Ricci identities 1..=2.
    SasakianRicci(u8),
    Contact(ContactAxiom),
    HorizontalIsometry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactAxiom {
    JSquared,
    AlphaReeb,
    JReeb,
    JIsometry,
    DAlpha,
    Normality,
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdentityId::Fact(k) => write!(f, "fact{k:02}"),
            IdentityId::Fact13Header => write!(f, "fact13_header"),
            IdentityId::SasakianProp(k) => write!(f, "sasakian{k}"),
            IdentityId::SasakianRicci(k) => write!(f, "sasakian_ricci{k}"),
            IdentityId::Contact(a) => {
                let s = match a {
                    ContactAxiom::JSquared => "contact_j_squared",
                    ContactAxiom::AlphaReeb => "contact_alpha_reeb",
                    ContactAxiom::JReeb => "contact_j_reeb",
                    ContactAxiom::JIsometry => "contact_j_isometry",
                    ContactAxiom::DAlpha => "contact_dalpha",
                    ContactAxiom::Normality => "contact_normality",
                };
                f.write_str(s)
            }
            IdentityId::HorizontalIsometry => write!(f, "horizontal_isometry"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IdentityResult {
    pub identity_id: IdentityId,
    pub n: usize,
    pub samples: usize,
    pub max_residual: f64,
    pub worst_point: HPoint,
    /// Largest |LHS| seen; guards against vacuous checks.
    pub max_lhs: f64,
    /// Fraction of trials whose |LHS| exceeded 1e−3.
    pub nontrivial_fraction: f64,
}

impl IdentityResult {
    pub const CSV_HEADER: &'static str = "identity_id,n,samples,max_residual,worst_point";

    pub fn csv_row(&self) -> String {
        let pt: Vec<String> = self.worst_point.coords.iter().map(|c| format!("{c:.6}")).collect();
        format!(
            "{},{},{},{:.3e},{}",
            self.identity_id,
            self.n,
            self.samples,
            self.max_residual,
            pt.join(" ")
        )
    }
}

/// One trial outcome: residual and magnitude of the left-hand side.
struct Sample {
    residual: f64,
    lhs: f64,
    point: HPoint,
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

fn random_point<R: Rng>(rng: &mut R, n: usize) -> HPoint {
    HPoint::new((0..2 * n + 1).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn run<F>(id: IdentityId, n: usize, trials: usize, seed: u64, body: F) -> Result<IdentityResult>
where
    F: Fn(&Geometry, &mut ChaCha8Rng, &HPoint) -> (f64, f64) + Sync,
{
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let geom = Geometry::heisenberg(n);
    let samples: Vec<Sample> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let p = random_point(&mut rng, n);
            let (residual, lhs) = body(&geom, &mut rng, &p);
            Sample { residual, lhs, point: p }
        })
        .collect();
    let mut worst = &samples[0];
    let mut max_lhs = 0.0f64;
    let mut nontrivial = 0usize;
    for s in &samples {
        // NaN residuals must surface as the worst case
        if s.residual.is_nan() || s.residual > worst.residual {
            worst = s;
        }
        max_lhs = max_lhs.max(s.lhs);
        if s.lhs > 1e-3 {
            nontrivial += 1;
        }
    }
    Ok(IdentityResult {
        identity_id: id,
        n,
        samples: trials,
        max_residual: if worst.residual.is_nan() { f64::INFINITY } else { worst.residual },
        worst_point: worst.point.clone(),
        max_lhs,
        nontrivial_fraction: nontrivial as f64 / trials as f64,
    })
}

fn max_abs(v: &[Jet]) -> f64 {
    v.iter().map(|j| j.value().abs()).fold(0.0, f64::max)
}

fn diff_norm(a: &VField, b: &VField) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.value() - y.value()).abs()).fold(0.0, f64::max)
}

/// Random horizontal vector field with analytic frame components.
fn random_horizontal(c: &Calc, rng: &mut ChaCha8Rng, n: usize) -> VField {
    let mut v: VField = (0..c.dim()).map(|_| c.field(&random_test_field(rng, n, 3), 0.0)).collect();
    let r = c.geom.reeb();
    v[r] = c.constant(0.0);
    v
}

fn random_field(c: &Calc, rng: &mut ChaCha8Rng, n: usize) -> VField {
    (0..c.dim()).map(|_| c.field(&random_test_field(rng, n, 3), 0.0)).collect()
}

fn random_function(c: &Calc, rng: &mut ChaCha8Rng, n: usize) -> Jet {
    c.field(&random_test_field(rng, n, 4), 0.0)
}

/// Orthonormal horizontal frame obtained by rotating (X, Y) pointwise with
/// Givens rotations whose angles are random analytic functions.
pub fn rotated_horizontal_frame(c: &Calc, rng: &mut ChaCha8Rng, n: usize) -> Vec<VField> {
    let k = 2 * n;
    let mut frame: Vec<VField> = (0..k).map(|j| c.basis(j)).collect();
    let mut planes: Vec<(usize, usize)> = (0..n).map(|i| (i, n + i)).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            planes.push((i, j));
            planes.push((n + i, n + j));
        }
    }
    for (a, b) in planes {
        let theta = c.field(&(3.0 * random_test_field(rng, n, 2)), 0.0);
        let (co, si) = (theta.cos(), theta.sin());
        let va = frame[a].clone();
        let vb = frame[b].clone();
        frame[a] = c.add(&c.scale(&co, &va), &c.scale(&si, &vb));
        frame[b] = c.sub(&c.scale(&co, &vb), &c.scale(&si, &va));
    }
    frame
}

/// Vertical part of a vector field as a horizontal-only projection residual.
fn vertical_component(c: &Calc, v: &VField) -> f64 {
    v[c.geom.reeb()].value().abs()
}

fn horizontal_residual(c: &Calc, v: &VField) -> f64 {
    max_abs(&c.proj_hor(v))
}

/// Checks flow-calculation fact `id` (1..=13) on H^n.
pub fn verify_fact(id: u8, n: usize, trials: usize, seed: u64) -> Result<IdentityResult> {
    if !(1..=13).contains(&id) {
        return Err(Error::invalid(format!("fact id {id} not in 1..=13")));
    }
    run(IdentityId::Fact(id), n, trials, seed, move |g, rng, p| {
        let c = g.calc(p, None);
        fact_sample(id, &c, rng, n)
    })
}

fn fact_sample(id: u8, c: &Calc, rng: &mut ChaCha8Rng, n: usize) -> (f64, f64) {
    let r = c.reeb_field();
    match id {
        1 => {
            let x1 = random_horizontal(c, rng, n);
            let x2 = random_horizontal(c, rng, n);
            let g = random_function(c, rng, n);
            let z = c.scale(&g, &r);
            let lhs = c.inner(&c.nabla(&x1, &z), &x2).value();
            let rhs = -c.inner(&c.nabla(&x2, &z), &x1).value();
            ((lhs - rhs).abs(), lhs.abs())
        }
        2 => {
            let frame = rotated_horizontal_frame(c, rng, n);
            let mut res = 0.0f64;
            let mut lhs = 0.0f64;
            for v in &frame {
                let d = c.nabla(v, v);
                res = res.max(vertical_component(c, &d));
                lhs = lhs.max(max_abs(&d));
            }
            (res, lhs)
        }
        3 => {
            let d = c.nabla(&r, &r);
            (horizontal_residual(c, &d), max_abs(&d))
        }
        4 => {
            let frame = rotated_horizontal_frame(c, rng, n);
            let mut res = 0.0f64;
            let mut lhs = 0.0f64;
            for v in &frame {
                let d = c.nabla(v, &r);
                res = res.max(vertical_component(c, &d));
                lhs = lhs.max(max_abs(&d));
            }
            (res, lhs)
        }
        5 => {
            let f = random_function(c, rng, n);
            let gh = c.grad_hor(&f);
            let gv = c.grad_ver(&f);
            let lhs = c.nabla(&gh, &gh);
            let half_sq = c.norm_sq(&gh).scale(0.5);
            let rhs = c.sub(
                &c.grad_hor(&half_sq),
                &c.scale_f(2.0, &c.proj_hor(&c.nabla(&gh, &gv))),
            );
            (diff_norm(&lhs, &rhs), max_abs(&lhs))
        }
        6 => {
            let f = random_function(c, rng, n);
            let frame = rotated_horizontal_frame(c, rng, n);
            let gf = c.grad(&f);
            let mut total = c.constant(0.0);
            let mut scale = 0.0f64;
            for v in &frame {
                let term = c.inner(&c.nabla(&c.bracket(&r, v), &gf), v);
                scale = scale.max(term.value().abs());
                total += &term;
            }
            (total.value().abs(), scale)
        }
        7 => {
            let f = random_function(c, rng, n);
            let frame = rotated_horizontal_frame(c, rng, n);
            let gh = c.grad_hor(&f);
            let mut lhs = c.constant(0.0);
            let mut rhs = c.constant(0.0);
            for v in &frame {
                let b = c.bracket(&r, v);
                lhs += &c.inner(&c.nabla(&b, &gh), v);
                rhs += &(-c.inner(&c.nabla(v, &gh), &b));
            }
            ((lhs.value() - rhs.value()).abs(), lhs.value().abs())
        }
        8 => {
            let f = random_function(c, rng, n);
            let rf = c.apply(&r, &f);
            let lhs = c.grad_hor(&rf);
            let gh = c.grad_hor(&f);
            let rhs = c.proj_hor(&c.sub(&c.nabla(&r, &gh), &c.nabla(&gh, &r)));
            (diff_norm(&lhs, &rhs), max_abs(&lhs))
        }
        9 => {
            let f = random_function(c, rng, n);
            let lhs = c.sub_laplacian(&c.apply(&r, &f)).value();
            let rhs = c.apply(&r, &c.sub_laplacian(&f)).value();
            ((lhs - rhs).abs(), lhs.abs())
        }
        10 => {
            let f = random_function(c, rng, n);
            let gv = c.grad_ver(&f);
            let gh = c.grad_hor(&f);
            let lhs = c.sub_laplacian(&c.norm_sq(&gv).scale(0.5)).value();
            let lap = c.sub_laplacian(&f);
            let w = c.proj_hor(&c.sub(&c.nabla(&r, &gh), &c.nabla(&gh, &r)));
            let rhs = c.inner(&gv, &c.grad(&lap)).value() + c.norm_sq(&w).value();
            ((lhs - rhs).abs(), lhs.abs())
        }
        11 => {
            let f = random_function(c, rng, n);
            let frame = rotated_horizontal_frame(c, rng, n);
            let gv = c.grad_ver(&f);
            let lhs = c.ric_hor(&gv, &gv).value();
            let mut rhs = 0.0;
            for v in &frame {
                rhs += c.norm_sq(&c.proj_hor(&c.nabla(v, &gv))).value();
            }
            ((lhs - rhs).abs(), lhs.abs())
        }
        12 => {
            let f = random_function(c, rng, n);
            let frame = rotated_horizontal_frame(c, rng, n);
            let gf = c.grad(&f);
            let gh = c.grad_hor(&f);
            let lhs = c.ric_hor(&gf, &r).value();
            let inner_field = c.nabla(&gh, &r);
            let mut rhs = 0.0;
            for v in &frame {
                rhs += c.inner(&c.nabla(v, &inner_field), v).value();
            }
            ((lhs - rhs).abs(), lhs.abs())
        }
        _ => {
            // (i, k) form, one check per frame vector v_j
            let frame = rotated_horizontal_frame(c, rng, n);
            fact13_per_vector(c, &frame)
        }
    }
}

fn fact13_per_vector(c: &Calc, vectors: &[VField]) -> (f64, f64) {
    let r = c.reeb_field();
    let mut res = 0.0f64;
    let mut scale = 0.0f64;
    for v in vectors {
        let lhs = c.inner(&c.rm(v, &r, &r, Connection::LeviCivita), v).value();
        let d = c.nabla(v, &r);
        let rhs = c.inner(&d, &d).value();
        res = res.max((lhs - rhs).abs());
        scale = scale.max(lhs.abs());
    }
    (res, scale)
}

/// Item 13 in the header index pattern. With a single Reeb field every
/// `R_j` is `R`, so the check coincides with the (i,k) form; it is still
/// evaluated through its own code path and reported separately.
pub fn verify_fact13_header(n: usize, trials: usize, seed: u64) -> Result<IdentityResult> {
    run(IdentityId::Fact13Header, n, trials, seed, move |g, rng, p| {
        let c = g.calc(p, None);
        let frame = rotated_horizontal_frame(&c, rng, n);
        let verticals = [c.reeb_field()];
        let mut res = 0.0f64;
        let mut scale = 0.0f64;
        for (j, v) in frame.iter().enumerate() {
            let rj = &verticals[j.min(verticals.len() - 1)];
            for ri in &verticals {
                let lhs = c.inner(&c.rm(v, ri, rj, Connection::LeviCivita), v).value();
                let rhs = c.inner(&c.nabla(v, ri), &c.nabla(v, rj)).value();
                res = res.max((lhs - rhs).abs());
                scale = scale.max(lhs.abs());
            }
        }
        (res, scale)
    })
}

/// Evaluates item 13's two sides for arbitrary input vectors in place of
/// the horizontal frame (used to exercise degenerate inputs).
pub fn fact13_residual_for(g: &Geometry, p: &HPoint, vectors: &[Vec<f64>]) -> f64 {
    let c = g.calc(p, None);
    let vs: Vec<VField> = vectors.iter().map(|v| c.constant_vector(v)).collect();
    fact13_per_vector(&c, &vs).0
}

/// Checks Sasakian property `item` (1..=4).
pub fn verify_sasakian_prop(item: u8, n: usize, trials: usize, seed: u64) -> Result<IdentityResult> {
    if !(1..=4).contains(&item) {
        return Err(Error::invalid(format!("property {item} not in 1..=4")));
    }
    run(IdentityId::SasakianProp(item), n, trials, seed, move |g, rng, p| {
        let c = g.calc(p, None);
        sasakian_sample(item, &c, rng, n)
    })
}

fn sasakian_sample(item: u8, c: &Calc, rng: &mut ChaCha8Rng, n: usize) -> (f64, f64) {
    let r = c.reeb_field();
    let w1 = random_field(c, rng, n);
    let w2 = random_field(c, rng, n);
    match item {
        1 => {
            // (∇_{w1} J) w2 = ∇_{w1}(J w2) − J ∇_{w1} w2
            let lhs = c.sub(&c.nabla(&w1, &c.j(&w2)), &c.j(&c.nabla(&w1, &w2)));
            let rhs = c.scale_f(
                0.5,
                &c.sub(&c.scale(&c.inner(&w1, &w2), &r), &c.scale(&c.inner(&r, &w2), &w1)),
            );
            (diff_norm(&lhs, &rhs), max_abs(&lhs))
        }
        2 => {
            let lhs = c.nabla(&w1, &r);
            let rhs = c.scale_f(-0.5, &c.j(&w1));
            (diff_norm(&lhs, &rhs), max_abs(&lhs))
        }
        3 => {
            let a = c.inner(&c.nabla(&w1, &r), &w2).value();
            let b = c.inner(&c.nabla(&w2, &r), &w1).value();
            ((a + b).abs(), a.abs())
        }
        _ => {
            let lhs = c.rm(&w1, &w2, &r, Connection::LeviCivita);
            let rhs = c.scale_f(
                0.25,
                &c.sub(&c.scale(&c.inner(&r, &w2), &w1), &c.scale(&c.inner(&r, &w1), &w2)),
            );
            (diff_norm(&lhs, &rhs), max_abs(&lhs))
        }
    }
}

/// Checks the Sasakian Ricci identities: (1) `ric^ver(v,v) = ric^ver(v_h,v_h)
/// = ¼|v_h|²`; (2) `ric^hor(v,v) + ¾|v_h|² = (n/2)|v_v|² + ric̄(v_h,v_h)` with
/// `ric̄` the Tanaka Ricci form.
pub fn verify_sasakian_ricci(item: u8, n: usize, trials: usize, seed: u64) -> Result<IdentityResult> {
    if !(1..=2).contains(&item) {
        return Err(Error::invalid(format!("Ricci identity {item} not in 1..=2")));
    }
    run(IdentityId::SasakianRicci(item), n, trials, seed, move |g, rng, p| {
        let c = g.calc(p, None);
        let r = g.reeb();
        let v = random_field(&c, rng, n);
        let mut vh = v.clone();
        vh[r] = c.constant(0.0);
        let vv_sq = (&v[r] * &v[r]).value();
        let vh_sq = c.inner(&vh, &vh).value();
        match item {
            1 => {
                let lhs = c.ric_ver(&v, &v).value();
                let mid = c.ric_ver(&vh, &vh).value();
                ((lhs - mid).abs().max((lhs - 0.25 * vh_sq).abs()), lhs.abs())
            }
            _ => {
                let lhs = c.ric_hor(&v, &v).value() + 0.75 * vh_sq;
                let mut tanaka = 0.0;
                for i in 0..c.dim() {
                    tanaka += c.rm(&c.basis(i), &vh, &vh, Connection::Tanaka)[i].value();
                }
                let rhs = 0.5 * n as f64 * vv_sq + tanaka;
                ((lhs - rhs).abs(), lhs.abs())
            }
        }
    })
}

/// `dα(W1,W2) = W1(α(W2)) − W2(α(W1)) − α([W1,W2])`.
pub fn d_alpha(c: &Calc, w1: &VField, w2: &VField) -> Jet {
    let r = c.geom.reeb();
    c.apply(w1, &w2[r]) - c.apply(w2, &w1[r]) - c.bracket(w1, w2)[r].clone()
}

/// Nijenhuis tensor `J²[W1,W2] + [JW1,JW2] − J[JW1,W2] − J[W1,JW2]`.
pub fn nijenhuis(c: &Calc, w1: &VField, w2: &VField) -> VField {
    let jw1 = c.j(w1);
    let jw2 = c.j(w2);
    let a = c.j(&c.j(&c.bracket(w1, w2)));
    let b = c.bracket(&jw1, &jw2);
    let d = c.j(&c.bracket(&jw1, w2));
    let e = c.j(&c.bracket(w1, &jw2));
    c.sub(&c.sub(&c.add(&a, &b), &d), &e)
}

/// Almost-contact, contact-metric and normality axioms.
pub fn verify_contact_axioms(n: usize, trials: usize, seed: u64) -> Result<Vec<IdentityResult>> {
    let axioms = [
        ContactAxiom::JSquared,
        ContactAxiom::AlphaReeb,
        ContactAxiom::JReeb,
        ContactAxiom::JIsometry,
        ContactAxiom::DAlpha,
        ContactAxiom::Normality,
    ];
    axioms
        .iter()
        .map(|&ax| {
            run(IdentityId::Contact(ax), n, trials, seed, move |g, rng, p| {
                let c = g.calc(p, None);
                let r = c.reeb_field();
                match ax {
                    ContactAxiom::JSquared => {
                        let v = random_horizontal(&c, rng, n);
                        let jj = c.j(&c.j(&v));
                        (diff_norm(&jj, &c.scale_f(-1.0, &v)), max_abs(&jj))
                    }
                    ContactAxiom::AlphaReeb => {
                        let a = r[g.reeb()].value();
                        ((a - 1.0).abs(), a.abs())
                    }
                    ContactAxiom::JReeb => (max_abs(&c.j(&r)), 0.0),
                    ContactAxiom::JIsometry => {
                        let v1 = random_horizontal(&c, rng, n);
                        let v2 = random_horizontal(&c, rng, n);
                        let lhs = c.inner(&c.j(&v1), &c.j(&v2)).value();
                        let rhs = c.inner(&v1, &v2).value();
                        ((lhs - rhs).abs(), lhs.abs())
                    }
                    ContactAxiom::DAlpha => {
                        let w1 = random_field(&c, rng, n);
                        let w2 = random_field(&c, rng, n);
                        let lhs = c.inner(&w1, &c.j(&w2)).value();
                        let rhs = d_alpha(&c, &w1, &w2).value();
                        ((lhs - rhs).abs(), lhs.abs())
                    }
                    ContactAxiom::Normality => {
                        let w1 = random_field(&c, rng, n);
                        let w2 = random_field(&c, rng, n);
                        let nj = nijenhuis(&c, &w1, &w2);
                        let da = d_alpha(&c, &w1, &w2);
                        let total = c.add(&nj, &c.scale(&da, &r));
                        (max_abs(&total), max_abs(&nj))
                    }
                }
            })
        })
        .collect()
}

/// `[R, X1]` is horizontal and `⟨∇_{X1}R,X2⟩ + ⟨X1,∇_{X2}R⟩ = 0` for random
/// horizontal X1, X2; the residual is the larger of the two.
pub fn verify_horizontal_isometry(n: usize, trials: usize, seed: u64) -> Result<IdentityResult> {
    run(IdentityId::HorizontalIsometry, n, trials, seed, move |g, rng, p| {
        let c = g.calc(p, None);
        let r = c.reeb_field();
        let x1 = random_horizontal(&c, rng, n);
        let x2 = random_horizontal(&c, rng, n);
        let br = c.bracket(&r, &x1);
        let a = c.inner(&c.nabla(&x1, &r), &x2).value();
        let b = c.inner(&x1, &c.nabla(&x2, &r)).value();
        let res = vertical_component(&c, &br).max((a + b).abs());
        (res, a.abs())
    })
}

/// Runs every identity for the given `n` in a fixed order.
pub fn verify_all(n: usize, trials: usize, seed: u64) -> Result<Vec<IdentityResult>> {
    let mut out = Vec::new();
    for id in 1..=13 {
        out.push(verify_fact(id, n, trials, seed)?);
    }
    out.push(verify_fact13_header(n, trials, seed)?);
    for item in 1..=4 {
        out.push(verify_sasakian_prop(item, n, trials, seed)?);
    }
    for item in 1..=2 {
        out.push(verify_sasakian_ricci(item, n, trials, seed)?);
    }
    out.extend(verify_contact_axioms(n, trials, seed)?);
    out.push(verify_horizontal_isometry(n, trials, seed)?);
    Ok(out)
}

/// Point-level helper: `Δ_hor(Rf) − R(Δ_hor f)` for a given field.
pub fn reeb_commutator_residual(g: &Geometry, f: &Field, p: &HPoint) -> f64 {
    let c = g.calc(p, None);
    let fj = c.field(f, 0.0);
    let r = c.reeb_field();
    (c.sub_laplacian(&c.apply(&r, &fj)).value() - c.apply(&r, &c.sub_laplacian(&fj)).value()).abs()
}
