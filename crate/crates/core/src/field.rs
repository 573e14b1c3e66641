//! Closed-form scalar fields on H^n, optionally time dependent.
//!
//! Fields are small expression trees. They evaluate either to plain `f64`
//! (grid sampling) or to a [`Jet`] whose variables are the 2n+1 coordinates
//! followed, when requested, by time.

use crate::jet::Jet;
use rand::Rng;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Coord(usize),
    Time,
    Add(Field, Field),
    Mul(Field, Field),
    Neg(Field),
    Sin(Field),
    Cos(Field),
    Exp(Field),
    Ln(Field),
    Tanh(Field),
    Powi(Field, i32),
}

/// A scalar field `f(coords, t)` with exact derivatives through [`Jet`]s.
#[derive(Clone)]
pub struct Field(Arc<Node>);

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.describe())
    }
}

impl Field {
    fn node(n: Node) -> Self {
        Field(Arc::new(n))
    }

    pub fn constant(c: f64) -> Self {
        Self::node(Node::Const(c))
    }

    /// Coordinate function `coords[i]`.
    pub fn coord(i: usize) -> Self {
        Self::node(Node::Coord(i))
    }

    pub fn time() -> Self {
        Self::node(Node::Time)
    }

    pub fn sin(&self) -> Self {
        Self::node(Node::Sin(self.clone()))
    }

    pub fn cos(&self) -> Self {
        Self::node(Node::Cos(self.clone()))
    }

    pub fn exp(&self) -> Self {
        Self::node(Node::Exp(self.clone()))
    }

    pub fn ln(&self) -> Self {
        Self::node(Node::Ln(self.clone()))
    }

    pub fn tanh(&self) -> Self {
        Self::node(Node::Tanh(self.clone()))
    }

    pub fn powi(&self, k: i32) -> Self {
        Self::node(Node::Powi(self.clone(), k))
    }

    /// True if the expression mentions `t`.
    pub fn is_time_dependent(&self) -> bool {
        match &*self.0 {
            Node::Time => true,
            Node::Const(_) | Node::Coord(_) => false,
            Node::Add(a, b) | Node::Mul(a, b) => a.is_time_dependent() || b.is_time_dependent(),
            Node::Neg(a)
            | Node::Sin(a)
            | Node::Cos(a)
            | Node::Exp(a)
            | Node::Ln(a)
            | Node::Tanh(a)
            | Node::Powi(a, _) => a.is_time_dependent(),
        }
    }

    /// Plain evaluation.
    pub fn eval(&self, coords: &[f64], t: f64) -> f64 {
        match &*self.0 {
            Node::Const(c) => *c,
            Node::Coord(i) => coords[*i],
            Node::Time => t,
            Node::Add(a, b) => a.eval(coords, t) + b.eval(coords, t),
            Node::Mul(a, b) => a.eval(coords, t) * b.eval(coords, t),
            Node::Neg(a) => -a.eval(coords, t),
            Node::Sin(a) => a.eval(coords, t).sin(),
            Node::Cos(a) => a.eval(coords, t).cos(),
            Node::Exp(a) => a.eval(coords, t).exp(),
            Node::Ln(a) => a.eval(coords, t).ln(),
            Node::Tanh(a) => a.eval(coords, t).tanh(),
            Node::Powi(a, k) => a.eval(coords, t).powi(*k),
        }
    }

    /// Value and coordinate gradient (first-order forward mode, time frozen).
    pub fn value_grad(&self, coords: &[f64], t: f64) -> (f64, Vec<f64>) {
        let d = coords.len();
        let rec = |f: &Field| f.value_grad(coords, t);
        let chain = |a: &Field, g: &dyn Fn(f64) -> (f64, f64)| {
            let (v, dv) = rec(a);
            let (y, dy) = g(v);
            (y, dv.into_iter().map(|x| x * dy).collect())
        };
        match &*self.0 {
            Node::Const(c) => (*c, vec![0.0; d]),
            Node::Coord(i) => {
                let mut g = vec![0.0; d];
                g[*i] = 1.0;
                (coords[*i], g)
            }
            Node::Time => (t, vec![0.0; d]),
            Node::Add(a, b) => {
                let ((va, ga), (vb, gb)) = (rec(a), rec(b));
                (va + vb, ga.iter().zip(&gb).map(|(x, y)| x + y).collect())
            }
            Node::Mul(a, b) => {
                let ((va, ga), (vb, gb)) = (rec(a), rec(b));
                (va * vb, ga.iter().zip(&gb).map(|(x, y)| x * vb + va * y).collect())
            }
            Node::Neg(a) => {
                let (v, g) = rec(a);
                (-v, g.into_iter().map(|x| -x).collect())
            }
            Node::Sin(a) => chain(a, &|v| (v.sin(), v.cos())),
            Node::Cos(a) => chain(a, &|v| (v.cos(), -v.sin())),
            Node::Exp(a) => chain(a, &|v| (v.exp(), v.exp())),
            Node::Ln(a) => chain(a, &|v| (v.ln(), 1.0 / v)),
            Node::Tanh(a) => chain(a, &|v| {
                let th = v.tanh();
                (th, 1.0 - th * th)
            }),
            Node::Powi(a, k) => chain(a, &|v| (v.powi(*k), *k as f64 * v.powi(k - 1))),
        }
    }

    /// Jet in the variables `(coords..., t)` when `with_time`, otherwise in
    /// the coordinates only (time is then a frozen constant).
    pub fn jet(&self, coords: &[f64], t: f64, with_time: bool) -> Jet {
        let nvars = coords.len() + usize::from(with_time);
        self.jet_in(coords, t, nvars, with_time)
    }

    fn jet_in(&self, coords: &[f64], t: f64, nvars: usize, with_time: bool) -> Jet {
        let rec = |f: &Field| f.jet_in(coords, t, nvars, with_time);
        match &*self.0 {
            Node::Const(c) => Jet::constant(nvars, *c),
            Node::Coord(i) => Jet::variable(nvars, *i, coords[*i]),
            Node::Time => {
                if with_time {
                    Jet::variable(nvars, coords.len(), t)
                } else {
                    Jet::constant(nvars, t)
                }
            }
            Node::Add(a, b) => rec(a) + rec(b),
            Node::Mul(a, b) => {
                // skip the full product when one side is a plain constant
                if let Node::Const(c) = &*a.0 {
                    return rec(b).scale(*c);
                }
                if let Node::Const(c) = &*b.0 {
                    return rec(a).scale(*c);
                }
                rec(a) * rec(b)
            }
            Node::Neg(a) => -rec(a),
            Node::Sin(a) => rec(a).sin(),
            Node::Cos(a) => rec(a).cos(),
            Node::Exp(a) => rec(a).exp(),
            Node::Ln(a) => rec(a).ln(),
            Node::Tanh(a) => rec(a).tanh(),
            Node::Powi(a, k) => rec(a).powi(*k),
        }
    }

    pub fn describe(&self) -> String {
        match &*self.0 {
            Node::Const(c) => format!("{c}"),
            Node::Coord(i) => format!("q{i}"),
            Node::Time => "t".into(),
            Node::Add(a, b) => format!("({} + {})", a.describe(), b.describe()),
            Node::Mul(a, b) => format!("{}*{}", a.describe(), b.describe()),
            Node::Neg(a) => format!("-{}", a.describe()),
            Node::Sin(a) => format!("sin({})", a.describe()),
            Node::Cos(a) => format!("cos({})", a.describe()),
            Node::Exp(a) => format!("exp({})", a.describe()),
            Node::Ln(a) => format!("ln({})", a.describe()),
            Node::Tanh(a) => format!("tanh({})", a.describe()),
            Node::Powi(a, k) => format!("{}^{k}", a.describe()),
        }
    }
}

impl Add for Field {
    type Output = Field;
    fn add(self, rhs: Field) -> Field {
        Field::node(Node::Add(self, rhs))
    }
}

impl Sub for Field {
    type Output = Field;
    fn sub(self, rhs: Field) -> Field {
        Field::node(Node::Add(self, Field::node(Node::Neg(rhs))))
    }
}

impl Mul for Field {
    type Output = Field;
    fn mul(self, rhs: Field) -> Field {
        Field::node(Node::Mul(self, rhs))
    }
}

impl Neg for Field {
    type Output = Field;
    fn neg(self) -> Field {
        Field::node(Node::Neg(self))
    }
}

impl Add<f64> for Field {
    type Output = Field;
    fn add(self, rhs: f64) -> Field {
        self + Field::constant(rhs)
    }
}

impl Mul<f64> for Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        Field::constant(rhs) * self
    }
}

impl Mul<Field> for f64 {
    type Output = Field;
    fn mul(self, rhs: Field) -> Field {
        Field::constant(self) * rhs
    }
}

/// Coordinate layout helpers for H^n: `x_i = coords[i]`, `y_i = coords[n+i]`,
/// `z = coords[2n]`.
pub struct Coords {
    pub n: usize,
}

impl Coords {
    pub fn x(&self, i: usize) -> Field {
        Field::coord(i)
    }
    pub fn y(&self, i: usize) -> Field {
        Field::coord(self.n + i)
    }
    pub fn z(&self) -> Field {
        Field::coord(2 * self.n)
    }
}

/// Seeded random member of the identity-suite test family: a sum of
/// products of two factors drawn from
/// {1, x, y, z, x², xy, sin 2πx, cos 2πy, sin 2πz}, with coefficients in
/// [−1, 1]. For n ≥ 2 the x/y slots use a randomly chosen pair index.
pub fn random_test_field<R: Rng>(rng: &mut R, n: usize, terms: usize) -> Field {
    let c = Coords { n };
    let mut total = Field::constant(rng.gen_range(-1.0..1.0));
    for _ in 0..terms {
        let a = basis_factor(rng, &c);
        let b = basis_factor(rng, &c);
        total = total + rng.gen_range(-1.0..1.0) * (a * b);
    }
    total
}

fn basis_factor<R: Rng>(rng: &mut R, c: &Coords) -> Field {
    let i = rng.gen_range(0..c.n);
    let j = rng.gen_range(0..c.n);
    match rng.gen_range(0..9) {
        0 => Field::constant(1.0),
        1 => c.x(i),
        2 => c.y(i),
        3 => c.z(),
        4 => c.x(i).powi(2),
        5 => c.x(i) * c.y(j),
        6 => (2.0 * PI * c.x(i)).sin(),
        7 => (2.0 * PI * c.y(i)).cos(),
        _ => (2.0 * PI * c.z()).sin(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jet_matches_eval_and_time_derivative() {
        let c = Coords { n: 1 };
        let f = c.x(0) * c.y(0) + (Field::time() * c.z()).sin();
        let p = [0.3, -0.4, 0.9];
        let t = 0.7;
        let j = f.jet(&p, t, true);
        assert!((j.value() - f.eval(&p, t)).abs() < 1e-15);
        // ∂t f = z cos(t z)
        assert!((j.d1(3) - 0.9 * (0.63f64).cos()).abs() < 1e-15);
        assert!(f.is_time_dependent());
        let spatial = f.jet(&p, t, false);
        assert_eq!(spatial.nvars(), 3);
        assert!((spatial.d1(2) - 0.7 * (0.63f64).cos()).abs() < 1e-15);
    }

    #[test]
    fn random_family_is_seed_deterministic() {
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let f1 = random_test_field(&mut r1, 2, 4);
        let f2 = random_test_field(&mut r2, 2, 4);
        let p = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(f1.eval(&p, 0.0).to_bits(), f2.eval(&p, 0.0).to_bits());
    }

    #[test]
    fn value_grad_matches_jet() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let f = random_test_field(&mut rng, 1, 4).tanh() + Field::coord(2).exp().powi(2);
            let p = [0.3, -0.2, 0.45];
            let (v, g) = f.value_grad(&p, 0.0);
            let j = f.jet(&p, 0.0, false);
            assert!((v - j.value()).abs() < 1e-13);
            for (i, gi) in g.iter().enumerate() {
                assert!((gi - j.d1(i)).abs() < 1e-12 * (1.0 + gi.abs()));
            }
        }
    }
}
