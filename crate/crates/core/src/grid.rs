//! Twisted-periodic lattice discretization of the compact quotient of H¹ by
//! the integer Heisenberg lattice.
//!
//! The fundamental domain `[0,1)³` is sampled at `x = i/N`, `y = j/N`,
//! `z = k/Nz`. Values outside it are read through the deck identifications
//!
//! ```text
//! f(x+1, y, z − y/2) = f(x, y, z),  f(x, y+1, z + x/2) = f(x, y, z),  f(x, y, z+1) = f(x, y, z)
//! ```
//!
//! which are left translations by lattice elements and therefore preserve
//! the frame `X = ∂x + ½y∂z`, `Y = ∂y − ½x∂z`, `R = ∂z`. Because `Nz` is a
//! multiple of `2N`, every deck shift is a whole number of z cells and the
//! stencils read rotated z-rows without interpolation.
//!
//! Storage is z-fastest: `values[(i·N + j)·Nz + k]`.

use crate::error::{Error, Result};
use crate::field::Field;
use rayon::prelude::*;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub n: usize,
    pub nz: usize,
}

impl GridSpec {
    pub fn new(n: usize, nz: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::invalid(format!("grid needs N >= 8, got {n}")));
        }
        if nz == 0 || nz % (2 * n) != 0 {
            return Err(Error::invalid(format!("Nz={nz} must be a positive multiple of 2N={}", 2 * n)));
        }
        Ok(Self { n, nz })
    }

    /// `Nz = 2N`, the smallest admissible z resolution.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, 2 * n)
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn hz(&self) -> f64 {
        1.0 / self.nz as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// z cells per unit of `j` in the deck shift: `Nz / (2N)`.
    pub fn shift_unit(&self) -> i64 {
        (self.nz / (2 * self.n)) as i64
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.nz + k
    }

    pub fn unflat(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.nz;
        let row = idx / self.nz;
        (row / self.n, row % self.n, k)
    }

    pub fn coords(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [i as f64 * self.h(), j as f64 * self.h(), k as f64 * self.hz()]
    }

    /// Maps arbitrary integer indices to the fundamental lattice.
    pub fn deck_index(&self, i: i64, j: i64, k: i64) -> (usize, usize, usize) {
        let n = self.n as i64;
        let nz = self.nz as i64;
        let s = self.shift_unit();
        let p = i.div_euclid(n);
        let i0 = i.rem_euclid(n);
        // x-wraps: (i+N, j, k) ~ (i, j, k + j·s), j taken before its own wrap
        let mut kk = k + p * j * s;
        let q = j.div_euclid(n);
        let j0 = j.rem_euclid(n);
        // y-wraps: (i, j+N, k) ~ (i, j, k − i·s)
        kk -= q * i0 * s;
        (i0 as usize, j0 as usize, kk.rem_euclid(nz) as usize)
    }

    /// Row `(i, j)` after deck wrapping plus the z rotation to apply when
    /// reading it: value at `k` is `row[(k + shift) mod Nz]`.
    #[inline]
    fn row_ref(&self, i: i64, j: i64) -> (usize, i64) {
        let (i0, j0, k0) = self.deck_index(i, j, 0);
        (self.flat(i0, j0, 0), k0 as i64)
    }
}

/// A scalar field sampled on the fundamental lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct GridScalarField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

/// Frame direction for discrete derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    X,
    Y,
    R,
}

/// Central difference weights `(offset, weight)` for a first derivative.
fn first_derivative_weights(order: u8) -> Result<&'static [(i64, f64)]> {
    const O2: [(i64, f64); 2] = [(1, 0.5), (-1, -0.5)];
    const O4: [(i64, f64); 4] = [(1, 8.0 / 12.0), (-1, -8.0 / 12.0), (2, -1.0 / 12.0), (-2, 1.0 / 12.0)];
    match order {
        2 => Ok(&O2),
        4 => Ok(&O4),
        _ => Err(Error::invalid(format!("stencil order {order} not in {{2, 4}}"))),
    }
}

/// `out[k] += w · row[(k + shift) mod nz]` with two contiguous passes.
#[inline]
fn add_rotated(out: &mut [f64], row: &[f64], shift: i64, w: f64) {
    let nz = row.len();
    let s = shift.rem_euclid(nz as i64) as usize;
    let (head, tail) = out.split_at_mut(nz - s);
    for (o, v) in head.iter_mut().zip(&row[s..]) {
        *o += w * v;
    }
    for (o, v) in tail.iter_mut().zip(&row[..s]) {
        *o += w * v;
    }
}

impl GridScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, values: vec![0.0; spec.len()] }
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        Self { spec, values: vec![c; spec.len()] }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::invalid(format!("expected {} values, got {}", spec.len(), values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid values must be finite"));
        }
        Ok(Self { spec, values })
    }

    /// Samples `f(x, y, z)` at every lattice point.
    pub fn from_fn<F: Fn(f64, f64, f64) -> f64 + Sync>(spec: GridSpec, f: F) -> Self {
        let values = (0..spec.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = spec.unflat(idx);
                let [x, y, z] = spec.coords(i, j, k);
                f(x, y, z)
            })
            .collect();
        Self { spec, values }
    }

    /// Samples a closed-form field (time `t`) on the lattice.
    pub fn from_field(spec: GridSpec, f: &Field, t: f64) -> Self {
        Self::from_fn(spec, |x, y, z| f.eval(&[x, y, z], t))
    }

    pub fn get(&self, i: i64, j: i64, k: i64) -> f64 {
        let (a, b, c) = self.spec.deck_index(i, j, k);
        self.values[self.spec.flat(a, b, c)]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn map<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Self {
        Self { spec: self.spec, values: self.values.par_iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64 + Sync>(&self, other: &Self, f: F) -> Self {
        debug_assert_eq!(self.spec, other.spec);
        Self {
            spec: self.spec,
            values: self.values.par_iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + s * b)
    }

    /// Injection onto the lattice with half the resolution in every axis.
    pub fn restrict(&self) -> Result<Self> {
        let coarse = GridSpec::new(self.spec.n / 2, self.spec.nz / 2)?;
        if self.spec.n % 2 != 0 || self.spec.nz % 2 != 0 {
            return Err(Error::invalid("restriction needs even N and Nz"));
        }
        let values = (0..coarse.len())
            .map(|idx| {
                let (i, j, k) = coarse.unflat(idx);
                self.values[self.spec.flat(2 * i, 2 * j, 2 * k)]
            })
            .collect();
        Ok(Self { spec: coarse, values })
    }

    /// Builds a field from a function of lattice indices.
    pub fn from_index_fn<F: Fn(usize, usize, usize) -> f64 + Sync>(spec: GridSpec, f: F) -> Self {
        let values = (0..spec.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = spec.unflat(idx);
                f(i, j, k)
            })
            .collect();
        Self { spec, values }
    }

    /// Trilinear interpolation at an arbitrary point of H¹ (deck-aware).
    pub fn interpolate(&self, x: f64, y: f64, z: f64) -> f64 {
        let n = self.spec.n as f64;
        let nz = self.spec.nz as f64;
        let (fi, fj, fk) = (x * n, y * n, z * nz);
        let (i0, j0, k0) = (fi.floor(), fj.floor(), fk.floor());
        let (ti, tj, tk) = (fi - i0, fj - j0, fk - k0);
        let (i0, j0, k0) = (i0 as i64, j0 as i64, k0 as i64);
        let mut acc = 0.0;
        for (di, wi) in [(0, 1.0 - ti), (1, ti)] {
            for (dj, wj) in [(0, 1.0 - tj), (1, tj)] {
                for (dk, wk) in [(0, 1.0 - tk), (1, tk)] {
                    let w = wi * wj * wk;
                    if w != 0.0 {
                        acc += w * self.get(i0 + di, j0 + dj, k0 + dk);
                    }
                }
            }
        }
        acc
    }

    /// Writes the flat binary snapshot: `N: u64`, `Nz: u64`, `t: f64`, then
    /// the values in storage order, all little-endian.
    pub fn write_binary(&self, path: &Path, t: f64) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(&(self.spec.n as u64).to_le_bytes())?;
        w.write_all(&(self.spec.nz as u64).to_le_bytes())?;
        w.write_all(&t.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a binary snapshot, returning the field and its time stamp.
    pub fn read_binary(path: &Path) -> Result<(Self, f64)> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let nz = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let t = f64::from_le_bytes(b8);
        let spec = GridSpec::new(n, nz)?;
        let mut values = Vec::with_capacity(spec.len());
        for _ in 0..spec.len() {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Ok((Self::from_values(spec, values)?, t))
    }

    /// CSV export: `i,j,k,x,y,z,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "i,j,k,x,y,z,value")?;
        for (idx, v) in self.values.iter().enumerate() {
            let (i, j, k) = self.spec.unflat(idx);
            let [x, y, z] = self.spec.coords(i, j, k);
            writeln!(w, "{i},{j},{k},{x},{y},{z},{v:.17e}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`GridScalarField::write_csv`].
    pub fn read_csv(path: &Path, spec: GridSpec) -> Result<Self> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut values = vec![f64::NAN; spec.len()];
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(Error::invalid(format!("line {}: expected 7 columns", lineno + 1)));
            }
            let parse_idx = |s: &str| {
                s.trim().parse::<usize>().map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))
            };
            let (i, j, k) = (parse_idx(cols[0])?, parse_idx(cols[1])?, parse_idx(cols[2])?);
            if i >= spec.n || j >= spec.n || k >= spec.nz {
                return Err(Error::invalid(format!("line {}: index out of range", lineno + 1)));
            }
            let v: f64 =
                cols[6].trim().parse().map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))?;
            values[spec.flat(i, j, k)] = v;
        }
        Self::from_values(spec, values)
    }
}

/// Discrete frame derivative with central stencils of order 2 or 4.
pub fn frame_derivative(f: &GridScalarField, dir: Direction, order: u8) -> Result<GridScalarField> {
    let w = first_derivative_weights(order)?;
    let mut out = vec![0.0; f.spec.len()];
    accumulate_derivative(&mut out, f, dir, w);
    Ok(GridScalarField { spec: f.spec, values: out })
}

/// `out += D_dir f`, reading rotated rows so every tap is contiguous.
fn accumulate_derivative(out: &mut [f64], f: &GridScalarField, dir: Direction, w: &[(i64, f64)]) {
    let spec = f.spec;
    let n = spec.n;
    let nz = spec.nz;
    let h = spec.h();
    let inv_h = 1.0 / h;
    let inv_hz = 1.0 / spec.hz();
    out.par_chunks_mut(nz).with_min_len(n).enumerate().for_each(|(row, o)| {
        let (i, j) = (row / n, row % n);
        let own = &f.values[row * nz..(row + 1) * nz];
        // z-part coefficient: ½y for X, −½x for Y, 1 for R
        let zc = match dir {
            Direction::X => 0.5 * j as f64 * h,
            Direction::Y => -0.5 * i as f64 * h,
            Direction::R => 1.0,
        };
        if zc != 0.0 {
            for &(off, wt) in w {
                add_rotated(o, own, off, wt * zc * inv_hz);
            }
        }
        if dir == Direction::R {
            return;
        }
        for &(off, wt) in w {
            let (start, shift) = match dir {
                Direction::X => spec.row_ref(i as i64 + off, j as i64),
                _ => spec.row_ref(i as i64, j as i64 + off),
            };
            add_rotated(o, &f.values[start..start + nz], shift, wt * inv_h);
        }
    });
}

/// Stencil evaluated at an arbitrary cover index, with the coefficient of
/// `∂z` taken from the unwrapped coordinates and every read going through
/// [`GridSpec::deck_index`]. Independent of the row-rotation fast path.
pub fn derivative_at(f: &GridScalarField, dir: Direction, order: u8, i: i64, j: i64, k: i64) -> Result<f64> {
    let w = first_derivative_weights(order)?;
    let spec = f.spec;
    let (h, hz) = (spec.h(), spec.hz());
    let zc = match dir {
        Direction::X => 0.5 * j.rem_euclid(spec.n as i64) as f64 * h + 0.5 * j.div_euclid(spec.n as i64) as f64,
        Direction::Y => -0.5 * i.rem_euclid(spec.n as i64) as f64 * h - 0.5 * i.div_euclid(spec.n as i64) as f64,
        Direction::R => 1.0,
    };
    let mut acc = 0.0;
    if zc != 0.0 {
        for &(off, wt) in w {
            acc += wt * zc * (1.0 / hz) * f.get(i, j, k + off);
        }
    }
    if dir != Direction::R {
        for &(off, wt) in w {
            let v = match dir {
                Direction::X => f.get(i + off, j, k),
                _ => f.get(i, j + off, k),
            };
            acc += wt * (1.0 / h) * v;
        }
    }
    Ok(acc)
}

/// `X(Xf) + Y(Yf)` by stencil composition.
pub fn discrete_sub_laplacian(f: &GridScalarField, order: u8) -> Result<GridScalarField> {
    let w = first_derivative_weights(order)?;
    let xf = frame_derivative(f, Direction::X, order)?;
    let yf = frame_derivative(f, Direction::Y, order)?;
    let mut out = vec![0.0; f.spec.len()];
    accumulate_derivative(&mut out, &xf, Direction::X, w);
    accumulate_derivative(&mut out, &yf, Direction::Y, w);
    Ok(GridScalarField { spec: f.spec, values: out })
}

/// `(Xf, Yf)` pair.
pub fn horizontal_gradient(f: &GridScalarField, order: u8) -> Result<(GridScalarField, GridScalarField)> {
    Ok((frame_derivative(f, Direction::X, order)?, frame_derivative(f, Direction::Y, order)?))
}

/// Closed-form lattice-invariant bump `Σ_{|a|,|b|≤3} φ(γ_ab · p)` with
/// `φ = exp(−(x²+y²)/σ²)·(cos 2πz + shift)` and `γ_ab = (a, b, −ab/2)`.
/// Every term is a left translate of φ, so frame derivatives of the sum are
/// sums of translated frame derivatives of φ; the truncation error is below
/// `exp(−4/σ²)` on the fundamental domain.
pub fn invariant_bump(sigma: f64, shift: f64) -> Field {
    let x = Field::coord(0);
    let y = Field::coord(1);
    let z = Field::coord(2);
    let mut total = Field::constant(0.0);
    for a in -3i32..=3 {
        for b in -3i32..=3 {
            let (af, bf) = (a as f64, b as f64);
            let xs = x.clone() + af;
            let ys = y.clone() + bf;
            // z' = z − ab/2 + ½(x·b − a·y)
            let zs = z.clone() + (-0.5 * af * bf) + 0.5 * bf * x.clone() + (-0.5 * af) * y.clone();
            let r2 = xs.powi(2) + ys.powi(2);
            let env = ((-1.0 / (sigma * sigma)) * r2).exp();
            total = total + env * ((2.0 * std::f64::consts::PI * zs).cos() + shift);
        }
    }
    total
}
