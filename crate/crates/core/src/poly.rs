//! Sparse multivariate polynomials over `C` and polynomial self-maps of `C^n`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::weights::{MultiIndex, Weight};

/// Coefficients below this fraction of the largest coefficient modulus are
/// dropped after composition.
pub const COMPOSE_DROP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("a polynomial map needs at least one component")]
    EmptyMap,
    #[error("non-finite coefficient for exponent {0}")]
    NonFinite(MultiIndex),
}

/// Total degree of a polynomial. The zero polynomial has degree `-inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Degree {
    NegInfinity,
    Finite(u32),
}

impl Degree {
    /// Integer encoding used in reports: `-1` stands for `-inf`.
    pub fn as_i64(self) -> i64 {
        match self {
            Degree::NegInfinity => -1,
            Degree::Finite(d) => i64::from(d),
        }
    }

    pub fn at_most(self, bound: u32) -> bool {
        match self {
            Degree::NegInfinity => true,
            Degree::Finite(d) => d <= bound,
        }
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degree::NegInfinity => write!(f, "-inf"),
            Degree::Finite(d) => write!(f, "{d}"),
        }
    }
}

impl Serialize for Degree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i64(self.as_i64())
    }
}

/// `sum a_alpha z^alpha` with no stored zero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePoly {
    dim: usize,
    terms: BTreeMap<MultiIndex, Complex64>,
}

impl SparsePoly {
    pub fn zero(dim: usize) -> Self {
        SparsePoly {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: Complex64) -> Self {
        SparsePoly::monomial(MultiIndex::zero(dim), c)
    }

    pub fn monomial(alpha: MultiIndex, c: Complex64) -> Self {
        let mut p = SparsePoly::zero(alpha.dim());
        p.add_term(alpha, c);
        p
    }

    /// The coordinate function `z_i` (0-based).
    pub fn variable(dim: usize, i: usize) -> Self {
        SparsePoly::monomial(MultiIndex::unit(dim, i), Complex64::new(1.0, 0.0))
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (MultiIndex, Complex64)>,
    {
        let mut p = SparsePoly::zero(dim);
        for (alpha, c) in terms {
            if alpha.dim() != dim {
                return Err(PolyError::DimensionMismatch {
                    expected: dim,
                    found: alpha.dim(),
                });
            }
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(PolyError::NonFinite(alpha));
            }
            p.add_term(alpha, c);
        }
        Ok(p)
    }

    /// Adds `c z^alpha`, removing the term if it cancels exactly.
    pub fn add_term(&mut self, alpha: MultiIndex, c: Complex64) {
        debug_assert_eq!(alpha.dim(), self.dim);
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        let entry = self.terms.entry(alpha);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == Complex64::new(0.0, 0.0) {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, alpha: &MultiIndex) -> Complex64 {
        self.terms.get(alpha).copied().unwrap_or_default()
    }

    pub fn constant_term(&self) -> Complex64 {
        self.coefficient(&MultiIndex::zero(self.dim))
    }

    pub fn degree(&self) -> Degree {
        self.terms
            .keys()
            .map(MultiIndex::total_degree)
            .max()
            .map_or(Degree::NegInfinity, Degree::Finite)
    }

    /// Smallest total degree of a term; `None` for the zero polynomial.
    pub fn lowest_degree(&self) -> Option<u32> {
        self.terms.keys().map(MultiIndex::total_degree).min()
    }

    pub fn max_coefficient_modulus(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest exponent of each variable across all terms.
    pub fn max_exponents(&self) -> Vec<u32> {
        let mut out = vec![0; self.dim];
        for alpha in self.terms.keys() {
            for (o, &a) in out.iter_mut().zip(alpha.exponents()) {
                *o = (*o).max(a);
            }
        }
        out
    }

    fn check_point(&self, z: &[Complex64]) -> Result<(), PolyError> {
        if z.len() != self.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, z: &[Complex64]) -> Result<Complex64, PolyError> {
        self.check_point(z)?;
        Ok(self.eval_unchecked(z))
    }

    pub(crate) fn eval_unchecked(&self, z: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (alpha, c) in &self.terms {
            let mut t = *c;
            for (zj, &a) in z.iter().zip(alpha.exponents()) {
                if a > 0 {
                    t *= zj.powu(a);
                }
            }
            acc += t;
        }
        acc
    }

    pub fn scale(&self, c: Complex64) -> SparsePoly {
        let mut out = SparsePoly::zero(self.dim);
        for (alpha, a) in &self.terms {
            out.add_term(alpha.clone(), a * c);
        }
        out
    }

    pub fn pow(&self, e: u32) -> SparsePoly {
        let mut result = SparsePoly::constant(self.dim, Complex64::new(1.0, 0.0));
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// `d/dz_i` (0-based).
    pub fn derivative(&self, i: usize) -> SparsePoly {
        let mut out = SparsePoly::zero(self.dim);
        for (alpha, c) in &self.terms {
            let a = alpha.exponents()[i];
            if a == 0 {
                continue;
            }
            let mut e = alpha.exponents().to_vec();
            e[i] -= 1;
            out.add_term(MultiIndex::new(e), c * f64::from(a));
        }
        out
    }

    /// Complex conjugate coefficients: `conj(p(conj z))`.
    pub fn conj_coefficients(&self) -> SparsePoly {
        SparsePoly {
            dim: self.dim,
            terms: self.terms.iter().map(|(a, c)| (a.clone(), c.conj())).collect(),
        }
    }

    /// Drops terms with modulus below `rel_tol` times the largest modulus.
    /// Returns how many terms were removed.
    pub fn prune(&mut self, rel_tol: f64) -> usize {
        let threshold = rel_tol * self.max_coefficient_modulus();
        let before = self.terms.len();
        self.terms.retain(|_, c| c.norm() >= threshold);
        before - self.terms.len()
    }

    /// Splits `p` into its m-homogeneous parts, keyed by weighted degree.
    pub fn m_components(&self, m: &Weight) -> Result<BTreeMap<u64, SparsePoly>, PolyError> {
        if m.dim() != self.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                found: m.dim(),
            });
        }
        let mut out: BTreeMap<u64, SparsePoly> = BTreeMap::new();
        for (alpha, c) in &self.terms {
            out.entry(alpha.weighted_degree(m))
                .or_insert_with(|| SparsePoly::zero(self.dim))
                .add_term(alpha.clone(), *c);
        }
        Ok(out)
    }

    /// Whether every term has weighted degree `k`.
    pub fn is_m_homogeneous(&self, m: &Weight, k: u64) -> bool {
        self.terms.keys().all(|a| a.weighted_degree(m) == k)
    }

    /// Largest coefficient-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &SparsePoly) -> f64 {
        (self - other).max_coefficient_modulus()
    }
}

impl fmt::Display for SparsePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (alpha, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({:.6}{:+.6}i)", c.re, c.im)?;
            for (j, &a) in alpha.exponents().iter().enumerate() {
                match a {
                    0 => {}
                    1 => write!(f, "*z{}", j + 1)?,
                    _ => write!(f, "*z{}^{}", j + 1, a)?,
                }
            }
        }
        Ok(())
    }
}

impl Add for &SparsePoly {
    type Output = SparsePoly;
    fn add(self, rhs: &SparsePoly) -> SparsePoly {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in polynomial sum");
        let mut out = self.clone();
        for (alpha, c) in &rhs.terms {
            out.add_term(alpha.clone(), *c);
        }
        out
    }
}

impl Sub for &SparsePoly {
    type Output = SparsePoly;
    fn sub(self, rhs: &SparsePoly) -> SparsePoly {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in polynomial difference");
        let mut out = self.clone();
        for (alpha, c) in &rhs.terms {
            out.add_term(alpha.clone(), -c);
        }
        out
    }
}

impl Neg for &SparsePoly {
    type Output = SparsePoly;
    fn neg(self) -> SparsePoly {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul for &SparsePoly {
    type Output = SparsePoly;
    fn mul(self, rhs: &SparsePoly) -> SparsePoly {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in polynomial product");
        let mut out = SparsePoly::zero(self.dim);
        for (a, ca) in &self.terms {
            for (b, cb) in &rhs.terms {
                out.add_term(a.add(b), ca * cb);
            }
        }
        out
    }
}

/// A polynomial self-map `f = (f_1, ..., f_n)` of `C^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMap {
    dim: usize,
    components: Vec<SparsePoly>,
}

impl PolyMap {
    pub fn new(components: Vec<SparsePoly>) -> Result<Self, PolyError> {
        let dim = components.len();
        if dim == 0 {
            return Err(PolyError::EmptyMap);
        }
        for c in &components {
            if c.dim() != dim {
                return Err(PolyError::DimensionMismatch {
                    expected: dim,
                    found: c.dim(),
                });
            }
        }
        Ok(PolyMap { dim, components })
    }

    pub fn identity(dim: usize) -> Self {
        PolyMap {
            dim,
            components: (0..dim).map(|i| SparsePoly::variable(dim, i)).collect(),
        }
    }

    /// The linear map `z -> A z`.
    pub fn linear(a: &DMatrix<Complex64>) -> Result<Self, PolyError> {
        if a.nrows() != a.ncols() {
            return Err(PolyError::DimensionMismatch {
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        let n = a.nrows();
        let components = (0..n)
            .map(|i| {
                SparsePoly::from_terms(n, (0..n).map(|j| (MultiIndex::unit(n, j), a[(i, j)])))
            })
            .collect::<Result<Vec<_>, _>>()?;
        PolyMap::new(components)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[SparsePoly] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &SparsePoly {
        &self.components[i]
    }

    pub fn degrees(&self) -> Vec<Degree> {
        self.components.iter().map(SparsePoly::degree).collect()
    }

    pub fn degree(&self) -> Degree {
        self.degrees().into_iter().max().unwrap_or(Degree::NegInfinity)
    }

    pub fn evaluate(&self, z: &[Complex64]) -> Result<Vec<Complex64>, PolyError> {
        if z.len() != self.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        Ok(self.eval_unchecked(z))
    }

    pub(crate) fn eval_unchecked(&self, z: &[Complex64]) -> Vec<Complex64> {
        self.components.iter().map(|c| c.eval_unchecked(z)).collect()
    }

    /// Largest coefficient-wise difference over all components.
    pub fn max_abs_diff(&self, other: &PolyMap) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// Symbolic Jacobian matrix `[d f_i / d z_j]`.
    pub fn jacobian(&self) -> Jacobian {
        Jacobian {
            dim: self.dim,
            entries: self
                .components
                .iter()
                .flat_map(|f| (0..self.dim).map(move |j| f.derivative(j)))
                .collect(),
        }
    }
}

/// Substitutes `g` into `p`: returns `p(g_1, ..., g_n)` without pruning.
pub fn substitute(p: &SparsePoly, g: &PolyMap) -> Result<SparsePoly, PolyError> {
    if p.dim() != g.dim() {
        return Err(PolyError::DimensionMismatch {
            expected: p.dim(),
            found: g.dim(),
        });
    }
    let max_exp = p.max_exponents();
    let powers: Vec<Vec<SparsePoly>> = g
        .components
        .iter()
        .zip(&max_exp)
        .map(|(gj, &e)| {
            let mut table = Vec::with_capacity(e as usize + 1);
            table.push(SparsePoly::constant(g.dim, Complex64::new(1.0, 0.0)));
            for k in 1..=e as usize {
                let next = &table[k - 1] * gj;
                table.push(next);
            }
            table
        })
        .collect();
    let mut out = SparsePoly::zero(g.dim);
    for (alpha, c) in p.terms() {
        let mut term = SparsePoly::constant(g.dim, *c);
        for (j, &a) in alpha.exponents().iter().enumerate() {
            if a > 0 {
                term = &term * &powers[j][a as usize];
            }
        }
        out = &out + &term;
    }
    Ok(out)
}

/// `f o g`, i.e. `z -> f(g(z))`.
///
/// Coefficients below [`COMPOSE_DROP_TOLERANCE`] times the largest
/// coefficient modulus of each component are dropped, and the drop is logged.
pub fn compose(f: &PolyMap, g: &PolyMap) -> Result<PolyMap, PolyError> {
    if f.dim() != g.dim() {
        return Err(PolyError::DimensionMismatch {
            expected: f.dim(),
            found: g.dim(),
        });
    }
    let mut components = Vec::with_capacity(f.dim());
    for (i, fi) in f.components.iter().enumerate() {
        let mut c = substitute(fi, g)?;
        let dropped = c.prune(COMPOSE_DROP_TOLERANCE);
        if dropped > 0 {
            log::debug!("compose: dropped {dropped} negligible terms in component {}", i + 1);
        }
        components.push(c);
    }
    PolyMap::new(components)
}

/// Symbolic Jacobian of a [`PolyMap`], evaluated numerically on demand.
#[derive(Debug, Clone)]
pub struct Jacobian {
    dim: usize,
    entries: Vec<SparsePoly>,
}

impl Jacobian {
    pub fn entry(&self, i: usize, j: usize) -> &SparsePoly {
        &self.entries[i * self.dim + j]
    }

    pub fn matrix_at(&self, z: &[Complex64]) -> Result<DMatrix<Complex64>, PolyError> {
        if z.len() != self.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        Ok(DMatrix::from_fn(self.dim, self.dim, |i, j| {
            self.entry(i, j).eval_unchecked(z)
        }))
    }

    /// Holomorphic Jacobian determinant at `z` (partial-pivot LU).
    pub fn det_at(&self, z: &[Complex64]) -> Result<Complex64, PolyError> {
        Ok(self.matrix_at(z)?.lu().determinant())
    }
}

pub fn jacobian_det(f: &PolyMap, z: &[Complex64]) -> Result<Complex64, PolyError> {
    f.jacobian().det_at(z)
}

#[derive(Serialize, Deserialize)]
struct TermRecord {
    alpha: Vec<u32>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyMapRecord {
    dim: usize,
    components: Vec<Vec<TermRecord>>,
}

fn records(p: &SparsePoly) -> Vec<TermRecord> {
    p.terms()
        .map(|(a, c)| TermRecord {
            alpha: a.exponents().to_vec(),
            re: c.re,
            im: c.im,
        })
        .collect()
}

impl Serialize for SparsePoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        records(self).serialize(s)
    }
}

impl Serialize for PolyMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PolyMapRecord {
            dim: self.dim,
            components: self.components.iter().map(records).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolyMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let rec = PolyMapRecord::deserialize(d)?;
        if rec.components.len() != rec.dim {
            return Err(D::Error::custom(format!(
                "map declares dim {} but has {} components",
                rec.dim,
                rec.components.len()
            )));
        }
        let components = rec
            .components
            .into_iter()
            .map(|terms| {
                SparsePoly::from_terms(
                    rec.dim,
                    terms
                        .into_iter()
                        .map(|t| (MultiIndex::new(t.alpha), Complex64::new(t.re, t.im))),
                )
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(D::Error::custom)?;
        PolyMap::new(components).map_err(D::Error::custom)
    }
}

impl PolyMap {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("polynomial maps always serialize")
    }

    pub fn from_json(s: &str) -> Result<PolyMap, serde_json::Error> {
        serde_json::from_str(s)
    }
}
