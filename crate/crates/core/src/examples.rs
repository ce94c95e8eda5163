//! Explicit maps used as verification inputs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::poly::{compose, substitute, PolyError, PolyMap, SparsePoly};
use crate::weights::{MultiIndex, Weight};

/// Largest `n` accepted by the symmetrized-ellipsoid map generators.
pub const MAX_SYMMETRIC_DIM: usize = 20;

/// Unitarity tolerance on `max |U U* - I|`.
pub const UNITARY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExampleError {
    #[error("dimension {n} is outside 2..={max}")]
    InvalidDimension { n: usize, max: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not unitary: max |UU* - I| = {deviation:.3e}")]
    NotUnitary { deviation: f64 },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// `C(n, k)` in exact integer arithmetic.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    // each partial product is itself a binomial coefficient, so division is exact
    (0..k).fold(1u64, |acc, j| acc * (n - j) / (j + 1))
}

fn check_symmetric_dim(n: usize) -> Result<(), ExampleError> {
    if !(2..=MAX_SYMMETRIC_DIM).contains(&n) {
        return Err(ExampleError::InvalidDimension {
            n,
            max: MAX_SYMMETRIC_DIM,
        });
    }
    Ok(())
}

/// `phi_i = sum_{j=0}^{i} (-1)^j (2/n)^{i-j} c(i, j) z_1^{i-j} z_j` with `z_0 = 1`.
fn symmetric_family(n: usize, coeff: impl Fn(u64, u64) -> u64) -> Result<PolyMap, ExampleError> {
    check_symmetric_dim(n)?;
    let ratio = 2.0 / n as f64;
    let mut components = Vec::with_capacity(n);
    for i in 1..=n {
        let mut p = SparsePoly::zero(n);
        for j in 0..=i {
            let mut exps = vec![0u32; n];
            exps[0] += (i - j) as u32;
            if j > 0 {
                exps[j - 1] += 1;
            }
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let c = sign * ratio.powi((i - j) as i32) * coeff(i as u64, j as u64) as f64;
            p.add_term(MultiIndex::new(exps), Complex64::new(c, 0.0));
        }
        components.push(p);
    }
    Ok(PolyMap::new(components)?)
}

/// The origin-fixing map proposed for the symmetrized `(q, n)`-ellipsoid,
/// `phi_i = (2/n)^i C(n,i) z_1^i + sum_{j=1}^{i} (-1)^j (2/n)^{i-j} C(n,i-j) z_1^{i-j} z_j`.
///
/// Coefficients are built from exact binomials; the `z_j` term of `phi_i`
/// carries `(-1)^i` for `i >= 2`, so the Jacobian is triangular with
/// determinant `+-1`.
pub fn zapalowski_map(n: usize) -> Result<PolyMap, ExampleError> {
    let nn = n as u64;
    symmetric_family(n, |i, j| binomial(nn, i - j))
}

/// Map induced on elementary symmetric coordinates by the reflection
/// `lambda -> (2/n) (sum lambda) 1 - lambda`. Uses `C(n-j, i-j)` where
/// [`zapalowski_map`] uses `C(n, i-j)`. The reflection is unitary, so this
/// is an automorphism of the symmetrized ellipsoid with `q = 1`.
pub fn symmetric_reflection_map(n: usize) -> Result<PolyMap, ExampleError> {
    let nn = n as u64;
    symmetric_family(n, |i, j| binomial(nn - j, i - j))
}

/// The weighted rotation `z_j -> e^{i m_j theta} z_j`.
pub fn rotation_map(m: &Weight, theta: f64) -> PolyMap {
    let n = m.dim();
    let components = m
        .entries()
        .iter()
        .enumerate()
        .map(|(j, &mj)| {
            SparsePoly::monomial(MultiIndex::unit(n, j), Complex64::from_polar(1.0, f64::from(mj) * theta))
        })
        .collect();
    PolyMap::new(components).expect("one component per weight entry")
}

/// `z -> U z` for a unitary `U`.
pub fn unitary_ball_map(u: &DMatrix<Complex64>) -> Result<PolyMap, ExampleError> {
    if u.nrows() != u.ncols() {
        return Err(ExampleError::NotSquare {
            rows: u.nrows(),
            cols: u.ncols(),
        });
    }
    let n = u.nrows();
    let gram = u * u.adjoint();
    let deviation = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let id = if i == j { 1.0 } else { 0.0 };
            (gram[(i, j)] - id).norm()
        })
        .fold(0.0, f64::max);
    if deviation.is_nan() || deviation > UNITARY_TOLERANCE {
        return Err(ExampleError::NotUnitary { deviation });
    }
    Ok(PolyMap::linear(u)?)
}

/// `I - 2 v v* / |v|^2`.
pub fn householder_reflector(v: &[Complex64]) -> DMatrix<Complex64> {
    let n = v.len();
    let norm_sq: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        Complex64::new(id, 0.0) - v[i] * v[j].conj() * (2.0 / norm_sq)
    })
}

/// Symbolic inverse of a triangular map by back-substitution.
///
/// Handles maps where, in the coordinate order `1..n` or its reverse, each
/// component is `a_i z_i + g_i` with `a_i` a nonzero constant and `g_i`
/// depending only on earlier coordinates. Returns `None` for anything else,
/// or when `f o f^{-1}` does not reduce to the identity within `1e-10`.
pub fn triangular_inverse(f: &PolyMap) -> Option<PolyMap> {
    let n = f.dim();
    let forward: Vec<usize> = (0..n).collect();
    let reverse: Vec<usize> = (0..n).rev().collect();
    [forward, reverse]
        .iter()
        .find_map(|order| invert_in_order(f, order))
}

fn invert_in_order(f: &PolyMap, order: &[usize]) -> Option<PolyMap> {
    let n = f.dim();
    // inverse[i] expresses z_i in terms of w
    let mut inverse: Vec<Option<SparsePoly>> = vec![None; n];
    for (pos, &i) in order.iter().enumerate() {
        let earlier = &order[..pos];
        let unit = MultiIndex::unit(n, i);
        let comp = f.component(i);
        let a = comp.coefficient(&unit);
        if a.norm() == 0.0 {
            return None;
        }
        let mut rest = SparsePoly::zero(n);
        for (alpha, c) in comp.terms() {
            if *alpha == unit {
                continue;
            }
            let uses_later = alpha
                .exponents()
                .iter()
                .enumerate()
                .any(|(j, &e)| e > 0 && !earlier.contains(&j));
            if uses_later {
                return None;
            }
            rest.add_term(alpha.clone(), *c);
        }
        // g_i evaluated at the already-inverted coordinates
        let partial = PolyMap::new(
            (0..n)
                .map(|j| inverse[j].clone().unwrap_or_else(|| SparsePoly::zero(n)))
                .collect(),
        )
        .ok()?;
        let g = substitute(&rest, &partial).ok()?;
        let w_i = SparsePoly::variable(n, i);
        inverse[i] = Some((&w_i - &g).scale(a.inv()));
    }
    let inv = PolyMap::new(inverse.into_iter().map(Option::unwrap).collect()).ok()?;
    let round_trip = compose(f, &inv).ok()?;
    if round_trip.max_abs_diff(&PolyMap::identity(n)) > 1e-10 {
        return None;
    }
    Some(inv)
}
