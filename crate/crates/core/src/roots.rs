//! Polynomial roots as eigenvalues of a balanced companion matrix.
//!
//! The companion matrix of a monic polynomial is already upper Hessenberg,
//! so the eigenvalues come from a shifted complex QR iteration on the
//! Hessenberg form after a diagonal balancing pass.

use num_complex::Complex64;
use thiserror::Error;

const MAX_ITERATIONS_PER_ROOT: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    #[error("QR iteration did not converge for a degree-{degree} polynomial")]
    NoConvergence { degree: usize },
    #[error("polynomial has non-finite coefficients")]
    NonFinite,
}

/// Roots of `t^n + c[n-1] t^{n-1} + ... + c[0]`, where `c` holds the
/// lower coefficients in ascending order.
pub fn monic_roots(lower: &[Complex64]) -> Result<Vec<Complex64>, RootError> {
    let n = lower.len();
    if lower.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(RootError::NonFinite);
    }
    match n {
        0 => return Ok(Vec::new()),
        1 => return Ok(vec![-lower[0]]),
        _ => {}
    }
    let mut h = HessenbergMatrix::companion(lower);
    h.balance();
    h.eigenvalues()
}

/// Dense row-major square matrix used by the QR iteration.
struct HessenbergMatrix {
    n: usize,
    a: Vec<Complex64>,
}

impl HessenbergMatrix {
    /// First row `-c[n-1], ..., -c[0]`, ones on the subdiagonal.
    fn companion(lower: &[Complex64]) -> Self {
        let n = lower.len();
        let mut a = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            a[j] = -lower[n - 1 - j];
        }
        for i in 1..n {
            a[i * n + i - 1] = Complex64::new(1.0, 0.0);
        }
        HessenbergMatrix { n, a }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> Complex64 {
        self.a[i * self.n + j]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut Complex64 {
        &mut self.a[i * self.n + j]
    }

    /// Diagonal similarity scaling by powers of two so that row and column
    /// 1-norms are comparable. Preserves the Hessenberg pattern.
    fn balance(&mut self) {
        const RADIX: f64 = 2.0;
        let n = self.n;
        let mut converged = false;
        while !converged {
            converged = true;
            for i in 0..n {
                let mut col = 0.0;
                let mut row = 0.0;
                for j in 0..n {
                    if j != i {
                        col += self.at(j, i).l1_norm();
                        row += self.at(i, j).l1_norm();
                    }
                }
                if col == 0.0 || row == 0.0 {
                    continue;
                }
                let total = col + row;
                let mut f = 1.0;
                let mut g = row / RADIX;
                while col < g {
                    f *= RADIX;
                    col *= RADIX * RADIX;
                }
                g = row * RADIX;
                while col > g {
                    f /= RADIX;
                    col /= RADIX * RADIX;
                }
                if (col + row / f) < 0.95 * total * f {
                    converged = false;
                    let inv = 1.0 / f;
                    for j in 0..n {
                        *self.at_mut(i, j) *= inv;
                    }
                    for j in 0..n {
                        *self.at_mut(j, i) *= f;
                    }
                }
            }
        }
    }

    fn eigenvalues(mut self) -> Result<Vec<Complex64>, RootError> {
        let n = self.n;
        let mut roots = Vec::with_capacity(n);
        let mut hi = n - 1;
        let mut iterations = 0usize;
        let mut total = 0usize;
        loop {
            if hi == 0 {
                roots.push(self.at(0, 0));
                break;
            }
            // Locate the start of the unreduced trailing block.
            let mut lo = hi;
            while lo > 0 {
                let sub = self.at(lo, lo - 1).l1_norm();
                let diag = self.at(lo - 1, lo - 1).l1_norm() + self.at(lo, lo).l1_norm();
                let scale = if diag == 0.0 { 1.0 } else { diag };
                if sub <= f64::EPSILON * scale {
                    *self.at_mut(lo, lo - 1) = Complex64::new(0.0, 0.0);
                    break;
                }
                lo -= 1;
            }
            if lo == hi {
                roots.push(self.at(hi, hi));
                hi -= 1;
                iterations = 0;
                continue;
            }
            iterations += 1;
            total += 1;
            if total > MAX_ITERATIONS_PER_ROOT * n {
                return Err(RootError::NoConvergence { degree: n });
            }
            let shift = if iterations.is_multiple_of(11) {
                // exceptional shift to break cycles
                self.at(hi, hi) + Complex64::new(self.at(hi, hi - 1).norm(), 0.0) * 0.75
            } else {
                self.wilkinson_shift(hi)
            };
            self.qr_step(lo, hi, shift);
            if self.a.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
                return Err(RootError::NoConvergence { degree: n });
            }
        }
        roots.reverse();
        Ok(roots)
    }

    /// Eigenvalue of the trailing 2x2 block closest to its last diagonal entry.
    fn wilkinson_shift(&self, hi: usize) -> Complex64 {
        let a = self.at(hi - 1, hi - 1);
        let b = self.at(hi - 1, hi);
        let c = self.at(hi, hi - 1);
        let d = self.at(hi, hi);
        let half = (a - d) * 0.5;
        let disc = (half * half + b * c).sqrt();
        let mean = (a + d) * 0.5;
        let l1 = mean + disc;
        let l2 = mean - disc;
        if (l1 - d).norm() <= (l2 - d).norm() {
            l1
        } else {
            l2
        }
    }

    /// One explicitly shifted QR step on the window `lo..=hi` using Givens
    /// rotations. Only the window is touched since only eigenvalues are needed.
    fn qr_step(&mut self, lo: usize, hi: usize, shift: Complex64) {
        for k in lo..=hi {
            *self.at_mut(k, k) -= shift;
        }
        let mut rotations = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let x = self.at(k, k);
            let y = self.at(k + 1, k);
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (c, s) = if r == 0.0 {
                (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
            } else {
                (x / r, y / r)
            };
            for j in k..=hi {
                let u = self.at(k, j);
                let v = self.at(k + 1, j);
                *self.at_mut(k, j) = c.conj() * u + s.conj() * v;
                *self.at_mut(k + 1, j) = -s * u + c * v;
            }
            rotations.push((c, s));
        }
        for (offset, &(c, s)) in rotations.iter().enumerate() {
            let k = lo + offset;
            let last = (k + 2).min(hi);
            for i in lo..=last {
                let u = self.at(i, k);
                let v = self.at(i, k + 1);
                *self.at_mut(i, k) = u * c + v * s;
                *self.at_mut(i, k + 1) = -u * s.conj() + v * c.conj();
            }
        }
        for k in lo..=hi {
            *self.at_mut(k, k) += shift;
        }
    }
}
