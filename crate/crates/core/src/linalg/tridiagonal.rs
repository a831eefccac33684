use alloc::vec;
use alloc::vec::Vec;

use super::{dot, norm2};
use crate::error::{Error, Result};

/// Relative residual accepted for an inverse-iteration eigenvector.
const RESIDUAL_TARGET: f64 = 1e-8;
const MAX_INVERSE_ITERATIONS: usize = 12;

/// Real symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
}

/// Selected lowest eigenpairs of a [`SymTridiagonal`].
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Unit-norm eigenvectors, one row of length `n` per eigenvalue.
    pub vectors: Vec<f64>,
    /// Largest relative residual `|T v - λ v| / scale(λ)` over the pairs.
    pub worst_residual: f64,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::invalid("diag", "matrix must have at least one row"));
        }
        if off.len() + 1 != diag.len() {
            return Err(Error::invalid(
                "off",
                "off-diagonal length must be one less than the diagonal",
            ));
        }
        if diag.iter().chain(&off).any(|v| !v.is_finite()) {
            return Err(Error::invalid("diag", "entries must be finite"));
        }
        Ok(Self { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    /// `out = T x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            out[i] = s;
        }
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.off[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.off[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        let pad = f64::EPSILON * (lo.abs().max(hi.abs())) * 4.0 + f64::MIN_POSITIVE;
        (lo - pad, hi + pad)
    }

    fn pivmin(&self) -> f64 {
        let emax = self.off.iter().map(|e| e * e).fold(1.0, f64::max);
        f64::MIN_POSITIVE * emax
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: f64) -> usize {
        let pivmin = self.pivmin();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / q;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based), by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.len(), "eigenvalue index out of range");
        let (mut lo, mut hi) = self.gershgorin();
        let pivmin = self.pivmin();
        for _ in 0..256 {
            let tol = 2.0 * f64::EPSILON * (lo.abs().max(hi.abs())) + pivmin;
            if hi - lo <= tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// The `count` lowest eigenpairs.
    ///
    /// Vectors belonging to eigenvalues closer than `1e-3 |T|` are
    /// re-orthogonalized against each other during inverse iteration.
    pub fn lowest_eigenpairs(&self, count: usize) -> Result<Eigenpairs> {
        let n = self.len();
        if count == 0 || count > n {
            return Err(Error::invalid("levels", "requested level count out of range"));
        }
        let values: Vec<f64> = (0..count).map(|k| self.eigenvalue(k)).collect();
        let tnorm = self.norm_inf();
        let cluster_gap = 1e-3 * tnorm;
        let mut vectors = vec![0.0; count * n];
        let mut worst = 0.0f64;
        let mut cluster_start = 0;
        let mut work = vec![0.0; n];

        for k in 0..count {
            if k > 0 && values[k] - values[k - 1] > cluster_gap {
                cluster_start = k;
            }
            let lambda = values[k];
            let lu = TridiagonalLu::factor(self, lambda, tnorm);
            let mut v = start_vector(n, k);
            let scale = lambda.abs().max(1e-6 * tnorm).max(f64::MIN_POSITIVE);
            let mut residual = f64::INFINITY;
            for _ in 0..MAX_INVERSE_ITERATIONS {
                lu.solve(&mut v);
                for j in cluster_start..k {
                    let prev = &vectors[j * n..(j + 1) * n];
                    let p = dot(&v, prev);
                    for (vi, pi) in v.iter_mut().zip(prev) {
                        *vi -= p * pi;
                    }
                }
                let nv = norm2(&v);
                if nv == 0.0 || !nv.is_finite() {
                    v = start_vector(n, k + 7);
                    continue;
                }
                v.iter_mut().for_each(|x| *x /= nv);
                self.mul_vec(&v, &mut work);
                let r: f64 = work
                    .iter()
                    .zip(&v)
                    .map(|(tv, vi)| {
                        let d = tv - lambda * vi;
                        d * d
                    })
                    .sum();
                residual = crate::math::sqrt(r) / scale;
                if residual < RESIDUAL_TARGET * 1e-2 {
                    break;
                }
            }
            // also catches NaN
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(residual < RESIDUAL_TARGET) {
                return Err(Error::SolverFailure {
                    worst_residual: residual,
                });
            }
            worst = worst.max(residual);
            vectors[k * n..(k + 1) * n].copy_from_slice(&v);
        }

        Ok(Eigenpairs {
            values,
            vectors,
            worst_residual: worst,
        })
    }
}

/// Deterministic start vector with components of both signs.
fn start_vector(n: usize, salt: usize) -> Vec<f64> {
    let mut state = 0x2545_F491_4F6C_DD1Du64 ^ (salt as u64).wrapping_mul(0x9E37_79B9);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// LU factorization with partial pivoting of `T - λ I` (LAPACK `dgttrf`).
struct TridiagonalLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    fn factor(t: &SymTridiagonal, lambda: f64, tnorm: f64) -> Self {
        let n = t.len();
        let mut dl = t.off.clone();
        let mut d: Vec<f64> = t.diag.iter().map(|x| x - lambda).collect();
        let mut du = t.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let tiny = f64::EPSILON * tnorm.max(f64::MIN_POSITIVE);

        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        for x in d.iter_mut() {
            if x.abs() < tiny {
                *x = if *x < 0.0 { -tiny } else { tiny };
            }
        }
        Self {
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
        // Rescale to keep iterates representable.
        let m = b.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if m > 1e100 {
            b.iter_mut().for_each(|x| *x /= m);
        }
    }
}
