//! Small symmetric eigensolvers: cyclic Jacobi for dense matrices and a
//! Lanczos iteration for extremal eigenpairs of large operators.

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, project_out_constant, Real};

/// Dense row-major symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], x))
            .collect()
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    fn frobenius(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }
}

/// Eigenvalues (ascending) with eigenvectors as columns of `vectors`
/// (`vectors[k]` is the unit eigenvector for `values[k]`).
#[derive(Debug, Clone)]
pub struct Eigen<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition.
pub fn jacobi<T: Real>(matrix: &SymMatrix<T>) -> Result<Eigen<T>> {
    let n = matrix.dim();
    let mut a = matrix.clone();
    let mut v = SymMatrix::from_fn(n, |i, j| if i == j { T::one() } else { T::zero() });
    let scale = a.frobenius();
    let eps = T::epsilon() * T::from_usize_lossy(n.max(1));
    let two = T::lit(2.0);

    let off = |a: &SymMatrix<T>| {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..i {
                s = s + a.get(i, j) * a.get(i, j);
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off(&a) > eps * scale && scale > T::zero() {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::EigenNoConvergence {
                iterations: sweeps,
                residual: off(&a).as_f64(),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(i, i)
            .partial_cmp(&a.get(j, j))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(Eigen {
        values: order.iter().map(|&k| a.get(k, k)).collect(),
        vectors: order.iter().map(|&k| (0..n).map(|i| v.get(i, k)).collect()).collect(),
    })
}

/// Householder reflector `Q = I - 2 w w^T / (w^T w)` with `Q e_{n-1} = (1, ..., 1) / sqrt(n)`.
///
/// `Q` is symmetric and orthogonal, so its first `n - 1` columns are an
/// orthonormal basis of the complement of the constant vector.
#[derive(Debug, Clone)]
pub struct ConstantComplement<T> {
    w: Vec<T>,
    beta: T,
}

impl<T: Real> ConstantComplement<T> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "complement basis needs n >= 2");
        let a = T::one() / T::from_usize_lossy(n).sqrt();
        let mut w = vec![a; n];
        // w = a*1 - e_{n-1}; w^T w = 2 - 2a
        w[n - 1] = a - T::one();
        let ww = dot(&w, &w);
        ConstantComplement {
            w,
            beta: T::lit(2.0) / ww,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Applies `Q` to `x` in place.
    pub fn reflect(&self, x: &mut [T]) {
        let s = self.beta * dot(&self.w, x);
        for (xi, &wi) in x.iter_mut().zip(&self.w) {
            *xi = *xi - s * wi;
        }
    }

    /// Maps reduced coordinates `y` (length `n - 1`) to the full vector `Q (y, 0)`.
    pub fn lift(&self, y: &[T]) -> Vec<T> {
        let mut x: Vec<T> = y.to_vec();
        x.push(T::zero());
        self.reflect(&mut x);
        x
    }

    /// Restriction `S A S^T` of a symmetric matrix to the complement,
    /// computed as the leading block of `Q A Q`.
    pub fn restrict(&self, a: &SymMatrix<T>) -> SymMatrix<T> {
        let n = a.dim();
        let p: Vec<T> = a.mul_vec(&self.w).into_iter().map(|x| x * self.beta).collect();
        let k = self.beta * dot(&self.w, &p) / T::lit(2.0);
        let q: Vec<T> = p.iter().zip(&self.w).map(|(&pi, &wi)| pi - k * wi).collect();
        SymMatrix::from_fn(n - 1, |i, j| a.get(i, j) - self.w[i] * q[j] - q[i] * self.w[j])
    }
}

/// Orthonormal basis of the constant complement by Gram-Schmidt on the
/// differences `e_i - e_{i+1}`. Rows of the returned matrix are the basis.
pub fn complement_basis_gram_schmidt<T: Real>(n: usize) -> Vec<Vec<T>> {
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n.saturating_sub(1) {
        let mut v = vec![T::zero(); n];
        v[i] = T::one();
        v[i + 1] = -T::one();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                for (vk, &bk) in v.iter_mut().zip(b) {
                    *vk = *vk - c * bk;
                }
            }
        }
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x = *x / nv);
        basis.push(v);
    }
    basis
}

/// Which end of the spectrum to target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    Smallest,
    Largest,
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub tol: f64,
    /// Work in the complement of the constant vector.
    pub deflate_constant: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            krylov_dim: 120,
            max_restarts: 200,
            tol: 1e-11,
            deflate_constant: true,
        }
    }
}

/// Extremal eigenpair of a symmetric operator by restarted Lanczos with
/// full reorthogonalization.
pub fn lanczos<T: Real>(
    n: usize,
    apply: impl Fn(&[T], &mut [T]),
    which: Extreme,
    opts: LanczosOptions,
) -> Result<(T, Vec<T>)> {
    let effective = if opts.deflate_constant { n - 1 } else { n };
    let m = opts.krylov_dim.min(effective).max(1);
    let project = |v: &mut [T]| {
        if opts.deflate_constant {
            project_out_constant(v);
        }
    };

    // deterministic, non-symmetric start vector
    let mut start: Vec<T> = (0..n)
        .map(|i| T::lit(((i as f64 + 1.0) * 0.754_877_666).fract() - 0.5))
        .collect();
    project(&mut start);
    let mut residual = f64::INFINITY;
    let mut work = vec![T::zero(); n];

    for _restart in 0..opts.max_restarts {
        let nrm = norm(&start);
        let mut basis: Vec<Vec<T>> = vec![start.iter().map(|&x| x / nrm).collect()];
        // columns of the projected matrix Q^T A Q, filled by the
        // orthogonalization coefficients
        let mut columns: Vec<Vec<T>> = Vec::with_capacity(m);
        let mut scale = T::zero();
        for k in 0..m {
            apply(&basis[k], &mut work);
            project(&mut work);
            let mut col = vec![T::zero(); k + 2];
            for _ in 0..2 {
                for (j, b) in basis.iter().enumerate() {
                    let c = dot(&work, b);
                    col[j] = col[j] + c;
                    for (wi, &bi) in work.iter_mut().zip(b) {
                        *wi = *wi - c * bi;
                    }
                }
            }
            project(&mut work);
            let bnext = norm(&work);
            col[k + 1] = bnext;
            scale = col.iter().fold(scale, |acc, x| acc.max(x.abs()));
            columns.push(col);
            // an invariant subspace was found; the rest is rounding noise
            if k + 1 == m || bnext <= T::lit(1e-10) * scale {
                break;
            }
            basis.push(work.iter().map(|&x| x / bnext).collect());
        }
        let k = columns.len();
        let entry = |i: usize, j: usize| columns[j].get(i).copied().unwrap_or(T::zero());
        let tri = SymMatrix::from_fn(k, |i, j| (entry(i, j) + entry(j, i)) / T::lit(2.0));
        let eig = jacobi(&tri)?;
        let idx = match which {
            Extreme::Smallest => 0,
            Extreme::Largest => k - 1,
        };
        let theta = eig.values[idx];
        let y = &eig.vectors[idx];
        let mut x = vec![T::zero(); n];
        for (coef, b) in y.iter().zip(&basis) {
            for (xi, &bi) in x.iter_mut().zip(b) {
                *xi = *xi + *coef * bi;
            }
        }
        project(&mut x);
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v = *v / nx);
        apply(&x, &mut work);
        project(&mut work);
        let res: T = work
            .iter()
            .zip(&x)
            .map(|(&ax, &xi)| (ax - theta * xi) * (ax - theta * xi))
            .sum::<T>()
            .sqrt();
        let spread = eig.values[k - 1]
            .abs()
            .max(eig.values[0].abs())
            .max(T::min_positive_value());
        residual = (res / spread).as_f64();
        if residual < opts.tol {
            return Ok((theta, x));
        }
        start = x;
    }
    Err(Error::EigenNoConvergence {
        iterations: opts.max_restarts,
        residual,
    })
}
