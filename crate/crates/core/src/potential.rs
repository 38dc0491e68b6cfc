//! Calabi energy and the combinatorial Ricci potential.
//!
//! The Ricci potential is the line integral of the closed 1-form
//! `sum_i (K_i - target_i) du_i`. It is evaluated by composite Simpson
//! quadrature along straight segments in `u`-space, with panel doubling
//! until the Richardson estimate of the error is small.

use rayon::prelude::*;

use crate::eigen::{complement_basis_gram_schmidt, jacobi, SymMatrix};
use crate::error::{Error, Result};
use crate::flows::{integrate, FlowKind, FlowStatus, IntegratorOptions};
use crate::geometry::{PackingMetric, Surface};
use crate::laplacian::assemble;
use crate::scalar::{dot, project_out_constant, Real};

/// Finest subdivision tried by [`ricci_potential`].
pub const MAX_PANELS: usize = 1 << 20;

/// Relative tolerance of the Richardson estimate.
pub const QUADRATURE_TOL: f64 = 1e-8;

/// `sum_i (K_i - target_i)^2`.
pub fn calabi_energy<T: Real>(k: &[T], target: &[T]) -> Result<T> {
    if k.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: k.len(),
            got: target.len(),
        });
    }
    Ok(k.iter().zip(target).map(|(&k, &t)| (k - t) * (k - t)).sum())
}

/// Gradient in `u` of the Calabi energy towards `K_av`: `2 L K`.
pub fn energy_gradient<T: Real>(surface: &Surface<'_, T>, m: &PackingMetric<T>) -> Result<Vec<T>> {
    let target = vec![surface.avg_curvature(); surface.vertex_count()];
    energy_gradient_to(surface, m, &target)
}

/// Gradient in `u` of `sum (K_i - target_i)^2`: `2 L (K - target)`.
pub fn energy_gradient_to<T: Real>(surface: &Surface<'_, T>, m: &PackingMetric<T>, target: &[T]) -> Result<Vec<T>> {
    let geom = surface.geometry(m)?;
    let lap = assemble(surface.tri, surface.weight, m)?;
    let gap: Vec<T> = geom.curvatures.iter().zip(target).map(|(&k, &t)| k - t).collect();
    if gap.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: gap.len(),
            got: target.len(),
        });
    }
    let two = T::lit(2.0);
    Ok(lap.mul_vec(&gap)?.into_iter().map(|x| two * x).collect())
}

/// Quadrature result with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialValue<T> {
    pub value: T,
    /// `|S_2M - S_M| / 15`.
    pub error_estimate: T,
    /// Panels used for `value`.
    pub panels: usize,
}

/// Ricci potential `f(u) - f(u0)` towards `target`, integrated along the
/// straight segment from `u0` to `u`.
pub fn ricci_potential<T: Real>(
    surface: &Surface<'_, T>,
    u0: &[T],
    u: &[T],
    target: &[T],
) -> Result<PotentialValue<T>> {
    let n = surface.vertex_count();
    for len in [u0.len(), u.len(), target.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let du: Vec<T> = u.iter().zip(u0).map(|(&b, &a)| b - a).collect();
    if du.iter().all(|&d| d == T::zero()) {
        return Ok(PotentialValue {
            value: T::zero(),
            error_estimate: T::zero(),
            panels: 0,
        });
    }
    let integrand = |s: T| -> Result<T> {
        let point: Vec<T> = u0.iter().zip(&du).map(|(&a, &d)| a + s * d).collect();
        let k = surface.curvature_at(&point)?;
        Ok(k.iter().zip(target).zip(&du).map(|((&k, &t), &d)| (k - t) * d).sum())
    };

    // samples[i] = g(i / panels)
    let mut panels = 8usize;
    let mut samples = sample(&integrand, panels, None)?;
    let mut previous = simpson(&samples);
    loop {
        let finer = panels * 2;
        samples = sample(&integrand, finer, Some(&samples))?;
        let current = simpson(&samples);
        let estimate = (current - previous).abs() / T::lit(15.0);
        if estimate < T::lit(QUADRATURE_TOL) * (T::one() + current.abs()) {
            return Ok(PotentialValue {
                value: current,
                error_estimate: estimate,
                panels: finer,
            });
        }
        if finer >= MAX_PANELS {
            return Err(Error::QuadratureNoConvergence {
                panels: finer,
                estimate: estimate.as_f64(),
            });
        }
        panels = finer;
        previous = current;
    }
}

/// Evaluates `g` at `panels + 1` equispaced nodes of `[0, 1]`, reusing the
/// even nodes from `coarse` when given (which must hold `panels / 2 + 1`
/// samples).
fn sample<T: Real, F>(g: &F, panels: usize, coarse: Option<&[T]>) -> Result<Vec<T>>
where
    F: Fn(T) -> Result<T> + Sync,
{
    let step = T::one() / T::from_usize_lossy(panels);
    let node = |i: usize| {
        if i == panels {
            T::one()
        } else {
            T::from_usize_lossy(i) * step
        }
    };
    let fresh: Vec<usize> = match coarse {
        Some(_) => (1..panels).step_by(2).collect(),
        None => (0..=panels).collect(),
    };
    // ordered collection keeps the reduction below deterministic
    let values: Vec<T> = if fresh.len() >= 64 {
        fresh.par_iter().map(|&i| g(node(i))).collect::<Result<_>>()?
    } else {
        fresh.iter().map(|&i| g(node(i))).collect::<Result<_>>()?
    };
    match coarse {
        None => Ok(values),
        Some(c) => {
            let mut out = Vec::with_capacity(panels + 1);
            for (i, &v) in values.iter().enumerate() {
                out.push(c[i]);
                out.push(v);
            }
            out.push(c[c.len() - 1]);
            Ok(out)
        }
    }
}

/// Composite Simpson rule on `[0, 1]` from equispaced samples.
fn simpson<T: Real>(samples: &[T]) -> T {
    let panels = samples.len() - 1;
    let mut acc = samples[0] + samples[panels];
    for (i, &v) in samples.iter().enumerate().take(panels).skip(1) {
        let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
        acc = acc + w * v;
    }
    acc / (T::lit(3.0) * T::from_usize_lossy(panels))
}

/// Ricci potential along a polyline through `points`; the sum of the
/// segment integrals and of their error estimates.
pub fn ricci_potential_path<T: Real>(
    surface: &Surface<'_, T>,
    points: &[Vec<T>],
    target: &[T],
) -> Result<PotentialValue<T>> {
    let mut total = PotentialValue {
        value: T::zero(),
        error_estimate: T::zero(),
        panels: 0,
    };
    for pair in points.windows(2) {
        let seg = ricci_potential(surface, &pair[0], &pair[1], target)?;
        total.value = total.value + seg.value;
        total.error_estimate = total.error_estimate + seg.error_estimate;
        total.panels += seg.panels;
    }
    Ok(total)
}

/// Potential increment over a short step from `ua` to `ub`, by Simpson's
/// rule on a single panel pair. `ka`, `kb` are the curvatures at the ends.
pub(crate) fn segment_increment<T: Real>(
    surface: &Surface<'_, T>,
    ua: &[T],
    ub: &[T],
    target: &[T],
    ka: &[T],
    kb: &[T],
) -> Result<T> {
    let du: Vec<T> = ub.iter().zip(ua).map(|(&b, &a)| b - a).collect();
    let half = T::lit(0.5);
    let mid: Vec<T> = ua.iter().zip(&du).map(|(&a, &d)| a + half * d).collect();
    let km = surface.curvature_at(&mid)?;
    let g = |k: &[T]| -> T { k.iter().zip(target).zip(&du).map(|((&k, &t), &d)| (k - t) * d).sum() };
    Ok((g(ka) + T::lit(4.0) * g(&km) + g(kb)) / T::lit(6.0))
}

/// Smallest eigenvalue of `L` restricted to the complement of the constant
/// vector, using a Gram-Schmidt orthonormal basis `S` and the dense matrix
/// `S L S^T`.
pub fn restricted_hessian_check<T: Real>(surface: &Surface<'_, T>, m: &PackingMetric<T>) -> Result<T> {
    let lap = assemble(surface.tri, surface.weight, m)?;
    let n = lap.dim();
    if n < 2 {
        return Err(Error::InvalidInput(
            "restricted Hessian needs at least two vertices".into(),
        ));
    }
    let basis: Vec<Vec<T>> = complement_basis_gram_schmidt(n);
    let images: Vec<Vec<T>> = basis.iter().map(|b| lap.mul_vec(b)).collect::<Result<_>>()?;
    let mut restricted = SymMatrix::from_fn(n - 1, |i, j| dot(&basis[i], &images[j]));
    // symmetrise the rounding error away
    for i in 0..n - 1 {
        for j in 0..i {
            let avg = (restricted.get(i, j) + restricted.get(j, i)) * T::lit(0.5);
            restricted.set(i, j, avg);
            restricted.set(j, i, avg);
        }
    }
    Ok(jacobi(&restricted)?.values[0])
}

/// Ricci potential sampled along rays from a constant-curvature metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTable<T> {
    pub rows: Vec<ProbeRow<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow<T> {
    pub direction_id: usize,
    pub t: T,
    pub f: T,
}

impl<T: Real> ProbeTable<T> {
    /// Values of `f` along one ray, in increasing `t`.
    pub fn ray(&self, direction_id: usize) -> Vec<ProbeRow<T>> {
        self.rows
            .iter()
            .copied()
            .filter(|r| r.direction_id == direction_id)
            .collect()
    }

    pub fn direction_count(&self) -> usize {
        self.rows.iter().map(|r| r.direction_id + 1).max().unwrap_or(0)
    }

    /// Whether `f` strictly increases along every ray after its first
    /// positive-`t` sample.
    pub fn is_monotone(&self) -> bool {
        (0..self.direction_count()).all(|d| {
            let ray: Vec<ProbeRow<T>> = self.ray(d).into_iter().filter(|r| r.t > T::zero()).collect();
            ray.windows(2).all(|w| w[1].f > w[0].f)
        })
    }

    pub fn min_value(&self) -> T {
        self.rows.iter().fold(T::infinity(), |m, r| m.min(r.f))
    }

    /// CSV with header `direction_id,t,f`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("direction_id,t,f\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e}\n",
                r.direction_id,
                r.t.as_f64(),
                r.f.as_f64()
            ));
        }
        out
    }
}

/// Tolerance on `max |K - K_av|` for a probe basepoint.
pub const BASEPOINT_TOL: f64 = 1e-9;

/// Evaluates `f(u_av + t dir)` for each direction and each `t` in `radii`
/// (plus `t = 0`). `u_av` must have constant curvature and every direction
/// must be orthogonal to the constant vector.
pub fn properness_probe<T: Real>(
    surface: &Surface<'_, T>,
    u_av: &[T],
    directions: &[Vec<T>],
    radii: &[T],
) -> Result<ProbeTable<T>> {
    let n = surface.vertex_count();
    if u_av.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u_av.len(),
        });
    }
    let target = vec![surface.avg_curvature(); n];
    let k = surface.curvature_at(u_av)?;
    let dev = k
        .iter()
        .zip(&target)
        .fold(T::zero(), |m, (&k, &t)| m.max((k - t).abs()));
    if !(dev < T::lit(BASEPOINT_TOL)) {
        return Err(Error::NoConstantCurvature {
            status: format!("basepoint deviates from K_av by {:e}", dev.as_f64()),
        });
    }
    for d in directions {
        if d.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: d.len(),
            });
        }
        let s: T = d.iter().copied().sum();
        let scale = d.iter().fold(T::zero(), |m, &x| m.max(x.abs())).max(T::one());
        if s.abs() > T::lit(1e-10) * scale * T::from_usize_lossy(n) {
            return Err(Error::Domain {
                what: "probe direction component along (1, ..., 1)",
                value: s.as_f64(),
            });
        }
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) || radii.first().is_some_and(|&r| !(r > T::zero())) {
        return Err(Error::Domain {
            what: "probe radii (must be positive and increasing)",
            value: f64::NAN,
        });
    }

    let rays: Vec<Vec<ProbeRow<T>>> = directions
        .par_iter()
        .enumerate()
        .map(|(id, dir)| {
            let mut rows = vec![ProbeRow {
                direction_id: id,
                t: T::zero(),
                f: T::zero(),
            }];
            let mut f = T::zero();
            let mut prev = u_av.to_vec();
            for &t in radii {
                let point: Vec<T> = u_av.iter().zip(dir).map(|(&a, &d)| a + t * d).collect();
                f = f + ricci_potential(surface, &prev, &point, &target)?.value;
                rows.push(ProbeRow { direction_id: id, t, f });
                prev = point;
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(ProbeTable {
        rows: rays.into_iter().flatten().collect(),
    })
}

/// Projects `v` onto the zero-sum hyperplane and normalises it.
pub fn zero_sum_unit<T: Real>(v: &[T]) -> Option<Vec<T>> {
    let mut w = v.to_vec();
    project_out_constant(&mut w);
    let nw = dot(&w, &w).sqrt();
    if !(nw > T::zero()) {
        return None;
    }
    Some(w.into_iter().map(|x| x / nw).collect())
}

/// Constant-curvature metric reached by the Calabi flow from `start`,
/// converged to `max |K - K_av| < 1e-12`. The flow conserves `sum u`, so
/// the result lies on the same hyperplane as `start`.
pub fn constant_curvature_metric<T: Real>(
    surface: &Surface<'_, T>,
    start: &PackingMetric<T>,
) -> Result<PackingMetric<T>> {
    let opts = IntegratorOptions {
        curvature_tol: T::lit(1e-12),
        record_lambda1: false,
        sample_budget: 16,
        ..IntegratorOptions::default()
    };
    constant_curvature_metric_with(surface, start, &opts)
}

pub fn constant_curvature_metric_with<T: Real>(
    surface: &Surface<'_, T>,
    start: &PackingMetric<T>,
    opts: &IntegratorOptions<T>,
) -> Result<PackingMetric<T>> {
    let trace = integrate(&FlowKind::Calabi, surface, start, opts)?;
    if trace.status != FlowStatus::Converged {
        return Err(Error::NoConstantCurvature {
            status: trace.status.to_string(),
        });
    }
    // undo the floating point drift of the hyperplane exactly
    let sum0: T = start.log_radii().iter().copied().sum();
    let u = trace.final_metric.log_radii();
    let shift = (u.iter().copied().sum::<T>() - sum0) / T::from_usize_lossy(u.len());
    PackingMetric::from_log_radii(u.iter().map(|&x| x - shift).collect())
}
