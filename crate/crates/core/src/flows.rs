//! Combinatorial Calabi and Ricci flows in `u = ln r` coordinates.
//!
//! Every flow is integrated by explicit Euler with an acceptance test: the
//! Calabi kinds must not increase the Calabi energy, the Ricci kinds must
//! not increase the Ricci potential (measured by quadrature over the step
//! segment). Rejected steps are halved; accepted runs of steps let the
//! step size grow again slowly.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{GeometryState, PackingMetric, Surface};
use crate::laplacian::{assemble, DualLaplacian};
use crate::potential::{calabi_energy, segment_increment};
use crate::scalar::{max_abs, Real};

/// Which flow to integrate.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowKind<T> {
    /// `u' = -L (K - K_av)`, the negative gradient flow of the Calabi energy.
    Calabi,
    /// `u' = K_av - K`.
    RicciNormalized,
    /// `u' = L (K_bar - K)`.
    CalabiPrescribed(Vec<T>),
    /// `u' = K_bar - K`.
    RicciPrescribed(Vec<T>),
}

impl<T: Real> FlowKind<T> {
    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::Calabi => "calabi",
            FlowKind::RicciNormalized => "ricci_normalized",
            FlowKind::CalabiPrescribed(_) => "calabi_prescribed",
            FlowKind::RicciPrescribed(_) => "ricci_prescribed",
        }
    }

    /// Builds a kind from its name; prescribed kinds require `target`.
    pub fn from_name(name: &str, target: Option<Vec<T>>) -> Result<Self> {
        let kind: KindName = name.parse()?;
        match (kind, target) {
            (KindName::Calabi, None) => Ok(FlowKind::Calabi),
            (KindName::RicciNormalized, None) => Ok(FlowKind::RicciNormalized),
            (KindName::CalabiPrescribed, Some(t)) => Ok(FlowKind::CalabiPrescribed(t)),
            (KindName::RicciPrescribed, Some(t)) => Ok(FlowKind::RicciPrescribed(t)),
            (KindName::CalabiPrescribed | KindName::RicciPrescribed, None) => Err(Error::InvalidInput(format!(
                "flow kind {name} needs a target curvature"
            ))),
            (KindName::Calabi | KindName::RicciNormalized, Some(_)) => Err(Error::InvalidInput(format!(
                "flow kind {name} does not take a target curvature"
            ))),
        }
    }

    /// True for the kinds that descend the Calabi energy.
    pub fn is_calabi(&self) -> bool {
        matches!(self, FlowKind::Calabi | FlowKind::CalabiPrescribed(_))
    }

    /// Target curvature: `K_av (1, ..., 1)` or the prescribed vector.
    pub fn target(&self, surface: &Surface<'_, T>) -> Result<Vec<T>> {
        let n = surface.vertex_count();
        match self {
            FlowKind::Calabi | FlowKind::RicciNormalized => Ok(vec![surface.avg_curvature(); n]),
            FlowKind::CalabiPrescribed(t) | FlowKind::RicciPrescribed(t) => {
                if t.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: t.len(),
                    });
                }
                Ok(t.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum KindName {
    Calabi,
    RicciNormalized,
    CalabiPrescribed,
    RicciPrescribed,
}

impl FromStr for KindName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "calabi" => Ok(KindName::Calabi),
            "ricci_normalized" | "ricci" => Ok(KindName::RicciNormalized),
            "calabi_prescribed" => Ok(KindName::CalabiPrescribed),
            "ricci_prescribed" => Ok(KindName::RicciPrescribed),
            other => Err(Error::InvalidInput(format!("unknown flow kind {other:?}"))),
        }
    }
}

/// Step-size policy and stopping rules.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorOptions<T> {
    /// First trial step.
    pub initial_step: T,
    /// Upper bound for the step size after regrowth.
    pub max_step: T,
    /// Accepted steps before giving up with [`FlowStatus::StepLimit`].
    pub max_steps: usize,
    /// Converged when `max |K_i - target_i| < curvature_tol`.
    pub curvature_tol: T,
    /// Diverged when `max |u_i - u_i(0)| > u_max`.
    pub u_max: T,
    /// Factor applied to the step after `growth_after` clean steps.
    pub growth_factor: T,
    pub growth_after: usize,
    /// Halvings of a single step before [`Error::StepCollapse`].
    pub max_halvings: usize,
    /// Re-centre `sum u` every this many accepted steps (conserving kinds).
    pub recenter_every: usize,
    /// Approximate number of trace records to keep.
    pub sample_budget: usize,
    /// Whether to compute `lambda_1` for every trace record.
    pub record_lambda1: bool,
}

impl<T: Real> Default for IntegratorOptions<T> {
    fn default() -> Self {
        IntegratorOptions {
            initial_step: T::lit(1e-2),
            max_step: T::lit(2e-2),
            max_steps: 1_000_000,
            curvature_tol: T::lit(1e-10),
            u_max: T::lit(50.0),
            growth_factor: T::lit(1.2),
            growth_after: 10,
            max_halvings: 60,
            recenter_every: 1000,
            sample_budget: 1000,
            record_lambda1: true,
        }
    }
}

impl<T: Real> IntegratorOptions<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
            ("curvature_tol", self.curvature_tol),
            ("u_max", self.u_max),
        ];
        for (what, value) in positive {
            if !(value > T::zero()) || !value.is_finite() {
                return Err(Error::Domain {
                    what,
                    value: value.as_f64(),
                });
            }
        }
        if self.curvature_tol >= T::one() {
            return Err(Error::Domain {
                what: "curvature_tol",
                value: self.curvature_tol.as_f64(),
            });
        }
        if !(self.growth_factor >= T::one()) {
            return Err(Error::Domain {
                what: "growth_factor",
                value: self.growth_factor.as_f64(),
            });
        }
        let counts = [
            ("max_steps", self.max_steps),
            ("growth_after", self.growth_after),
            ("recenter_every", self.recenter_every),
            ("sample_budget", self.sample_budget),
        ];
        for (what, value) in counts {
            if value == 0 {
                return Err(Error::Domain { what, value: 0.0 });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStatus {
    Converged,
    Diverged,
    StepLimit,
}

impl FlowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowStatus::Converged => "converged",
            FlowStatus::Diverged => "diverged",
            FlowStatus::StepLimit => "step_limit",
        }
    }
}

impl fmt::Display for FlowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sampled state of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord<T> {
    pub t: T,
    /// Number of accepted steps taken before this record.
    pub step: usize,
    /// Step size that will be tried next.
    pub step_size: T,
    pub energy: T,
    pub max_curvature_deviation: T,
    pub lambda1: Option<T>,
    pub prod_r: T,
    pub u: Vec<T>,
    pub curvature: Vec<T>,
}

/// Result of [`integrate`].
#[derive(Debug, Clone)]
pub struct FlowTrace<T> {
    pub kind: &'static str,
    pub records: Vec<FlowRecord<T>>,
    pub status: FlowStatus,
    pub t_final: T,
    pub final_metric: PackingMetric<T>,
    pub final_curvature: Vec<T>,
    pub final_energy: T,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Largest `|sum u(t) - sum u(0)|` seen after any accepted step.
    pub max_sum_drift: T,
    /// Largest `|prod r(t) / prod r(0) - 1|` seen after any accepted step.
    pub max_prod_drift: T,
    /// Accepted steps whose monitored functional went up (always 0).
    pub monotonicity_violations: usize,
}

impl<T: Real> FlowTrace<T> {
    /// Least-squares slope of `ln C(t)` over the records whose energy lies
    /// within `decades` powers of ten of the final record. `None` if fewer
    /// than three records qualify or the final energy is zero.
    pub fn log_energy_slope(&self, decades: T) -> Option<T> {
        let last = self.records.last()?;
        if !(last.energy > T::zero()) {
            return None;
        }
        let ceiling = last.energy * T::lit(10.0).powf(decades);
        let start = self
            .records
            .iter()
            .rposition(|r| r.energy > ceiling)
            .map_or(0, |i| i + 1);
        let pts: Vec<(T, T)> = self.records[start..]
            .iter()
            .filter(|r| r.energy > T::zero())
            .map(|r| (r.t, r.energy.ln()))
            .collect();
        least_squares_slope(&pts)
    }

    /// Trace as CSV with header `t,step,energy,max_curv_dev,lambda1,prod_r`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,step,energy,max_curv_dev,lambda1,prod_r\n");
        for r in &self.records {
            let lambda1 = r.lambda1.map_or_else(String::new, |l| fmt_real(l));
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_real(r.t),
                r.step,
                fmt_real(r.energy),
                fmt_real(r.max_curvature_deviation),
                lambda1,
                fmt_real(r.prod_r)
            ));
        }
        out
    }
}

/// Formats with 17 significant digits.
pub fn fmt_real<T: Real>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

fn least_squares_slope<T: Real>(pts: &[(T, T)]) -> Option<T> {
    if pts.len() < 3 {
        return None;
    }
    let n = T::from_usize_lossy(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx > T::zero() {
        Some(sxy / sxx)
    } else {
        None
    }
}

/// `u'` from an assembled Laplacian and the current curvature.
pub fn velocity_from<T: Real>(kind: &FlowKind<T>, lap: &DualLaplacian<T>, k: &[T], target: &[T]) -> Result<Vec<T>> {
    let gap: Vec<T> = target.iter().zip(k).map(|(&t, &k)| t - k).collect();
    if kind.is_calabi() {
        lap.mul_vec(&gap)
    } else {
        Ok(gap)
    }
}

/// `u'` of the given flow at the metric `m`.
pub fn velocity<T: Real>(kind: &FlowKind<T>, surface: &Surface<'_, T>, m: &PackingMetric<T>) -> Result<Vec<T>> {
    let target = kind.target(surface)?;
    let geom = surface.geometry(m)?;
    let lap = assemble(surface.tri, surface.weight, m)?;
    velocity_from(kind, &lap, &geom.curvatures, &target)
}

/// Current point of an integration.
#[derive(Debug, Clone)]
pub struct FlowState<T> {
    pub u: Vec<T>,
    pub geometry: GeometryState<T>,
    pub laplacian: DualLaplacian<T>,
    pub energy: T,
}

impl<T: Real> FlowState<T> {
    pub fn new(surface: &Surface<'_, T>, u: Vec<T>, target: &[T]) -> Result<Self> {
        let m = PackingMetric::from_log_radii(u)?;
        let geometry = surface.geometry(&m)?;
        let laplacian = assemble(surface.tri, surface.weight, &m)?;
        let energy = calabi_energy(&geometry.curvatures, target)?;
        Ok(FlowState {
            u: m.log_radii().to_vec(),
            geometry,
            laplacian,
            energy,
        })
    }

    pub fn metric(&self) -> Result<PackingMetric<T>> {
        PackingMetric::from_log_radii(self.u.clone())
    }

    pub fn max_deviation(&self, target: &[T]) -> T {
        self.geometry
            .curvatures
            .iter()
            .zip(target)
            .fold(T::zero(), |m, (&k, &t)| m.max((k - t).abs()))
    }
}

/// Outcome of a single guarded step.
#[derive(Debug, Clone)]
pub struct StepOutcome<T> {
    pub state: FlowState<T>,
    /// Step size actually used.
    pub step_size: T,
    pub halvings: usize,
    /// Change of the monitored functional (energy or Ricci potential).
    pub decrease: T,
}

/// One explicit Euler step of size at most `h`, halved until the monitored
/// functional does not increase.
pub fn step<T: Real>(
    kind: &FlowKind<T>,
    surface: &Surface<'_, T>,
    target: &[T],
    state: &FlowState<T>,
    h: T,
    max_halvings: usize,
) -> Result<StepOutcome<T>> {
    if !(h > T::zero()) {
        return Err(Error::Domain {
            what: "step size",
            value: h.as_f64(),
        });
    }
    let v = velocity_from(kind, &state.laplacian, &state.geometry.curvatures, target)?;
    let mut h = h;
    for halvings in 0..=max_halvings {
        let u: Vec<T> = state.u.iter().zip(&v).map(|(&u, &v)| u + h * v).collect();
        let candidate = FlowState::new(surface, u, target)?;
        let change = if kind.is_calabi() {
            candidate.energy - state.energy
        } else {
            segment_increment(
                surface,
                &state.u,
                &candidate.u,
                target,
                &state.geometry.curvatures,
                &candidate.geometry.curvatures,
            )?
        };
        if change <= T::zero() {
            return Ok(StepOutcome {
                state: candidate,
                step_size: h,
                halvings,
                decrease: -change,
            });
        }
        h = h * T::lit(0.5);
    }
    Err(Error::StepCollapse {
        halvings: max_halvings,
        t: f64::NAN,
    })
}

/// Integrates `kind` from `m0` until convergence, divergence or the step
/// limit.
pub fn integrate<T: Real>(
    kind: &FlowKind<T>,
    surface: &Surface<'_, T>,
    m0: &PackingMetric<T>,
    opts: &IntegratorOptions<T>,
) -> Result<FlowTrace<T>> {
    opts.validate()?;
    let n = surface.vertex_count();
    if m0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m0.len(),
        });
    }
    let target = kind.target(surface)?;
    let u0 = m0.log_radii().to_vec();
    let sum0: T = u0.iter().copied().sum();
    let conserving = conserves_sum(kind, surface, &target);

    let mut state = FlowState::new(surface, u0.clone(), &target)?;
    let mut t = T::zero();
    let mut h = opts.initial_step;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut clean = 0usize;
    let mut max_sum_drift = T::zero();
    let mut max_prod_drift = T::zero();
    let mut violations = 0usize;
    let mut sampler = Sampler::new(opts.sample_budget);
    let mut records = Vec::new();

    let status = loop {
        let dev = state.max_deviation(&target);
        let converged = dev < opts.curvature_tol;
        let drift = max_diff(&state.u, &u0);
        let diverged = drift > opts.u_max;
        let exhausted = accepted >= opts.max_steps;
        let done = converged || diverged || exhausted;

        if accepted == 0 || done || sampler.take(accepted) {
            records.push(record(&state, t, accepted, h, dev, opts.record_lambda1)?);
            sampler.thin(&mut records);
        }
        if converged {
            break FlowStatus::Converged;
        }
        if diverged {
            break FlowStatus::Diverged;
        }
        if exhausted {
            break FlowStatus::StepLimit;
        }

        if kind.is_calabi() {
            check_velocity_envelope(&state, &target)?;
        }
        let outcome = step(kind, surface, &target, &state, h, opts.max_halvings).map_err(|e| match e {
            Error::StepCollapse { halvings, .. } => Error::StepCollapse {
                halvings,
                t: t.as_f64(),
            },
            other => other,
        })?;
        if kind.is_calabi() && outcome.state.energy > state.energy {
            violations += 1;
        }
        t = t + outcome.step_size;
        state = outcome.state;
        accepted += 1;
        rejected += outcome.halvings;
        if outcome.halvings > 0 {
            h = outcome.step_size;
            clean = 0;
        } else {
            clean += 1;
            if clean >= opts.growth_after {
                h = (h * opts.growth_factor).min(opts.max_step);
                clean = 0;
            }
        }

        if conserving {
            if accepted.is_multiple_of(opts.recenter_every) {
                recenter(&mut state, surface, &target, sum0)?;
            }
            let sum: T = state.u.iter().copied().sum();
            let d = (sum - sum0).abs();
            max_sum_drift = max_sum_drift.max(d);
            max_prod_drift = max_prod_drift.max((sum - sum0).exp_m1().abs());
        }
    };

    let final_metric = state.metric()?;
    Ok(FlowTrace {
        kind: kind.name(),
        records,
        status,
        t_final: t,
        final_metric,
        final_curvature: state.geometry.curvatures.clone(),
        final_energy: state.energy,
        accepted_steps: accepted,
        rejected_steps: rejected,
        max_sum_drift,
        max_prod_drift,
        monotonicity_violations: violations,
    })
}

/// Whether the flow preserves `sum u`: always for the Calabi kinds, and for
/// the Ricci kinds whenever the target satisfies Gauss-Bonnet.
fn conserves_sum<T: Real>(kind: &FlowKind<T>, surface: &Surface<'_, T>, target: &[T]) -> bool {
    if kind.is_calabi() {
        return true;
    }
    let total: T = target.iter().copied().sum();
    let gb = T::TAU() * T::lit(surface.tri.euler_characteristic() as f64);
    (total - gb).abs() < T::lit(1e-9)
}

fn recenter<T: Real>(state: &mut FlowState<T>, surface: &Surface<'_, T>, target: &[T], sum0: T) -> Result<()> {
    let n = T::from_usize_lossy(state.u.len());
    let shift = (state.u.iter().copied().sum::<T>() - sum0) / n;
    if shift == T::zero() {
        return Ok(());
    }
    let u: Vec<T> = state.u.iter().map(|&x| x - shift).collect();
    *state = FlowState::new(surface, u, target)?;
    Ok(())
}

/// `|(L (K - target))_i| <= 2 sqrt 3 sum_{j ~ i} |K_j - K_i|`, which
/// follows from the bound on the edge weights.
fn check_velocity_envelope<T: Real>(state: &FlowState<T>, target: &[T]) -> Result<()> {
    let lap = &state.laplacian;
    let k = &state.geometry.curvatures;
    let gap: Vec<T> = k.iter().zip(target).map(|(&k, &t)| k - t).collect();
    let lk = lap.mul_vec(&gap)?;
    let mut envelope = vec![T::zero(); k.len()];
    for e in lap.edges() {
        let d = (gap[e.lo()] - gap[e.hi()]).abs();
        envelope[e.lo()] = envelope[e.lo()] + d;
        envelope[e.hi()] = envelope[e.hi()] + d;
    }
    let bound = T::lit(2.0 * 3f64.sqrt());
    for (i, (&v, &env)) in lk.iter().zip(&envelope).enumerate() {
        if v.abs() > bound * env * (T::one() + T::lit(1e-12)) + T::lit(1e-14) {
            return Err(Error::Invariant(format!(
                "velocity {} at vertex {i} exceeds the edge-weight envelope {}",
                v.as_f64(),
                (bound * env).as_f64()
            )));
        }
    }
    Ok(())
}

fn record<T: Real>(state: &FlowState<T>, t: T, step: usize, h: T, dev: T, lambda1: bool) -> Result<FlowRecord<T>> {
    let lambda1 = if lambda1 {
        Some(state.laplacian.lambda1()?)
    } else {
        None
    };
    Ok(FlowRecord {
        t,
        step,
        step_size: h,
        energy: state.energy,
        max_curvature_deviation: dev,
        lambda1,
        prod_r: state.u.iter().copied().sum::<T>().exp(),
        u: state.u.clone(),
        curvature: state.geometry.curvatures.clone(),
    })
}

/// Keeps every `stride`-th step; the stride doubles whenever the record
/// count exceeds twice the budget, and the kept records are thinned to
/// match, so the trace stays between one and two budgets long.
#[derive(Debug)]
struct Sampler {
    budget: usize,
    stride: usize,
}

impl Sampler {
    fn new(budget: usize) -> Self {
        Sampler { budget, stride: 1 }
    }

    fn take(&self, step: usize) -> bool {
        step.is_multiple_of(self.stride)
    }

    fn thin<T>(&mut self, records: &mut Vec<FlowRecord<T>>) {
        if records.len() <= 2 * self.budget {
            return;
        }
        self.stride *= 2;
        let stride = self.stride;
        let last = records.len() - 1;
        let mut i = 0;
        records.retain(|r| {
            let keep = i == 0 || i == last || r.step % stride == 0;
            i += 1;
            keep
        });
    }
}

/// Compares the central difference of `K` along `phi = velocity(kind)`
/// with `L phi` (and, for the Calabi flow, with `-L^2 K`). Returns the
/// largest absolute residual.
pub fn curvature_derivative_check<T: Real>(
    kind: &FlowKind<T>,
    surface: &Surface<'_, T>,
    m: &PackingMetric<T>,
    h_fd: T,
) -> Result<T> {
    let target = kind.target(surface)?;
    let geom = surface.geometry(m)?;
    let lap = assemble(surface.tri, surface.weight, m)?;
    let phi = velocity_from(kind, &lap, &geom.curvatures, &target)?;
    let u = m.log_radii();
    let plus: Vec<T> = u.iter().zip(&phi).map(|(&u, &p)| u + h_fd * p).collect();
    let minus: Vec<T> = u.iter().zip(&phi).map(|(&u, &p)| u - h_fd * p).collect();
    let kp = surface.curvature_at(&plus)?;
    let km = surface.curvature_at(&minus)?;
    let two_h = h_fd + h_fd;
    let fd: Vec<T> = kp.iter().zip(&km).map(|(&a, &b)| (a - b) / two_h).collect();
    let l_phi = lap.mul_vec(&phi)?;
    let mut residual = max_diff(&fd, &l_phi);
    if matches!(kind, FlowKind::Calabi) {
        let lk = lap.mul_vec(&geom.curvatures)?;
        let l2k: Vec<T> = lap.mul_vec(&lk)?.into_iter().map(|x| -x).collect();
        residual = residual.max(max_diff(&fd, &l2k));
    }
    Ok(residual)
}

fn max_diff<T: Real>(a: &[T], b: &[T]) -> T {
    let d: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    max_abs(&d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Weight;
    use crate::mesh::samples::{octahedron, tetrahedron};
    use crate::potential::energy_gradient;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_metric(n: usize, rng: &mut ChaCha8Rng) -> PackingMetric<f64> {
        PackingMetric::from_radii((0..n).map(|_| rng.gen_range(0.5..2.0)).collect()).unwrap()
    }

    fn quiet() -> IntegratorOptions<f64> {
        IntegratorOptions {
            record_lambda1: false,
            ..Default::default()
        }
    }

    #[test]
    fn fixed_point_velocity_vanishes() {
        let tri = tetrahedron();
        let w = Weight::uniform(&tri, 0.0).unwrap();
        let s = Surface::new(&tri, &w);
        let m = PackingMetric::uniform(4, 1.0).unwrap();
        for kind in [FlowKind::Calabi, FlowKind::RicciNormalized] {
            for v in velocity(&kind, &s, &m).unwrap() {
                assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn calabi_velocity_sums_to_zero_and_is_nonzero_off_constant() {
        let tri = octahedron();
        let w = Weight::uniform(&tri, 0.4).unwrap();
        let s = Surface::new(&tri, &w);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = random_metric(6, &mut rng);
            let v = velocity(&FlowKind::Calabi, &s, &m).unwrap();
            assert_abs_diff_eq!(v.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
            let k = s.geometry(&m).unwrap().curvatures;
            let spread = k.iter().cloned().fold(f64::MIN, f64::max) - k.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread > 1e-6);
            assert!(max_abs(&v) > 1e-8);
            // gradient of the energy is -2 times the velocity
            let g = energy_gradient(&s, &m).unwrap();
            for (gi, vi) in g.iter().zip(&v) {
                assert_abs_diff_eq!(*gi, -2.0 * vi, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn step_from_fixed_point_is_identity() {
        let tri = tetrahedron();
        let w = Weight::uniform(&tri, 0.0).unwrap();
        let s = Surface::new(&tri, &w);
        let target = vec![PI; 4];
        let state = FlowState::new(&s, vec![0.3; 4], &target).unwrap();
        let out = step(&FlowKind::Calabi, &s, &target, &state, 1e-2, 60).unwrap();
        for (a, b) in out.state.u.iter().zip(&state.u) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-14);
        }
    }

    #[test]
    fn single_step_descends_and_conserves() {
        let tri = tetrahedron();
        let w = Weight::uniform(&tri, 0.0).unwrap();
        let s = Surface::new(&tri, &w);
        let target = vec![PI; 4];
        let u0: Vec<f64> = [1.2f64, 1.0, 1.0, 1.0].iter().map(|r| r.ln()).collect();
        let state = FlowState::new(&s, u0.clone(), &target).unwrap();
        let out = step(&FlowKind::Calabi, &s, &target, &state, 1e-3, 60).unwrap();
        assert_eq!(out.halvings, 0);
        assert!(out.state.energy < state.energy);
        assert_abs_diff_eq!(out.state.u.iter().sum::<f64>(), u0.iter().sum::<f64>(), epsilon = 1e-12);
    }

    #[test]
    fn calabi_converges_on_tetrahedron() {
        let tri = tetrahedron();
        let w = Weight::uniform(&tri, 0.0).unwrap();
        let s = Surface::new(&tri, &w);
        let m0 = PackingMetric::from_radii(vec![2.0, 1.0, 1.0, 1.0]).unwrap();
        let trace = integrate(&FlowKind::Calabi, &s, &m0, &IntegratorOptions::default()).unwrap();
        assert_eq!(trace.status, FlowStatus::Converged);
        for &k in &trace.final_curvature {
            assert!((k - PI).abs() < 1e-10);
        }
        let r = trace.final_metric.radii();
        assert_abs_diff_eq!(r[1], r[2], epsilon = 1e-12);
        assert_abs_diff_eq!(r[2], r[3], epsilon = 1e-12);
        // constant curvature on the tetrahedron forces equal radii
        assert_abs_diff_eq!(r[0], r[1], epsilon = 1e-9);
        let prod: f64 = r.iter().product();
        assert!((prod / 2.0 - 1.0).abs() < 1e-8);
        assert_eq!(trace.monotonicity_violations, 0);
        assert!(trace.records.windows(2).all(|p| p[1].t > p[0].t));
        assert!(trace.records.windows(2).all(|p| p[1].energy <= p[0].energy));
        assert!(trace.records.iter().all(|r| r.lambda1.is_some()));
    }

    #[test]
    fn ricci_converges_to_the_same_curvature() {
        let tri = tetrahedron();
        let w = Weight::uniform(&tri, 0.0).unwrap();
        let s = Surface::new(&tri, &w);
        let m0 = PackingMetric::from_radii(vec![2.0, 1.0, 1.0, 1.0]).unwrap();
        let trace = integrate(&FlowKind::RicciNormalized, &s, &m0, &quiet()).unwrap();
        assert_eq!(trace.status, FlowStatus::Converged);
        for &k in &trace.final_curvature {
            assert!((k - PI).abs() < 1e-10);
        }
        assert!(trace.max_sum_drift < 1e-9);
    }

    #[test]
    fn inadmissible_ricci_target_hits_the_guard() {
        let tri = tetrahedron();
        let w = Weight::uniform(&tri, 0.0).unwrap();
        let s = Surface::new(&tri, &w);
        let target = vec![-2.0 * PI, 2.0 * PI, 2.0 * PI, 2.0 * PI];
        let m0 = PackingMetric::uniform(4, 1.0).unwrap();
        let trace = integrate(&FlowKind::RicciPrescribed(target), &s, &m0, &quiet()).unwrap();
        assert_eq!(trace.status, FlowStatus::Diverged);
        let u = trace.final_metric.log_radii();
        assert!(u[0] < -49.0);
    }

    #[test]
    fn inadmissible_calabi_target_keeps_shrinking_one_circle() {
        let tri = tetrahedron();
        let w = Weight::uniform(&tri, 0.0).unwrap();
        let s = Surface::new(&tri, &w);
        let target = vec![-2.0 * PI, 2.0 * PI, 2.0 * PI, 2.0 * PI];
        let m0 = PackingMetric::uniform(4, 1.0).unwrap();
        let opts = IntegratorOptions {
            max_steps: 20_000,
            ..quiet()
        };
        let trace = integrate(&FlowKind::CalabiPrescribed(target), &s, &m0, &opts).unwrap();
        assert_ne!(trace.status, FlowStatus::Converged);
        assert_eq!(trace.monotonicity_violations, 0);
        let u0: Vec<f64> = trace.records.iter().map(|r| r.u[0]).collect();
        assert!(u0.windows(2).all(|p| p[1] < p[0]));
        // the small vertex can only approach -pi, far from -2 pi
        assert!(trace.records.iter().all(|r| r.max_curvature_deviation > 0.9 * PI));
    }

    #[test]
    fn curvature_derivative_matches_laplacian() {
        let tri = octahedron();
        let w = Weight::uniform(&tri, 0.3).unwrap();
        let s = Surface::new(&tri, &w);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let m = random_metric(6, &mut rng);
            for kind in [FlowKind::Calabi, FlowKind::RicciNormalized] {
                let res = curvature_derivative_check(&kind, &s, &m, 1e-6).unwrap();
                assert!(res < 1e-5, "{} residual {res}", kind.name());
            }
        }
        let fixed = PackingMetric::uniform(6, 1.0).unwrap();
        let res = curvature_derivative_check(&FlowKind::Calabi, &s, &fixed, 1e-6).unwrap();
        assert!(res < 1e-12);
    }

    #[test]
    fn energy_derivative_identity() {
        let tri = octahedron();
        let w = Weight::uniform(&tri, 0.0).unwrap();
        let s = Surface::new(&tri, &w);
        let target = vec![s.avg_curvature(); 6];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let m = random_metric(6, &mut rng);
            let state = FlowState::new(&s, m.log_radii().to_vec(), &target).unwrap();
            let v = velocity_from(&FlowKind::Calabi, &state.laplacian, &state.geometry.curvatures, &target).unwrap();
            let analytic = -2.0 * v.iter().map(|x| x * x).sum::<f64>();
            let h = 1e-5;
            let at = |sign: f64| {
                let u: Vec<f64> = state.u.iter().zip(&v).map(|(u, v)| u + sign * h * v).collect();
                calabi_energy(&s.curvature_at(&u).unwrap(), &target).unwrap()
            };
            let fd = (at(1.0) - at(-1.0)) / (2.0 * h);
            assert!(
                (fd - analytic).abs() < 1e-4 * analytic.abs(),
                "fd {fd} analytic {analytic}"
            );
        }
    }

    #[test]
    fn decay_inequality_along_a_run() {
        let tri = octahedron();
        let w = Weight::uniform(&tri, 0.0).unwrap();
        let s = Surface::new(&tri, &w);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m0 = random_metric(6, &mut rng);
        let trace = integrate(&FlowKind::Calabi, &s, &m0, &IntegratorOptions::default()).unwrap();
        assert_eq!(trace.status, FlowStatus::Converged);
        let target = vec![s.avg_curvature(); 6];
        for r in &trace.records {
            let state = FlowState::new(&s, r.u.clone(), &target).unwrap();
            let gap: Vec<f64> = state
                .geometry
                .curvatures
                .iter()
                .zip(&target)
                .map(|(k, t)| k - t)
                .collect();
            let lk = state.laplacian.mul_vec(&gap).unwrap();
            let lhs: f64 = lk.iter().map(|x| x * x).sum();
            let l1 = r.lambda1.unwrap();
            assert!(lhs >= l1 * l1 * r.energy - 1e-9);
        }
    }

    #[test]
    fn trace_respects_the_sample_budget() {
        let tri = octahedron();
        let w = Weight::uniform(&tri, 0.0).unwrap();
        let s = Surface::new(&tri, &w);
        let m0 = PackingMetric::from_radii(vec![3.0, 1.0, 0.5, 1.0, 2.0, 0.7]).unwrap();
        let opts = IntegratorOptions {
            sample_budget: 5,
            max_step: 1e-3,
            ..quiet()
        };
        let trace = integrate(&FlowKind::Calabi, &s, &m0, &opts).unwrap();
        assert_eq!(trace.status, FlowStatus::Converged);
        assert!(trace.accepted_steps > 100);
        assert!(trace.records.len() <= 11, "{}", trace.records.len());
        assert_eq!(trace.records[0].step, 0);
        assert_eq!(trace.records.last().unwrap().step, trace.accepted_steps);
        assert!(trace.records.windows(2).all(|p| p[1].t > p[0].t));
        let csv = trace.to_csv();
        assert!(csv.starts_with("t,step,energy,max_curv_dev,lambda1,prod_r\n"));
        assert_eq!(csv.lines().count(), trace.records.len() + 1);
    }

    #[test]
    fn recentering_keeps_the_sum() {
        let tri = octahedron();
        let w = Weight::uniform(&tri, 0.2).unwrap();
        let s = Surface::new(&tri, &w);
        let m0 = PackingMetric::from_radii(vec![3.0, 1.0, 0.5, 1.0, 2.0, 0.7]).unwrap();
        let opts = IntegratorOptions {
            recenter_every: 7,
            ..quiet()
        };
        let trace = integrate(&FlowKind::Calabi, &s, &m0, &opts).unwrap();
        assert_eq!(trace.status, FlowStatus::Converged);
        let sum0: f64 = m0.log_radii().iter().sum();
        let sum1: f64 = trace.final_metric.log_radii().iter().sum();
        assert!((sum1 - sum0).abs() < 1e-12);
        assert!(trace.max_prod_drift < 1e-8);
    }

    #[test]
    fn option_validation() {
        let bad = IntegratorOptions {
            curvature_tol: 2.0,
            ..IntegratorOptions::<f64>::default()
        };
        assert!(bad.validate().is_err());
        let bad = IntegratorOptions {
            initial_step: 0.0,
            ..IntegratorOptions::<f64>::default()
        };
        assert!(bad.validate().is_err());
        assert!(IntegratorOptions::<f64>::default().validate().is_ok());
    }

    #[test]
    fn kinds_by_name() {
        assert_eq!(FlowKind::<f64>::from_name("calabi", None).unwrap(), FlowKind::Calabi);
        assert_eq!(
            FlowKind::from_name("ricci_prescribed", Some(vec![1.0])).unwrap(),
            FlowKind::RicciPrescribed(vec![1.0])
        );
        assert!(FlowKind::<f64>::from_name("calabi_prescribed", None).is_err());
        assert!(FlowKind::<f64>::from_name("yamabe", None).is_err());
    }

    #[test]
    fn prescribed_target_length_checked() {
        let tri = tetrahedron();
        let w = Weight::uniform(&tri, 0.0).unwrap();
        let s = Surface::new(&tri, &w);
        let m = PackingMetric::uniform(4, 1.0).unwrap();
        let kind = FlowKind::CalabiPrescribed(vec![PI; 3]);
        assert!(matches!(velocity(&kind, &s, &m), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn works_in_single_precision() {
        let tri = tetrahedron();
        let w = Weight::<f32>::uniform(&tri, 0.0).unwrap();
        let s = Surface::new(&tri, &w);
        let m0 = PackingMetric::<f32>::from_radii(vec![2.0, 1.0, 1.0, 1.0]).unwrap();
        let opts = IntegratorOptions {
            curvature_tol: 1e-4f32,
            ..IntegratorOptions::default()
        };
        let trace = integrate(&FlowKind::Calabi, &s, &m0, &opts).unwrap();
        assert_eq!(trace.status, FlowStatus::Converged);
    }
}
