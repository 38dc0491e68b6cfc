//! Piecewise-flat geometry induced by a circle packing metric.

use crate::error::{Error, Result};
use crate::mesh::{Edge, Triangulation};
use crate::scalar::Real;

/// Largest arccos overshoot absorbed by clamping.
const COS_CLAMP_TOL: f64 = 1e-9;

/// Per-edge weight `phi` in `[0, pi/2]`, indexed like [`Triangulation::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct Weight<T> {
    phi: Vec<T>,
}

impl<T: Real> Weight<T> {
    pub fn uniform(tri: &Triangulation, phi: T) -> Result<Self> {
        check_phi(phi)?;
        Ok(Weight {
            phi: vec![phi; tri.edge_count()],
        })
    }

    /// Weight from a per-edge vector in edge-index order.
    pub fn from_vec(tri: &Triangulation, phi: Vec<T>) -> Result<Self> {
        if phi.len() != tri.edge_count() {
            return Err(Error::DimensionMismatch {
                expected: tri.edge_count(),
                got: phi.len(),
            });
        }
        for &p in &phi {
            check_phi(p)?;
        }
        Ok(Weight { phi })
    }

    /// Weight from explicit `(edge, phi)` assignments; every edge must be covered once.
    pub fn from_assignments(tri: &Triangulation, items: impl IntoIterator<Item = (Edge, T)>) -> Result<Self> {
        let mut phi: Vec<Option<T>> = vec![None; tri.edge_count()];
        for (e, p) in items {
            check_phi(p)?;
            let idx = tri
                .edge_index(e.lo(), e.hi())
                .ok_or_else(|| Error::InvalidInput(format!("weight given for non-edge {e}")))?;
            if phi[idx].replace(p).is_some() {
                return Err(Error::InvalidInput(format!("weight for edge {e} given twice")));
            }
        }
        let phi = phi
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| Error::InvalidInput(format!("no weight for edge {}", tri.edges()[i]))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Weight { phi })
    }

    #[inline]
    pub fn phi(&self, edge: usize) -> T {
        self.phi[edge]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.phi
    }
}

fn check_phi<T: Real>(phi: T) -> Result<()> {
    if !(phi >= T::zero() && phi <= T::FRAC_PI_2()) {
        return Err(Error::Domain {
            what: "weight phi",
            value: phi.as_f64(),
        });
    }
    Ok(())
}

/// Circle packing metric: radii `r` together with `u = ln r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingMetric<T> {
    r: Vec<T>,
    u: Vec<T>,
}

impl<T: Real> PackingMetric<T> {
    pub fn from_radii(r: Vec<T>) -> Result<Self> {
        for &x in &r {
            if !(x > T::zero() && x.is_finite()) {
                return Err(Error::Domain {
                    what: "radius",
                    value: x.as_f64(),
                });
            }
        }
        let u = r.iter().map(|x| x.ln()).collect();
        Ok(PackingMetric { r, u })
    }

    pub fn from_log_radii(u: Vec<T>) -> Result<Self> {
        if let Some(&bad) = u.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain {
                what: "log radius",
                value: bad.as_f64(),
            });
        }
        let r: Vec<T> = u.iter().map(|x| x.exp()).collect();
        if let Some(&bad) = r.iter().find(|x| !(**x > T::zero() && x.is_finite())) {
            return Err(Error::Domain {
                what: "radius",
                value: bad.as_f64(),
            });
        }
        Ok(PackingMetric { r, u })
    }

    pub fn uniform(n: usize, r: T) -> Result<Self> {
        Self::from_radii(vec![r; n])
    }

    pub fn radii(&self) -> &[T] {
        &self.r
    }

    pub fn log_radii(&self) -> &[T] {
        &self.u
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Returns the metric with every radius multiplied by `s`.
pub fn scale_metric<T: Real>(m: &PackingMetric<T>, s: T) -> Result<PackingMetric<T>> {
    if !(s > T::zero() && s.is_finite()) {
        return Err(Error::Domain {
            what: "scale factor",
            value: s.as_f64(),
        });
    }
    let shift = s.ln();
    Ok(PackingMetric {
        r: m.r.iter().map(|&x| x * s).collect(),
        u: m.u.iter().map(|&x| x + shift).collect(),
    })
}

/// `sqrt(r_i^2 + r_j^2 + 2 r_i r_j cos phi)`.
pub fn edge_length<T: Real>(ri: T, rj: T, phi: T) -> Result<T> {
    if !(ri > T::zero()) {
        return Err(Error::Domain {
            what: "radius",
            value: ri.as_f64(),
        });
    }
    if !(rj > T::zero()) {
        return Err(Error::Domain {
            what: "radius",
            value: rj.as_f64(),
        });
    }
    check_phi(phi)?;
    Ok(raw_length(ri, rj, phi.cos()))
}

#[inline]
pub(crate) fn raw_length<T: Real>(ri: T, rj: T, cos_phi: T) -> T {
    (ri * ri + rj * rj + (ri + ri) * rj * cos_phi).sqrt()
}

/// Clamps a cosine into `[-1, 1]`, rejecting overshoot larger than the tolerance.
pub(crate) fn clamp_cos<T: Real>(c: T) -> Result<T> {
    let tol = T::lit(COS_CLAMP_TOL);
    if !(c.abs() <= T::one() + tol) {
        return Err(Error::CosineOvershoot { value: c.as_f64() });
    }
    Ok(c.max(-T::one()).min(T::one()))
}

/// Angles opposite `a`, `b`, `c` by the cosine law.
pub fn triangle_angles<T: Real>(a: T, b: T, c: T) -> Result<[T; 3]> {
    let degenerate = || Error::DegenerateTriangle {
        a: a.as_f64(),
        b: b.as_f64(),
        c: c.as_f64(),
    };
    if !(a > T::zero() && b > T::zero() && c > T::zero()) || !(a < b + c && b < a + c && c < a + b) {
        return Err(degenerate());
    }
    let two = T::lit(2.0);
    let cos_a = clamp_cos((b * b + c * c - a * a) / (two * b * c))?;
    let cos_b = clamp_cos((a * a + c * c - b * b) / (two * a * c))?;
    let cos_c = clamp_cos((a * a + b * b - c * c) / (two * a * b))?;
    Ok([cos_a.acos(), cos_b.acos(), cos_c.acos()])
}

/// Angles of a circle packing face with radii `r` and weights
/// `phi = [phi_01, phi_12, phi_20]`, evaluated from the radii by the
/// half-angle tangent formula.
///
/// Each excess `s - l` is written as a sum of nonnegative terms that are
/// computed without cancellation, so tiny circles next to large ones keep
/// full relative accuracy where the cosine law would round the triangle
/// flat.
pub fn packing_face_angles<T: Real>(r: [T; 3], phi: [T; 3]) -> Result<[T; 3]> {
    let pair_phi = |a: usize, b: usize| match (a.min(b), a.max(b)) {
        (0, 1) => phi[0],
        (1, 2) => phi[1],
        _ => phi[2],
    };
    let len = |a: usize, b: usize| raw_length(r[a], r[b], pair_phi(a, b).cos());
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    // l_ca - r_a
    let over = |c: usize, a: usize| {
        let l = len(c, a);
        (r[c] * r[c] + two * r[c] * r[a] * pair_phi(c, a).cos()) / (l + r[a])
    };
    // r_a + r_b - l_ab, with 1 - cos phi = 2 sin^2(phi / 2)
    let short = |a: usize, b: usize| {
        let sh = (pair_phi(a, b) * half).sin();
        T::lit(4.0) * r[a] * r[b] * sh * sh / (r[a] + r[b] + len(a, b))
    };
    // excess[c] = s - (length of the edge opposite corner c)
    let mut excess = [T::zero(); 3];
    for (c, x) in excess.iter_mut().enumerate() {
        let a = (c + 1) % 3;
        let b = (c + 2) % 3;
        *x = half * (over(c, a) + over(c, b) + short(a, b));
    }
    let s = half * (len(0, 1) + len(1, 2) + len(2, 0));
    if !excess.iter().all(|&x| x > T::zero()) {
        return Err(Error::DegenerateTriangle {
            a: len(1, 2).as_f64(),
            b: len(0, 2).as_f64(),
            c: len(0, 1).as_f64(),
        });
    }
    let mut out = [T::zero(); 3];
    for (c, theta) in out.iter_mut().enumerate() {
        let a = (c + 1) % 3;
        let b = (c + 2) % 3;
        *theta = two * (excess[a] * excess[b]).sqrt().atan2((s * excess[c]).sqrt());
    }
    Ok(out)
}

/// Lengths, corner angles and curvatures of a metric.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryState<T> {
    /// Per edge, in edge-index order.
    pub lengths: Vec<T>,
    /// Per face, angle at each corner (same order as the face's vertices).
    pub angles: Vec<[T; 3]>,
    /// Per vertex combinatorial Gauss curvature.
    pub curvatures: Vec<T>,
    /// `2 pi chi / N`.
    pub avg_curvature: T,
}

impl<T: Real> GeometryState<T> {
    /// `sum K_i - 2 pi chi`.
    pub fn gauss_bonnet_residual(&self, chi: i64) -> T {
        let total: T = self.curvatures.iter().copied().sum();
        total - T::TAU() * T::lit(chi as f64)
    }

    /// Constant vector `k_av (1, ..., 1)`.
    pub fn avg_vector(&self) -> Vec<T> {
        vec![self.avg_curvature; self.curvatures.len()]
    }
}

/// `2 pi chi / N` for the triangulation.
pub fn average_curvature<T: Real>(tri: &Triangulation) -> T {
    T::TAU() * T::lit(tri.euler_characteristic() as f64) / T::from_usize_lossy(tri.vertex_count())
}

pub fn compute_geometry<T: Real>(tri: &Triangulation, w: &Weight<T>, m: &PackingMetric<T>) -> Result<GeometryState<T>> {
    check_sizes(tri, w, m)?;
    let r = m.radii();
    let lengths: Vec<T> = tri
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| raw_length(r[e.lo()], r[e.hi()], w.phi(i).cos()))
        .collect();
    let mut angles = Vec::with_capacity(tri.face_count());
    for (f, verts) in tri.faces().iter().enumerate() {
        let fe = tri.face_edges(f);
        let radii = [r[verts[0]], r[verts[1]], r[verts[2]]];
        // face_edges lists the edge opposite each corner
        let phi = [w.phi(fe[2]), w.phi(fe[0]), w.phi(fe[1])];
        angles.push(packing_face_angles(radii, phi)?);
    }
    // fixed per-vertex summation order: faces in index order
    let mut angle_sum = vec![T::zero(); tri.vertex_count()];
    for (f, tri_f) in tri.faces().iter().enumerate() {
        for c in 0..3 {
            angle_sum[tri_f[c]] = angle_sum[tri_f[c]] + angles[f][c];
        }
    }
    let curvatures = angle_sum.into_iter().map(|s| T::TAU() - s).collect();
    Ok(GeometryState {
        lengths,
        angles,
        curvatures,
        avg_curvature: average_curvature(tri),
    })
}

/// Curvature vector of the metric `Exp(u)`.
pub fn curvature_at<T: Real>(tri: &Triangulation, w: &Weight<T>, u: &[T]) -> Result<Vec<T>> {
    let m = PackingMetric::from_log_radii(u.to_vec())?;
    Ok(compute_geometry(tri, w, &m)?.curvatures)
}

pub(crate) fn check_sizes<T: Real>(tri: &Triangulation, w: &Weight<T>, m: &PackingMetric<T>) -> Result<()> {
    if w.as_slice().len() != tri.edge_count() {
        return Err(Error::DimensionMismatch {
            expected: tri.edge_count(),
            got: w.as_slice().len(),
        });
    }
    if m.len() != tri.vertex_count() {
        return Err(Error::DimensionMismatch {
            expected: tri.vertex_count(),
            got: m.len(),
        });
    }
    Ok(())
}

/// A triangulation together with a fixed weight: the data `(T, Phi)` that
/// every metric-dependent quantity is evaluated on.
#[derive(Debug, Clone, Copy)]
pub struct Surface<'a, T> {
    pub tri: &'a Triangulation,
    pub weight: &'a Weight<T>,
}

impl<'a, T: Real> Surface<'a, T> {
    pub fn new(tri: &'a Triangulation, weight: &'a Weight<T>) -> Self {
        Surface { tri, weight }
    }

    pub fn vertex_count(&self) -> usize {
        self.tri.vertex_count()
    }

    pub fn avg_curvature(&self) -> T {
        average_curvature(self.tri)
    }

    pub fn geometry(&self, m: &PackingMetric<T>) -> Result<GeometryState<T>> {
        compute_geometry(self.tri, self.weight, m)
    }

    pub fn curvature_at(&self, u: &[T]) -> Result<Vec<T>> {
        curvature_at(self.tri, self.weight, u)
    }
}

/// Text inputs for weights and radii.
pub mod input {
    use super::*;

    /// Parses a weight file: either one scalar for every edge, or lines `a b phi`.
    pub fn parse_weight<T: Real>(text: &str, tri: &Triangulation) -> Result<Weight<T>> {
        let lines = data_lines(text);
        if lines.len() == 1 && lines[0].1.len() == 1 {
            let (line, toks) = &lines[0];
            return Weight::uniform(tri, parse_real(*line, toks[0])?);
        }
        let mut items = Vec::with_capacity(lines.len());
        for (line, toks) in lines {
            if toks.len() != 3 {
                return Err(Error::Parse {
                    line,
                    message: "weight line must be \"a b phi\"".into(),
                });
            }
            let a = parse_usize(line, toks[0])?;
            let b = parse_usize(line, toks[1])?;
            items.push((Edge::new(a, b), parse_real(line, toks[2])?));
        }
        Weight::from_assignments(tri, items)
    }

    /// Parses a radii file: `n` positive reals, whitespace or newline separated.
    pub fn parse_radii<T: Real>(text: &str, n: usize) -> Result<PackingMetric<T>> {
        let mut r = Vec::with_capacity(n);
        for (line, toks) in data_lines(text) {
            for t in toks {
                r.push(parse_real(line, t)?);
            }
        }
        if r.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: r.len(),
            });
        }
        PackingMetric::from_radii(r)
    }

    /// Parses a list of reals (used for prescribed curvature files).
    pub fn parse_vector<T: Real>(text: &str, n: usize) -> Result<Vec<T>> {
        let mut v = Vec::with_capacity(n);
        for (line, toks) in data_lines(&text.replace(',', " ")) {
            for t in toks {
                v.push(parse_real(line, t)?);
            }
        }
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
        Ok(v)
    }

    fn data_lines(text: &str) -> Vec<(usize, Vec<&str>)> {
        text.lines()
            .enumerate()
            .filter_map(|(i, l)| {
                let toks: Vec<&str> = l.split('#').next().unwrap_or("").split_whitespace().collect();
                (!toks.is_empty()).then_some((i + 1, toks))
            })
            .collect()
    }

    fn parse_real<T: Real>(line: usize, tok: &str) -> Result<T> {
        tok.parse::<f64>()
            .ok()
            .and_then(T::from_f64)
            .ok_or_else(|| Error::Parse {
                line,
                message: format!("expected a real number, found {tok:?}"),
            })
    }

    fn parse_usize(line: usize, tok: &str) -> Result<usize> {
        tok.parse().map_err(|_| Error::Parse {
            line,
            message: format!("expected a vertex index, found {tok:?}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::samples::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    #[test]
    fn edge_length_examples() {
        assert_abs_diff_eq!(edge_length(1.0, 1.0, 0.0).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(edge_length(3.0, 4.0, FRAC_PI_2).unwrap(), 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(edge_length(1.0, 1.0, FRAC_PI_3).unwrap(), 3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn edge_length_domain_errors() {
        assert!(edge_length(0.0, 1.0, 0.0).is_err());
        assert!(edge_length(1.0, -1.0, 0.0).is_err());
        assert!(edge_length(1.0, 1.0, 2.0).is_err());
        assert!(edge_length(1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn angle_examples() {
        let eq = triangle_angles(2.0, 2.0, 2.0).unwrap();
        for a in eq {
            assert_abs_diff_eq!(a, FRAC_PI_3, epsilon = 1e-15);
        }
        let right = triangle_angles(5.0, 3.0, 4.0).unwrap();
        assert_abs_diff_eq!(right[0], FRAC_PI_2, epsilon = 1e-15);
        assert_abs_diff_eq!(right[1], (0.6f64).asin(), epsilon = 1e-15);
        assert_abs_diff_eq!(right[2], (0.8f64).asin(), epsilon = 1e-15);
        let thin = triangle_angles(1.0, 1.0, 1.999).unwrap();
        assert!(thin[2] > 3.0 && thin[0] < 0.05 && thin[1] < 0.05);
        assert_abs_diff_eq!(thin.iter().sum::<f64>(), PI, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_triangle_rejected() {
        assert!(matches!(
            triangle_angles(1.0, 1.0, 2.0),
            Err(Error::DegenerateTriangle { .. })
        ));
        assert!(triangle_angles(1.0, 1.0, 3.0).is_err());
        assert!(triangle_angles(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn cosine_clamp_tolerance() {
        assert_eq!(clamp_cos(1.0 + 1e-12).unwrap(), 1.0);
        assert!(matches!(clamp_cos(1.0 + 1e-6), Err(Error::CosineOvershoot { .. })));
    }

    #[test]
    fn symmetric_tetrahedron() {
        let tri = tetrahedron();
        for (phi, len) in [(0.0, 2.0), (FRAC_PI_2, 2f64.sqrt())] {
            let w = Weight::uniform(&tri, phi).unwrap();
            let m = PackingMetric::uniform(4, 1.0).unwrap();
            let g = compute_geometry(&tri, &w, &m).unwrap();
            for &l in &g.lengths {
                assert_abs_diff_eq!(l, len, epsilon = 1e-14);
            }
            for f in &g.angles {
                for &a in f {
                    assert_abs_diff_eq!(a, FRAC_PI_3, epsilon = 1e-14);
                }
            }
            for &k in &g.curvatures {
                assert_abs_diff_eq!(k, PI, epsilon = 1e-14);
            }
            assert_abs_diff_eq!(g.curvatures.iter().sum::<f64>(), 4.0 * PI, epsilon = 1e-13);
            assert_abs_diff_eq!(g.avg_curvature, PI, epsilon = 1e-15);
        }
    }

    #[test]
    fn scaling() {
        let m = PackingMetric::uniform(4, 1.0).unwrap();
        let s = scale_metric(&m, 2.0).unwrap();
        assert!(s.radii().iter().all(|&r| r == 2.0));
        assert_eq!(scale_metric(&m, 1.0).unwrap(), m);
        assert!(scale_metric(&m, 0.0).is_err());
        assert!(scale_metric(&m, -1.0).is_err());
    }

    #[test]
    fn metric_representations_agree() {
        let m = PackingMetric::from_radii(vec![0.5f64, 1.0, 2.0]).unwrap();
        for (r, u) in m.radii().iter().zip(m.log_radii()) {
            assert!((u.exp() - r).abs() <= 1e-12 * r);
        }
        assert!(PackingMetric::from_radii(vec![1.0, 0.0]).is_err());
        assert!(PackingMetric::<f64>::from_log_radii(vec![f64::NAN]).is_err());
    }

    #[test]
    fn weight_file_forms() {
        let tri = tetrahedron();
        let w: Weight<f64> = input::parse_weight("0.5\n", &tri).unwrap();
        assert!(w.as_slice().iter().all(|&p| p == 0.5));
        let text = "0 1 0.1\n0 2 0.2\n0 3 0.3\n1 2 0.4\n1 3 0.5\n# c\n3 2 0.6\n";
        let w: Weight<f64> = input::parse_weight(text, &tri).unwrap();
        assert_eq!(w.phi(tri.edge_index(2, 3).unwrap()), 0.6);
        assert!(input::parse_weight::<f64>("0 1 0.1\n", &tri).is_err());
        assert!(input::parse_weight::<f64>("2.0\n", &tri).is_err());
    }

    #[test]
    fn radii_file() {
        let m: PackingMetric<f64> = input::parse_radii("1\n2 3\n4\n", 4).unwrap();
        assert_eq!(m.radii(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(input::parse_radii::<f64>("1 2 3\n", 4).is_err());
        assert!(input::parse_radii::<f64>("1 2 3 -4\n", 4).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let tri = octahedron();
        let w = Weight::uniform(&tri, 0.0f32).unwrap();
        let m = PackingMetric::uniform(6, 1.0f32).unwrap();
        let g = compute_geometry(&tri, &w, &m).unwrap();
        for &k in &g.curvatures {
            assert!((k - 2.0 * std::f32::consts::PI / 3.0).abs() < 1e-5);
        }
    }

    #[test]
    fn packing_angles_agree_with_cosine_law() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let r = [
                rng.gen_range(0.2..5.0),
                rng.gen_range(0.2..5.0),
                rng.gen_range(0.2..5.0),
            ];
            let phi = [
                rng.gen_range(0.0..FRAC_PI_2),
                rng.gen_range(0.0..FRAC_PI_2),
                rng.gen_range(0.0..FRAC_PI_2),
            ];
            let l01 = edge_length(r[0], r[1], phi[0]).unwrap();
            let l12 = edge_length(r[1], r[2], phi[1]).unwrap();
            let l20 = edge_length(r[2], r[0], phi[2]).unwrap();
            let law = triangle_angles(l12, l20, l01).unwrap();
            let stable = packing_face_angles(r, phi).unwrap();
            for c in 0..3 {
                assert_abs_diff_eq!(law[c], stable[c], epsilon = 1e-10);
            }
            assert_abs_diff_eq!(stable.iter().sum::<f64>(), PI, epsilon = 1e-12);
        }
    }

    #[test]
    fn tiny_circle_keeps_its_angle() {
        // two unit circles and one of radius eps tangent to both (phi = 0):
        // the angle at the small circle tends to pi, the others to
        // sqrt(2 eps) each
        let eps: f64 = 1e-14;
        let a = packing_face_angles([eps, 1.0, 1.0], [0.0; 3]).unwrap();
        assert!(a.iter().all(|&x| x > 0.0));
        assert!((a[1] / (2.0 * eps).sqrt() - 1.0).abs() < 1e-6);
        assert_abs_diff_eq!(a.iter().sum::<f64>(), PI, epsilon = 1e-14);
    }
}
