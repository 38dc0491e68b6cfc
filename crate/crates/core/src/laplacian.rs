//! The discrete dual-Laplacian `L = dK/du`.
//!
//! `L` is assembled from per-(face, edge) half weights
//! `h = (d theta_i / d r_j) r_j`, which can be evaluated either by
//! differentiating the cosine law ([`half_weight_analytic`]) or from the
//! dual edge length of the circle pattern ([`half_weight_dual`]). The two
//! routes agree identically; assembly uses the analytic one by default.
//!
//! Since `L` is symmetric, `Delta = -L^T` is applied as `-L`.

use crate::eigen::{jacobi, lanczos, ConstantComplement, Extreme, LanczosOptions, SymMatrix};
use crate::error::{Error, Result};
use crate::geometry::{check_sizes, clamp_cos, packing_face_angles, raw_length, PackingMetric, Weight};
use crate::mesh::{Edge, Triangulation};
use crate::scalar::{dot, norm, Real};

/// Dense eigensolvers are used up to this many vertices.
pub const DENSE_LIMIT: usize = 512;

/// Radii and weights of one face. `phi[0]` is the weight of edge
/// (corner 0, corner 1), `phi[1]` of (1, 2) and `phi[2]` of (2, 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceMetric<T> {
    pub radii: [T; 3],
    pub phi: [T; 3],
}

impl<T: Real> FaceMetric<T> {
    /// Weight of the edge between corners `a` and `b`.
    pub fn phi_between(&self, a: usize, b: usize) -> T {
        match (a.min(b), a.max(b)) {
            (0, 1) => self.phi[0],
            (1, 2) => self.phi[1],
            (0, 2) => self.phi[2],
            _ => panic!("invalid corner pair ({a}, {b})"),
        }
    }

    pub fn length_between(&self, a: usize, b: usize) -> T {
        raw_length(self.radii[a], self.radii[b], self.phi_between(a, b).cos())
    }

    /// Angles at the three corners.
    pub fn angles(&self) -> Result<[T; 3]> {
        packing_face_angles(self.radii, self.phi)
    }
}

fn check_corners(corner: usize, moving: usize) -> usize {
    assert!(
        corner < 3 && moving < 3 && corner != moving,
        "invalid corners ({corner}, {moving})"
    );
    3 - corner - moving
}

/// `(d theta_corner / d r_moving) * r_moving` by the chain rule through the
/// edge lengths.
///
/// The angle is written as `theta_c = 2 atan(sqrt(x_a x_b / (s x_c)))` with
/// `x_v = s - (edge opposite v)`, so that
/// `d theta_c = (sin theta_c / 2) (d ln x_a + d ln x_b - d ln s - d ln x_c)`.
/// Each `x_v` is a sum of nonnegative terms whose `u`-derivatives are taken
/// term by term, which keeps relative accuracy for very unequal radii.
pub fn half_weight_analytic<T: Real>(face: &FaceMetric<T>, corner: usize, moving: usize) -> Result<T> {
    let k = check_corners(corner, moving);
    let (c, m) = (corner, moving);
    let r = face.radii;
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let cos = |a: usize, b: usize| face.phi_between(a, b).cos();
    let len = |a: usize, b: usize| face.length_between(a, b);
    // d l_ab / d u_m
    let d_len = |a: usize, b: usize| -> T {
        let l = len(a, b);
        let mut d = T::zero();
        if m == a {
            d = d + r[a] * (r[a] + r[b] * cos(a, b)) / l;
        }
        if m == b {
            d = d + r[b] * (r[b] + r[a] * cos(a, b)) / l;
        }
        d
    };
    // l_va - r_a = (r_v^2 + 2 r_v r_a cos) / (l_va + r_a), value and d/du_m
    let over = |v: usize, a: usize| -> (T, T) {
        let num = r[v] * r[v] + two * r[v] * r[a] * cos(v, a);
        let den = len(v, a) + r[a];
        let mut d_num = T::zero();
        let mut d_den = d_len(v, a);
        if m == v {
            d_num = d_num + two * r[v] * r[v] + two * r[v] * r[a] * cos(v, a);
        }
        if m == a {
            d_num = d_num + two * r[v] * r[a] * cos(v, a);
            d_den = d_den + r[a];
        }
        (num / den, (d_num * den - num * d_den) / (den * den))
    };
    // r_a + r_b - l_ab = 4 r_a r_b sin^2(phi / 2) / (r_a + r_b + l_ab)
    let short = |a: usize, b: usize| -> (T, T) {
        let sh = (face.phi_between(a, b) * half).sin();
        let num = T::lit(4.0) * r[a] * r[b] * sh * sh;
        let den = r[a] + r[b] + len(a, b);
        let d_num = if m == a || m == b { num } else { T::zero() };
        let mut d_den = d_len(a, b);
        if m == a {
            d_den = d_den + r[a];
        }
        if m == b {
            d_den = d_den + r[b];
        }
        (num / den, (d_num * den - num * d_den) / (den * den))
    };
    // d ln x_v / d u_m
    let d_ln_excess = |v: usize| -> Result<T> {
        let a = (v + 1) % 3;
        let b = (v + 2) % 3;
        let (o1, d1) = over(v, a);
        let (o2, d2) = over(v, b);
        let (sh, d3) = short(a, b);
        let x = o1 + o2 + sh;
        if !(x > T::zero()) {
            return Err(Error::DegenerateTriangle {
                a: len(1, 2).as_f64(),
                b: len(0, 2).as_f64(),
                c: len(0, 1).as_f64(),
            });
        }
        Ok((d1 + d2 + d3) / x)
    };
    let s = len(0, 1) + len(1, 2) + len(2, 0);
    let d_s = d_len(0, 1) + d_len(1, 2) + d_len(2, 0);
    let (a, b) = (m, k);
    let d_ln_tan = half * (d_ln_excess(a)? + d_ln_excess(b)? - d_s / s - d_ln_excess(c)?);
    let theta_c = face.angles()?[c];
    Ok(theta_c.sin() * d_ln_tan)
}

/// Signed dual length over the edge length, `l*_ij|face / l_ij`, built from
/// the radical center of the three circles.
///
/// With `a = r_j cos(angle at j in (r_j, l_jk, r_k))` and
/// `b = r_j cos(angle at j in (r_j, l_ij, r_i))` the projections of the
/// radical center onto the edges `jk` and `ji`, its signed distance to
/// edge `ij` is `(a - b cos theta_j) / sin theta_j`.
pub fn half_weight_dual<T: Real>(face: &FaceMetric<T>, corner: usize, moving: usize) -> Result<T> {
    let (i, j) = (corner, moving);
    let k = check_corners(i, j);
    let r = face.radii;
    let l_ij = face.length_between(i, j);
    let l_jk = face.length_between(j, k);
    let theta_j = face.angles()?[j];
    let two = T::lit(2.0);
    let aux = |side: T, other: T| -> Result<T> {
        let c = (r[j] * r[j] + side * side - other * other) / (two * r[j] * side);
        clamp_cos(c).map_err(|_| Error::DegenerateAuxiliary { cosine: c.as_f64() })
    };
    let cos_jk = aux(l_jk, r[k])?;
    let cos_ji = aux(l_ij, r[i])?;
    let dual = r[j] * (cos_jk - theta_j.cos() * cos_ji) / theta_j.sin();
    Ok(dual / l_ij)
}

/// Which formula produces the half weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Route {
    #[default]
    Analytic,
    DualLength,
}

/// Weighted graph Laplacian with edge weights `B_ij`, stored by edge.
#[derive(Debug, Clone)]
pub struct DualLaplacian<T> {
    n: usize,
    edges: Vec<Edge>,
    /// The two half weights of each edge, one per incident face.
    halves: Vec<[T; 2]>,
    weights: Vec<T>,
    diagonal: Vec<T>,
    /// Per vertex `(neighbour, edge index)`, sorted by neighbour.
    adjacency: Vec<Vec<(usize, usize)>>,
}

/// Assembles `L` with the analytic route.
pub fn assemble<T: Real>(tri: &Triangulation, w: &Weight<T>, m: &PackingMetric<T>) -> Result<DualLaplacian<T>> {
    assemble_with(tri, w, m, Route::Analytic)
}

pub fn assemble_with<T: Real>(
    tri: &Triangulation,
    w: &Weight<T>,
    m: &PackingMetric<T>,
    route: Route,
) -> Result<DualLaplacian<T>> {
    check_sizes(tri, w, m)?;
    let r = m.radii();
    let sqrt3 = T::lit(3.0).sqrt();
    // per face, the half weight for the edge opposite each corner
    let mut face_halves: Vec<[T; 3]> = Vec::with_capacity(tri.face_count());
    for (f, verts) in tri.faces().iter().enumerate() {
        let fe = tri.face_edges(f);
        let face = FaceMetric {
            radii: [r[verts[0]], r[verts[1]], r[verts[2]]],
            // edge (0,1) is opposite corner 2, (1,2) opposite 0, (2,0) opposite 1
            phi: [w.phi(fe[2]), w.phi(fe[0]), w.phi(fe[1])],
        };
        let mut out = [T::zero(); 3];
        for (opposite, slot) in out.iter_mut().enumerate() {
            let a = (opposite + 1) % 3;
            let b = (opposite + 2) % 3;
            let (corner, moving) = (a.min(b), a.max(b));
            let h = match route {
                Route::Analytic => half_weight_analytic(&face, corner, moving)?,
                Route::DualLength => half_weight_dual(&face, corner, moving)?,
            };
            if !(h > T::zero() && h < sqrt3) {
                return Err(Error::HalfWeightOutOfBounds {
                    face: f,
                    i: verts[corner],
                    j: verts[moving],
                    value: h.as_f64(),
                });
            }
            *slot = h;
        }
        face_halves.push(out);
    }

    let edges = tri.edges().to_vec();
    let mut halves = Vec::with_capacity(edges.len());
    for e in 0..edges.len() {
        let pair = tri.edge_faces(e).map(|f| {
            let c = tri.face_edges(f).iter().position(|&x| x == e).expect("edge in face");
            face_halves[f][c]
        });
        halves.push(pair);
    }
    let weights: Vec<T> = halves.iter().map(|h| h[0] + h[1]).collect();
    let n = tri.vertex_count();
    let mut adjacency = vec![Vec::new(); n];
    for (idx, e) in edges.iter().enumerate() {
        adjacency[e.lo()].push((e.hi(), idx));
        adjacency[e.hi()].push((e.lo(), idx));
    }
    for a in adjacency.iter_mut() {
        a.sort_unstable();
    }
    let diagonal = adjacency
        .iter()
        .map(|nbrs| nbrs.iter().map(|&(_, e)| weights[e]).sum())
        .collect();
    Ok(DualLaplacian {
        n,
        edges,
        halves,
        weights,
        diagonal,
        adjacency,
    })
}

impl<T: Real> DualLaplacian<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `B_ij` per edge, in edge-index order.
    pub fn edge_weights(&self) -> &[T] {
        &self.weights
    }

    pub fn half_weights(&self) -> &[[T; 2]] {
        &self.halves
    }

    pub fn diagonal(&self) -> &[T] {
        &self.diagonal
    }

    /// Entry `L_ij`.
    pub fn entry(&self, i: usize, j: usize) -> T {
        if i == j {
            return self.diagonal[i];
        }
        match self.adjacency[i].binary_search_by_key(&j, |&(v, _)| v) {
            Ok(pos) => -self.weights[self.adjacency[i][pos].1],
            Err(_) => T::zero(),
        }
    }

    /// `L f`.
    pub fn mul_vec(&self, f: &[T]) -> Result<Vec<T>> {
        self.check_len(f.len())?;
        Ok(self.mul_unchecked(f))
    }

    fn mul_unchecked(&self, f: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                // sum_j B_ij (f_i - f_j), accumulated in neighbour order
                self.adjacency[i]
                    .iter()
                    .map(|&(j, e)| self.weights[e] * (f[i] - f[j]))
                    .sum()
            })
            .collect()
    }

    /// `Delta f = -L f`, i.e. `(Delta f)_i = sum_{j~i} B_ij (f_j - f_i)`.
    pub fn apply(&self, f: &[T]) -> Result<Vec<T>> {
        Ok(self.mul_vec(f)?.into_iter().map(|x| -x).collect())
    }

    /// `f^T L f` evaluated as `sum_edges B_ij (f_i - f_j)^2`.
    pub fn quadratic_form(&self, f: &[T]) -> Result<T> {
        self.check_len(f.len())?;
        Ok(self
            .edges
            .iter()
            .zip(&self.weights)
            .map(|(e, &b)| {
                let d = f[e.lo()] - f[e.hi()];
                b * d * d
            })
            .sum())
    }

    /// `L (1, ..., 1)` computed from the stored diagonal and off-diagonal entries.
    pub fn row_sum_residuals(&self) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                self.adjacency[i]
                    .iter()
                    .fold(self.diagonal[i], |acc, &(_, e)| acc - self.weights[e])
            })
            .collect()
    }

    pub fn to_dense(&self) -> SymMatrix<T> {
        let mut m = SymMatrix::zeros(self.n);
        for i in 0..self.n {
            m.set(i, i, self.diagonal[i]);
        }
        for (e, &b) in self.edges.iter().zip(&self.weights) {
            m.set(e.lo(), e.hi(), -b);
            m.set(e.hi(), e.lo(), -b);
        }
        m
    }

    /// Returns `s L`.
    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|x| *x = *x * s);
        out.diagonal.iter_mut().for_each(|x| *x = *x * s);
        out.halves.iter_mut().for_each(|h| {
            h[0] = h[0] * s;
            h[1] = h[1] * s;
        });
        out
    }

    /// Entries as sorted `(i, j, value)` triples; off-diagonal entries appear
    /// in both orders.
    pub fn coordinate_entries(&self) -> Vec<(usize, usize, T)> {
        let mut out = Vec::with_capacity(self.n + 2 * self.edges.len());
        for i in 0..self.n {
            let mut row: Vec<(usize, T)> = self.adjacency[i].iter().map(|&(j, e)| (j, -self.weights[e])).collect();
            row.push((i, self.diagonal[i]));
            row.sort_by_key(|&(j, _)| j);
            out.extend(row.into_iter().map(|(j, v)| (i, j, v)));
        }
        out
    }

    /// Full ascending spectrum (dense, any size; intended for `N <= DENSE_LIMIT`).
    pub fn eigenvalues(&self) -> Result<Vec<T>> {
        Ok(jacobi(&self.to_dense())?.values)
    }

    /// Smallest, second smallest and largest eigenvalues.
    pub fn spectrum(&self) -> Result<SpectralSummary<T>> {
        if self.n <= DENSE_LIMIT {
            let all = self.eigenvalues()?;
            return Ok(SpectralSummary {
                smallest: all[0],
                lambda1: all.get(1).copied().unwrap_or(T::zero()),
                largest: all[all.len() - 1],
                all: Some(all),
            });
        }
        let ones = vec![T::one(); self.n];
        let smallest = norm(&self.mul_unchecked(&ones)) / T::from_usize_lossy(self.n).sqrt();
        let (lambda1, _) = self.lambda1_pair_with(Solver::Iterative)?;
        let apply = |x: &[T], y: &mut [T]| y.copy_from_slice(&self.mul_unchecked(x));
        let opts = LanczosOptions {
            deflate_constant: false,
            ..Default::default()
        };
        let (largest, _) = lanczos(self.n, apply, Extreme::Largest, opts)?;
        Ok(SpectralSummary {
            smallest,
            lambda1,
            largest,
            all: None,
        })
    }

    /// Smallest eigenvalue on the complement of the constant vector.
    pub fn lambda1(&self) -> Result<T> {
        Ok(self.lambda1_pair()?.0)
    }

    pub fn lambda1_pair(&self) -> Result<(T, Vec<T>)> {
        let solver = if self.n <= DENSE_LIMIT {
            Solver::Dense
        } else {
            Solver::Iterative
        };
        self.lambda1_pair_with(solver)
    }

    /// `lambda_1` with an explicit solver choice. The result is checked
    /// against the Rayleigh quotient of the returned eigenvector.
    pub fn lambda1_pair_with(&self, solver: Solver) -> Result<(T, Vec<T>)> {
        if self.n < 2 {
            return Err(Error::InvalidInput("lambda1 needs at least two vertices".into()));
        }
        let (value, vector) = match solver {
            Solver::Dense => {
                let basis = ConstantComplement::new(self.n);
                let eig = jacobi(&basis.restrict(&self.to_dense()))?;
                (eig.values[0], basis.lift(&eig.vectors[0]))
            }
            Solver::Iterative => {
                let apply = |x: &[T], y: &mut [T]| y.copy_from_slice(&self.mul_unchecked(x));
                lanczos(self.n, apply, Extreme::Smallest, LanczosOptions::default())?
            }
        };
        let rayleigh = self.quadratic_form(&vector)? / dot(&vector, &vector);
        let scale = value.abs().max(T::min_positive_value());
        // 1e-8 in double precision, looser for f32
        let tol = T::lit(1e-8).max(T::epsilon() * T::lit(1e3));
        // both values carry rounding of order eps ||L||, which dominates
        // when lambda_1 is tiny
        let gershgorin = self.diagonal.iter().fold(T::zero(), |m, &d| m.max(d + d));
        let floor = T::lit(100.0) * T::epsilon() * gershgorin;
        if (rayleigh - value).abs() > tol * scale + floor {
            return Err(Error::EigenNoConvergence {
                iterations: 0,
                residual: ((rayleigh - value).abs() / scale).as_f64(),
            });
        }
        Ok((value, vector))
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Dense,
    Iterative,
}

#[derive(Debug, Clone)]
pub struct SpectralSummary<T> {
    pub smallest: T,
    pub lambda1: T,
    pub largest: T,
    /// Whole spectrum when computed densely.
    pub all: Option<Vec<T>>,
}

/// Writes `L` in coordinate format, one `i j value` line per nonzero entry.
pub fn write_coordinate<T: Real>(lap: &DualLaplacian<T>) -> String {
    let mut s = String::new();
    for (i, j, v) in lap.coordinate_entries() {
        s.push_str(&format!("{i} {j} {:.16e}\n", v.as_f64()));
    }
    s
}
