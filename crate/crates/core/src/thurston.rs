//! Admissibility of target curvatures.
//!
//! A target `K` is admissible when it satisfies Gauss-Bonnet and, for every
//! nonempty proper vertex subset `I`,
//!
//! ```text
//! sum_{i in I} K_i  >  -sum_{(e, v) in Lk(I)} (pi - phi(e)) + 2 pi chi(F_I).
//! ```
//!
//! All `2^N - 2` subsets are enumerated. The parallel pass walks each chunk
//! of the bitmask range in Gray-code order and updates the two sides
//! incrementally; any subset that comes close to failing is re-evaluated
//! from scratch, and the reported violator is found by a sequential pass
//! in (size, lexicographic) order.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{average_curvature, Weight};
use crate::mesh::{Triangulation, VertexSubset};
use crate::scalar::Real;

/// Enumeration is refused above this many vertices unless overridden.
pub const ENUMERATION_LIMIT: usize = 24;

/// Gauss-Bonnet tolerance on `|sum K - 2 pi chi|`.
pub const GAUSS_BONNET_TOL: f64 = 1e-9;

/// A subset inequality counts as violated when `lhs <= rhs + VIOLATION_TOL`.
pub const VIOLATION_TOL: f64 = 1e-12;

// incremental sums are only trusted outside this margin
const RECHECK_MARGIN: f64 = 1e-8;

const CHUNK_BITS: u32 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Admissible,
    Inadmissible,
    GaussBonnetViolation,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Admissible => "admissible",
            Verdict::Inadmissible => "inadmissible",
            Verdict::GaussBonnetViolation => "gauss_bonnet_violation",
        }
    }
}

/// Both sides of the inequality for one subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetInequality {
    pub members: Vec<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

impl SubsetInequality {
    /// Fails the strict inequality (with the violation tolerance).
    pub fn violated(&self) -> bool {
        self.lhs <= self.rhs + VIOLATION_TOL
    }

    /// Violated only because of the tolerance band.
    pub fn borderline(&self) -> bool {
        self.violated() && self.lhs > self.rhs - VIOLATION_TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub verdict: Verdict,
    /// Smallest violating subset in (size, lexicographic) order.
    pub violation: Option<SubsetInequality>,
    pub borderline: bool,
    pub subsets_checked: u64,
    pub vertex_count: usize,
    pub euler_characteristic: i64,
    /// `sum K - 2 pi chi`.
    pub gauss_bonnet_residual: f64,
    pub elapsed: Duration,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.verdict == Verdict::Admissible
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckOptions {
    /// Enumerate even above [`ENUMERATION_LIMIT`] vertices.
    pub allow_large: bool,
}

/// `|sum target - 2 pi chi| < 1e-9`.
pub fn check_gauss_bonnet<T: Real>(target: &[T], chi: i64) -> bool {
    gauss_bonnet_residual(target, chi).abs() < GAUSS_BONNET_TOL
}

fn gauss_bonnet_residual<T: Real>(target: &[T], chi: i64) -> f64 {
    let total: f64 = target.iter().map(|x| x.as_f64()).sum();
    total - std::f64::consts::TAU * chi as f64
}

/// Both sides of the inequality for `subset`, recomputed from the link
/// pairs and the subcomplex Euler characteristic.
pub fn subset_inequality<T: Real>(
    tri: &Triangulation,
    w: &Weight<T>,
    target: &[T],
    subset: &VertexSubset,
) -> SubsetInequality {
    let pi = std::f64::consts::PI;
    let lhs: f64 = subset.members().iter().map(|&i| target[i].as_f64()).sum();
    let link: f64 = tri
        .link_pairs(subset)
        .iter()
        .map(|(e, _)| {
            let idx = tri
                .edge_index(e.lo(), e.hi())
                .expect("link edge belongs to the triangulation");
            pi - w.phi(idx).as_f64()
        })
        .sum();
    let rhs = -link + std::f64::consts::TAU * tri.subcomplex_euler(subset) as f64;
    SubsetInequality {
        members: subset.members().to_vec(),
        lhs,
        rhs,
    }
}

/// Decides whether `target` is admissible for `(tri, w)`.
pub fn check_admissible<T: Real>(
    tri: &Triangulation,
    w: &Weight<T>,
    target: &[T],
    opts: CheckOptions,
) -> Result<AdmissibilityReport> {
    let start = Instant::now();
    let n = tri.vertex_count();
    if target.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: target.len(),
        });
    }
    if w.as_slice().len() != tri.edge_count() {
        return Err(Error::DimensionMismatch {
            expected: tri.edge_count(),
            got: w.as_slice().len(),
        });
    }
    if n > 63 || (n > ENUMERATION_LIMIT && !opts.allow_large) {
        return Err(Error::EnumerationTooLarge {
            n,
            limit: if n > 63 { 63 } else { ENUMERATION_LIMIT },
        });
    }
    let chi = tri.euler_characteristic();
    let residual = gauss_bonnet_residual(target, chi);
    let mut report = AdmissibilityReport {
        verdict: Verdict::Admissible,
        violation: None,
        borderline: false,
        subsets_checked: 0,
        vertex_count: n,
        euler_characteristic: chi,
        gauss_bonnet_residual: residual,
        elapsed: Duration::ZERO,
    };
    if residual.abs() >= GAUSS_BONNET_TOL {
        report.verdict = Verdict::GaussBonnetViolation;
        report.elapsed = start.elapsed();
        return Ok(report);
    }

    let table = Incidence::new(tri, w, target);
    let (checked, smallest) = table.scan();
    report.subsets_checked = checked;
    if let Some(size) = smallest {
        // the recomputed sides are authoritative; a scan hit that only
        // differs by rounding may sit at any size
        let found = first_violation(tri, w, target, size).or_else(|| first_violation(tri, w, target, n - 1));
        if let Some(found) = found {
            report.verdict = Verdict::Inadmissible;
            report.borderline = found.borderline();
            report.violation = Some(found);
        }
    }
    report.elapsed = start.elapsed();
    Ok(report)
}

/// [`check_admissible`] with the constant target `K_av (1, ..., 1)`.
pub fn constant_curvature_exists<T: Real>(
    tri: &Triangulation,
    w: &Weight<T>,
    opts: CheckOptions,
) -> Result<AdmissibilityReport> {
    let target = vec![average_curvature::<T>(tri); tri.vertex_count()];
    check_admissible(tri, w, &target, opts)
}

/// Every nonempty proper subset with both sides of its inequality, in
/// (size, lexicographic) order.
pub fn subset_rows<T: Real>(
    tri: &Triangulation,
    w: &Weight<T>,
    target: &[T],
    opts: CheckOptions,
) -> Result<Vec<SubsetInequality>> {
    let n = tri.vertex_count();
    if target.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: target.len(),
        });
    }
    if n > 63 || (n > ENUMERATION_LIMIT && !opts.allow_large) {
        return Err(Error::EnumerationTooLarge {
            n,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut rows = Vec::new();
    for size in 1..n {
        for members in Combinations::new(n, size) {
            let subset = VertexSubset::new(members, n)?;
            rows.push(subset_inequality(tri, w, target, &subset));
        }
    }
    Ok(rows)
}

/// CSV with header `subset,lhs,rhs,holds`; members are space separated.
pub fn subset_rows_csv(rows: &[SubsetInequality]) -> String {
    let mut out = String::from("subset,lhs,rhs,holds\n");
    for r in rows {
        let members: Vec<String> = r.members.iter().map(|m| m.to_string()).collect();
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{}\n",
            members.join(" "),
            r.lhs,
            r.rhs,
            !r.violated()
        ));
    }
    out
}

fn first_violation<T: Real>(
    tri: &Triangulation,
    w: &Weight<T>,
    target: &[T],
    max_size: usize,
) -> Option<SubsetInequality> {
    let n = tri.vertex_count();
    for size in 1..=max_size {
        for members in Combinations::new(n, size) {
            let subset = VertexSubset::new(members, n).ok()?;
            let row = subset_inequality(tri, w, target, &subset);
            if row.violated() {
                return Some(row);
            }
        }
    }
    None
}

/// `k`-subsets of `0..n` in lexicographic order.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        let current = (k <= n).then(|| (0..k).collect());
        Combinations { n, current }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

/// Bitmask view of the faces and edges for fast per-subset sums.
struct Incidence {
    n: usize,
    target: Vec<f64>,
    /// Per vertex: incident faces as (face mask, pi - phi of the edge
    /// opposite this vertex).
    star_faces: Vec<Vec<(u64, f64)>>,
    /// Per vertex: masks of the other endpoint of each incident edge.
    star_edges: Vec<Vec<u64>>,
    faces: Vec<(u64, [f64; 3], [usize; 3])>,
    edges: Vec<u64>,
}

/// Running sums for one subset.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    lhs: f64,
    link: f64,
    chi: i64,
}

impl Sums {
    fn margin(&self) -> f64 {
        self.lhs - (-self.link + std::f64::consts::TAU * self.chi as f64)
    }
}

impl Incidence {
    fn new<T: Real>(tri: &Triangulation, w: &Weight<T>, target: &[T]) -> Self {
        let n = tri.vertex_count();
        let pi = std::f64::consts::PI;
        let mut star_faces = vec![Vec::new(); n];
        let mut faces = Vec::with_capacity(tri.face_count());
        for (f, verts) in tri.faces().iter().enumerate() {
            let fe = tri.face_edges(f);
            let mask = verts.iter().fold(0u64, |m, &v| m | 1 << v);
            let weights = [0, 1, 2].map(|c| pi - w.phi(fe[c]).as_f64());
            for c in 0..3 {
                star_faces[verts[c]].push((mask, weights[c]));
            }
            faces.push((mask, weights, *verts));
        }
        let mut star_edges = vec![Vec::new(); n];
        let mut edges = Vec::with_capacity(tri.edge_count());
        for e in tri.edges() {
            star_edges[e.lo()].push(1u64 << e.hi());
            star_edges[e.hi()].push(1u64 << e.lo());
            edges.push(1u64 << e.lo() | 1u64 << e.hi());
        }
        Incidence {
            n,
            target: target.iter().map(|x| x.as_f64()).collect(),
            star_faces,
            star_edges,
            faces,
            edges,
        }
    }

    fn evaluate(&self, mask: u64) -> Sums {
        let mut s = Sums::default();
        for v in 0..self.n {
            if mask >> v & 1 == 1 {
                s.lhs += self.target[v];
                s.chi += 1;
            }
        }
        for &e in &self.edges {
            if e & mask == e {
                s.chi -= 1;
            }
        }
        for (fmask, weights, verts) in &self.faces {
            match (fmask & mask).count_ones() {
                3 => s.chi += 1,
                1 => {
                    let c = verts
                        .iter()
                        .position(|&v| mask >> v & 1 == 1)
                        .expect("one corner inside");
                    s.link += weights[c];
                }
                _ => {}
            }
        }
        s
    }

    /// Moves `s` from subset `mask` to `mask ^ (1 << v)`.
    fn toggle(&self, s: &mut Sums, mask: u64, v: usize) {
        let bit = 1u64 << v;
        let adding = mask & bit == 0;
        let sign = if adding { 1.0 } else { -1.0 };
        s.lhs += sign * self.target[v];
        let neighbours = self.star_edges[v].iter().filter(|&&o| o & mask != 0).count() as i64;
        if adding {
            s.chi += 1 - neighbours;
        } else {
            s.chi -= 1 - neighbours;
        }
        let after = mask ^ bit;
        for &(fmask, _) in &self.star_faces[v] {
            let before_in = (fmask & mask).count_ones();
            let after_in = (fmask & after).count_ones();
            if before_in == 3 {
                s.chi -= 1;
            }
            if after_in == 3 {
                s.chi += 1;
            }
        }
        // link pairs only change on faces touching v
        for &(fmask, _) in &self.star_faces[v] {
            s.link -= self.face_link(fmask, mask);
            s.link += self.face_link(fmask, after);
        }
    }

    fn face_link(&self, fmask: u64, mask: u64) -> f64 {
        let inside = fmask & mask;
        if inside.count_ones() != 1 {
            return 0.0;
        }
        let v = inside.trailing_zeros() as usize;
        self.star_faces[v]
            .iter()
            .find(|(m, _)| *m == fmask)
            .map_or(0.0, |&(_, w)| w)
    }

    /// Scans every nonempty proper subset. Returns the number of subsets
    /// evaluated and, if any violates, the smallest violating size seen.
    fn scan(&self) -> (u64, Option<usize>) {
        let total: u64 = 1u64 << self.n;
        let full = total - 1;
        let chunk = 1u64 << CHUNK_BITS.min(self.n as u32);
        let chunks = total / chunk;
        let cancel = AtomicBool::new(false);
        let results: Vec<(u64, Option<usize>)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let lo = c * chunk;
                let hi = lo + chunk;
                let mut checked = 0u64;
                let mut smallest: Option<usize> = None;
                let mut mask = gray(lo);
                let mut sums = self.evaluate(mask);
                for i in lo..hi {
                    if i > lo {
                        let next = gray(i);
                        let v = (mask ^ next).trailing_zeros() as usize;
                        self.toggle(&mut sums, mask, v);
                        mask = next;
                        if (i & 0xfff) == 0 && cancel.load(Ordering::Relaxed) {
                            break;
                        }
                    }
                    if mask == 0 || mask == full {
                        continue;
                    }
                    checked += 1;
                    let mut margin = sums.margin();
                    if margin <= RECHECK_MARGIN {
                        let fresh = self.evaluate(mask);
                        sums = fresh;
                        margin = fresh.margin();
                    }
                    if margin <= VIOLATION_TOL {
                        let size = mask.count_ones() as usize;
                        smallest = Some(smallest.map_or(size, |s| s.min(size)));
                        cancel.store(true, Ordering::Relaxed);
                    }
                }
                (checked, smallest)
            })
            .collect();
        let checked = results.iter().map(|r| r.0).sum();
        let smallest = results.iter().filter_map(|r| r.1).min();
        (checked, smallest)
    }
}

fn gray(i: u64) -> u64 {
    i ^ (i >> 1)
}
