//! Combinatorics of closed triangulated surfaces.
//!
//! A [`Triangulation`] is purely combinatorial: a vertex count and a list of
//! triangles. Construction validates that the faces glue into a closed
//! surface (every edge in exactly two faces, every vertex link a single
//! cycle). Orientability is not required.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Unordered vertex pair, stored with the smaller index first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge(usize, usize);

impl Edge {
    pub fn new(a: usize, b: usize) -> Self {
        if a <= b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    #[inline]
    pub fn lo(self) -> usize {
        self.0
    }

    #[inline]
    pub fn hi(self) -> usize {
        self.1
    }

    pub fn contains(self, v: usize) -> bool {
        self.0 == v || self.1 == v
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeshError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("mesh has no faces")]
    Empty,
    #[error("header declares {expected} faces but {found} were given")]
    FaceCount { expected: usize, found: usize },
    #[error("face {face} references vertex {vertex}, outside [0, {n})")]
    VertexOutOfRange { face: usize, vertex: usize, n: usize },
    #[error("face {face} has repeated vertices {vertices:?}")]
    DegenerateFace { face: usize, vertices: [usize; 3] },
    #[error("duplicate face: face {face} repeats face {first} (vertices {vertices:?})")]
    DuplicateFace {
        face: usize,
        first: usize,
        vertices: [usize; 3],
    },
    #[error("edge {edge} in {count} faces")]
    EdgeValence { edge: Edge, count: usize },
    #[error("vertex {vertex} belongs to no face")]
    IsolatedVertex { vertex: usize },
    #[error("link of vertex {vertex} is not a single cycle")]
    VertexLink { vertex: usize },
    #[error("vertex subset must be a nonempty proper subset of {n} vertices, got {members:?}")]
    InvalidSubset { members: Vec<usize>, n: usize },
}

/// A validated closed triangulated surface.
#[derive(Debug, Clone)]
pub struct Triangulation {
    vertex_count: usize,
    faces: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    edge_lookup: HashMap<Edge, usize>,
    edge_faces: Vec<[usize; 2]>,
    /// `face_edges[f][c]` is the edge opposite corner `c` of face `f`.
    face_edges: Vec<[usize; 3]>,
    degree: Vec<usize>,
    vertex_faces: Vec<Vec<usize>>,
}

impl Triangulation {
    /// Builds and validates a triangulation from 0-based vertex triples.
    pub fn new(vertex_count: usize, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }
        let mut seen: HashMap<[usize; 3], usize> = HashMap::with_capacity(faces.len());
        for (f, &tri) in faces.iter().enumerate() {
            for &v in &tri {
                if v >= vertex_count {
                    return Err(MeshError::VertexOutOfRange {
                        face: f,
                        vertex: v,
                        n: vertex_count,
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::DegenerateFace { face: f, vertices: tri });
            }
            let mut key = tri;
            key.sort_unstable();
            if let Some(&first) = seen.get(&key) {
                return Err(MeshError::DuplicateFace {
                    face: f,
                    first,
                    vertices: tri,
                });
            }
            seen.insert(key, f);
        }

        let mut incident: HashMap<Edge, Vec<usize>> = HashMap::new();
        for (f, tri) in faces.iter().enumerate() {
            for c in 0..3 {
                let e = Edge::new(tri[(c + 1) % 3], tri[(c + 2) % 3]);
                incident.entry(e).or_default().push(f);
            }
        }
        let mut edges: Vec<Edge> = incident.keys().copied().collect();
        edges.sort_unstable();
        for &e in &edges {
            let count = incident[&e].len();
            if count != 2 {
                return Err(MeshError::EdgeValence { edge: e, count });
            }
        }
        let edge_lookup: HashMap<Edge, usize> = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let edge_faces: Vec<[usize; 2]> = edges
            .iter()
            .map(|e| {
                let fs = &incident[e];
                [fs[0], fs[1]]
            })
            .collect();
        let face_edges: Vec<[usize; 3]> = faces
            .iter()
            .map(|tri| {
                let mut out = [0; 3];
                for (c, slot) in out.iter_mut().enumerate() {
                    *slot = edge_lookup[&Edge::new(tri[(c + 1) % 3], tri[(c + 2) % 3])];
                }
                out
            })
            .collect();

        let mut degree = vec![0usize; vertex_count];
        for e in &edges {
            degree[e.lo()] += 1;
            degree[e.hi()] += 1;
        }
        let mut vertex_faces = vec![Vec::new(); vertex_count];
        for (f, tri) in faces.iter().enumerate() {
            for &v in tri {
                vertex_faces[v].push(f);
            }
        }

        let tri = Triangulation {
            vertex_count,
            faces,
            edges,
            edge_lookup,
            edge_faces,
            face_edges,
            degree,
            vertex_faces,
        };
        for v in 0..vertex_count {
            if tri.vertex_faces[v].is_empty() {
                return Err(MeshError::IsolatedVertex { vertex: v });
            }
            if !tri.link_is_cycle(v) {
                return Err(MeshError::VertexLink { vertex: v });
            }
        }
        Ok(tri)
    }

    /// Checks that the opposite edges of the faces around `v` form one closed
    /// cycle through all neighbours of `v`.
    fn link_is_cycle(&self, v: usize) -> bool {
        let mut adjacency: HashMap<usize, Vec<usize>> = HashMap::new();
        for &f in &self.vertex_faces[v] {
            let tri = self.faces[f];
            let c = tri.iter().position(|&w| w == v).expect("vertex in its face");
            let a = tri[(c + 1) % 3];
            let b = tri[(c + 2) % 3];
            adjacency.entry(a).or_default().push(b);
            adjacency.entry(b).or_default().push(a);
        }
        if adjacency.values().any(|nbrs| nbrs.len() != 2) {
            return false;
        }
        let start = *adjacency.keys().next().expect("nonempty link");
        let mut visited = 1;
        let mut prev = start;
        let mut cur = adjacency[&start][0];
        while cur != start {
            visited += 1;
            let nbrs = &adjacency[&cur];
            let next = if nbrs[0] == prev { nbrs[1] } else { nbrs[0] };
            prev = cur;
            cur = next;
            if visited > adjacency.len() {
                return false;
            }
        }
        visited == adjacency.len() && visited == self.vertex_faces[v].len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Edges in sorted order; the position of an edge is its edge index.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&Edge::new(a, b)).copied()
    }

    pub fn edge_faces(&self, edge: usize) -> [usize; 2] {
        self.edge_faces[edge]
    }

    /// Edge indices opposite each corner of `face`.
    pub fn face_edges(&self, face: usize) -> [usize; 3] {
        self.face_edges[face]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.degree[v]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degree
    }

    pub fn max_degree(&self) -> usize {
        self.degree.iter().copied().max().unwrap_or(0)
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    /// Euler characteristic `N - |E| + |F|`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    /// Euler characteristic of the subcomplex `F_I` spanned by `subset`.
    pub fn subcomplex_euler(&self, subset: &VertexSubset) -> i64 {
        self.subcomplex_euler_unchecked(subset.members())
    }

    /// Like [`Triangulation::subcomplex_euler`] but accepts any member list,
    /// including the full vertex set.
    pub fn subcomplex_euler_unchecked(&self, members: &[usize]) -> i64 {
        let inside = self.membership(members);
        let v = inside.iter().filter(|&&b| b).count() as i64;
        let e = self.edges.iter().filter(|e| inside[e.lo()] && inside[e.hi()]).count() as i64;
        let f = self.faces.iter().filter(|tri| tri.iter().all(|&w| inside[w])).count() as i64;
        v - e + f
    }

    /// Pairs `(e, v)` with both endpoints of `e` outside `I`, `v` inside `I`,
    /// and `e`, `v` spanning a face. Sorted.
    pub fn link_pairs(&self, subset: &VertexSubset) -> Vec<(Edge, usize)> {
        let inside = self.membership(subset.members());
        let mut pairs: Vec<(Edge, usize)> = self
            .faces
            .iter()
            .filter_map(|tri| {
                let ins: Vec<usize> = tri.iter().copied().filter(|&w| inside[w]).collect();
                if ins.len() != 1 {
                    return None;
                }
                let v = ins[0];
                let mut out = tri.iter().copied().filter(|&w| w != v);
                let a = out.next()?;
                let b = out.next()?;
                Some((Edge::new(a, b), v))
            })
            .collect();
        pairs.sort_unstable();
        pairs
    }

    fn membership(&self, members: &[usize]) -> Vec<bool> {
        let mut inside = vec![false; self.vertex_count];
        for &m in members {
            if m < self.vertex_count {
                inside[m] = true;
            }
        }
        inside
    }

    /// Degree histogram as sorted `(degree, count)` pairs.
    pub fn degree_histogram(&self) -> Vec<(usize, usize)> {
        let mut hist = std::collections::BTreeMap::new();
        for &d in &self.degree {
            *hist.entry(d).or_insert(0usize) += 1;
        }
        hist.into_iter().collect()
    }
}

/// Nonempty proper vertex subset, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexSubset {
    members: Vec<usize>,
}

impl VertexSubset {
    pub fn new(members: impl IntoIterator<Item = usize>, vertex_count: usize) -> Result<Self, MeshError> {
        let set: BTreeSet<usize> = members.into_iter().collect();
        let members: Vec<usize> = set.into_iter().collect();
        let valid =
            !members.is_empty() && members.len() < vertex_count && members.last().is_some_and(|&m| m < vertex_count);
        if !valid {
            return Err(MeshError::InvalidSubset {
                members,
                n: vertex_count,
            });
        }
        Ok(VertexSubset { members })
    }

    /// Subset whose members are the set bits of `mask`.
    pub fn from_mask(mask: u64, vertex_count: usize) -> Result<Self, MeshError> {
        Self::new((0..64).filter(|b| mask >> b & 1 == 1), vertex_count)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.binary_search(&v).is_ok()
    }
}

/// Parses the plain-text mesh format.
///
/// ```text
/// # comment
/// N F
/// a b c
/// ...
/// ```
pub fn parse_mesh(text: &str) -> Result<Triangulation, MeshError> {
    let mut header: Option<(usize, usize)> = None;
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens = tokens_with_columns(content);
        if tokens.is_empty() {
            continue;
        }
        match header {
            None => {
                if tokens.len() != 2 {
                    return Err(syntax(line, tokens.get(2).map_or(1, |t| t.0), "header must be \"N F\""));
                }
                let n = parse_index(line, tokens[0])?;
                let f = parse_index(line, tokens[1])?;
                header = Some((n, f));
            }
            Some((_, f)) => {
                if faces.len() == f {
                    return Err(syntax(line, tokens[0].0, "unexpected content after the last face"));
                }
                if tokens.len() != 3 {
                    let col = tokens.get(3).map_or(content.len() + 1, |t| t.0);
                    return Err(syntax(line, col, "face line must have three vertex indices"));
                }
                faces.push([
                    parse_index(line, tokens[0])?,
                    parse_index(line, tokens[1])?,
                    parse_index(line, tokens[2])?,
                ]);
            }
        }
    }
    let (n, f) = header.ok_or(MeshError::Empty)?;
    if faces.len() != f {
        return Err(MeshError::FaceCount {
            expected: f,
            found: faces.len(),
        });
    }
    Triangulation::new(n, faces)
}

fn tokens_with_columns(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in s.char_indices() {
        if ch.is_whitespace() {
            if let Some(st) = start.take() {
                out.push((st + 1, &s[st..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(st) = start {
        out.push((st + 1, &s[st..]));
    }
    out
}

fn parse_index(line: usize, (column, tok): (usize, &str)) -> Result<usize, MeshError> {
    tok.parse::<usize>()
        .map_err(|_| syntax(line, column, &format!("expected a nonnegative integer, found {tok:?}")))
}

fn syntax(line: usize, column: usize, message: &str) -> MeshError {
    MeshError::Syntax {
        line,
        column,
        message: message.to_string(),
    }
}

/// Writes a triangulation in the mesh file format.
pub fn write_mesh(tri: &Triangulation) -> String {
    let mut s = format!("{} {}\n", tri.vertex_count(), tri.face_count());
    for f in tri.faces() {
        s.push_str(&format!("{} {} {}\n", f[0], f[1], f[2]));
    }
    s
}

/// Standard closed triangulations used in tests, examples and the CLI.
pub mod samples {
    use super::Triangulation;

    /// Boundary of the 3-simplex.
    pub fn tetrahedron() -> Triangulation {
        Triangulation::new(4, vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]).expect("valid")
    }

    pub fn octahedron() -> Triangulation {
        // poles 0 and 5, equator 1..=4
        let mut faces = Vec::new();
        for i in 0..4 {
            let a = 1 + i;
            let b = 1 + (i + 1) % 4;
            faces.push([0, a, b]);
            faces.push([5, b, a]);
        }
        Triangulation::new(6, faces).expect("valid")
    }

    pub fn icosahedron() -> Triangulation {
        // 0 top, 1..=5 upper ring, 6..=10 lower ring, 11 bottom
        let mut faces = Vec::new();
        for i in 0..5 {
            let u0 = 1 + i;
            let u1 = 1 + (i + 1) % 5;
            let l0 = 6 + i;
            let l1 = 6 + (i + 1) % 5;
            faces.push([0, u0, u1]);
            faces.push([u0, l0, u1]);
            faces.push([u1, l0, l1]);
            faces.push([11, l1, l0]);
        }
        Triangulation::new(12, faces).expect("valid")
    }

    /// The 7-vertex torus: faces `{i, i+1, i+3}` and `{i, i+2, i+3}` mod 7.
    pub fn torus7() -> Triangulation {
        let mut faces = Vec::new();
        for i in 0..7 {
            faces.push([i, (i + 1) % 7, (i + 3) % 7]);
            faces.push([i, (i + 2) % 7, (i + 3) % 7]);
        }
        Triangulation::new(7, faces).expect("valid")
    }

    /// Torus from an `m x n` periodic grid, each square split along a diagonal.
    /// Requires `m, n >= 3`.
    pub fn torus_grid(m: usize, n: usize) -> Triangulation {
        assert!(m >= 3 && n >= 3, "torus grid needs m, n >= 3");
        let id = |a: usize, b: usize| (a % m) * n + (b % n);
        let mut faces = Vec::with_capacity(2 * m * n);
        for a in 0..m {
            for b in 0..n {
                faces.push([id(a, b), id(a + 1, b), id(a + 1, b + 1)]);
                faces.push([id(a, b), id(a + 1, b + 1), id(a, b + 1)]);
            }
        }
        Triangulation::new(m * n, faces).expect("valid")
    }
}

#[cfg(test)]
mod tests {
    use super::samples::*;
    use super::*;

    #[test]
    fn tetrahedron_file() {
        let tri = parse_mesh("4 4\n0 1 2\n0 1 3\n0 2 3\n1 2 3\n").unwrap();
        assert_eq!(tri.vertex_count(), 4);
        assert_eq!(tri.edge_count(), 6);
        assert_eq!(tri.face_count(), 4);
        assert_eq!(tri.euler_characteristic(), 2);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# tetrahedron\n\n4 4 # header\n0 1 2\n# skip\n0 1 3\n0 2 3\n1 2 3\n";
        assert_eq!(parse_mesh(text).unwrap().face_count(), 4);
    }

    #[test]
    fn sample_euler_characteristics() {
        assert_eq!(octahedron().euler_characteristic(), 2);
        assert_eq!(octahedron().edge_count(), 12);
        assert_eq!(icosahedron().euler_characteristic(), 2);
        assert_eq!(torus7().euler_characteristic(), 0);
        assert_eq!(torus_grid(4, 5).euler_characteristic(), 0);
        assert!(torus7().degrees().iter().all(|&d| d == 6));
    }

    #[test]
    fn rejects_edge_in_three_faces() {
        let err = Triangulation::new(5, vec![[0, 1, 2], [0, 1, 3], [0, 1, 4], [1, 2, 3]]).unwrap_err();
        assert_eq!(
            err,
            MeshError::EdgeValence {
                edge: Edge::new(0, 1),
                count: 3
            }
        );
        assert!(err.to_string().contains("edge {0,1} in 3 faces"));
    }

    #[test]
    fn rejects_open_surface() {
        let err = Triangulation::new(4, vec![[0, 1, 2], [0, 1, 3], [0, 2, 3]]).unwrap_err();
        assert!(matches!(err, MeshError::EdgeValence { count: 1, .. }));
    }

    #[test]
    fn rejects_duplicate_and_degenerate_faces() {
        let err = Triangulation::new(3, vec![[0, 1, 2], [2, 1, 0]]).unwrap_err();
        assert!(matches!(err, MeshError::DuplicateFace { face: 1, first: 0, .. }));
        let err = Triangulation::new(3, vec![[0, 1, 1]]).unwrap_err();
        assert!(matches!(err, MeshError::DegenerateFace { face: 0, .. }));
        let err = Triangulation::new(3, vec![[0, 1, 3]]).unwrap_err();
        assert!(matches!(err, MeshError::VertexOutOfRange { vertex: 3, .. }));
    }

    #[test]
    fn rejects_isolated_vertex() {
        let err = Triangulation::new(5, vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]).unwrap_err();
        assert_eq!(err, MeshError::IsolatedVertex { vertex: 4 });
    }

    #[test]
    fn rejects_pinched_vertex() {
        // two tetrahedra sharing vertex 0: edge-manifold but the link of 0 is two circles
        let faces = vec![
            [0, 1, 2],
            [0, 1, 3],
            [0, 2, 3],
            [1, 2, 3],
            [0, 4, 5],
            [0, 4, 6],
            [0, 5, 6],
            [4, 5, 6],
        ];
        let err = Triangulation::new(7, faces).unwrap_err();
        assert_eq!(err, MeshError::VertexLink { vertex: 0 });
    }

    #[test]
    fn syntax_errors_report_position() {
        match parse_mesh("4 4\n0 1 x\n").unwrap_err() {
            MeshError::Syntax { line, column, .. } => assert_eq!((line, column), (2, 5)),
            other => panic!("unexpected {other:?}"),
        }
        match parse_mesh("4\n").unwrap_err() {
            MeshError::Syntax { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse_mesh("4 4\n0 1 2 3\n").unwrap_err() {
            MeshError::Syntax { line, column, .. } => assert_eq!((line, column), (2, 7)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_mesh("4 4\n0 1 2\n").unwrap_err(),
            MeshError::FaceCount { expected: 4, found: 1 }
        ));
    }

    #[test]
    fn subcomplex_euler_on_tetrahedron() {
        let tri = tetrahedron();
        let s = |m: &[usize]| VertexSubset::new(m.iter().copied(), 4).unwrap();
        assert_eq!(tri.subcomplex_euler(&s(&[0])), 1);
        assert_eq!(tri.subcomplex_euler(&s(&[0, 1])), 1);
        assert_eq!(tri.subcomplex_euler(&s(&[0, 1, 2])), 1);
        assert_eq!(tri.subcomplex_euler_unchecked(&[0, 1, 2, 3]), 2);
    }

    #[test]
    fn link_pairs_on_tetrahedron() {
        let tri = tetrahedron();
        let one = tri.link_pairs(&VertexSubset::new([0], 4).unwrap());
        assert_eq!(
            one,
            vec![(Edge::new(1, 2), 0), (Edge::new(1, 3), 0), (Edge::new(2, 3), 0)]
        );
        let two = tri.link_pairs(&VertexSubset::new([1, 0], 4).unwrap());
        assert_eq!(two, vec![(Edge::new(2, 3), 0), (Edge::new(2, 3), 1)]);
        let three = tri.link_pairs(&VertexSubset::new([0, 1, 2], 4).unwrap());
        assert!(three.is_empty());
    }

    #[test]
    fn subset_validation() {
        assert!(VertexSubset::new([], 4).is_err());
        assert!(VertexSubset::new([0, 1, 2, 3], 4).is_err());
        assert!(VertexSubset::new([4], 4).is_err());
        let s = VertexSubset::new([2, 0, 2], 4).unwrap();
        assert_eq!(s.members(), &[0, 2]);
        assert_eq!(VertexSubset::from_mask(0b1010, 4).unwrap().members(), &[1, 3]);
    }

    #[test]
    fn round_trip_through_text() {
        let tri = icosahedron();
        let back = parse_mesh(&write_mesh(&tri)).unwrap();
        assert_eq!(back.faces(), tri.faces());
    }

    #[test]
    fn counting_identities() {
        for tri in [tetrahedron(), octahedron(), icosahedron(), torus7(), torus_grid(3, 4)] {
            let deg_sum: usize = tri.degrees().iter().sum();
            assert_eq!(deg_sum, 2 * tri.edge_count());
            assert_eq!(3 * tri.face_count(), 2 * tri.edge_count());
            let all: Vec<usize> = (0..tri.vertex_count()).collect();
            assert_eq!(tri.subcomplex_euler_unchecked(&all), tri.euler_characteristic());
        }
    }
}
