use std::f64::consts::{FRAC_PI_2, PI};

use circlepack::flows::{integrate, FlowStatus};
use circlepack::geometry::compute_geometry;
use circlepack::laplacian::assemble;
use circlepack::mesh::samples::{icosahedron, octahedron, tetrahedron, torus7, torus_grid};
use circlepack::potential::{calabi_energy, constant_curvature_metric, energy_gradient, ricci_potential};
use circlepack::{FlowKind, IntegratorOptions, PackingMetric, Surface, Triangulation, VertexSubset, Weight};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn meshes() -> Vec<Triangulation> {
    vec![
        tetrahedron(),
        octahedron(),
        icosahedron(),
        torus7(),
        torus_grid(3, 4),
        torus_grid(5, 10),
    ]
}

fn random_state(tri: &Triangulation, seed: u64) -> (Weight, PackingMetric) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Weight::from_vec(
        tri,
        (0..tri.edge_count()).map(|_| rng.gen_range(0.0..=FRAC_PI_2)).collect(),
    )
    .unwrap();
    let m = PackingMetric::from_log_radii((0..tri.vertex_count()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    (w, m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mesh_counts(idx in 0usize..6) {
        let tri = &meshes()[idx];
        let degrees: usize = tri.degrees().iter().sum();
        prop_assert_eq!(degrees, 2 * tri.edge_count());
        prop_assert_eq!(3 * tri.face_count(), 2 * tri.edge_count());
        let all: Vec<usize> = (0..tri.vertex_count()).collect();
        prop_assert_eq!(tri.subcomplex_euler_unchecked(&all), tri.euler_characteristic());
    }

    #[test]
    fn link_pairs_stay_outside(idx in 0usize..4, mask in 1u64..(1 << 12)) {
        let tri = &meshes()[idx];
        let n = tri.vertex_count();
        let mask = mask & ((1 << n) - 1);
        prop_assume!(mask != 0 && mask != (1 << n) - 1);
        let subset = VertexSubset::from_mask(mask, n).unwrap();
        for (e, v) in tri.link_pairs(&subset) {
            prop_assert!(!subset.contains(e.lo()) && !subset.contains(e.hi()));
            prop_assert!(subset.contains(v));
        }
    }

    #[test]
    fn gauss_bonnet(idx in 0usize..6, seed in any::<u64>()) {
        let tri = &meshes()[idx];
        let (w, m) = random_state(tri, seed);
        let g = compute_geometry(tri, &w, &m).unwrap();
        let total: f64 = g.curvatures.iter().sum();
        prop_assert!((total - 2.0 * PI * tri.euler_characteristic() as f64).abs() < 1e-9);
    }

    #[test]
    fn curvature_is_scale_invariant(idx in 0usize..6, seed in any::<u64>(), shift in -3.0f64..3.0) {
        let tri = &meshes()[idx];
        let (w, m) = random_state(tri, seed);
        let s = Surface::new(tri, &w);
        let k0 = s.curvature_at(m.log_radii()).unwrap();
        let moved: Vec<f64> = m.log_radii().iter().map(|u| u + shift).collect();
        let k1 = s.curvature_at(&moved).unwrap();
        for (a, b) in k0.iter().zip(&k1) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_gradient_matches_finite_differences(idx in 0usize..6, seed in any::<u64>()) {
        let tri = &meshes()[idx];
        let (w, m) = random_state(tri, seed);
        let s = Surface::new(tri, &w);
        let target = vec![s.avg_curvature(); tri.vertex_count()];
        let g = energy_gradient(&s, &m).unwrap();
        let h = 1e-6;
        for i in 0..tri.vertex_count() {
            let mut up = m.log_radii().to_vec();
            let mut dn = up.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (calabi_energy(&s.curvature_at(&up).unwrap(), &target).unwrap()
                - calabi_energy(&s.curvature_at(&dn).unwrap(), &target).unwrap())
                / (2.0 * h);
            prop_assert!((fd - g[i]).abs() < 1e-5, "vertex {}: {} vs {}", i, fd, g[i]);
        }
    }

    #[test]
    fn lambda1_bounds_the_quadratic_form(idx in 0usize..6, seed in any::<u64>()) {
        let tri = &meshes()[idx];
        let (w, m) = random_state(tri, seed);
        let lap = assemble(tri, &w, &m).unwrap();
        let lambda1 = lap.lambda1().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut f: Vec<f64> = (0..tri.vertex_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        f.iter_mut().for_each(|x| *x -= mean);
        let norm2: f64 = f.iter().map(|x| x * x).sum();
        prop_assert!(lap.quadratic_form(&f).unwrap() >= lambda1 * norm2 * (1.0 - 1e-10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn potential_is_nonnegative_around_the_minimum(seed in any::<u64>(), t in 0.0f64..6.0) {
        let tri = octahedron();
        let (w, m) = random_state(&tri, seed);
        let s = Surface::new(&tri, &w);
        let u_av = constant_curvature_metric(&s, &m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut dir: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = dir.iter().sum::<f64>() / 6.0;
        dir.iter_mut().for_each(|x| *x -= mean);
        let u: Vec<f64> = u_av.log_radii().iter().zip(&dir).map(|(a, d)| a + t * d).collect();
        let f = ricci_potential(&s, u_av.log_radii(), &u, &[s.avg_curvature(); 6]).unwrap();
        prop_assert!(f.value >= -1e-9);
    }

    #[test]
    fn calabi_and_ricci_share_the_limit(seed in any::<u64>()) {
        let tri = icosahedron();
        let (w, m) = random_state(&tri, seed);
        let s = Surface::new(&tri, &w);
        let opts = IntegratorOptions { record_lambda1: false, ..Default::default() };
        let a = integrate(&FlowKind::Calabi, &s, &m, &opts).unwrap();
        let b = integrate(&FlowKind::RicciNormalized, &s, &m, &opts).unwrap();
        prop_assert_eq!(a.status, FlowStatus::Converged);
        prop_assert_eq!(b.status, FlowStatus::Converged);
        // both preserve sum u, so rigidity pins down a single limit
        for (x, y) in a.final_metric.log_radii().iter().zip(b.final_metric.log_radii()) {
            prop_assert!((x - y).abs() < 1e-8);
        }
    }
}

#[test]
fn single_and_double_precision_agree() {
    let tri = octahedron();
    let w64 = Weight::uniform(&tri, 0.3).unwrap();
    let w32 = circlepack::geometry::Weight::<f32>::uniform(&tri, 0.3).unwrap();
    let r = [1.5, 0.7, 1.0, 1.2, 0.9, 1.1];
    let m64 = PackingMetric::from_radii(r.to_vec()).unwrap();
    let m32 = circlepack::geometry::PackingMetric::<f32>::from_radii(r.iter().map(|&x| x as f32).collect()).unwrap();
    let k64 = compute_geometry(&tri, &w64, &m64).unwrap().curvatures;
    let k32 = compute_geometry(&tri, &w32, &m32).unwrap().curvatures;
    for (a, b) in k64.iter().zip(&k32) {
        assert!((a - *b as f64).abs() < 1e-5);
    }
}
