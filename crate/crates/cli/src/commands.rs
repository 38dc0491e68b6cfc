use std::path::Path;
use std::time::Instant;

use circlepack::flows::{fmt_real, integrate, FlowStatus};
use circlepack::geometry::{compute_geometry, input};
use circlepack::laplacian::{assemble_with, write_coordinate, Route};
use circlepack::potential::{calabi_energy, constant_curvature_metric, properness_probe, zero_sum_unit};
use circlepack::thurston::{check_admissible, subset_rows, subset_rows_csv, CheckOptions};
use circlepack::{
    parse_mesh, Error, FlowKind, FlowTrace, IntegratorOptions, PackingMetric, Surface, Triangulation, Weight,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::value::RawValue;

use crate::config::{parse_list, read, RunConfig};
use crate::error::CliError;
use crate::report::{num, nums, to_json, write};

pub const EXIT_OK: i32 = 0;
/// Diverged, step limit, inadmissible target, failed probe.
pub const EXIT_NEGATIVE: i32 = 2;

struct Problem {
    tri: Triangulation,
    weight: Weight,
}

impl Problem {
    fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        let tri = load_mesh(&cfg.mesh)?;
        let weight = match cfg.phi.trim().parse::<f64>() {
            Ok(phi) => Weight::uniform(&tri, phi)?,
            Err(_) => input::parse_weight(&read(Path::new(&cfg.phi))?, &tri)?,
        };
        Ok(Problem { tri, weight })
    }

    fn surface(&self) -> Surface<'_, f64> {
        Surface::new(&self.tri, &self.weight)
    }

    fn n(&self) -> usize {
        self.tri.vertex_count()
    }
}

fn load_mesh(path: &Path) -> Result<Triangulation, CliError> {
    let text = read(path)?;
    parse_mesh(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Radii uniform in `[0.5, 2]` from `seed`.
pub fn random_metric(n: usize, seed: u64) -> PackingMetric {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PackingMetric::from_radii((0..n).map(|_| rng.gen_range(0.5..=2.0)).collect()).expect("positive radii")
}

fn initial_metric(spec: &str, n: usize, seed: u64) -> Result<PackingMetric, CliError> {
    let spec = spec.trim();
    if spec == "random" {
        return Ok(random_metric(n, seed));
    }
    if let Ok(r) = spec.parse::<f64>() {
        return Ok(PackingMetric::uniform(n, r)?);
    }
    Ok(input::parse_radii(&read(Path::new(spec))?, n)?)
}

/// `None` for the constant target `K_av`.
fn target(cfg: &RunConfig, n: usize) -> Result<Option<Vec<f64>>, CliError> {
    let Some(spec) = cfg.target.as_deref().map(str::trim) else {
        return Ok(None);
    };
    if spec == "kav" {
        return Ok(None);
    }
    let values = match parse_list(spec) {
        Ok(v) => v,
        Err(_) => input::parse_vector(&read(Path::new(spec))?, n)?,
    };
    if values.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: values.len(),
        }
        .into());
    }
    Ok(Some(values))
}

fn options(cfg: &RunConfig) -> Result<IntegratorOptions, CliError> {
    let mut opts = IntegratorOptions::default();
    if let Some(x) = cfg.tol {
        opts.curvature_tol = x;
    }
    if let Some(x) = cfg.max_steps {
        opts.max_steps = x;
    }
    if let Some(x) = cfg.u_max {
        opts.u_max = x;
    }
    if let Some(x) = cfg.initial_step {
        opts.initial_step = x;
    }
    if let Some(x) = cfg.max_step {
        opts.max_step = x;
    }
    opts.validate()?;
    Ok(opts)
}

pub fn validate(cfg: &RunConfig) -> Result<i32, CliError> {
    let tri = load_mesh(&cfg.mesh)?;
    println!(
        "N={} E={} F={} chi={}",
        tri.vertex_count(),
        tri.edge_count(),
        tri.face_count(),
        tri.euler_characteristic()
    );
    let hist: Vec<String> = tri.degree_histogram().iter().map(|(d, c)| format!("{d}:{c}")).collect();
    println!("degrees {}", hist.join(" "));
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct CurvatureReport {
    seed: u64,
    vertex_count: usize,
    euler_characteristic: i64,
    r: Box<RawValue>,
    u: Box<RawValue>,
    #[serde(rename = "K")]
    k: Box<RawValue>,
    avg_curvature: Box<RawValue>,
    energy: Box<RawValue>,
    gauss_bonnet_residual: Box<RawValue>,
}

pub fn curvature(cfg: &RunConfig) -> Result<i32, CliError> {
    let p = Problem::load(cfg)?;
    let m = initial_metric(&cfg.radii, p.n(), cfg.seed)?;
    let g = compute_geometry(&p.tri, &p.weight, &m)?;
    let target = target(cfg, p.n())?.unwrap_or_else(|| g.avg_vector());
    let energy = calabi_energy(&g.curvatures, &target)?;
    let residual = g.gauss_bonnet_residual(p.tri.euler_characteristic());
    for (i, k) in g.curvatures.iter().enumerate() {
        println!("K[{i}] = {}", fmt_real(*k));
    }
    println!("energy = {}", fmt_real(energy));
    println!("gauss_bonnet_residual = {}", fmt_real(residual));
    let report = CurvatureReport {
        seed: cfg.seed,
        vertex_count: p.n(),
        euler_characteristic: p.tri.euler_characteristic(),
        r: nums(m.radii()),
        u: nums(m.log_radii()),
        k: nums(&g.curvatures),
        avg_curvature: num(g.avg_curvature),
        energy: num(energy),
        gauss_bonnet_residual: num(residual),
    };
    if let Some(out) = &cfg.out {
        write(out, "curvature.json", &to_json(&report)?)?;
    }
    if cfg.dump_laplacian {
        let route = if cfg.dual_route {
            Route::DualLength
        } else {
            Route::Analytic
        };
        let lap = assemble_with(&p.tri, &p.weight, &m, route)?;
        dump(cfg, "laplacian.txt", &write_coordinate(&lap))?;
    }
    Ok(EXIT_OK)
}

/// Writes to the output directory, or to stdout without one.
fn dump(cfg: &RunConfig, name: &str, contents: &str) -> Result<(), CliError> {
    match &cfg.out {
        Some(out) => write(out, name, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct FinalState<'a> {
    kind: &'a str,
    status: &'a str,
    seed: u64,
    start: usize,
    t_final: Box<RawValue>,
    accepted_steps: usize,
    rejected_steps: usize,
    energy: Box<RawValue>,
    max_curvature_deviation: Box<RawValue>,
    u: Box<RawValue>,
    r: Box<RawValue>,
    #[serde(rename = "K")]
    k: Box<RawValue>,
}

fn final_state<'a>(trace: &'a FlowTrace, target: &[f64], seed: u64, start: usize) -> FinalState<'a> {
    let dev = trace
        .final_curvature
        .iter()
        .zip(target)
        .fold(0.0f64, |m, (k, t)| m.max((k - t).abs()));
    FinalState {
        kind: trace.kind,
        status: trace.status.as_str(),
        seed,
        start,
        t_final: num(trace.t_final),
        accepted_steps: trace.accepted_steps,
        rejected_steps: trace.rejected_steps,
        energy: num(trace.final_energy),
        max_curvature_deviation: num(dev),
        u: nums(trace.final_metric.log_radii()),
        r: nums(trace.final_metric.radii()),
        k: nums(&trace.final_curvature),
    }
}

pub fn flow(cfg: &RunConfig) -> Result<i32, CliError> {
    let p = Problem::load(cfg)?;
    let surface = p.surface();
    let kind = FlowKind::from_name(&cfg.kind, target(cfg, p.n())?)?;
    let opts = options(cfg)?;
    if cfg.starts == 0 {
        return Err(CliError::Input("--starts must be positive".into()));
    }
    // start i of a multi-start run draws its radii from seed + i
    let starts: Vec<PackingMetric> = if cfg.starts == 1 {
        vec![initial_metric(&cfg.radii, p.n(), cfg.seed)?]
    } else {
        (0..cfg.starts)
            .map(|i| random_metric(p.n(), cfg.seed.wrapping_add(i as u64)))
            .collect()
    };
    let mut kinds = vec![kind];
    if cfg.compare_ricci {
        kinds.push(FlowKind::RicciNormalized);
    }
    let jobs: Vec<(usize, usize)> = (0..starts.len())
        .flat_map(|s| (0..kinds.len()).map(move |k| (s, k)))
        .collect();
    let traces: Vec<FlowTrace> = jobs
        .par_iter()
        .map(|&(s, k)| integrate(&kinds[k], &surface, &starts[s], &opts))
        .collect::<Result<_, _>>()?;

    let mut code = EXIT_OK;
    for (&(s, k), trace) in jobs.iter().zip(&traces) {
        let target = kinds[k].target(&surface)?;
        let seed = if cfg.starts == 1 {
            cfg.seed
        } else {
            cfg.seed.wrapping_add(s as u64)
        };
        let state = final_state(trace, &target, seed, s);
        println!(
            "start {s} {}: {} t_final={} steps={} energy={}",
            trace.kind,
            trace.status,
            fmt_real(trace.t_final),
            trace.accepted_steps,
            fmt_real(trace.final_energy)
        );
        if trace.status != FlowStatus::Converged {
            code = EXIT_NEGATIVE;
        }
        if let Some(out) = &cfg.out {
            let mut stem = String::new();
            if k > 0 {
                stem.push_str("_ricci");
            }
            if cfg.starts > 1 {
                stem.push_str(&format!("_{s}"));
            }
            write(out, &format!("trace{stem}.csv"), &trace.to_csv())?;
            write(out, &format!("final{stem}.json"), &to_json(&state)?)?;
        }
    }
    if cfg.dump_laplacian {
        let route = if cfg.dual_route {
            Route::DualLength
        } else {
            Route::Analytic
        };
        let lap = assemble_with(&p.tri, &p.weight, &traces[0].final_metric, route)?;
        dump(cfg, "laplacian.txt", &write_coordinate(&lap))?;
    }
    Ok(code)
}

#[derive(Serialize)]
struct Violation {
    subset: Vec<usize>,
    lhs: Box<RawValue>,
    rhs: Box<RawValue>,
}

#[derive(Serialize)]
struct CheckReport {
    verdict: &'static str,
    violation: Option<Violation>,
    borderline: bool,
    subsets_checked: u64,
    vertex_count: usize,
    euler_characteristic: i64,
    gauss_bonnet_residual: Box<RawValue>,
    target: Box<RawValue>,
    seed: u64,
}

pub fn check(cfg: &RunConfig) -> Result<i32, CliError> {
    let p = Problem::load(cfg)?;
    let target = target(cfg, p.n())?.unwrap_or_else(|| vec![p.surface().avg_curvature(); p.n()]);
    let opts = CheckOptions {
        allow_large: cfg.allow_large,
    };
    let started = Instant::now();
    let report = check_admissible(&p.tri, &p.weight, &target, opts)?;
    let json = CheckReport {
        verdict: report.verdict.as_str(),
        violation: report.violation.as_ref().map(|v| Violation {
            subset: v.members.clone(),
            lhs: num(v.lhs),
            rhs: num(v.rhs),
        }),
        borderline: report.borderline,
        subsets_checked: report.subsets_checked,
        vertex_count: report.vertex_count,
        euler_characteristic: report.euler_characteristic,
        gauss_bonnet_residual: num(report.gauss_bonnet_residual),
        target: nums(&target),
        seed: cfg.seed,
    };
    let text = to_json(&json)?;
    print!("{text}");
    eprintln!(
        "checked {} subsets in {:.3?}",
        report.subsets_checked,
        started.elapsed()
    );
    if let Some(out) = &cfg.out {
        write(out, "check.json", &text)?;
    }
    if cfg.dump_subsets {
        let out = cfg
            .out
            .as_ref()
            .ok_or_else(|| CliError::Input("--dump-subsets needs --out".into()))?;
        let rows = subset_rows(&p.tri, &p.weight, &target, opts)?;
        write(out, "subsets.csv", &subset_rows_csv(&rows))?;
    }
    Ok(if report.is_admissible() { EXIT_OK } else { EXIT_NEGATIVE })
}

#[derive(Serialize)]
struct ProbeReport {
    seed: u64,
    monotone: bool,
    min_f: Box<RawValue>,
    basepoint_u: Box<RawValue>,
    directions: Vec<Box<RawValue>>,
    radii: Box<RawValue>,
}

/// Random zero-sum unit vectors from `seed`.
pub fn probe_directions(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Some(d) = zero_sum_unit(&v) {
            out.push(d);
        }
    }
    out
}

pub fn potential_probe(cfg: &RunConfig) -> Result<i32, CliError> {
    let p = Problem::load(cfg)?;
    let surface = p.surface();
    let start = initial_metric(&cfg.radii, p.n(), cfg.seed)?;
    let basepoint = match constant_curvature_metric(&surface, &start) {
        Ok(m) => m,
        Err(e @ Error::NoConstantCurvature { .. }) => {
            eprintln!("{e}");
            return Ok(EXIT_NEGATIVE);
        }
        Err(e) => return Err(e.into()),
    };
    if cfg.probe_radii.iter().any(|&t| t.is_nan() || t <= 0.0) {
        return Err(CliError::Input("probe radii must be positive".into()));
    }
    let dirs = probe_directions(p.n(), cfg.directions, cfg.seed);
    let table = properness_probe(&surface, basepoint.log_radii(), &dirs, &cfg.probe_radii)?;
    let monotone = table.is_monotone();
    let min_f = table.min_value();
    println!("monotone={monotone} min_f={}", fmt_real(min_f));
    dump(cfg, "probe.csv", &table.to_csv())?;
    if let Some(out) = &cfg.out {
        let report = ProbeReport {
            seed: cfg.seed,
            monotone,
            min_f: num(min_f),
            basepoint_u: nums(basepoint.log_radii()),
            directions: dirs.iter().map(|d| nums(d)).collect(),
            radii: nums(&cfg.probe_radii),
        };
        write(out, "probe.json", &to_json(&report)?)?;
    }
    Ok(if monotone && min_f >= -1e-9 {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_metric_is_seeded_and_in_range() {
        let a = random_metric(10, 42);
        assert_eq!(a, random_metric(10, 42));
        assert_ne!(a, random_metric(10, 43));
        assert!(a.radii().iter().all(|&r| (0.5..=2.0).contains(&r)));
    }

    #[test]
    fn directions_are_zero_sum_units() {
        for d in probe_directions(5, 4, 1) {
            assert!(d.iter().sum::<f64>().abs() < 1e-12);
            assert!((d.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
