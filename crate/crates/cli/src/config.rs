//! Run configuration: command-line flags over an optional `key = value` file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use crate::error::CliError;

/// Flags shared by every command. Unset flags fall back to `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Mesh file ("N F" header, then F lines "a b c").
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Edge weight: a scalar in [0, pi/2] or a weight file.
    #[arg(long)]
    pub phi: Option<String>,
    /// Initial radii: a scalar, a radii file, or "random" (seeded, in [0.5, 2]).
    #[arg(long)]
    pub radii: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Curvature tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// calabi, ricci_normalized, calabi_prescribed or ricci_prescribed.
    #[arg(long)]
    pub kind: Option<String>,
    /// Target curvature: "kav", a comma-separated list, or a file.
    #[arg(long)]
    pub target: Option<String>,
    /// Divergence guard on max |u_i - u_i(0)|.
    #[arg(long)]
    pub u_max: Option<f64>,
    #[arg(long)]
    pub initial_step: Option<f64>,
    #[arg(long)]
    pub max_step: Option<f64>,
    /// Write the dual-Laplacian in coordinate format.
    #[arg(long)]
    pub dump_laplacian: bool,
    /// Assemble the dumped Laplacian from dual lengths.
    #[arg(long)]
    pub dual_route: bool,
    /// Also run the normalized Ricci flow from the same start.
    #[arg(long)]
    pub compare_ricci: bool,
    /// Number of independent random starts.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Write every subset inequality to subsets.csv.
    #[arg(long)]
    pub dump_subsets: bool,
    /// Enumerate subsets above the size guard.
    #[arg(long)]
    pub allow_large: bool,
    /// Number of random probe directions.
    #[arg(long)]
    pub directions: Option<usize>,
    /// Comma-separated probe distances.
    #[arg(long)]
    pub probe_radii: Option<String>,
    /// File of `key = value` lines; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Flags after merging with the config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mesh: PathBuf,
    pub phi: String,
    pub radii: String,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub max_steps: Option<usize>,
    pub kind: String,
    pub target: Option<String>,
    pub u_max: Option<f64>,
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
    pub dump_laplacian: bool,
    pub dual_route: bool,
    pub compare_ricci: bool,
    pub starts: usize,
    pub dump_subsets: bool,
    pub allow_large: bool,
    pub directions: usize,
    pub probe_radii: Vec<f64>,
}

const KEYS: &[&str] = &[
    "mesh",
    "phi",
    "radii",
    "seed",
    "out",
    "tol",
    "max_steps",
    "kind",
    "target",
    "u_max",
    "initial_step",
    "max_step",
    "dump_laplacian",
    "dual_route",
    "compare_ricci",
    "starts",
    "dump_subsets",
    "allow_large",
    "directions",
    "probe_radii",
];

/// Parses `key = value` lines; `#` starts a comment, values may be quoted
/// and keys may use dashes or underscores.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("config line {}: expected key = value", i + 1)))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Input(format!("config line {}: unknown key {key:?}", i + 1)));
        }
        let value = value.trim().trim_matches('"').to_string();
        map.insert(key, value);
    }
    Ok(map)
}

fn value<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError> {
    map.get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| CliError::Input(format!("config: invalid value {v:?} for {key}")))
        })
        .transpose()
}

fn switch(flag: bool, map: &BTreeMap<String, String>, key: &str) -> Result<bool, CliError> {
    Ok(flag || value::<bool>(map, key)?.unwrap_or(false))
}

impl Flags {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let map = match &self.config {
            Some(path) => parse_config(&read(path)?)?,
            None => BTreeMap::new(),
        };
        let mesh = self
            .mesh
            .clone()
            .or(value::<PathBuf>(&map, "mesh")?)
            .ok_or_else(|| CliError::Input("no mesh given (--mesh)".into()))?;
        let probe_radii = self
            .probe_radii
            .clone()
            .or(value(&map, "probe_radii")?)
            .unwrap_or_else(|| "0.5,1,2,4,8".into());
        Ok(RunConfig {
            mesh,
            phi: self.phi.clone().or(value(&map, "phi")?).unwrap_or_else(|| "0".into()),
            radii: self
                .radii
                .clone()
                .or(value(&map, "radii")?)
                .unwrap_or_else(|| "1".into()),
            seed: self.seed.or(value(&map, "seed")?).unwrap_or(0),
            out: self.out.clone().or(value(&map, "out")?),
            tol: self.tol.or(value(&map, "tol")?),
            max_steps: self.max_steps.or(value(&map, "max_steps")?),
            kind: self
                .kind
                .clone()
                .or(value(&map, "kind")?)
                .unwrap_or_else(|| "calabi".into()),
            target: self.target.clone().or(value(&map, "target")?),
            u_max: self.u_max.or(value(&map, "u_max")?),
            initial_step: self.initial_step.or(value(&map, "initial_step")?),
            max_step: self.max_step.or(value(&map, "max_step")?),
            dump_laplacian: switch(self.dump_laplacian, &map, "dump_laplacian")?,
            dual_route: switch(self.dual_route, &map, "dual_route")?,
            compare_ricci: switch(self.compare_ricci, &map, "compare_ricci")?,
            starts: self.starts.or(value(&map, "starts")?).unwrap_or(1),
            dump_subsets: switch(self.dump_subsets, &map, "dump_subsets")?,
            allow_large: switch(self.allow_large, &map, "allow_large")?,
            directions: self.directions.or(value(&map, "directions")?).unwrap_or(8),
            probe_radii: parse_list(&probe_radii)?,
        })
    }
}

/// Comma- or whitespace-separated reals.
pub fn parse_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Input(format!("expected a real number, found {s:?}")))
        })
        .collect()
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_forms() {
        let map = parse_config("# run\nmesh = \"a.mesh\"\nmax-steps=10\n\nseed = 7 # comment\n").unwrap();
        assert_eq!(map["mesh"], "a.mesh");
        assert_eq!(map["max_steps"], "10");
        assert_eq!(map["seed"], "7");
        assert!(parse_config("bogus = 1").is_err());
        assert!(parse_config("mesh").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list("1, 2 4,8").unwrap(), vec![1.0, 2.0, 4.0, 8.0]);
        assert!(parse_list("1,x").is_err());
    }
}
