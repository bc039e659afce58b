//! Run configuration of the benchmark binary: one JSON file per run.
//! Parsing is strict (unknown keys rejected, defaults filled per section)
//! and validation reports every violation at once.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{Material, StructuredMesh};
use crate::problem::FetiProblem;
use crate::sqp::SqpConfig;

/// Beam geometry and discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub order: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { lx: 8.0, ly: 1.0, nx: 80, ny: 40, order: 2 }
    }
}

/// Regular subdomain grid; `n1 x n2` tiles of equal element counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubdomainGrid {
    pub n1: usize,
    pub n2: usize,
}

impl Default for SubdomainGrid {
    fn default() -> Self {
        Self { n1: 4, n2: 2 }
    }
}

/// Engineering constants; converted to Lame parameters at build time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    pub e: f64,
    pub nu: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self { e: 210.0, nu: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    SqpQn,
    NewtonP,
    Both,
    Oracle,
}

impl SolverChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverChoice::SqpQn => "sqp-qn",
            SolverChoice::NewtonP => "newton-p",
            SolverChoice::Both => "both",
            SolverChoice::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for SolverChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sqp-qn" => Ok(SolverChoice::SqpQn),
            "newton-p" => Ok(SolverChoice::NewtonP),
            "both" => Ok(SolverChoice::Both),
            "oracle" => Ok(SolverChoice::Oracle),
            other => Err(format!(
                "unknown solver {other:?}; expected sqp-qn, newton-p, both or oracle"
            )),
        }
    }
}

/// One benchmark run. Every section has defaults; the empty object is the
/// desk-scale beam with both solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub subdomains: SubdomainGrid,
    pub material: MaterialParams,
    /// Constant vertical traction on the right edge. The default bends the
    /// desk beam far enough into the nonlinear regime that the exact-Hessian
    /// baseline needs eight Newton iterations.
    pub load: f64,
    pub solver: SolverChoice,
    pub sqp: SqpConfig,
    /// Seed recorded in the outputs; reserved for seeded perturbation runs.
    pub seed: u64,
    /// Worker threads; the CLI flag and env var take precedence.
    pub threads: Option<usize>,
    /// Output directory; the CLI flag takes precedence.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::default(),
            subdomains: SubdomainGrid::default(),
            material: MaterialParams::default(),
            load: 0.04,
            solver: SolverChoice::Both,
            sqp: SqpConfig::default(),
            seed: 0,
            threads: None,
            out_dir: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl RunConfig {
    /// Strict parse plus full validation.
    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_slice(bytes)?;
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json_bytes(&std::fs::read(path)?)
    }

    /// Collects every violation instead of stopping at the first.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut violations = Vec::new();
        let g = &self.geometry;
        if !(g.lx.is_finite() && g.lx > 0.0) || !(g.ly.is_finite() && g.ly > 0.0) {
            violations.push(format!(
                "geometry.lx/geometry.ly must be positive and finite, got {} x {}",
                g.lx, g.ly
            ));
        }
        if g.nx == 0 || g.ny == 0 {
            violations.push(format!(
                "geometry.nx/geometry.ny need at least one element, got {} x {}",
                g.nx, g.ny
            ));
        }
        if !(g.order == 1 || g.order == 2) {
            violations.push(format!("geometry.order must be 1 or 2, got {}", g.order));
        }
        let s = &self.subdomains;
        if s.n1 == 0 || s.n2 == 0 {
            violations.push(format!(
                "subdomains.n1/subdomains.n2 must be at least 1, got {} x {}",
                s.n1, s.n2
            ));
        }
        if s.n1 > 0 && g.nx % s.n1 != 0 {
            violations.push(format!(
                "subdomains.n1 = {} does not divide geometry.nx = {}",
                s.n1, g.nx
            ));
        }
        if s.n2 > 0 && g.ny % s.n2 != 0 {
            violations.push(format!(
                "subdomains.n2 = {} does not divide geometry.ny = {}",
                s.n2, g.ny
            ));
        }
        let m = &self.material;
        if !(m.e.is_finite() && m.e > 0.0) {
            violations.push(format!("material.e must be positive and finite, got {}", m.e));
        }
        if !(m.nu.is_finite() && m.nu > 0.0 && m.nu < 0.5) {
            violations.push(format!("material.nu must lie in (0, 0.5), got {}", m.nu));
        }
        if !self.load.is_finite() {
            violations.push(format!("load must be finite, got {}", self.load));
        }
        if self.threads == Some(0) {
            violations.push("threads must be at least 1 when given".to_string());
        }
        if let Err(sqp) = self.sqp.validate() {
            violations.extend(sqp.into_iter().map(|v| format!("sqp.{v}")));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    pub fn mesh(&self) -> StructuredMesh {
        let g = &self.geometry;
        StructuredMesh::new(g.nx, g.ny, g.lx, g.ly, g.order)
            .expect("geometry was validated")
    }

    pub fn material(&self) -> Material {
        Material::new(self.material.e, self.material.nu).expect("material was validated")
    }

    /// Builds the torn cantilever this run solves.
    pub fn problem(&self) -> FetiProblem {
        FetiProblem::cantilever(
            &self.mesh(),
            self.subdomains.n1,
            self.subdomains.n2,
            self.material(),
            self.load,
        )
        .expect("divisibility was validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_desk_default() {
        let cfg = RunConfig::from_json_bytes(b"{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.geometry.nx, 80);
        assert_eq!(cfg.subdomains.n1, 4);
        assert_eq!(cfg.solver, SolverChoice::Both);
    }

    #[test]
    fn minimal_sections_fill_material_defaults() {
        let cfg = RunConfig::from_json_bytes(
            br#"{"geometry": {"nx": 8, "ny": 4, "lx": 2.0},
                 "subdomains": {"n1": 2, "n2": 1}}"#,
        )
        .unwrap();
        assert_eq!(cfg.material.e, 210.0);
        assert_eq!(cfg.material.nu, 0.3);
        assert_eq!(cfg.geometry.ly, 1.0);
        assert_eq!(cfg.geometry.order, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json_bytes(br#"{"geometry": {"nz": 3}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(err.to_string().contains("nz"));
    }

    #[test]
    fn divisibility_violation_names_the_field() {
        let err = RunConfig::from_json_bytes(
            br#"{"geometry": {"nx": 81}, "subdomains": {"n1": 4}}"#,
        )
        .unwrap_err();
        let ConfigError::Invalid(v) = err else { panic!("expected validation error") };
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("subdomains.n1"));
    }

    #[test]
    fn cubic_elements_are_rejected() {
        let err =
            RunConfig::from_json_bytes(br#"{"geometry": {"order": 3}}"#).unwrap_err();
        let ConfigError::Invalid(v) = err else { panic!("expected validation error") };
        assert!(v[0].contains("order"));
    }

    #[test]
    fn all_violations_are_collected() {
        let err = RunConfig::from_json_bytes(
            br#"{"geometry": {"order": 5, "nx": 7},
                 "subdomains": {"n1": 3},
                 "material": {"nu": 0.7},
                 "sqp": {"beta": 2.0}}"#,
        )
        .unwrap_err();
        let ConfigError::Invalid(v) = err else { panic!("expected validation error") };
        assert!(v.len() >= 4, "expected several violations, got {v:?}");
        assert!(v.iter().any(|m| m.contains("order")));
        assert!(v.iter().any(|m| m.contains("subdomains.n1")));
        assert!(v.iter().any(|m| m.contains("material.nu")));
        assert!(v.iter().any(|m| m.contains("sqp.beta")));
    }

    #[test]
    fn overflowing_float_literals_do_not_slip_through() {
        let err = RunConfig::from_json_bytes(br#"{"load": 1e999}"#).unwrap_err();
        match err {
            ConfigError::Parse(_) => {}
            ConfigError::Invalid(v) => assert!(v.iter().any(|m| m.contains("load"))),
            ConfigError::Io(_) => panic!("unexpected io error"),
        }
    }

    #[test]
    fn sqp_overrides_merge_with_defaults() {
        let cfg =
            RunConfig::from_json_bytes(br#"{"sqp": {"mu0": 5.0, "eta1": 0.0}}"#).unwrap();
        assert_eq!(cfg.sqp.mu0, 5.0);
        assert_eq!(cfg.sqp.eta1, 0.0);
        assert_eq!(cfg.sqp.eps_tol, SqpConfig::default().eps_tol);
        assert_eq!(cfg.sqp.krylov.tol, 1e-10);
    }

    #[test]
    fn solver_names_use_kebab_case() {
        let cfg = RunConfig::from_json_bytes(br#"{"solver": "newton-p"}"#).unwrap();
        assert_eq!(cfg.solver, SolverChoice::NewtonP);
        assert!("sqp-qn".parse::<SolverChoice>().unwrap() == SolverChoice::SqpQn);
        assert!("gauss".parse::<SolverChoice>().is_err());
        let err = RunConfig::from_json_bytes(br#"{"solver": "gauss"}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
    }

    #[test]
    fn serialization_roundtrips() {
        let cfg = RunConfig::from_json_bytes(
            br#"{"geometry": {"nx": 8, "ny": 4}, "subdomains": {"n1": 2},
                 "load": 0.25, "solver": "sqp-qn", "seed": 7}"#,
        )
        .unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let again = RunConfig::from_json_bytes(text.as_bytes()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn built_problem_matches_the_validated_numbers() {
        let cfg = RunConfig::from_json_bytes(
            br#"{"geometry": {"nx": 8, "ny": 4, "lx": 2.0, "ly": 1.0, "order": 1},
                 "subdomains": {"n1": 2, "n2": 2}}"#,
        )
        .unwrap();
        let mesh = cfg.mesh();
        assert_eq!(mesh.n_dofs(), 2 * 9 * 5);
        let problem = cfg.problem();
        assert_eq!(problem.decomp().n_subdomains(), 4);
    }
}
