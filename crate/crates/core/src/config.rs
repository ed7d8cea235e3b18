//! Experiment configuration: a TOML document with one table per concern.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cert::{CertifyConfig, DictionarySpec, Thresholds};
use crate::error::{Error, Result};
use crate::models;
use crate::sde::{ModelSpec, TimeGrid};
use crate::solver::{PicardConfig, SpaceGrid, JUMP_PROBABILITY_CAP, MIN_PARTICLES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub horizon: f64,
    pub steps: usize,
    pub space_nodes: usize,
    pub action_points: usize,
    /// Explicit space box; derived from the model when absent.
    pub space_lower: Option<f64>,
    pub space_upper: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            steps: 50,
            space_nodes: 601,
            action_points: 65,
            space_lower: None,
            space_upper: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub particles: usize,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub lipschitz_cap: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let p = PicardConfig::default();
        Self {
            particles: p.particles,
            damping: p.damping,
            tol: p.tol,
            max_iter: p.max_iter,
            lipschitz_cap: p.lipschitz_cap,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderSection {
    pub n: Vec<usize>,
    pub reps: usize,
}

impl Default for LadderSection {
    fn default() -> Self {
        let c = CertifyConfig::default();
        Self { n: c.ladder, reps: c.reps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySection {
    pub bootstrap: usize,
    pub reference_factor: usize,
    /// Adds `amplitude * sin(2 pi x / period)` to the policy before
    /// certifying it; zero leaves it untouched.
    pub corrupt_amplitude: f64,
    pub corrupt_period: f64,
}

impl Default for CertifySection {
    fn default() -> Self {
        let c = CertifyConfig::default();
        Self {
            bootstrap: c.bootstrap,
            reference_factor: c.reference_factor,
            corrupt_amplitude: 0.0,
            corrupt_period: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedSection {
    pub master: u64,
}

impl Default for SeedSection {
    fn default() -> Self {
        Self { master: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub ladder: LadderSection,
    #[serde(default)]
    pub dictionary: DictionarySpec,
    #[serde(default)]
    pub certify: CertifySection,
    #[serde(default)]
    pub seeds: SeedSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub thresholds: Thresholds,
}

/// Model, grids and solver settings resolved from a configuration.
#[derive(Clone, Debug)]
pub struct ResolvedSetup {
    pub spec: ModelSpec,
    pub grid: TimeGrid,
    pub space: SpaceGrid,
}

impl ExperimentConfig {
    /// Defaults for model `name`.
    pub fn for_model(name: &str) -> Self {
        Self {
            model: ModelSection {
                name: name.to_string(),
                params: BTreeMap::new(),
            },
            grid: GridSection::default(),
            solver: SolverSection::default(),
            ladder: LadderSection::default(),
            dictionary: DictionarySpec::default(),
            certify: CertifySection::default(),
            seeds: SeedSection::default(),
            output: OutputSection::default(),
            thresholds: Thresholds::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Builds the model and grids and checks every cross-field constraint.
    /// All problems are collected into one `Config` error.
    pub fn resolve(&self) -> Result<ResolvedSetup> {
        let mut problems = Vec::new();
        let spec = models::build(&self.model.name, &self.model.params);
        let grid = TimeGrid::new(self.grid.horizon, self.grid.steps);
        if let Err(e) = &spec {
            problems.push(e.to_string());
        }
        if let Err(e) = &grid {
            problems.push(format!("grid: {e}"));
        }
        let ladder = &self.ladder.n;
        if ladder.is_empty() || ladder[0] == 0 || ladder.windows(2).any(|w| w[0] >= w[1]) {
            problems.push(format!("ladder.n must be positive and strictly increasing, got {ladder:?}"));
        }
        if self.ladder.reps < 2 {
            problems.push("ladder.reps must be at least 2".into());
        }
        if self.solver.particles < MIN_PARTICLES {
            problems.push(format!("solver.particles must be at least {MIN_PARTICLES}"));
        }
        if !(self.solver.damping > 0.0 && self.solver.damping <= 1.0) {
            problems.push(format!("solver.damping {} outside (0, 1]", self.solver.damping));
        }
        if !(self.solver.tol >= 0.0) || self.solver.max_iter == 0 {
            problems.push("solver.tol must be nonnegative and solver.max_iter positive".into());
        }
        if self.grid.action_points < 2 || self.grid.space_nodes < 3 {
            problems.push("grid needs at least 2 action points and 3 space nodes".into());
        }
        if self.certify.corrupt_period <= 0.0 {
            problems.push("certify.corrupt_period must be positive".into());
        }
        let mut space = None;
        if let (Ok(spec), Ok(grid)) = (&spec, &grid) {
            let jump_prob = spec.intensity_bound() * grid.dt();
            if jump_prob > JUMP_PROBABILITY_CAP * (1.0 + 1e-12) {
                problems.push(format!(
                    "intensity bound times time step is {jump_prob}, above {JUMP_PROBABILITY_CAP}; increase grid.steps"
                ));
            }
            let s = match (self.grid.space_lower, self.grid.space_upper) {
                (Some(lo), Some(hi)) => SpaceGrid::new(lo, hi, self.grid.space_nodes),
                (None, None) => SpaceGrid::for_model(spec, grid.horizon(), self.grid.space_nodes),
                _ => Err(Error::Config("set both or neither of grid.space_lower and grid.space_upper".into())),
            };
            match s {
                Ok(s) => space = Some(s),
                Err(e) => problems.push(format!("space grid: {e}")),
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        Ok(ResolvedSetup {
            spec: spec?,
            grid: grid?,
            space: space.expect("space grid"),
        })
    }

    pub fn picard(&self) -> PicardConfig {
        PicardConfig {
            damping: self.solver.damping,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            particles: self.solver.particles,
            action_points: self.grid.action_points,
            lipschitz_cap: self.solver.lipschitz_cap,
            seed: self.seeds.master,
        }
    }

    pub fn certify_config(&self) -> CertifyConfig {
        CertifyConfig {
            ladder: self.ladder.n.clone(),
            reps: self.ladder.reps,
            seed: self.seeds.master,
            bootstrap: self.certify.bootstrap,
            reference_factor: self.certify.reference_factor,
            dictionary: self.dictionary.clone(),
            thresholds: self.thresholds.clone(),
        }
    }

    /// SHA-256 over the sections that determine the solver output.
    pub fn solver_hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            model: &'a ModelSection,
            grid: &'a GridSection,
            solver: &'a SolverSection,
            seed: u64,
        }
        let key = Key {
            model: &self.model,
            grid: &self.grid,
            solver: &self.solver,
            seed: self.seeds.master,
        };
        hex(&Sha256::digest(serde_json::to_vec(&key).expect("serializable")))
    }

    /// SHA-256 over everything except the output location.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        hex(&Sha256::digest(serde_json::to_vec(&c).expect("serializable")))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = ExperimentConfig::from_toml_str("[model]\nname = \"frozen\"\n").unwrap();
        assert_eq!(c, ExperimentConfig::for_model("frozen"));
        assert!(c.resolve().is_ok());
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::for_model("toy-interbank");
        c.model.params.insert("sigma".into(), 0.3);
        c.grid.space_lower = Some(-4.0);
        c.grid.space_upper = Some(4.0);
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn problems_are_collected() {
        let mut c = ExperimentConfig::for_model("toy-interbank");
        c.ladder.n = vec![10, 5];
        c.grid.steps = 10;
        let err = c.resolve().unwrap_err().to_string();
        assert!(err.contains("ladder") && err.contains("grid.steps"), "{err}");
        assert!(ExperimentConfig::from_toml_str("[model]\nname = \"x\"\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::for_model("nope").resolve().is_err());
    }

    #[test]
    fn hashes_track_relevant_sections() {
        let a = ExperimentConfig::for_model("frozen");
        let mut b = a.clone();
        b.ladder.reps = 3;
        assert_eq!(a.solver_hash(), b.solver_hash());
        assert_ne!(a.config_hash(), b.config_hash());
        b.seeds.master = 9;
        assert_ne!(a.solver_hash(), b.solver_hash());
        let mut c = a.clone();
        c.output.dir = "elsewhere".into();
        assert_eq!(a.config_hash(), c.config_hash());
    }
}
