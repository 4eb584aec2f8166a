use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::disorder::{make_sequence, Law, SequenceMode};
use crate::error::{config_err, Result};
use crate::mkv::{Domain, Grid, MkvConfig, CFL_FACTOR};
use crate::model::{Geometry, InitConfig, InitialLaw, ModelConfig, ModelSpec};
use crate::simulate::{InteractionMode, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Validate,
    Simulate,
    Lln,
    Coupling,
    Mkv,
    RateCheck,
    Sanov,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Simulate => "simulate",
            Experiment::Lln => "lln",
            Experiment::Coupling => "coupling",
            Experiment::Mkv => "mkv",
            Experiment::RateCheck => "rate-check",
            Experiment::Sanov => "sanov",
        }
    }
}

/// Particle-system settings; the seed comes from the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    pub noise_scale: f64,
    pub interaction: InteractionMode,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection { n: 100, t_end: 1.0, dt: 1e-3, noise_scale: 1.0, interaction: InteractionMode::Auto }
    }
}

impl SimSection {
    pub fn with_seed(&self, n: usize, seed: u64) -> SimConfig {
        SimConfig {
            n,
            t_end: self.t_end,
            dt: self.dt,
            seed,
            noise_scale: self.noise_scale,
            interaction: self.interaction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlnSection {
    #[serde(rename = "Ns")]
    pub ns: Vec<usize>,
    pub seeds: usize,
}

impl Default for LlnSection {
    fn default() -> Self {
        LlnSection { ns: vec![200, 800, 3200], seeds: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSection {
    #[serde(rename = "Ms")]
    pub ms: Vec<f64>,
    pub seeds: usize,
}

impl Default for CouplingSection {
    fn default() -> Self {
        CouplingSection { ms: vec![1.0, 2.0, 4.0], seeds: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateSection {
    /// Particles per replica in the normalization check.
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    pub reps: usize,
    /// Drift families in the ordering table.
    pub families: usize,
    /// Perturbed flows in the consistency table.
    pub perturbed: usize,
    /// Paths in the pathwise log-density check.
    pub paths: usize,
}

impl Default for RateSection {
    fn default() -> Self {
        RateSection { n: 5, t_end: 0.5, dt: 1e-3, reps: 10_000, families: 10, perturbed: 20, paths: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SanovSection {
    #[serde(rename = "E")]
    pub e: usize,
    #[serde(rename = "F")]
    pub f: usize,
    pub trials: usize,
}

impl Default for SanovSection {
    fn default() -> Self {
        SanovSection { e: 3, f: 2, trials: 20 }
    }
}

/// Everything a run needs. JSON on disk; command-line flags override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub model: ModelConfig,
    /// Disorder law, e.g. `binary:0.5` or `gaussian:0,1`.
    pub mu: String,
    /// `quantile` or `iid:SEED`.
    pub sequence: String,
    pub init: InitConfig,
    pub sim: SimSection,
    pub pde: MkvConfig,
    pub lln: LlnSection,
    pub coupling: CouplingSection,
    pub rate: RateSection,
    pub sanov: SanovSection,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            model: ModelConfig::default(),
            mu: "binary:0.5".into(),
            sequence: "quantile".into(),
            init: InitConfig::default(),
            sim: SimSection::default(),
            pde: MkvConfig::default(),
            lln: LlnSection::default(),
            coupling: CouplingSection::default(),
            rate: RateSection::default(),
            sanov: SanovSection::default(),
            seed: 0,
            out: PathBuf::from("out"),
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(&path, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical JSON with `out` and `threads` cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.threads = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        self.model.build().map_err(|e| config_err("model", e.to_string()))
    }

    pub fn law(&self) -> Result<Law> {
        Law::parse(&self.mu).map_err(|e| config_err("mu", e.to_string()))
    }

    pub fn sequence_mode(&self) -> Result<SequenceMode> {
        SequenceMode::parse(&self.sequence).map_err(|e| config_err("sequence", e.to_string()))
    }

    pub fn initial_law(&self) -> InitialLaw {
        self.init.build()
    }

    /// Disorder atoms used by the PDE: the law itself when atomic, else
    /// its quantization.
    pub fn atoms(&self) -> Result<Vec<(f64, f64)>> {
        Ok(self.law()?.quantize(crate::disorder::QUANTIZATION_ATOMS))
    }

    /// Cross-field checks, each failure naming its field.
    pub fn validate(&self, experiment: Experiment) -> Result<()> {
        let m = self.model_spec()?;
        let law = self.law()?;
        let mode = self.sequence_mode()?;
        let init = self.initial_law();
        init.validate_params().map_err(|e| config_err("init", e.to_string()))?;
        self.sim.with_seed(self.sim.n, 0).steps().map_err(|e| config_err("sim.dt", e.to_string()))?;
        make_sequence(&law, 1, mode)
            .and_then(|s| s.check_pairing(&m, &init))
            .map_err(|e| config_err("mu", e.to_string()))?;
        if self.threads == Some(0) {
            return Err(config_err("threads", "must be >= 1"));
        }
        let needs_pde = matches!(experiment, Experiment::Lln | Experiment::Mkv | Experiment::RateCheck);
        if needs_pde {
            let grid =
                Grid::new(self.pde.domain, self.pde.cells).map_err(|e| config_err("pde.cells", e.to_string()))?;
            let circle = matches!(self.pde.domain, Domain::Circle);
            if circle != (m.geometry == Geometry::Circle) {
                return Err(config_err("pde.domain", format!("model {} lives on the other geometry", m.name)));
            }
            if let Some(dt) = self.pde.dt {
                let atoms = self.atoms()?;
                let bound = atoms.iter().map(|a| m.drift_bound(a.0)).fold(0.0, f64::max) + m.c_f;
                let dx = grid.dx;
                let limit = CFL_FACTOR * if bound > 0.0 { (dx * dx).min(dx / bound) } else { dx * dx };
                if dt > limit {
                    return Err(config_err("pde.dt", format!("dt = {dt} exceeds the CFL limit {limit}")));
                }
            }
        }
        match experiment {
            Experiment::Lln => {
                if self.lln.ns.is_empty() || self.lln.ns.contains(&0) {
                    return Err(config_err("lln.Ns", "need a non-empty ladder of positive sizes"));
                }
                if self.lln.seeds == 0 {
                    return Err(config_err("lln.seeds", "must be >= 1"));
                }
            }
            Experiment::Coupling => {
                if self.coupling.ms.is_empty() || self.coupling.ms.iter().any(|m| !(*m > 0.0)) {
                    return Err(config_err("coupling.Ms", "need a non-empty ladder of positive levels"));
                }
                if self.coupling.seeds == 0 {
                    return Err(config_err("coupling.seeds", "must be >= 1"));
                }
            }
            Experiment::RateCheck => {
                if self.rate.reps < 100 {
                    return Err(config_err("rate.reps", "need at least 100 replicas"));
                }
                SimConfig::new(self.rate.n, self.rate.t_end, self.rate.dt, 0)
                    .steps()
                    .map_err(|e| config_err("rate.dt", e.to_string()))?;
            }
            Experiment::Sanov => {
                if !(1..=8).contains(&self.sanov.e) {
                    return Err(config_err("sanov.E", "must lie in 1..=8"));
                }
                if !(1..=8).contains(&self.sanov.f) {
                    return Err(config_err("sanov.F", "must lie in 1..=8"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn unknown_field_reports_its_path() {
        let e = ExperimentConfig::from_json(r#"{"pde": {"cellz": 3}}"#).unwrap_err();
        match e {
            Error::Config { path, .. } => assert!(path.starts_with("pde"), "{path}"),
            other => panic!("{other}"),
        }
        let e = ExperimentConfig::from_json(r#"{"sim": {"dt": "small"}}"#).unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "sim.dt"), "{e}");
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { out: "elsewhere".into(), threads: Some(3), ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig { seed: 9, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn cross_field_checks() {
        let mut c = ExperimentConfig::default();
        c.pde.dt = Some(1.0);
        assert!(matches!(c.validate(Experiment::Mkv), Err(Error::Config { ref path, .. }) if path == "pde.dt"));
        let c = ExperimentConfig { mu: "binary:2".into(), ..Default::default() };
        assert!(matches!(c.validate(Experiment::Lln), Err(Error::Config { ref path, .. }) if path == "mu"));
        assert!(ExperimentConfig::default().validate(Experiment::Lln).is_ok());
    }
}
