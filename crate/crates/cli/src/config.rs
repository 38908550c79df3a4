//! Experiment configuration: one TOML file, schema version 1.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hrf_core::flow::{BoundaryData, DiagnosticsLevel, FlowConfig};
use hrf_core::{Boundary, GridSpec, MetricField, MetricModel};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Flow,
    Monitors,
    Oracle,
    Identities,
    Evolution,
    Exhaustion,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Flow => "flow",
            Suite::Monitors => "monitors",
            Suite::Oracle => "oracle",
            Suite::Identities => "identities",
            Suite::Evolution => "evolution",
            Suite::Exhaustion => "exhaustion",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Periodic,
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub resolution: usize,
    pub boundary: BoundaryKind,
    #[serde(default = "default_shell")]
    pub shell: usize,
}

fn default_shell() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub t_end: f64,
    pub cfl: f64,
    pub dt: Option<f64>,
    /// Feed the frozen shell from the model's exact solution.
    pub exact_boundary: bool,
    pub floor: f64,
    /// Snapshots kept when `snapshot_every` is absent.
    pub snapshots: usize,
    pub snapshot_every: Option<usize>,
    pub cadence: Option<usize>,
    pub max_steps: usize,
    pub diagnostics: DiagnosticsLevel,
    pub pinching_samples: usize,
}

impl Default for FlowSection {
    fn default() -> Self {
        let base = FlowConfig::default();
        Self {
            t_end: 0.01,
            cfl: base.cfl,
            dt: None,
            exact_boundary: false,
            floor: base.floor,
            snapshots: 10,
            snapshot_every: None,
            cadence: None,
            max_steps: base.max_steps,
            diagnostics: DiagnosticsLevel::Basic,
            pinching_samples: base.pinching_samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorSection {
    pub shi_order: usize,
    pub equivalence_eps: f64,
    pub pinching_samples: usize,
    pub pinching_cap: f64,
    pub interior_margin: f64,
    pub t1: Option<f64>,
    pub probe_pairs: usize,
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self {
            shi_order: 1,
            equivalence_eps: 0.5,
            pinching_samples: 2000,
            pinching_cap: 100.0,
            interior_margin: 0.25,
            t1: None,
            probe_pairs: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub resolutions: Vec<usize>,
    pub reference: MetricModel,
    pub tolerance: f64,
    pub min_order: f64,
    pub evolution_resolutions: Vec<usize>,
    pub max_calibration: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        let id = hrf_core::verify::IdentitySuite::standard();
        let evo = hrf_core::verify::EvolutionSuite::standard();
        Self {
            resolutions: id.resolutions,
            reference: id.reference,
            tolerance: id.tolerance,
            min_order: id.min_order,
            evolution_resolutions: evo.resolutions,
            max_calibration: evo.max_calibration,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExhaustionSection {
    pub kappas: Vec<f64>,
    /// `L` in `ρ = √(1 + L²|z − c|²)`.
    pub scale: f64,
    pub samples: usize,
}

impl Default for ExhaustionSection {
    fn default() -> Self {
        Self { kappas: vec![1.0 / 16.0, 1.0 / 32.0], scale: 1.0, samples: 4000 }
    }
}

/// Initial metric: a built-in generator or a snapshot file.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialMetric {
    Model(MetricModel),
    FromFile(PathBuf),
}

impl Serialize for InitialMetric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            InitialMetric::Model(m) => m.serialize(s),
            InitialMetric::FromFile(p) => {
                #[derive(Serialize)]
                struct F<'a> {
                    kind: &'static str,
                    path: &'a Path,
                }
                F { kind: "from_file", path: p }.serialize(s)
            }
        }
    }
}

impl<'de> Deserialize<'de> for InitialMetric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let table = toml::Table::deserialize(d)?;
        match table.get("kind").and_then(|k| k.as_str()) {
            Some("from_file") => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct F {
                    #[allow(dead_code)]
                    kind: String,
                    path: PathBuf,
                }
                let f = F::deserialize(toml::Value::Table(table)).map_err(D::Error::custom)?;
                Ok(InitialMetric::FromFile(f.path))
            }
            _ => MetricModel::deserialize(toml::Value::Table(table)).map(InitialMetric::Model).map_err(D::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    pub grid: GridSection,
    pub metric: InitialMetric,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub monitors: MonitorSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub exhaustion: ExhaustionSection,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_seed() -> u64 {
    0x5eed
}

fn default_suites() -> Vec<Suite> {
    vec![Suite::Flow, Suite::Monitors]
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    let msg = msg.to_string();
    if msg.starts_with("= ") {
        CliError::Config(format!("{field} {msg}"))
    } else {
        CliError::Config(format!("{field}: {msg}"))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid_spec(&self) -> Result<GridSpec, CliError> {
        let g = &self.grid;
        let boundary = match g.boundary {
            BoundaryKind::Periodic => Boundary::Periodic,
            BoundaryKind::Frozen => Boundary::Frozen { shell: g.shell },
        };
        GridSpec::new(g.n, g.resolution, boundary).map_err(|e| invalid("grid", e))
    }

    pub fn model(&self) -> Option<&MetricModel> {
        match &self.metric {
            InitialMetric::Model(m) => Some(m),
            InitialMetric::FromFile(_) => None,
        }
    }

    /// Checks every field and that the initial metric is positive definite
    /// on the grid.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA_VERSION {
            return Err(invalid("schema", format!("version {} is not supported (expected {SCHEMA_VERSION})", self.schema)));
        }
        let g = &self.grid;
        if !(1..=2).contains(&g.n) {
            return Err(invalid("grid.n", format!("= {}: complex dimension must be 1 or 2", g.n)));
        }
        if g.resolution < 8 {
            return Err(invalid("grid.resolution", format!("= {}: must be at least 8", g.resolution)));
        }
        if g.boundary == BoundaryKind::Frozen && g.shell < hrf_core::grid::STENCIL_RADIUS {
            return Err(invalid("grid.shell", format!("= {}: must be at least {}", g.shell, hrf_core::grid::STENCIL_RADIUS)));
        }
        if let InitialMetric::Model(m) = &self.metric {
            m.validate(g.n).map_err(|e| invalid("metric", e))?;
            if g.boundary == BoundaryKind::Periodic && !m.is_periodic() {
                return Err(invalid("grid.boundary", "periodic boundary needs a periodic metric (flat, kahler_potential or non_kahler_perturbed)"));
            }
            if self.flow.exact_boundary && !m.has_exact_solution() {
                return Err(invalid("flow.exact_boundary", "the metric model has no exact solution"));
            }
        } else if self.flow.exact_boundary {
            return Err(invalid("flow.exact_boundary", "a metric read from file has no exact solution"));
        }
        if self.flow.exact_boundary && g.boundary != BoundaryKind::Frozen {
            return Err(invalid("flow.exact_boundary", "needs grid.boundary = \"frozen\""));
        }
        self.flow_config().validate().map_err(|e| invalid("flow", e))?;
        if self.flow.snapshots == 0 && self.flow.snapshot_every.is_none() {
            return Err(invalid("flow.snapshots", "must be positive"));
        }
        let m = &self.monitors;
        if !(1..=2).contains(&m.shi_order) {
            return Err(invalid("monitors.shi_order", format!("= {}: must be 1 or 2", m.shi_order)));
        }
        if !(m.equivalence_eps > 0.0) {
            return Err(invalid("monitors.equivalence_eps", "must be positive"));
        }
        if !(m.pinching_cap > 0.0) {
            return Err(invalid("monitors.pinching_cap", "must be positive"));
        }
        if !(0.0..0.5).contains(&m.interior_margin) {
            return Err(invalid("monitors.interior_margin", format!("= {}: must lie in [0, 0.5)", m.interior_margin)));
        }
        if m.pinching_samples == 0 || m.probe_pairs == 0 {
            return Err(invalid("monitors.pinching_samples", "sample counts must be positive"));
        }
        let v = &self.verify;
        if v.resolutions.len() < 2 || v.resolutions.iter().any(|&r| r < 8) || !v.resolutions.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("verify.resolutions", "needs at least two increasing resolutions, each at least 8"));
        }
        if v.evolution_resolutions.len() < 2 || !v.evolution_resolutions.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("verify.evolution_resolutions", "needs at least two increasing resolutions"));
        }
        v.reference.validate(g.n).map_err(|e| invalid("verify.reference", e))?;
        for &k in &self.exhaustion.kappas {
            if !(k > 0.0 && k < 0.125) {
                return Err(invalid("exhaustion.kappas", format!("{k} must lie in (0, 1/8)")));
            }
        }
        if !(self.exhaustion.scale > 0.0) {
            return Err(invalid("exhaustion.scale", "must be positive"));
        }
        self.check_suites(&self.suites)?;
        let g0 = self.initial_metric()?;
        g0.validate().map_err(|e| invalid("metric", e))?;
        Ok(())
    }

    /// Checks that the metric suits every suite in `suites`.
    pub fn check_suites(&self, suites: &[Suite]) -> Result<(), CliError> {
        if suites.contains(&Suite::Oracle) && !self.model().is_some_and(|m| m.has_exact_solution()) {
            return Err(invalid("suites", "the oracle suite needs a metric model with an exact solution"));
        }
        if suites.contains(&Suite::Evolution) && !self.model().is_some_and(|m| m.is_periodic()) {
            return Err(invalid("suites", "the evolution suite needs a periodic metric model"));
        }
        if suites.contains(&Suite::Identities) && self.model().is_none() {
            return Err(invalid("suites", "the identities suite needs a metric model"));
        }
        Ok(())
    }

    pub fn initial_metric(&self) -> Result<MetricField, CliError> {
        match &self.metric {
            InitialMetric::Model(m) => m.sample(self.grid_spec()?).map_err(|e| invalid("metric", e)),
            InitialMetric::FromFile(path) => {
                let (g, _) = hrf_core::snapshot::load_metric(path).map_err(|e| invalid("metric.path", format!("{}: {e}", path.display())))?;
                let spec = self.grid_spec()?;
                if g.grid().n() != spec.n() || g.grid().res() != spec.res() || g.grid().boundary() != spec.boundary() {
                    return Err(invalid(
                        "metric.path",
                        format!("snapshot grid (n = {}, N = {}) disagrees with the grid section", g.grid().n(), g.grid().res()),
                    ));
                }
                Ok(g)
            }
        }
    }

    /// Flow settings with the snapshot cadence resolved against the CFL
    /// step of `g0` when given.
    pub fn flow_config_for(&self, g0: Option<&MetricField>) -> FlowConfig {
        let f = &self.flow;
        let boundary = match (&self.metric, f.exact_boundary) {
            (InitialMetric::Model(m), true) => BoundaryData::Exact { model: m.clone() },
            _ => BoundaryData::HoldInitial,
        };
        let every = f.snapshot_every.unwrap_or_else(|| {
            let dt = f.dt.or_else(|| g0.map(|g| hrf_core::flow::cfl_limit(g, f.cfl))).unwrap_or(f.t_end);
            let steps = if dt > 0.0 { (f.t_end / dt).ceil() } else { 1.0 };
            ((steps / f.snapshots.max(1) as f64).ceil() as usize).max(1)
        });
        FlowConfig {
            cfl: f.cfl,
            dt: f.dt,
            t_end: f.t_end,
            boundary,
            floor: f.floor,
            cadence: f.cadence.unwrap_or(every),
            snapshot_every: every,
            max_steps: f.max_steps,
            diagnostics: f.diagnostics,
            seed: self.seed,
            pinching_samples: f.pinching_samples,
        }
    }

    pub fn flow_config(&self) -> FlowConfig {
        self.flow_config_for(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const POINCARE: &str = r#"
seed = 7
suites = ["flow", "monitors", "oracle"]

[grid]
n = 1
resolution = 32
boundary = "frozen"

[metric]
kind = "poincare"
center = [0.5, 0.5]
radius = 1.0

[flow]
t_end = 0.01
exact_boundary = true
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = ExperimentConfig::parse(POINCARE).unwrap();
        c.validate().unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.model(), Some(&MetricModel::poincare_default()));
        let back = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn from_file_metric_parses() {
        let text = POINCARE.replace("kind = \"poincare\"\ncenter = [0.5, 0.5]\nradius = 1.0", "kind = \"from_file\"\npath = \"g.hrf\"");
        let text = text.replace("exact_boundary = true", "").replace(", \"oracle\"", "");
        let c = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(c.metric, InitialMetric::FromFile("g.hrf".into()));
        assert!(ExperimentConfig::parse(&c.to_toml()).is_ok());
    }

    #[test]
    fn errors_name_the_field() {
        let small = ExperimentConfig::parse(&POINCARE.replace("resolution = 32", "resolution = 4")).unwrap();
        let e = small.validate().unwrap_err().to_string();
        assert!(e.contains("grid.resolution") && e.contains("at least 8"), "{e}");
        let e = ExperimentConfig::parse(&POINCARE.replace("t_end = 0.01", "t_end = 0.01\nbogus = 1")).unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
        let e = ExperimentConfig::parse(&POINCARE.replace("radius = 1.0", "radius = 0.5")).unwrap().validate().unwrap_err().to_string();
        assert!(e.contains("metric") && e.contains("radius"), "{e}");
        let e = ExperimentConfig::parse(&POINCARE.replace("\"frozen\"", "\"periodic\"")).unwrap().validate().unwrap_err().to_string();
        assert!(e.contains("grid.boundary"), "{e}");
        let e = ExperimentConfig::parse(&POINCARE.replace("t_end = 0.01", "t_end = 0.01\ncfl = 2.0")).unwrap().validate().unwrap_err().to_string();
        assert!(e.contains("flow.cfl"), "{e}");
    }
}
