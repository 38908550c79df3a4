//! Runs the configured suites and writes their artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use hrf_core::analysis::{self, ExhaustionProfile, MonitorSeries, RadialExhaustion, Verdict};
use hrf_core::chern::ProbeOptions;
use hrf_core::flow::{self, FlowState, Halt};
use hrf_core::verify::{self, CoreBox, Evolution, EvolutionSuite, IdentitySuite, ResidualReport};
use hrf_core::HrfError;

use crate::config::{ExperimentConfig, Suite};
use crate::error::CliError;

/// Rows of the profile table written per `κ`.
const PROFILE_TABLE_SAMPLES: usize = 200;

/// Halving `h` must shrink the exact-solution error at least this much.
pub const ORACLE_MIN_RATIO: f64 = 8.0;

#[derive(Debug, Default, Serialize)]
pub struct Outcome {
    pub verdicts: BTreeMap<String, String>,
    pub halt: Option<Halt>,
    pub files: Vec<String>,
}

impl Outcome {
    pub fn failed(&self) -> bool {
        self.verdicts.values().any(|v| v == "FAIL")
    }

    pub fn breach(&self) -> bool {
        self.halt.as_ref().is_some_and(|h| h.is_breach())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: u32,
    command: &'a str,
    seed: u64,
    suites: Vec<&'static str>,
    #[serde(flatten)]
    outcome: &'a Outcome,
}

pub const MANIFEST: &str = "manifest.json";

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn put(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(name, text)
    }
}

fn verdict_word(pass: bool) -> String {
    if pass { "PASS" } else { "FAIL" }.to_string()
}

/// Runs `suites` of `cfg` into `out`, printing one line per verdict.
pub fn run(cfg: &ExperimentConfig, suites: &[Suite], command: &str, out: &Path) -> Result<Outcome, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("creating {}: {e}", out.display())))?;
    let mut w = Writer { dir: out.to_path_buf(), files: Vec::new() };
    w.put("config.toml", cfg.to_toml())?;
    let mut outcome = Outcome::default();

    let wants = |s: Suite| suites.contains(&s);
    if wants(Suite::Flow) || wants(Suite::Monitors) {
        let traj = flow_suite(cfg, &mut w, &mut outcome)?;
        if wants(Suite::Monitors) {
            monitor_suite(cfg, &traj, &mut w, &mut outcome)?;
        }
    }
    if wants(Suite::Oracle) {
        oracle_suite(cfg, &mut w, &mut outcome)?;
    }
    if wants(Suite::Identities) {
        identity_suite(cfg, &mut w, &mut outcome)?;
    }
    if wants(Suite::Evolution) {
        evolution_suite(cfg, &mut w, &mut outcome)?;
    }
    if wants(Suite::Exhaustion) {
        exhaustion_suite(cfg, &mut w, &mut outcome)?;
    }

    w.files.push(MANIFEST.to_string());
    w.files.sort();
    outcome.files = w.files.clone();
    let manifest = Manifest {
        schema: crate::config::SCHEMA_VERSION,
        command,
        seed: cfg.seed,
        suites: suites.iter().map(|s| s.name()).collect(),
        outcome: &outcome,
    };
    w.json(MANIFEST, &manifest)?;
    Ok(outcome)
}

fn flow_suite(cfg: &ExperimentConfig, w: &mut Writer, outcome: &mut Outcome) -> Result<Vec<FlowState>, CliError> {
    let g0 = cfg.initial_metric()?;
    let fc = cfg.flow_config_for(Some(&g0));
    fs::create_dir_all(w.dir.join("snapshots"))?;
    let mut snaps = Vec::new();
    let dir = w.dir.clone();
    let result = flow::run_with(FlowState::new(g0), &fc, |s| {
        let name = format!("snapshots/snap_{:04}.hrf", snaps.len());
        hrf_core::snapshot::save_metric(&dir.join(&name), &s.g, s.t)?;
        snaps.push(name);
        Ok(())
    })?;
    w.files.extend(snaps);
    let mut csv = Vec::new();
    flow::write_diagnostics_csv(&mut csv, &result.diagnostics)?;
    w.put("diagnostics.csv", csv)?;
    #[derive(Serialize)]
    struct FlowSummary<'a> {
        halt: &'a Halt,
        steps: usize,
        t_final: f64,
        snapshots: usize,
    }
    w.json(
        "flow.json",
        &FlowSummary { halt: &result.halt, steps: result.steps, t_final: result.last().t, snapshots: result.trajectory.len() },
    )?;
    println!("flow: {} steps to t = {:.6e} ({:?})", result.steps, result.last().t, result.halt);
    outcome.halt = Some(result.halt.clone());
    Ok(result.trajectory)
}

/// Monitor that did not produce a series, with the reason.
#[derive(Serialize)]
struct Skipped {
    name: &'static str,
    verdict: Verdict,
    reason: String,
}

#[derive(Serialize)]
struct Judged<'a> {
    #[serde(flatten)]
    series: &'a MonitorSeries,
    verdict: Verdict,
    derived: Option<f64>,
}

fn monitor_suite(cfg: &ExperimentConfig, traj: &[FlowState], w: &mut Writer, outcome: &mut Outcome) -> Result<(), CliError> {
    let m = &cfg.monitors;
    let probe = ProbeOptions { seed: cfg.seed, pairs_per_point: m.probe_pairs, ..ProbeOptions::default() };
    let mut series = Vec::new();
    let mut skipped = Vec::new();
    let mut keep = |name: &'static str, r: hrf_core::Result<MonitorSeries>| -> Result<(), CliError> {
        match r {
            Ok(s) => series.push(s),
            Err(HrfError::Hypothesis(why)) => skipped.push(Skipped { name, verdict: Verdict::Refused, reason: why }),
            Err(e @ (HrfError::NoAdmissiblePoints(_) | HrfError::Insufficient(_))) => {
                skipped.push(Skipped { name, verdict: Verdict::Refused, reason: e.to_string() })
            }
            Err(e) => return Err(e.into()),
        }
        Ok(())
    };
    keep("shi", analysis::shi_monitor(traj, m.shi_order))?;
    keep("equivalence", analysis::equivalence_monitor(traj, m.equivalence_eps))?;
    keep("preserved_ricci", analysis::preserved_ricci_monitor(traj, &probe))?;
    keep("pinching", analysis::pinching_monitor(traj, m.pinching_samples, &probe, m.pinching_cap))?;
    keep("quasi_negative", analysis::quasi_negative_monitor(traj, m.interior_margin, m.t1, &probe))?;

    let mut csv = Vec::new();
    analysis::write_monitor_csv(&mut csv, &series)?;
    w.put("monitors.csv", csv)?;
    let judged: Vec<Judged> = series
        .iter()
        .map(|s| {
            let e = s.evaluate();
            Judged { series: s, verdict: e.verdict, derived: e.derived }
        })
        .collect();
    #[derive(Serialize)]
    struct MonitorFile<'a> {
        series: Vec<Judged<'a>>,
        refused: Vec<Skipped>,
    }
    for j in &judged {
        println!("{} monitor {} (derived {:?})", j.verdict, j.series.name, j.derived);
        // the equivalence monitor reports an exceedance time; it is a measurement, not a check
        if j.series.name != "equivalence" {
            outcome.verdicts.insert(format!("monitor/{}", j.series.name), j.verdict.to_string());
        }
    }
    for s in &skipped {
        println!("REFUSED monitor {}: {}", s.name, s.reason);
        outcome.verdicts.insert(format!("monitor/{}", s.name), Verdict::Refused.to_string());
    }
    w.json("monitors.json", &MonitorFile { series: judged, refused: skipped })
}

pub const ORACLE_COLUMNS: [&str; 6] = ["res", "t_end", "steps", "lambda_lo", "lambda_hi", "error"];

fn oracle_suite(cfg: &ExperimentConfig, w: &mut Writer, outcome: &mut Outcome) -> Result<(), CliError> {
    let model = cfg.model().expect("validated");
    let res = cfg.grid.resolution;
    let mut rows = Vec::new();
    for r in [res / 2, res] {
        rows.push(verify::exact_solution_run(model, cfg.grid.n, r.max(8), cfg.flow.t_end, cfg.flow.cfl)?);
    }
    let mut csv = ORACLE_COLUMNS.join(",") + "\n";
    for r in &rows {
        writeln!(csv, "{},{:.17e},{},{:.17e},{:.17e},{:.17e}", r.res, r.t_end, r.steps, r.lambda_range.0, r.lambda_range.1, r.error)
            .unwrap();
    }
    w.put("oracle.csv", csv)?;
    let ratio = rows[0].error / rows[1].error;
    let pass = ratio >= ORACLE_MIN_RATIO;
    println!(
        "{} oracle: error {:.3e} at N = {}, {:.3e} at N = {} (ratio {:.2})",
        verdict_word(pass),
        rows[0].error,
        rows[0].res,
        rows[1].error,
        rows[1].res,
        ratio
    );
    outcome.verdicts.insert("oracle".into(), verdict_word(pass));
    w.json("oracle.json", &rows)
}

pub const RESIDUAL_COLUMNS: [&str; 4] = ["report", "resolution", "residual", "scale"];

fn residual_csv(reports: &[ResidualReport]) -> String {
    fn rows(r: &ResidualReport, out: &mut String) {
        for i in 0..r.resolutions.len() {
            writeln!(out, "{},{},{:.17e},{:.17e}", r.name, r.resolutions[i], r.residuals[i], r.scales[i]).unwrap();
        }
        for s in &r.sub_reports {
            rows(s, out);
        }
    }
    let mut out = RESIDUAL_COLUMNS.join(",") + "\n";
    for r in reports {
        rows(r, &mut out);
    }
    out
}

fn record_reports(prefix: &str, reports: &[ResidualReport], outcome: &mut Outcome) {
    for r in reports {
        println!("{}", r.summary_line());
        outcome.verdicts.insert(format!("{prefix}/{}", r.name), verdict_word(r.passed));
    }
}

fn identity_suite(cfg: &ExperimentConfig, w: &mut Writer, outcome: &mut Outcome) -> Result<(), CliError> {
    let v = &cfg.verify;
    let suite = IdentitySuite {
        model: cfg.model().expect("validated").clone(),
        reference: v.reference.clone(),
        n: cfg.grid.n,
        resolutions: v.resolutions.clone(),
        region: CoreBox::standard(),
        tolerance: v.tolerance,
        min_order: v.min_order,
    };
    let reports = suite.run()?;
    w.put("identities.csv", residual_csv(&reports))?;
    record_reports("identities", &reports, outcome);
    w.json("identities.json", &reports)
}

fn evolution_suite(cfg: &ExperimentConfig, w: &mut Writer, outcome: &mut Outcome) -> Result<(), CliError> {
    let v = &cfg.verify;
    let suite = EvolutionSuite {
        model: cfg.model().expect("validated").clone(),
        n: cfg.grid.n,
        resolutions: v.evolution_resolutions.clone(),
        max_calibration: v.max_calibration,
        ..EvolutionSuite::standard()
    };
    let kinds = [Evolution::Trace, Evolution::Psi, Evolution::Rm, Evolution::Ric, Evolution::Higher];
    let (reports, table) = suite.run(&kinds)?;
    w.put("evolution.csv", residual_csv(&reports))?;
    record_reports("evolution", &reports, outcome);
    #[derive(Serialize)]
    struct EvolutionFile<'a> {
        reports: &'a [ResidualReport],
        rows: &'a [Vec<verify::EvolutionResidual>],
    }
    w.json("evolution.json", &EvolutionFile { reports: &reports, rows: &table })
}

pub const EXHAUSTION_COLUMNS: [&str; 15] = [
    "kappa",
    "n",
    "k0",
    "rho0",
    "sup_at_threshold",
    "zero_region_max",
    "min_derivative",
    "max_phi_slope",
    "w1",
    "w2",
    "w3",
    "c2",
    "c3",
    "quadrature_change",
    "holds",
];

fn exhaustion_suite(cfg: &ExperimentConfig, w: &mut Writer, outcome: &mut Outcome) -> Result<(), CliError> {
    let e = &cfg.exhaustion;
    let n = cfg.grid.n;
    let radial = RadialExhaustion { center: [0.5; 4], scale: e.scale };
    let mut csv = EXHAUSTION_COLUMNS.join(",") + "\n";
    let mut details = Vec::new();
    for (i, &kappa) in e.kappas.iter().enumerate() {
        let profile = ExhaustionProfile::new(kappa)?;
        let p = analysis::profile_report(&profile, e.samples)?;
        let t = analysis::flat_threshold(&profile, &radial, n, e.samples)?;
        let holds = p.holds() && t.holds_beyond();
        writeln!(
            csv,
            "{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            kappa,
            n,
            t.k0,
            t.rho0,
            t.sup_at_threshold,
            p.zero_region_max,
            p.min_derivative,
            p.max_phi_slope,
            p.weighted_sup[0],
            p.weighted_sup[1],
            p.weighted_sup[2],
            p.c2,
            p.c3,
            p.quadrature_change,
            holds as u8
        )
        .unwrap();
        let mut table = Vec::new();
        analysis::write_profile_table(&mut table, &profile, &profile.dense_samples(PROFILE_TABLE_SAMPLES))?;
        w.put(&format!("exhaustion_profile_{i}.csv"), table)?;
        println!("{} exhaustion kappa = {kappa}: rho0 = {:.6e}, K0 = {:.6e}", verdict_word(holds), t.rho0, t.k0);
        outcome.verdicts.insert(format!("exhaustion/kappa_{i}"), verdict_word(holds));
        details.push((p, t));
    }
    w.put("exhaustion.csv", csv)?;
    #[derive(Serialize)]
    struct Entry<'a> {
        profile: &'a analysis::ProfileReport,
        threshold: &'a analysis::ThresholdReport,
    }
    let entries: Vec<Entry> = details.iter().map(|(p, t)| Entry { profile: p, threshold: t }).collect();
    w.json("exhaustion.json", &entries)
}
