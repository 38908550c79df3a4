//! Summaries rebuilt from the CSV artifacts of a finished run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use hrf_core::analysis::{self, MonitorSeries};
use hrf_core::flow::DIAGNOSTICS_COLUMNS;
use hrf_core::verify::observed_order;

use crate::error::CliError;
use crate::suites::{EXHAUSTION_COLUMNS, MANIFEST, ORACLE_COLUMNS, ORACLE_MIN_RATIO, RESIDUAL_COLUMNS};

/// Files `report` understands; used when the directory has no manifest.
pub const KNOWN_ARTIFACTS: [&str; 10] = [
    MANIFEST,
    "diagnostics.csv",
    "monitors.csv",
    "monitors.json",
    "oracle.csv",
    "identities.csv",
    "identities.json",
    "evolution.csv",
    "evolution.json",
    "exhaustion.csv",
];

struct Table {
    rows: Vec<BTreeMap<String, String>>,
}

impl Table {
    fn parse(text: &str, expected: &[&str], file: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
        if header != expected {
            return Err(format!("{file}: unexpected header"));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(format!("{file} line {}: expected {} cells", i + 2, header.len()));
            }
            rows.push(header.iter().zip(cells).map(|(h, c)| (h.to_string(), c.to_string())).collect());
        }
        Ok(Self { rows })
    }

    fn num(&self, row: usize, col: &str) -> Result<f64, String> {
        let cell = self.rows[row].get(col).ok_or_else(|| format!("missing column {col}"))?;
        cell.parse().map_err(|_| format!("bad number {cell:?} in column {col}"))
    }

    /// `None` for an empty cell.
    fn opt(&self, row: usize, col: &str) -> Result<Option<f64>, String> {
        match self.rows[row].get(col).map(String::as_str) {
            Some("") | None => Ok(None),
            Some(_) => self.num(row, col).map(Some),
        }
    }
}

#[derive(Debug, Default, Serialize)]
pub struct Summary {
    pub present: Vec<String>,
    pub missing: Vec<String>,
    pub unreadable: BTreeMap<String, String>,
    pub sections: BTreeMap<String, Value>,
    pub lines: Vec<String>,
}

fn read(dir: &Path, name: &str, s: &mut Summary) -> Option<String> {
    match fs::read_to_string(dir.join(name)) {
        Ok(t) => Some(t),
        Err(_) => {
            if !s.missing.iter().any(|m| m == name) {
                s.missing.push(name.to_string());
            }
            None
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
}

/// Summarises `dir`. Missing and corrupt artifacts are listed; the rest
/// is still summarised. Errors only when nothing recognisable is there.
pub fn summarize(dir: &Path) -> Result<Summary, CliError> {
    let mut s = Summary::default();
    let expected: Vec<String> = match fs::read_to_string(dir.join(MANIFEST)) {
        Ok(text) => {
            let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{MANIFEST}: {e}")))?;
            v["files"].as_array().map(|a| a.iter().filter_map(|f| f.as_str().map(String::from)).collect()).unwrap_or_default()
        }
        Err(_) => {
            let found: Vec<String> =
                KNOWN_ARTIFACTS.iter().filter(|f| dir.join(f).is_file()).map(|f| f.to_string()).collect();
            if found.is_empty() {
                return Err(CliError::Artifacts { dir: dir.display().to_string(), files: KNOWN_ARTIFACTS.join(", ") });
            }
            s.missing.push(MANIFEST.to_string());
            found
        }
    };
    for f in &expected {
        if dir.join(f).is_file() {
            s.present.push(f.clone());
        } else {
            s.missing.push(f.clone());
        }
    }
    let has = |f: &str| expected.iter().any(|e| e == f);

    let section = |name: &str, s: &mut Summary, r: Result<Value, String>| match r {
        Ok(v) => {
            s.sections.insert(name.to_string(), v);
        }
        Err(e) => {
            s.lines.push(format!("{name}: unreadable ({e})"));
            s.unreadable.insert(name.to_string(), e);
        }
    };
    if has("diagnostics.csv") {
        if let Some(t) = read(dir, "diagnostics.csv", &mut s) {
            let r = flow_section(&t, &mut s.lines);
            section("flow", &mut s, r);
        }
    }
    if has("monitors.csv") {
        if let (Some(c), Some(j)) = (read(dir, "monitors.csv", &mut s), read(dir, "monitors.json", &mut s)) {
            let r = monitor_section(&c, &j, &mut s.lines);
            section("monitors", &mut s, r);
        }
    }
    if has("oracle.csv") {
        if let Some(t) = read(dir, "oracle.csv", &mut s) {
            let r = oracle_section(&t, &mut s.lines);
            section("oracle", &mut s, r);
        }
    }
    for name in ["identities", "evolution"] {
        let csv = format!("{name}.csv");
        if has(&csv) {
            if let (Some(c), Some(j)) = (read(dir, &csv, &mut s), read(dir, &format!("{name}.json"), &mut s)) {
                let r = residual_section(name, &c, &j, &mut s.lines);
                section(name, &mut s, r);
            }
        }
    }
    if has("exhaustion.csv") {
        if let Some(t) = read(dir, "exhaustion.csv", &mut s) {
            let r = exhaustion_section(&t, &mut s.lines);
            section("exhaustion", &mut s, r);
        }
    }
    s.missing.sort();
    s.missing.dedup();
    Ok(s)
}

fn flow_section(text: &str, lines: &mut Vec<String>) -> Result<Value, String> {
    let t = Table::parse(text, &DIAGNOSTICS_COLUMNS, "diagnostics.csv")?;
    if t.rows.is_empty() {
        return Err("diagnostics.csv has no rows".into());
    }
    let last = t.rows.len() - 1;
    let mut max_abs = BTreeMap::new();
    for col in &DIAGNOSTICS_COLUMNS[3..] {
        let mut m: Option<f64> = None;
        for i in 0..t.rows.len() {
            if let Some(v) = t.opt(i, col)? {
                m = Some(m.unwrap_or(0.0).max(v.abs()));
            }
        }
        max_abs.insert(col.to_string(), m);
    }
    let v = serde_json::json!({
        "rows": t.rows.len(),
        "final_step": t.num(last, "step")?,
        "final_t": t.num(last, "t")?,
        "ric_lambda_min_t0": t.num(0, "ric_lambda_min")?,
        "ric_lambda_max_t0": t.num(0, "ric_lambda_max")?,
        "sup_rm_final": t.num(last, "sup_rm")?,
        "sup_t2_final": t.num(last, "sup_t2")?,
        "equivalence_final": t.num(last, "equivalence")?,
        "sup_dg_final": t.num(last, "sup_dg")?,
        "max_abs": max_abs,
    });
    lines.push(format!(
        "flow: {} rows to step {} (t = {:.6e}); Ricci eigenvalues at t = 0 in [{:.6e}, {:.6e}]",
        t.rows.len(),
        t.num(last, "step")?,
        t.num(last, "t")?,
        t.num(0, "ric_lambda_min")?,
        t.num(0, "ric_lambda_max")?
    ));
    let zero = max_abs.values().all(|m| m.map_or(true, |x| x == 0.0));
    lines.push(format!(
        "flow: final sup|Rm| {:.6e}, sup|T|^2 {:.6e}, equivalence {:.6e}, sup|g - g0| {:.6e}{}",
        t.num(last, "sup_rm")?,
        t.num(last, "sup_t2")?,
        t.num(last, "equivalence")?,
        t.num(last, "sup_dg")?,
        if zero { " (all diagnostics zero)" } else { "" }
    ));
    Ok(v)
}

fn monitor_section(csv: &str, json: &str, lines: &mut Vec<String>) -> Result<Value, String> {
    let groups = analysis::read_monitor_csv(csv).map_err(|e| e.to_string())?;
    let meta: Value = serde_json::from_str(json).map_err(|e| format!("monitors.json: {e}"))?;
    let empty = Vec::new();
    let described = meta["series"].as_array().unwrap_or(&empty);
    let mut out = Vec::new();
    for (name, times, values) in groups {
        let entry = described.iter().find(|d| d["name"] == name.as_str()).ok_or_else(|| format!("monitor {name} is not described in monitors.json"))?;
        // rule, hypothesis and side measurements come from the JSON; the series from the CSV cells
        let mut series: MonitorSeries = serde_json::from_value(entry.clone()).map_err(|e| format!("monitors.json {name}: {e}"))?;
        series.times = times;
        series.values = values;
        let e = series.evaluate();
        lines.push(format!("{} monitor {}: {} rows, derived {}", e.verdict, name, series.times.len(), fmt_opt(e.derived)));
        out.push(serde_json::json!({
            "name": name,
            "verdict": e.verdict,
            "derived": e.derived,
            "rows": series.times.len(),
            "max": series.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            "measured": series.measured,
        }));
    }
    for r in meta["refused"].as_array().unwrap_or(&empty) {
        lines.push(format!("REFUSED monitor {}: {}", r["name"].as_str().unwrap_or("?"), r["reason"].as_str().unwrap_or("")));
        out.push(r.clone());
    }
    Ok(Value::Array(out))
}

fn oracle_section(text: &str, lines: &mut Vec<String>) -> Result<Value, String> {
    let t = Table::parse(text, &ORACLE_COLUMNS, "oracle.csv")?;
    if t.rows.len() < 2 {
        return Err("oracle.csv needs two rows".into());
    }
    let (na, nb) = (t.num(0, "res")? as usize, t.num(1, "res")? as usize);
    let (ea, eb) = (t.num(0, "error")?, t.num(1, "error")?);
    let order = observed_order(na, ea, nb, eb);
    let ratio = ea / eb;
    let pass = ratio >= ORACLE_MIN_RATIO;
    let (lo, hi) = (t.num(1, "lambda_lo")?, t.num(1, "lambda_hi")?);
    lines.push(format!(
        "{} oracle: lambda in [{lo:.6e}, {hi:.6e}]; error {ea:.3e} (N = {na}), {eb:.3e} (N = {nb}); ratio {ratio:.3}, spatial order {order:.3}",
        if pass { "PASS" } else { "FAIL" }
    ));
    Ok(serde_json::json!({
        "lambda_lo": lo, "lambda_hi": hi, "errors": [ea, eb], "resolutions": [na, nb],
        "ratio": ratio, "order": order, "pass": pass,
    }))
}

fn residual_section(name: &str, csv: &str, json: &str, lines: &mut Vec<String>) -> Result<Value, String> {
    let t = Table::parse(csv, &RESIDUAL_COLUMNS, &format!("{name}.csv"))?;
    let meta: Value = serde_json::from_str(json).map_err(|e| format!("{name}.json: {e}"))?;
    let reports = meta.get("reports").unwrap_or(&meta).as_array().cloned().unwrap_or_default();
    let mut series: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
    for i in 0..t.rows.len() {
        let report = t.rows[i]["report"].clone();
        let point = (t.num(i, "resolution")? as usize, t.num(i, "residual")?);
        match series.iter_mut().find(|(n, _)| *n == report) {
            Some((_, pts)) => pts.push(point),
            None => series.push((report, vec![point])),
        }
    }
    let mut out = Vec::new();
    for report in &reports {
        let rname = report["name"].as_str().unwrap_or("?");
        let passed = report["passed"].as_bool().unwrap_or(false);
        let pts = series.iter().find(|(n, _)| n == rname).map(|(_, p)| p.clone()).unwrap_or_default();
        let (res, finest) = pts.last().copied().ok_or_else(|| format!("{rname} has no rows in {name}.csv"))?;
        let order = (pts.len() >= 2 && finest >= hrf_core::verify::ROUNDOFF_FLOOR).then(|| {
            let (ra, ea) = pts[pts.len() - 2];
            observed_order(ra, ea, res, finest)
        });
        lines.push(format!(
            "{} {name} {rname}: residual {finest:.3e} at N = {res}, order {}",
            if passed { "PASS" } else { "FAIL" },
            order.map(|o| format!("{o:.3}")).unwrap_or_else(|| "-".into())
        ));
        out.push(serde_json::json!({ "name": rname, "passed": passed, "finest": finest, "resolution": res, "order": order }));
    }
    Ok(Value::Array(out))
}

fn exhaustion_section(text: &str, lines: &mut Vec<String>) -> Result<Value, String> {
    let t = Table::parse(text, &EXHAUSTION_COLUMNS, "exhaustion.csv")?;
    let mut out = Vec::new();
    for i in 0..t.rows.len() {
        let holds = t.num(i, "holds")? == 1.0;
        let (kappa, rho0, k0) = (t.num(i, "kappa")?, t.num(i, "rho0")?, t.num(i, "k0")?);
        lines.push(format!(
            "{} exhaustion kappa = {kappa}: rho0 = {rho0:.6e}, K0 = {k0:.6e}, sup at rho0 = {:.6e}, c2 = {:.4}, c3 = {:.4}",
            if holds { "PASS" } else { "FAIL" },
            t.num(i, "sup_at_threshold")?,
            t.num(i, "c2")?,
            t.num(i, "c3")?
        ));
        out.push(serde_json::json!({ "kappa": kappa, "rho0": rho0, "k0": k0, "holds": holds }));
    }
    Ok(Value::Array(out))
}

/// Writes `summary.txt` and `summary.json` into `dir`.
pub fn write(dir: &Path, s: &Summary) -> Result<String, CliError> {
    let mut text = String::new();
    for l in &s.lines {
        writeln!(text, "{l}").unwrap();
    }
    if !s.missing.is_empty() {
        writeln!(text, "missing: {}", s.missing.join(", ")).unwrap();
    }
    fs::write(dir.join("summary.txt"), &text)?;
    let mut json = serde_json::to_string_pretty(s)?;
    json.push('\n');
    fs::write(dir.join("summary.json"), json)?;
    Ok(text)
}
