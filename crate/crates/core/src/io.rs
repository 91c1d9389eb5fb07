//! Reading and writing result tables.
//!
//! Every writer goes through [`write_atomic`], so an interrupted run never
//! leaves a partial file under the target name. Floats are written with
//! shortest round-trip formatting.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{Chain, LrtResult, McConfidenceSet};
use crate::confset::{ConfidenceSet, Method, ParamGrid, PointEvidence};
use crate::error::{Error, Result};
use crate::model::{ParamPoint, PositiveCounts, StudyDesign};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const SET_FORMAT: &str = "serocs-confidence-set";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

fn parse_err(location: impl Into<Option<String>>, message: impl Into<String>) -> Error {
    Error::Parse {
        location: location.into(),
        message: message.into(),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Shortest round-trip form, with an exponent for very small or large values.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x:?}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// confidence sets

#[derive(Serialize, Deserialize)]
struct SetDocument {
    format: String,
    version: String,
    #[serde(flatten)]
    set: ConfidenceSet,
}

pub fn confset_to_json(set: &ConfidenceSet) -> Result<String> {
    let doc = SetDocument {
        format: SET_FORMAT.into(),
        version: TOOL_VERSION.into(),
        set: set.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

pub fn confset_to_csv(set: &ConfidenceSet) -> Result<String> {
    let d = &set.design;
    let o = &set.observed;
    let mut out = String::new();
    out.push_str(&format!("# format={SET_FORMAT}\n# version={TOOL_VERSION}\n"));
    out.push_str(&format!("# dataset={}\n", set.dataset));
    out.push_str(&format!("# design={},{},{}\n", d.n_cal_neg, d.n_cal_pos, d.n_main));
    out.push_str(&format!("# observed={},{},{}\n", o.s_cal_neg, o.s_cal_pos, o.s_main));
    out.push_str(&format!(
        "# alpha={}\n# method={}\n# prune_tol={}\n",
        set.alpha, set.method, set.prune_tol
    ));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "p",
        "q",
        "k",
        "pi",
        "evidence_basic",
        "evidence_alt",
        "in_basic",
        "in_alt",
        "mass_deficit",
    ])?;
    for r in &set.records {
        w.write_record([
            num(r.theta.p),
            num(r.theta.q),
            r.theta.k.to_string(),
            num(r.theta.prevalence(d)),
            opt(r.evidence_basic),
            opt(r.evidence_alt),
            r.in_basic.to_string(),
            r.in_alt.to_string(),
            num(r.mass_deficit),
        ])?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    Ok(out)
}

pub fn write_confset(set: &ConfidenceSet, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => confset_to_csv(set)?,
        Format::Json => confset_to_json(set)?,
    };
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

fn triple(value: &str, key: &str) -> Result<[u32; 3]> {
    let parts: Vec<u32> = value
        .split(',')
        .map(|v| v.trim().parse::<u32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| {
            parse_err(
                format!("header {key}"),
                format!("expected three integers, got `{value}`"),
            )
        })?;
    parts.try_into().map_err(|_| {
        parse_err(
            format!("header {key}"),
            format!("expected three integers, got `{value}`"),
        )
    })
}

fn parse_f64(v: &str, loc: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| parse_err(loc.to_string(), format!("bad number `{v}`")))
}

fn parse_opt(v: &str, loc: &str) -> Result<Option<f64>> {
    if v.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(v, loc).map(Some)
    }
}

fn parse_bool(v: &str, loc: &str) -> Result<bool> {
    v.trim()
        .parse()
        .map_err(|_| parse_err(loc.to_string(), format!("bad flag `{v}`")))
}

pub fn confset_from_csv(text: &str) -> Result<ConfidenceSet> {
    let mut meta = std::collections::BTreeMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line[1..].trim().split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let get = |k: &str| {
        meta.get(k)
            .cloned()
            .ok_or_else(|| parse_err(None, format!("missing `# {k}=` header line")))
    };
    if get("format")? != SET_FORMAT {
        return Err(parse_err(None, "not a confidence-set file"));
    }
    let [n_cal_neg, n_cal_pos, n_main] = triple(&get("design")?, "design")?;
    let [s_cal_neg, s_cal_pos, s_main] = triple(&get("observed")?, "observed")?;
    let design = StudyDesign::new(n_cal_neg, n_cal_pos, n_main)?;
    let observed = PositiveCounts::new(s_cal_neg, s_cal_pos, s_main);
    let alpha = parse_f64(&get("alpha")?, "header alpha")?;
    let prune_tol = parse_f64(&get("prune_tol")?, "header prune_tol")?;
    let method: Method = serde_json::from_value(serde_json::Value::String(get("method")?))
        .map_err(|_| parse_err("header method".to_string(), "unknown method"))?;

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let loc = format!("line {}", row.position().map(|p| p.line()).unwrap_or(i as u64 + 2));
        if row.len() != 9 {
            return Err(parse_err(loc, format!("expected 9 fields, found {}", row.len())));
        }
        let k: u32 = row[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(loc.clone(), format!("bad count `{}`", &row[2])))?;
        let theta = ParamPoint::new(parse_f64(&row[0], &loc)?, parse_f64(&row[1], &loc)?, k)?;
        records.push(PointEvidence {
            theta,
            evidence_basic: parse_opt(&row[4], &loc)?,
            evidence_alt: parse_opt(&row[5], &loc)?,
            in_basic: parse_bool(&row[6], &loc)?,
            in_alt: parse_bool(&row[7], &loc)?,
            mass_deficit: parse_f64(&row[8], &loc)?,
        });
    }
    let grid = grid_of(&records)?;
    if grid.len() != records.len() || grid.points().zip(&records).any(|(g, r)| g != r.theta) {
        return Err(parse_err(None, "rows do not form a complete grid in (p, q, k) order"));
    }
    Ok(ConfidenceSet {
        dataset: get("dataset")?,
        design,
        observed,
        alpha,
        method,
        prune_tol,
        grid,
        records,
    })
}

fn grid_of(records: &[PointEvidence]) -> Result<ParamGrid> {
    ParamGrid::new(
        records.iter().map(|r| r.theta.p).collect(),
        records.iter().map(|r| r.theta.q).collect(),
        records.iter().map(|r| r.theta.k).collect(),
    )
}

pub fn confset_from_json(text: &str) -> Result<ConfidenceSet> {
    let doc: SetDocument = serde_json::from_str(text)?;
    if doc.format != SET_FORMAT {
        return Err(parse_err(None, "not a confidence-set file"));
    }
    let set = doc.set;
    if set.grid.len() != set.records.len() {
        return Err(parse_err(None, "record count does not match the grid"));
    }
    Ok(set)
}

/// Reads a saved confidence set, detecting the format from the content.
pub fn read_confset(path: &Path) -> Result<ConfidenceSet> {
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        confset_from_json(&text)
    } else {
        confset_from_csv(&text)
    }
}

// ---------------------------------------------------------------------------
// baselines

pub fn chain_to_csv(chain: &Chain) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "psi0", "psi1", "psi2", "loglik", "accepted"])?;
    for (i, s) in chain.samples.iter().enumerate() {
        let it = chain.burn_in + i;
        w.write_record([
            it.to_string(),
            num(s.psi0),
            num(s.psi1),
            num(s.psi2),
            num(chain.loglik_trace[it]),
            chain.accepted[it].to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8"))
}

/// Every iteration, burn-in included.
pub fn trace_to_csv(chain: &Chain) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "loglik", "accepted"])?;
    for (i, (ll, acc)) in chain.loglik_trace.iter().zip(&chain.accepted).enumerate() {
        w.write_record([i.to_string(), num(*ll), acc.to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8"))
}

pub fn lrt_to_csv(results: &[LrtResult], design: &StudyDesign) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["p", "q", "k", "pi", "t_obs", "pvalue", "reject"])?;
    for r in results {
        w.write_record([
            num(r.theta.p),
            num(r.theta.q),
            r.theta.k.to_string(),
            num(r.theta.prevalence(design)),
            num(r.t_obs),
            num(r.pvalue),
            r.reject.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8"))
}

pub fn mc_confset_to_csv(set: &McConfidenceSet) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["p", "q", "k", "pi", "likelihood", "member"])?;
    for (i, theta) in set.grid.points().enumerate() {
        w.write_record([
            num(theta.p),
            num(theta.q),
            theta.k.to_string(),
            num(theta.k as f64 / set.n_main as f64),
            num(set.likelihood[i]),
            set.members[i].to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("utf-8"))
}

/// Reads LRT points from a CSV with at least `p,q` and either `k` or `pi`.
pub fn read_points(text: &str, design: &StudyDesign) -> Result<Vec<ParamPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (p, q) = match (col("p"), col("q")) {
        (Some(p), Some(q)) => (p, q),
        _ => return Err(parse_err("header".to_string(), "point file needs p and q columns")),
    };
    let (k, pi) = (col("k"), col("pi"));
    if k.is_none() && pi.is_none() {
        return Err(parse_err("header".to_string(), "point file needs a k or pi column"));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let loc = format!("line {}", row.position().map(|p| p.line()).unwrap_or(0));
        let pv = parse_f64(&row[p], &loc)?;
        let qv = parse_f64(&row[q], &loc)?;
        let theta = match k {
            Some(k) => ParamPoint::new(
                pv,
                qv,
                row[k]
                    .parse()
                    .map_err(|_| parse_err(loc.clone(), format!("bad count `{}`", &row[k])))?,
            )?,
            None => ParamPoint::from_prevalence(pv, qv, parse_f64(&row[pi.unwrap()], &loc)?, design)?,
        };
        design.check_theta(&theta)?;
        out.push(theta);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confset::scan_grid;
    use crate::data::builtin_dataset;

    fn small_set() -> ConfidenceSet {
        let d = builtin_dataset("santa-clara").unwrap();
        let grid = ParamGrid::new(vec![0.005, 0.01], vec![0.85, 0.9], vec![0, 20, 40, 80]).unwrap();
        scan_grid(&grid, &d, 0.05, Method::Both, 1).unwrap()
    }

    #[test]
    fn numbers_round_trip_in_short_form() {
        for x in [0.0, 1.0, 0.05, 1e-5, 2.7885396695158114e-268, -3.5e-9, 1e300, 0.1 + 0.2] {
            let s = num(x);
            assert!(s.len() < 26, "{s}");
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(2.5e-10), "2.5e-10");
    }

    #[test]
    fn csv_round_trip() {
        let set = small_set();
        let text = confset_to_csv(&set).unwrap();
        assert_eq!(confset_from_csv(&text).unwrap(), set);
    }

    #[test]
    fn json_round_trip() {
        let set = small_set();
        let text = confset_to_json(&set).unwrap();
        assert_eq!(confset_from_json(&text).unwrap(), set);
    }

    #[test]
    fn csv_rejects_truncated_rows() {
        let set = small_set();
        let text = confset_to_csv(&set).unwrap();
        let cut: String = text
            .lines()
            .take(text.lines().count() - 2)
            .collect::<Vec<_>>()
            .join("\n");
        assert!(confset_from_csv(&cut).is_err());
        assert!(confset_from_csv("p,q\n1,2\n").is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, |w| Ok(w.write_all(b"one")?)).unwrap();
        write_atomic(&path, |w| Ok(w.write_all(b"two")?)).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        let failed = write_atomic(&path, |_| Err(Error::Domain("stop".into())));
        assert!(failed.is_err());
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn point_files() {
        let design = StudyDesign::new(401, 197, 3330).unwrap();
        let pts = read_points("p,q,pi\n0.005,0.9,0.012\n", &design).unwrap();
        assert_eq!(pts[0].k, 40);
        let pts = read_points("p,q,k\n0.005,0.9,39\n", &design).unwrap();
        assert_eq!(pts[0].k, 39);
        assert!(read_points("p,k\n0.1,3\n", &design).is_err());
    }
}
