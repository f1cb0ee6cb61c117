//! Run records, output files and baseline comparison.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiments::{lookup, Outcome};

pub const RECORDS_HEADER: &str = "config_hash,seed,metric,value,grid_n,wall_ms";

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub config_hash: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub grid_n: usize,
    pub wall_ms: u64,
}

impl ResultRecord {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:?},{},{}",
            self.config_hash, self.seed, self.metric, self.value, self.grid_n, self.wall_ms
        )
    }

    pub fn parse(line: &str, lineno: usize) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        let perr = |reason: &str| Error::Parse {
            line: lineno,
            reason: reason.into(),
        };
        if f.len() != 6 {
            return Err(perr("expected 6 comma-separated fields"));
        }
        Ok(ResultRecord {
            config_hash: f[0].to_string(),
            seed: f[1].parse().map_err(|_| perr("bad seed"))?,
            metric: f[2].to_string(),
            value: f[3].parse().map_err(|_| perr("bad value"))?,
            grid_n: f[4].parse().map_err(|_| perr("bad grid_n"))?,
            wall_ms: f[5].parse().map_err(|_| perr("bad wall_ms"))?,
        })
    }
}

pub fn read_records(text: &str) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == RECORDS_HEADER {
            continue;
        }
        out.push(ResultRecord::parse(line, i + 1)?);
    }
    Ok(out)
}

/// One finished run.
#[derive(Clone, Debug)]
pub struct Run {
    pub config: ExperimentConfig,
    pub hash: String,
    pub outcome: Outcome,
    pub records: Vec<ResultRecord>,
}

impl Run {
    pub fn passed(&self) -> bool {
        self.outcome.passed()
    }

    /// Nested key-value summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "kind = {}", self.config.kind);
        let _ = writeln!(s, "config_hash = {}", self.hash);
        let _ = writeln!(s, "seed = {}", self.config.seed);
        let _ = writeln!(s, "grid_n = {}", self.config.grid.n);
        let _ = writeln!(s, "passed = {}", self.passed());
        let _ = writeln!(s, "\n[metrics]");
        for (k, v) in &self.outcome.metrics {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        let _ = writeln!(s, "\n[checks]");
        for c in &self.outcome.checks {
            let _ = writeln!(s, "{}.passed = {}", c.name, c.passed);
            let _ = writeln!(s, "{}.detail = \"{}\"", c.name, c.detail.replace('"', "'"));
        }
        s
    }
}

pub fn run(config: &ExperimentConfig) -> Result<Run> {
    config.validate()?;
    let exp = lookup(&config.kind)?;
    let start = Instant::now();
    let outcome = exp.run(config)?;
    let wall_ms = start.elapsed().as_millis() as u64;
    let hash = config.hash();
    let records = outcome
        .metrics
        .iter()
        .map(|(m, v)| ResultRecord {
            config_hash: hash.clone(),
            seed: config.seed,
            metric: m.clone(),
            value: *v,
            grid_n: config.grid.n,
            wall_ms,
        })
        .collect();
    Ok(Run {
        config: config.clone(),
        hash,
        outcome,
        records,
    })
}

fn append(path: &Path, header: &str, body: &str) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    f.write_all(body.as_bytes())?;
    Ok(())
}

/// Appends `records.csv` and every table `<kind>.<table>.csv`; rewrites `summary.txt`.
pub fn write_run(dir: &Path, r: &Run) -> Result<()> {
    fs::create_dir_all(dir)?;
    let body: String = r.records.iter().map(|x| x.to_csv() + "\n").collect();
    append(&dir.join("records.csv"), RECORDS_HEADER, &body)?;
    for (name, csv) in &r.outcome.tables {
        let (header, rows) = csv.split_once('\n').unwrap_or((csv.as_str(), ""));
        append(&dir.join(format!("{}.{name}.csv", r.config.kind)), header, rows)?;
    }
    fs::write(dir.join("summary.txt"), r.summary())?;
    Ok(())
}

/// Per-metric relative drift between two record sets.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftReport {
    pub seed_changed: bool,
    pub grid: (usize, usize),
    /// `(metric, baseline, current, relative drift)`.
    pub drifts: Vec<(String, f64, f64, f64)>,
    pub missing: Vec<String>,
    pub budget: f64,
}

impl DriftReport {
    pub fn breaches(&self) -> Vec<&(String, f64, f64, f64)> {
        self.drifts.iter().filter(|d| !(d.3 <= self.budget)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if self.seed_changed {
            let _ = writeln!(s, "seed changed: new baseline required");
            return s;
        }
        let _ = writeln!(s, "grid {} -> {}, budget {}", self.grid.0, self.grid.1, self.budget);
        let _ = writeln!(s, "metric,baseline,current,drift");
        for (m, a, b, d) in &self.drifts {
            let _ = writeln!(s, "{m},{a:?},{b:?},{d:.6}");
        }
        for m in &self.missing {
            let _ = writeln!(s, "missing {m}");
        }
        for (m, _, _, d) in self.breaches() {
            let _ = writeln!(s, "BREACH {m} {d:.4}");
        }
        s
    }
}

/// `|b - a| / |a|`, zero when both vanish.
pub fn relative_drift(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if a == 0.0 {
        f64::INFINITY
    } else {
        (b - a).abs() / a.abs()
    }
}

/// Compares the last run in each record set. Metrics in `only` (all when
/// empty) are checked against `budget`.
pub fn compare(baseline: &[ResultRecord], current: &[ResultRecord], budget: f64, only: &[&str]) -> Result<DriftReport> {
    let last = |rs: &[ResultRecord]| -> Result<Vec<ResultRecord>> {
        let tail = rs.last().ok_or_else(|| Error::Config("empty record set".into()))?;
        let key = (tail.config_hash.clone(), tail.seed, tail.grid_n, tail.wall_ms);
        let mut run: Vec<ResultRecord> = rs
            .iter()
            .rev()
            .take_while(|r| (r.config_hash.clone(), r.seed, r.grid_n, r.wall_ms) == key)
            .cloned()
            .collect();
        run.reverse();
        Ok(run)
    };
    let (a, b) = (last(baseline)?, last(current)?);
    if a[0].config_hash != b[0].config_hash {
        return Err(Error::Config(format!("config hash mismatch: {} vs {}", a[0].config_hash, b[0].config_hash)));
    }
    let mut rep = DriftReport {
        seed_changed: a[0].seed != b[0].seed,
        grid: (a[0].grid_n, b[0].grid_n),
        drifts: Vec::new(),
        missing: Vec::new(),
        budget,
    };
    if rep.seed_changed {
        return Ok(rep);
    }
    for r in &a {
        if !only.is_empty() && !only.contains(&r.metric.as_str()) {
            continue;
        }
        match b.iter().find(|x| x.metric == r.metric) {
            Some(x) => rep.drifts.push((r.metric.clone(), r.value, x.value, relative_drift(r.value, x.value))),
            None => rep.missing.push(r.metric.clone()),
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(hash: &str, seed: u64, metric: &str, value: f64, n: usize) -> ResultRecord {
        ResultRecord {
            config_hash: hash.into(),
            seed,
            metric: metric.into(),
            value,
            grid_n: n,
            wall_ms: 5,
        }
    }

    #[test]
    fn record_roundtrip() {
        let r = rec("ab", 3, "m", 0.1 + 0.2, 512);
        let back = read_records(&format!("{RECORDS_HEADER}\n{}\n", r.to_csv())).unwrap();
        assert_eq!(back, vec![r]);
        assert!(read_records("a,b\n").is_err());
    }

    #[test]
    fn identical_runs_have_zero_drift() {
        let a = vec![rec("h", 0, "x", 2.0, 512), rec("h", 0, "y", 0.0, 512)];
        let d = compare(&a, &a, 0.2, &[]).unwrap();
        assert!(d.drifts.iter().all(|x| x.3 == 0.0));
        assert!(d.breaches().is_empty());
    }

    #[test]
    fn drift_breach_and_filter() {
        let a = vec![rec("h", 0, "x", 2.0, 512), rec("h", 0, "y", 1.0, 512)];
        let b = vec![rec("h", 0, "x", 2.2, 1024), rec("h", 0, "y", 2.0, 1024)];
        let d = compare(&a, &b, 0.2, &[]).unwrap();
        assert_eq!(d.breaches().len(), 1);
        assert_eq!(d.breaches()[0].0, "y");
        let d = compare(&a, &b, 0.2, &["x"]).unwrap();
        assert!(d.breaches().is_empty());
    }

    #[test]
    fn hash_mismatch_and_seed_change() {
        let a = vec![rec("h", 0, "x", 1.0, 512)];
        assert!(compare(&a, &[rec("g", 0, "x", 1.0, 512)], 0.2, &[]).is_err());
        let d = compare(&a, &[rec("h", 1, "x", 5.0, 512)], 0.2, &[]).unwrap();
        assert!(d.seed_changed && d.drifts.is_empty());
        assert!(d.to_text().contains("new baseline"));
    }

    #[test]
    fn last_run_is_compared() {
        let mut a = vec![rec("h", 0, "x", 9.0, 512)];
        a[0].wall_ms = 1;
        a.push(rec("h", 0, "x", 1.0, 512));
        let d = compare(&a, &[rec("h", 0, "x", 1.0, 1024)], 0.2, &[]).unwrap();
        assert_eq!(d.drifts[0].3, 0.0);
    }

    #[test]
    fn run_and_write() {
        let mut c = ExperimentConfig {
            kind: "tiles".into(),
            ..Default::default()
        };
        c.tiles.collections = 2;
        let r = run(&c).unwrap();
        assert!(r.passed());
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &r).unwrap();
        write_run(dir.path(), &r).unwrap();
        let text = fs::read_to_string(dir.path().join("records.csv")).unwrap();
        assert_eq!(text.lines().filter(|l| *l == RECORDS_HEADER).count(), 1);
        assert_eq!(read_records(&text).unwrap().len(), 2 * r.records.len());
        let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(summary.contains("[metrics]") && summary.contains("passed = true"));
        assert!(dir.path().join("tiles.collections.csv").exists());
    }

    #[test]
    fn invalid_config_is_rejected_before_running() {
        let mut c = ExperimentConfig::default();
        c.scan.triples = vec![[2.0, 2.0, 2.0]];
        assert!(matches!(run(&c), Err(Error::Config(_))));
        c = ExperimentConfig {
            kind: "nope".into(),
            ..Default::default()
        };
        assert!(matches!(run(&c), Err(Error::Unknown { .. })));
    }
}
