//! Test reports, suites and their text/CSV renderings.

use std::fmt::Write;

pub const CSV_HEADER: &str = "name,n,N,statistic,p_or_err,threshold,verdict,seed,seconds";

/// Renders a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measure {
    /// Passes when `p ≥ threshold`.
    PValue(f64),
    /// Passes when `err ≤ threshold`.
    AbsError(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub name: String,
    pub params: Vec<(String, String)>,
    /// Model size parameter, when there is one.
    pub n: Option<u64>,
    pub sample_size: u64,
    pub statistic: f64,
    pub measure: Measure,
    pub threshold: f64,
    pub seed: Option<u64>,
    pub seconds: Option<f64>,
    pub notes: Vec<String>,
}

impl TestReport {
    pub fn p_value(name: impl Into<String>, statistic: f64, p: f64, threshold: f64) -> Self {
        Self::build(name.into(), statistic, Measure::PValue(p), threshold)
    }

    pub fn abs_error(name: impl Into<String>, statistic: f64, err: f64, threshold: f64) -> Self {
        Self::build(name.into(), statistic, Measure::AbsError(err), threshold)
    }

    fn build(name: String, statistic: f64, measure: Measure, threshold: f64) -> Self {
        TestReport { name, params: Vec::new(), n: None, sample_size: 0, statistic, measure, threshold, seed: None, seconds: None, notes: Vec::new() }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.into(), value.to_string()));
        self
    }

    pub fn with_n(mut self, n: u64) -> Self {
        self.n = Some(n);
        self
    }

    pub fn with_sample_size(mut self, size: u64) -> Self {
        self.sample_size = size;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }

    pub fn value(&self) -> f64 {
        match self.measure {
            Measure::PValue(p) | Measure::AbsError(p) => p,
        }
    }

    pub fn verdict(&self) -> Verdict {
        let ok = match self.measure {
            Measure::PValue(p) => p >= self.threshold,
            Measure::AbsError(e) => e <= self.threshold,
        };
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict() == Verdict::Pass
    }

    /// One structured record line.
    pub fn record(&self, timing: bool) -> String {
        let mut s = String::new();
        write!(s, "REPORT name={} kind={}", self.name, if matches!(self.measure, Measure::PValue(_)) { "p" } else { "err" }).unwrap();
        if let Some(n) = self.n {
            write!(s, " n={n}").unwrap();
        }
        write!(
            s,
            " N={} statistic={} p_or_err={} threshold={} verdict={}",
            self.sample_size,
            fmt17(self.statistic),
            fmt17(self.value()),
            fmt17(self.threshold),
            self.verdict().as_str()
        )
        .unwrap();
        if let Some(seed) = self.seed {
            write!(s, " seed={seed}").unwrap();
        }
        write!(s, " seconds={}", self.seconds_text(timing)).unwrap();
        for (k, v) in &self.params {
            write!(s, " {k}={v}").unwrap();
        }
        for n in &self.notes {
            write!(s, " note=\"{}\"", n.replace('"', "'")).unwrap();
        }
        s
    }

    fn seconds_text(&self, timing: bool) -> String {
        match (timing, self.seconds) {
            (true, Some(t)) => format!("{t:.3}"),
            _ => "NA".into(),
        }
    }

    pub fn csv_row(&self, timing: bool) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.name,
            self.n.map(|n| n.to_string()).unwrap_or_default(),
            self.sample_size,
            fmt17(self.statistic),
            fmt17(self.value()),
            fmt17(self.threshold),
            self.verdict().as_str(),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            self.seconds_text(timing)
        )
    }
}

/// Bonferroni-corrected per-test level.
pub fn bonferroni(alpha: f64, tests: usize) -> f64 {
    alpha / tests.max(1) as f64
}

/// A group of oracle comparisons together with power companions that must
/// reject their deliberately perturbed nulls.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub tests: Vec<TestReport>,
    pub power: Vec<TestReport>,
    pub notes: Vec<String>,
    pub seconds: Option<f64>,
}

impl SuiteReport {
    pub fn new(name: impl Into<String>) -> Self {
        SuiteReport { name: name.into(), tests: Vec::new(), power: Vec::new(), notes: Vec::new(), seconds: None }
    }

    pub fn passed(&self) -> bool {
        self.tests.iter().all(TestReport::passed) && self.power.iter().all(|t| !t.passed())
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self.tests.iter().filter(|t| !t.passed()).map(|t| t.name.clone()).collect();
        out.extend(self.power.iter().filter(|t| t.passed()).map(|t| format!("{} (power companion did not reject)", t.name)));
        out
    }

    pub fn extend(&mut self, other: SuiteReport) {
        self.tests.extend(other.tests);
        self.power.extend(other.power);
        self.notes.extend(other.notes);
    }

    /// Record lines: the suite header, its tests, then power companions.
    pub fn records(&self, timing: bool) -> String {
        let mut s = String::new();
        let secs = match (timing, self.seconds) {
            (true, Some(t)) => format!("{t:.3}"),
            _ => "NA".into(),
        };
        writeln!(s, "SUITE name={} verdict={} tests={} power={} seconds={secs}", self.name, if self.passed() { "pass" } else { "fail" }, self.tests.len(), self.power.len()).unwrap();
        for t in &self.tests {
            writeln!(s, "{}", t.record(timing)).unwrap();
        }
        for t in &self.power {
            writeln!(s, "POWER expect=fail {}", t.record(timing)).unwrap();
        }
        for n in &self.notes {
            writeln!(s, "NOTE {n}").unwrap();
        }
        s
    }

    pub fn csv(&self, timing: bool) -> String {
        let mut s = String::new();
        for t in &self.tests {
            writeln!(s, "{}", t.csv_row(timing)).unwrap();
        }
        for t in &self.power {
            let mut t = t.clone();
            t.name = format!("{}[power]", t.name);
            writeln!(s, "{}", t.csv_row(timing)).unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert!(TestReport::p_value("a", 1.0, 0.01, 0.001).passed());
        assert!(!TestReport::p_value("a", 1.0, 0.0001, 0.001).passed());
        assert!(TestReport::abs_error("b", 0.3, 0.005, 0.01).passed());
        let mut s = SuiteReport::new("s");
        s.tests.push(TestReport::p_value("a", 1.0, 0.5, 0.001));
        s.power.push(TestReport::p_value("a", 9.0, 1e-9, 0.001));
        assert!(s.passed());
        s.power.push(TestReport::p_value("c", 1.0, 0.5, 0.001));
        assert!(!s.passed());
        assert_eq!(s.failures().len(), 1);
    }

    #[test]
    fn csv_columns() {
        let r = TestReport::abs_error("height", 0.367, 1e-4, 0.01).with_n(1000).with_seed(7);
        let row = r.csv_row(false);
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
        assert!(row.ends_with(",NA"));
        assert!(r.record(false).contains("verdict=pass"));
    }
}
