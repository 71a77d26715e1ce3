use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_EQ_TOL: f64 = 1e-3;

/// Outcome of a numerical check. `pass` is exactly `margin >= -tol`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MarginReport {
    pub name: String,
    #[serde(with = "crate::serial::ext")]
    pub lhs: f64,
    #[serde(with = "crate::serial::ext")]
    pub rhs: f64,
    #[serde(with = "crate::serial::ext")]
    pub margin: f64,
    pub tol: f64,
    pub pass: bool,
    pub equality_detected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty", with = "crate::serial::ext_map")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty", with = "crate::serial::ext_vec")]
    pub components: Vec<f64>,
}

impl MarginReport {
    /// margin = lhs - rhs.
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64, eq_tol: f64) -> Self {
        let margin = if lhs == f64::INFINITY && rhs.is_finite() {
            f64::INFINITY
        } else {
            lhs - rhs
        };
        Self::with_margin(name, lhs, rhs, margin, tol, eq_tol)
    }

    pub fn with_margin(
        name: impl Into<String>,
        lhs: f64,
        rhs: f64,
        margin: f64,
        tol: f64,
        eq_tol: f64,
    ) -> Self {
        MarginReport {
            name: name.into(),
            lhs,
            rhs,
            margin,
            tol,
            pass: margin >= -tol,
            equality_detected: margin.abs() <= eq_tol,
            witness: None,
            params: BTreeMap::new(),
            components: Vec::new(),
        }
    }

    pub fn witness(mut self, w: impl Into<String>) -> Self {
        self.witness = Some(w.into());
        self
    }

    pub fn param(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.to_string(), v);
        self
    }

    pub fn components(mut self, c: Vec<f64>) -> Self {
        self.components = c;
        self
    }

    /// Forces a failing verdict regardless of margin (precondition failures).
    pub fn fail(mut self, why: impl Into<String>) -> Self {
        self.pass = false;
        self.equality_detected = false;
        self.witness = Some(why.into());
        self
    }

    pub fn csv_header() -> &'static str {
        "name,lhs,rhs,margin,pass"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.name,
            fmt_ext(self.lhs),
            fmt_ext(self.rhs),
            fmt_ext(self.margin),
            self.pass
        )
    }
}

pub(crate) fn fmt_ext(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn reports_to_csv(reports: &[MarginReport]) -> String {
    let mut s = String::from(MarginReport::csv_header());
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_is_margin_against_tol() {
        let r = MarginReport::new("x", 1.0, 1.0 + 1e-7, 1e-6, 1e-3);
        assert!(r.pass);
        assert!(r.equality_detected);
        let r = MarginReport::new("x", 1.0, 1.1, 1e-6, 1e-3);
        assert!(!r.pass);
        assert!(!r.equality_detected);
    }

    #[test]
    fn infinite_values_round_trip_through_json() {
        let r = MarginReport::new("div", f64::INFINITY, 2.0, 1e-6, 1e-3).param("k", f64::INFINITY);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"inf\""));
        let back: MarginReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
