use std::fmt::Write as _;

use infconv_core::{LossHistory, OracleResult};
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "infconv-report/1";
pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));
pub const CURVE_POINTS: usize = 401;

/// Rounds to 9 significant digits.
pub fn round9(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

/// Shortest text for `v` rounded to 9 significant digits.
pub fn fmt9(v: f64) -> String {
    format!("{}", round9(v))
}

fn round_all(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| round9(*x)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationCurve {
    pub x: Vec<f64>,
    pub phi1_mean: Vec<f64>,
    pub phi1_std: Vec<f64>,
    pub phi2_mean: Vec<f64>,
    pub phi2_std: Vec<f64>,
}

impl AllocationCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,phi1_mean,phi1_std,phi2_mean,phi2_std\n");
        for i in 0..self.x.len() {
            let row = [self.x[i], self.phi1_mean[i], self.phi1_std[i], self.phi2_mean[i], self.phi2_std[i]];
            let cells: Vec<String> = row.iter().map(|v| fmt9(*v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    fn rounded(mut self) -> Self {
        for v in [&mut self.x, &mut self.phi1_mean, &mut self.phi1_std, &mut self.phi2_mean, &mut self.phi2_std] {
            *v = round_all(v);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub value: f64,
    pub slopes: Vec<f64>,
    pub knots: Vec<f64>,
    pub resolution: (usize, usize),
    pub evaluations: u64,
}

impl From<&OracleResult> for OracleSummary {
    fn from(r: &OracleResult) -> Self {
        Self {
            value: round9(r.value),
            slopes: round_all(&r.slopes),
            knots: round_all(&r.knots),
            resolution: r.resolution,
            evaluations: r.evaluations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub version: String,
    pub name: String,
    pub activation: String,
    pub config: String,
    pub final_loss_mean: f64,
    pub final_loss_std: f64,
    pub member_final_losses: Vec<f64>,
    pub analytic_infimum: Option<f64>,
    pub relative_error_mean: Option<f64>,
    pub relative_error_std: Option<f64>,
    pub l2_error: Option<f64>,
    pub oracle: Option<OracleSummary>,
    pub allocation_curve: AllocationCurve,
}

impl ExperimentReport {
    /// Applies the 9-significant-digit rendering to every float.
    pub fn rounded(mut self) -> Self {
        self.final_loss_mean = round9(self.final_loss_mean);
        self.final_loss_std = round9(self.final_loss_std);
        self.member_final_losses = round_all(&self.member_final_losses);
        for v in [
            &mut self.analytic_infimum,
            &mut self.relative_error_mean,
            &mut self.relative_error_std,
            &mut self.l2_error,
        ] {
            *v = v.map(round9);
        }
        self.allocation_curve = self.allocation_curve.rounded();
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// `epoch,mean_loss,std_loss,lr`, epochs numbered from 1.
pub fn loss_history_csv(history: &LossHistory) -> String {
    let mut s = String::from("epoch,mean_loss,std_loss,lr\n");
    for e in 0..history.epochs() {
        let _ = writeln!(s, "{},{},{},{}", e + 1, fmt9(history.mean[e]), fmt9(history.std[e]), fmt9(history.lr(e)));
    }
    s
}

/// Partial per-member histories after a failed run: the mean over the
/// members that reached each epoch; `lr` is left empty.
pub fn partial_history_csv(histories: &[Vec<f64>]) -> String {
    let mut s = String::from("epoch,mean_loss,std_loss,lr\n");
    let epochs = histories.iter().map(Vec::len).max().unwrap_or(0);
    for e in 0..epochs {
        let vals: Vec<f64> = histories.iter().filter_map(|h| h.get(e).copied()).collect();
        let (mean, std) = infconv_core::sharing::mean_std(vals.iter().copied());
        let _ = writeln!(s, "{},{},{},", e + 1, fmt9(mean), fmt9(std));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt9(0.123456789123), "0.123456789");
        assert_eq!(fmt9(1234567891234.0), "1234567890000");
        assert_eq!(fmt9(-2.0), "-2");
        assert_eq!(fmt9(0.0), "0");
        assert_eq!(fmt9(1.0 / 3.0), "0.333333333");
    }

    #[test]
    fn history_csv_layout() {
        let h = LossHistory::from_members(vec![vec![1.0, 0.5], vec![3.0, 0.5]], vec![vec![0.1, 0.1]; 2], vec![0.5, 0.5]);
        assert_eq!(loss_history_csv(&h), "epoch,mean_loss,std_loss,lr\n1,2,1,0.1\n2,0.5,0,0.1\n");
        assert_eq!(partial_history_csv(&[vec![1.0, 2.0], vec![3.0]]), "epoch,mean_loss,std_loss,lr\n1,2,1,\n2,2,0,\n");
    }
}
