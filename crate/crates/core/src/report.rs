//! Experiment results: one record per (approach, repetition), aggregation
//! into mean and standard deviation, and the text/CSV renderings. The text
//! table replaces unusable scores with ">>1" / "<<0" markers while the CSV
//! always keeps raw numbers.

use crate::dataset::format_f64;
use crate::experiment::Approach;
use crate::metrics::ScoreReport;

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub approach: Approach,
    pub repetition: usize,
    pub init_seed: u64,
    pub train_seed: u64,
    /// "cholesky" when the regularized Gram matrix factorized, "lu" when the
    /// indefinite fallback solved the same system.
    pub solver: String,
    pub train_skipped: usize,
    pub best_smoothed_rho: f64,
    pub outcome: Result<ScoreReport, String>,
}

#[derive(Clone, Debug)]
pub struct ApproachAggregate {
    pub approach: Approach,
    pub n_ok: usize,
    pub n_total: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub r2_mean: f64,
    pub r2_std: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub system_label: String,
    pub records: Vec<RunRecord>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ExperimentReport {
    pub fn aggregates(&self) -> Vec<ApproachAggregate> {
        let mut order: Vec<Approach> = Vec::new();
        for r in &self.records {
            if !order.contains(&r.approach) {
                order.push(r.approach);
            }
        }
        order
            .into_iter()
            .map(|a| {
                let rows: Vec<&RunRecord> =
                    self.records.iter().filter(|r| r.approach == a).collect();
                let ok: Vec<&ScoreReport> =
                    rows.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
                let (mse_mean, mse_std) =
                    mean_std(&ok.iter().map(|s| s.mse).collect::<Vec<_>>());
                let (r2_mean, r2_std) = mean_std(&ok.iter().map(|s| s.r2).collect::<Vec<_>>());
                ApproachAggregate {
                    approach: a,
                    n_ok: ok.len(),
                    n_total: rows.len(),
                    mse_mean,
                    mse_std,
                    r2_mean,
                    r2_std,
                }
            })
            .collect()
    }

    pub fn median_mse(&self, approach: Approach) -> Option<f64> {
        median(
            self.records
                .iter()
                .filter(|r| r.approach == approach)
                .filter_map(|r| r.outcome.as_ref().ok().map(|s| s.mse)),
        )
    }

    pub fn median_r2(&self, approach: Approach) -> Option<f64> {
        median(
            self.records
                .iter()
                .filter(|r| r.approach == approach)
                .filter_map(|r| r.outcome.as_ref().ok().map(|s| s.r2)),
        )
    }
}

fn median(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(v[v.len() / 2])
}

/// Aligned plain-text table of mean ± std per approach. Scores beyond the
/// reporting range are abbreviated; exact numbers stay in the CSV.
pub fn emit_table(report: &ExperimentReport) -> String {
    let mut out = format!(
        "{:<10} {:>20} {:>20} {:>8}\n",
        "approach", "mse", "r2", "runs"
    );
    for agg in report.aggregates() {
        let mse = if agg.n_ok == 0 {
            "failed".to_string()
        } else if agg.mse_mean > 1.0 {
            ">>1".to_string()
        } else {
            format!("{:.3} \u{b1} {:.3}", agg.mse_mean, agg.mse_std)
        };
        let r2 = if agg.n_ok == 0 {
            "failed".to_string()
        } else if agg.r2_mean < 0.0 {
            "<<0".to_string()
        } else {
            format!("{:.3} \u{b1} {:.3}", agg.r2_mean, agg.r2_std)
        };
        out.push_str(&format!(
            "{:<10} {:>20} {:>20} {:>8}\n",
            format!("{} ({})", agg.approach.label(), agg.approach.short_name()),
            mse,
            r2,
            format!("{}/{}", agg.n_ok, agg.n_total)
        ));
    }
    out
}

pub const REPORT_CSV_HEADER: &str = "system,approach,repetition,status,mse,r2,n_scored,\
n_divergent,solver,train_skipped,best_smoothed_rho,init_seed,train_seed,message";

/// Raw per-repetition rows.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in &report.records {
        let (status, mse, r2, scored, divergent, message) = match &r.outcome {
            Ok(s) => (
                "ok",
                format_f64(s.mse),
                format_f64(s.r2),
                s.n_scored.to_string(),
                s.n_divergent.to_string(),
                String::new(),
            ),
            Err(e) => (
                "error",
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.replace(',', ";"),
            ),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            report.system_label,
            r.approach.label(),
            r.repetition,
            status,
            mse,
            r2,
            scored,
            divergent,
            r.solver,
            r.train_skipped,
            format_f64(r.best_smoothed_rho),
            r.init_seed,
            r.train_seed,
            message,
        ));
    }
    out
}

/// Aggregate means and standard deviations, raw.
pub fn aggregate_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("approach,n_ok,n_total,mse_mean,mse_std,r2_mean,r2_std\n");
    for a in report.aggregates() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            a.approach.label(),
            a.n_ok,
            a.n_total,
            format_f64(a.mse_mean),
            format_f64(a.mse_std),
            format_f64(a.r2_mean),
            format_f64(a.r2_std),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(approach: Approach, repetition: usize, mse: f64, r2: f64) -> RunRecord {
        RunRecord {
            approach,
            repetition,
            init_seed: 1,
            train_seed: 2,
            solver: "cholesky".into(),
            train_skipped: 0,
            best_smoothed_rho: 0.5,
            outcome: Ok(ScoreReport { mse, r2, n_scored: 10, n_divergent: 0 }),
        }
    }

    #[test]
    fn single_run_formats_with_zero_std() {
        let report = ExperimentReport {
            system_label: "henon".into(),
            records: vec![record(Approach::A, 0, 0.5, 0.2)],
        };
        let table = emit_table(&report);
        assert!(table.contains("0.500 \u{b1} 0.000"), "{table}");
        assert!(table.contains("0.200 \u{b1} 0.000"), "{table}");
    }

    #[test]
    fn large_mse_is_abbreviated_in_text_but_raw_in_csv() {
        let report = ExperimentReport {
            system_label: "henon".into(),
            records: vec![record(Approach::E, 0, 3.7, -2.0)],
        };
        let table = emit_table(&report);
        assert!(table.contains(">>1"), "{table}");
        assert!(table.contains("<<0"), "{table}");
        let csv = report_csv(&report);
        assert!(csv.contains(&format_f64(3.7)), "{csv}");
        assert!(csv.contains(&format_f64(-2.0)), "{csv}");
    }

    #[test]
    fn empty_report_is_header_only() {
        let report = ExperimentReport { system_label: "henon".into(), records: vec![] };
        let table = emit_table(&report);
        assert_eq!(table.lines().count(), 1);
        assert_eq!(report_csv(&report).lines().count(), 1);
        assert_eq!(aggregate_csv(&report).lines().count(), 1);
    }

    #[test]
    fn aggregates_match_recomputation_from_rows() {
        let report = ExperimentReport {
            system_label: "lorenz".into(),
            records: vec![
                record(Approach::A, 0, 0.1, 0.9),
                record(Approach::A, 1, 0.3, 0.7),
                record(Approach::A, 2, 0.2, 0.8),
            ],
        };
        let agg = &report.aggregates()[0];
        let values = [0.1, 0.3, 0.2];
        let mean: f64 = values.iter().sum::<f64>() / 3.0;
        let std =
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 2.0).sqrt();
        assert!((agg.mse_mean - mean).abs() < 1e-12);
        assert!((agg.mse_std - std).abs() < 1e-12);
    }

    #[test]
    fn failed_runs_are_excluded_from_aggregates() {
        let mut bad = record(Approach::B, 1, 0.0, 0.0);
        bad.outcome = Err("training aborted".into());
        let report = ExperimentReport {
            system_label: "vdp".into(),
            records: vec![record(Approach::B, 0, 0.4, 0.1), bad],
        };
        let agg = &report.aggregates()[0];
        assert_eq!(agg.n_ok, 1);
        assert_eq!(agg.n_total, 2);
        assert!((agg.mse_mean - 0.4).abs() < 1e-15);
    }

    #[test]
    fn medians_ignore_failures() {
        let mut bad = record(Approach::A, 3, 9.0, -9.0);
        bad.outcome = Err("x".into());
        let report = ExperimentReport {
            system_label: "henon".into(),
            records: vec![
                record(Approach::A, 0, 0.3, 0.5),
                record(Approach::A, 1, 0.1, 0.9),
                record(Approach::A, 2, 0.2, 0.7),
                bad,
            ],
        };
        assert_eq!(report.median_mse(Approach::A), Some(0.2));
        assert_eq!(report.median_r2(Approach::A), Some(0.7));
        assert_eq!(report.median_r2(Approach::C), None);
    }
}
