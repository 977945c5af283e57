//! Run artifacts: per-round CSV logs and the final JSON report.
//!
//! CSV content is rendered through plain float formatting (shortest
//! round-trip), so equal runs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::orchestrator::{ExperimentReport, RoundRecord};
#[cfg(test)]
use crate::orchestrator::Stage;

/// Renders the per-round log. The epsilon column carries the refreshed
/// cluster's deviation in asynchronous steps and the largest cluster
/// deviation in synchronous rounds; it stays empty in flat mode.
pub fn render_rounds_csv(records: &[RoundRecord]) -> String {
    let mut out = String::from(
        "round,stage,mae,mse,eta,refreshed_cluster,epsilon,updated,flagged_total\n",
    );
    for rec in records {
        let eta = rec.eta.map(|e| e.to_string()).unwrap_or_default();
        let refreshed = rec
            .refreshed_cluster
            .map(|c| c.to_string())
            .unwrap_or_default();
        let epsilon = match rec.refreshed_cluster {
            Some(c) => rec.cluster_deviations.get(c).map(|e| e.to_string()),
            None => rec
                .cluster_deviations
                .iter()
                .copied()
                .max_by(f64::total_cmp)
                .map(|e| e.to_string()),
        }
        .unwrap_or_default();
        let flagged: u64 = rec.flags_per_ndt.iter().map(|&f| f as u64).sum();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            rec.round,
            rec.stage,
            rec.global_mae,
            rec.global_mse,
            eta,
            refreshed,
            epsilon,
            u8::from(rec.global_updated),
            flagged,
        );
    }
    out
}

pub fn write_rounds_csv(path: &Path, records: &[RoundRecord]) -> Result<()> {
    fs::write(path, render_rounds_csv(records))?;
    Ok(())
}

/// Renders per-contributor flag counts, one row per contributor per
/// round; benign NDTs come first, fakes after.
pub fn render_flags_csv(records: &[RoundRecord], num_benign: usize) -> String {
    let mut out = String::from("round,stage,contributor,role,flagged_dims\n");
    for rec in records {
        for (i, &count) in rec.flags_per_ndt.iter().enumerate() {
            let role = if i < num_benign { "benign" } else { "fake" };
            let _ = writeln!(out, "{},{},{},{},{}", rec.round, rec.stage, i, role, count);
        }
    }
    out
}

pub fn write_flags_csv(path: &Path, records: &[RoundRecord], num_benign: usize) -> Result<()> {
    fs::write(path, render_flags_csv(records, num_benign))?;
    Ok(())
}

pub fn render_report_json(report: &ExperimentReport) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report).map_err(std::io::Error::from)?;
    text.push('\n');
    Ok(text)
}

pub fn write_report_json(path: &Path, report: &ExperimentReport) -> Result<()> {
    fs::write(path, render_report_json(report)?)?;
    Ok(())
}

/// Reads a report back; reports echo their full config, so this is
/// enough to re-run or extend an earlier experiment.
pub fn read_report_json(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path)?;
    let report = serde_json::from_str(&text).map_err(std::io::Error::from)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> Vec<RoundRecord> {
        vec![
            RoundRecord {
                round: 0,
                stage: Stage::V,
                global_mae: 0.5,
                global_mse: 0.75,
                eta: Some(15.0),
                flags_per_ndt: vec![0, 2, 1],
                cluster_deviations: vec![0.25, 4.0],
                refreshed_cluster: None,
                global_updated: true,
            },
            RoundRecord {
                round: 1,
                stage: Stage::H,
                global_mae: 0.25,
                global_mse: 0.5,
                eta: None,
                flags_per_ndt: vec![0, 0, 0],
                cluster_deviations: vec![0.125, 0.0625],
                refreshed_cluster: Some(1),
                global_updated: false,
            },
        ]
    }

    #[test]
    fn rounds_csv_layout_is_stable() {
        let text = render_rounds_csv(&sample_records());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "round,stage,mae,mse,eta,refreshed_cluster,epsilon,updated,flagged_total"
        );
        // Synchronous round: epsilon is the largest cluster deviation.
        assert_eq!(lines[1], "0,v,0.5,0.75,15,,4,1,3");
        // Asynchronous step: epsilon belongs to the refreshed cluster.
        assert_eq!(lines[2], "1,h,0.25,0.5,,1,0.0625,0,0");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn flat_rounds_leave_epsilon_empty() {
        let mut recs = sample_records();
        recs[0].cluster_deviations.clear();
        let text = render_rounds_csv(&recs[..1]);
        assert!(text.lines().nth(1).unwrap().contains(",,,1,3"));
    }

    #[test]
    fn flags_csv_orders_benign_before_fakes() {
        let text = render_flags_csv(&sample_records()[..1], 2);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "0,v,0,benign,0");
        assert_eq!(lines[2], "0,v,1,benign,2");
        assert_eq!(lines[3], "0,v,2,fake,1");
    }

    #[test]
    fn equal_records_render_identical_bytes() {
        let a = render_rounds_csv(&sample_records());
        let b = render_rounds_csv(&sample_records());
        assert_eq!(a, b);
    }
}
