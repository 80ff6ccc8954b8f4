use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::ExperimentReport;
use super::metrics::Summary;
use super::partition::PartitionKind;
use crate::error::{Error, Result};

/// `mean ± sd` with two decimals for the mean. R² deviations keep two
/// significant digits; other deviations two decimals.
pub fn format_mean_sd(s: &Summary, significant_sd: bool) -> String {
    let decimals = if significant_sd && s.sd > 0.0 {
        (1 - s.sd.log10().floor() as i32).max(2) as usize
    } else {
        2
    };
    format!("{:.2} ± {:.*}", s.mean, decimals, s.sd)
}

fn pair(a: f64, b: f64) -> String {
    format!("{a:.2} | {b:.2}")
}

fn title(report: &ExperimentReport) -> String {
    match report.partition.kind {
        PartitionKind::RandomSample { fraction } => format!(
            "Within-Region (random samples, {:.0}% held out): mean ± standard deviation over {} runs.",
            fraction * 100.0,
            runs(report)
        ),
        PartitionKind::SpatialStation { fraction } => format!(
            "Within-Region (spatial, {:.0}% of stations held out): mean ± standard deviation over {} runs.",
            fraction * 100.0,
            runs(report)
        ),
        PartitionKind::Checkerboard { delta, .. } => {
            let mut s = format!("Out-of-Region (Checkerboard, δ={delta}°): metrics on the two disjoint test partitions 1 and 2.");
            if let Some([a, b]) = report.partition_shares {
                let _ = write!(
                    s,
                    " The partitions contain {:.2}% of stations in partition 1 and {:.2}% in partition 2.",
                    a * 100.0,
                    b * 100.0
                );
            }
            s
        }
    }
}

fn runs(report: &ExperimentReport) -> usize {
    report.variants.iter().map(|v| v.runs).max().unwrap_or(0)
}

fn is_checkerboard(report: &ExperimentReport) -> bool {
    matches!(report.partition.kind, PartitionKind::Checkerboard { .. })
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(j, c)| format!("{}{}", c, " ".repeat(widths[j] - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (cols - 1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}

/// Aligned text table: one row per variant with `mean ± sd` cells, or
/// `(1|2)` pairs for a checkerboard.
pub fn report_text(report: &ExperimentReport) -> String {
    let cb = is_checkerboard(report);
    let mut rows = vec![if cb {
        vec!["Model variant", "Test R² (1|2)", "Test RMSE (1|2)", "Test MBE (1|2)"]
    } else {
        vec!["Model variant", "Test R²", "Test RMSE", "Test MBE"]
    }
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>()];
    for v in &report.variants {
        let mut row = vec![v.variant.label().to_string()];
        match (&v.by_partition, cb) {
            (Some([p1, p2]), true) => {
                row.push(pair(p1.r2.mean, p2.r2.mean));
                row.push(pair(p1.rmse.mean, p2.rmse.mean));
                row.push(pair(p1.mbe.mean, p2.mbe.mean));
            }
            _ => {
                row.push(format_mean_sd(&v.overall.r2, true));
                row.push(format_mean_sd(&v.overall.rmse, false));
                row.push(format_mean_sd(&v.overall.mbe, false));
            }
        }
        rows.push(row);
    }
    let mut out = format!("{}\n\n", title(report));
    out.push_str(&aligned(&rows));
    if !report.skipped.is_empty() {
        let names: Vec<&str> = report.skipped.iter().map(|v| v.key()).collect();
        let _ = writeln!(out, "\nNot run at this width: {}", names.join(", "));
    }
    out
}

/// Machine-readable table with the same rows as [`report_text`].
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut s = String::new();
    if is_checkerboard(report) {
        s.push_str("variant,label,runs,r2_1,r2_2,rmse_1,rmse_2,mbe_1,mbe_2,r2_mean,r2_sd\n");
        for v in &report.variants {
            let [p1, p2] = v.by_partition.unwrap_or([v.overall, v.overall]);
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                v.variant.key(),
                v.variant.label(),
                v.runs,
                p1.r2.mean,
                p2.r2.mean,
                p1.rmse.mean,
                p2.rmse.mean,
                p1.mbe.mean,
                p2.mbe.mean,
                v.overall.r2.mean,
                v.overall.r2.sd
            );
        }
    } else {
        s.push_str("variant,label,runs,r2_mean,r2_sd,rmse_mean,rmse_sd,mbe_mean,mbe_sd\n");
        for v in &report.variants {
            let o = &v.overall;
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                v.variant.key(),
                v.variant.label(),
                v.runs,
                o.r2.mean,
                o.r2.sd,
                o.rmse.mean,
                o.rmse.sd,
                o.mbe.mean,
                o.mbe.sd
            );
        }
    }
    s
}

/// One line per trained model.
pub fn runs_csv(report: &ExperimentReport) -> String {
    let mut s = String::from("variant,train_partition,test_partition,seed,fold_hash,n_train,n_test,final_train_loss,r2,rmse,mbe\n");
    for r in &report.records {
        let side = |x: Option<u8>| x.map(|p| p.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{:.8},{:.8},{:.8},{:.8}",
            r.variant.key(),
            side(r.train_side.map(|v| v.partition_number())),
            side(r.test_partition()),
            r.seed,
            r.fold_hash,
            r.n_train,
            r.n_test,
            r.final_train_loss,
            r.metrics.r2,
            r.metrics.rmse,
            r.metrics.mbe
        );
    }
    s
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `<stem>.txt`, `<stem>.csv`, `<stem>_runs.csv` and `<stem>.json`
/// into `dir` and returns their paths.
pub fn export_report(report: &ExperimentReport, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Format {
        path: dir.join(format!("{stem}.json")).display().to_string(),
        message: e.to_string(),
    })?;
    Ok(vec![
        write(dir.join(format!("{stem}.txt")), &report_text(report))?,
        write(dir.join(format!("{stem}.csv")), &report_csv(report))?,
        write(dir.join(format!("{stem}_runs.csv")), &runs_csv(report))?,
        write(dir.join(format!("{stem}.json")), &(json + "\n"))?,
    ])
}

/// Reads a report previously written by [`export_report`].
pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
