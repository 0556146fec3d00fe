//! Report files: error tables, run metadata and gnuplot scripts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{penalty_trend, CenterlineSample, ExperimentKind, ExperimentReport};
use crate::error::{Error, Result};

pub const ERRORS_HEADER: &str = "h,k,eps,eL2,eH1,eP,rateL2,rateH1,rateP";

/// 17 significant digits: enough to reproduce any `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn errors_csv(report: &ExperimentReport) -> String {
    let rates = report.rates().unwrap_or_else(|_| vec![None; report.rows.len()]);
    let mut out = String::from(ERRORS_HEADER);
    out.push('\n');
    for (row, rate) in report.rows.iter().zip(rates) {
        let e = &row.errors;
        let cols = [row.h, row.k, row.eps, e.velocity_l2, e.velocity_h1, e.pressure_l2].map(num);
        let rate_cols = match rate {
            Some(r) => [r.l2, r.h1, r.pressure].map(num),
            None => Default::default(),
        };
        let _ = writeln!(out, "{},{}", cols.join(","), rate_cols.join(","));
    }
    out
}

fn list(values: impl IntoIterator<Item = impl ToString>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn metadata(report: &ExperimentReport) -> String {
    let s = &report.spec;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("kind", s.kind.name().into());
    kv("pair", s.pair.name().into());
    kv("levels", list(&s.levels));
    kv("coupling", s.coupling.to_string());
    kv("nu", s.nu.to_string());
    kv("final_time", s.final_time.to_string());
    if matches!(s.kind, ExperimentKind::Temporal | ExperimentKind::Cavity) {
        kv("eps", s.eps.to_string());
    }
    if matches!(s.kind, ExperimentKind::Penalty | ExperimentKind::Cavity) {
        kv("dt", s.dt.to_string());
    }
    if !s.sweep.is_empty() && matches!(s.kind, ExperimentKind::Temporal | ExperimentKind::Penalty) {
        kv("sweep", list(&s.sweep));
    }
    kv("picard_tolerance", s.picard.tolerance.to_string());
    kv("picard_max_iterations", s.picard.max_iterations.to_string());
    kv("deterministic", "true".into());
    kv("completed_runs", report.rows.len().to_string());
    for (i, r) in report.rows.iter().enumerate() {
        kv(&format!("run.{i}.level"), r.level.to_string());
        kv(&format!("run.{i}.steps"), r.steps.to_string());
        kv(&format!("run.{i}.factorizations"), r.factorizations.to_string());
        kv(&format!("run.{i}.divergence_l2"), num(r.divergence));
        if let Some(e) = r.time_error {
            kv(&format!("run.{i}.time_error_l2"), num(e));
        }
    }
    if s.kind == ExperimentKind::Temporal {
        if let Ok(orders) = report.time_error_orders() {
            kv("time_error_orders", list(orders.iter().map(|&o| num(o))));
        }
    }
    kv("failed_runs", report.failures.len().to_string());
    for (i, (label, msg)) in report.failures.iter().enumerate() {
        kv(&format!("failure.{i}"), format!("{label}: {}", msg.replace('\n', " ")));
    }
    if s.kind == ExperimentKind::Penalty && !report.rows.is_empty() {
        if let Ok(t) = penalty_trend(&report.rows) {
            kv("penalty_floor", num(t.floor));
            kv("penalty_pre_floor_runs", list(&t.pre_floor));
            kv("penalty_slope", t.slope.map_or_else(|| "undefined".into(), num));
        }
    }
    if let Some(c) = &report.cavity {
        kv("reynolds", c.reynolds.to_string());
        kv("steady", c.steady.to_string());
        kv("stopped_at", c.final_time.to_string());
        kv("final_rate", num(c.rate));
        kv("rms_u", num(c.rms_u));
        kv("rms_v", num(c.rms_v));
    }
    out
}

fn centerline_csv(samples: &[CenterlineSample]) -> String {
    let mut out = String::from("coord,reference,computed\n");
    for s in samples {
        let _ = writeln!(out, "{},{},{}", num(s.coord), num(s.reference), num(s.computed));
    }
    out
}

fn error_plot(report: &ExperimentReport) -> String {
    let xlabel = match report.spec.kind {
        ExperimentKind::Temporal => ("k", 2),
        ExperimentKind::Penalty => ("eps", 3),
        _ => ("h", 1),
    };
    format!(
        "set terminal svg size 800,600\n\
         set output 'errors.svg'\n\
         set datafile separator ','\n\
         set key autotitle columnhead\n\
         set logscale xy\n\
         set format xy '%.0e'\n\
         set xlabel '{label}'\n\
         set ylabel 'error'\n\
         set title '{pair} {kind} study'\n\
         set grid\n\
         plot 'errors.csv' using {col}:4 with linespoints title 'velocity L2', \\\n\
         \x20    'errors.csv' using {col}:5 with linespoints title 'velocity H1', \\\n\
         \x20    'errors.csv' using {col}:6 with linespoints title 'pressure L2'\n",
        label = xlabel.0,
        col = xlabel.1,
        pair = report.spec.pair,
        kind = report.spec.kind.name(),
    )
}

fn cavity_plot() -> String {
    "set terminal svg size 1000,500\n\
     set output 'centerlines.svg'\n\
     set datafile separator ','\n\
     set multiplot layout 1,2\n\
     set grid\n\
     set title 'u along x = 0.5'\n\
     set xlabel 'u'\n\
     set ylabel 'y'\n\
     plot 'centerline_dense.csv' using 2:1 with lines title 'penalty FEM', \\\n\
     \x20    'centerline_u.csv' using 2:1 with points pt 7 title 'reference'\n\
     set title 'v along y = 0.5'\n\
     set xlabel 'x'\n\
     set ylabel 'v'\n\
     plot 'centerline_dense.csv' using 1:3 with lines title 'penalty FEM', \\\n\
     \x20    'centerline_v.csv' using 1:2 with points pt 7 title 'reference'\n\
     unset multiplot\n"
        .into()
}

/// Writes the report files into `dir` (created if missing) and returns
/// their paths.
pub fn emit_outputs(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files: Vec<(&str, String)> = vec![("metadata.txt", metadata(report))];
    match &report.cavity {
        Some(c) => {
            files.push(("centerline_u.csv", centerline_csv(&c.u_samples)));
            files.push(("centerline_v.csv", centerline_csv(&c.v_samples)));
            let mut dense = String::from("coord,u,v\n");
            for &(s, u, v) in &c.dense {
                let _ = writeln!(dense, "{},{},{}", num(s), num(u), num(v));
            }
            files.push(("centerline_dense.csv", dense));
            files.push(("plot.gp", cavity_plot()));
        }
        None => {
            files.push(("errors.csv", errors_csv(report)));
            files.push(("plot.gp", error_plot(report)));
        }
    }
    files
        .into_iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            std::fs::write(&path, text)?;
            Ok(path)
        })
        .collect()
}

/// One parsed line of `errors.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub h: f64,
    pub k: f64,
    pub eps: f64,
    pub errors: [f64; 3],
    pub rates: Option<[f64; 3]>,
}

pub fn read_errors_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = std::fs::read_to_string(path)?;
    let bad = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == ERRORS_HEADER => {}
        _ => return Err(bad(1, format!("expected header {ERRORS_HEADER:?}"))),
    }
    lines
        .map(|(i, line)| {
            let n = i + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(bad(n, format!("expected 9 fields, found {}", fields.len())));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| bad(n, format!("{s:?}: {e}")));
            let v: Vec<f64> = fields[..6].iter().map(|s| parse(s)).collect::<Result<_>>()?;
            let rates = if fields[6..].iter().all(|s| s.is_empty()) {
                None
            } else {
                Some([parse(fields[6])?, parse(fields[7])?, parse(fields[8])?])
            };
            Ok(CsvRow {
                h: v[0],
                k: v[1],
                eps: v[2],
                errors: [v[3], v[4], v[5]],
                rates,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{ExperimentSpec, StudyRow};
    use super::*;
    use crate::analysis::ErrorTriple;
    use crate::fespace::ElementPair;

    fn report(n: usize) -> ExperimentReport {
        let rows = (0..n)
            .map(|i| {
                let h = 0.5f64.powi(i as i32 + 1);
                StudyRow {
                    level: i as u32 + 1,
                    h,
                    k: h.powi(3),
                    eps: h.powi(3),
                    errors: ErrorTriple {
                        t: 1.0,
                        velocity_l2: 0.1 * h.powi(3) * (1.0 + 0.1 * i as f64),
                        velocity_h1: h.powi(2) / 3.0,
                        pressure_l2: std::f64::consts::E * h.powf(1.8),
                    },
                    divergence: 1e-3,
                    steps: 8,
                    factorizations: 2,
                    time_error: None,
                }
            })
            .collect();
        ExperimentReport {
            spec: ExperimentSpec::spatial(ElementPair::P2P1, (1..=n.max(1) as u32).collect()),
            rows,
            failures: Vec::new(),
            cavity: None,
        }
    }

    #[test]
    fn empty_report_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        emit_outputs(&report(0), dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("errors.csv")).unwrap();
        assert_eq!(text, format!("{ERRORS_HEADER}\n"));
        assert!(read_errors_csv(&dir.path().join("errors.csv")).unwrap().is_empty());
    }

    #[test]
    fn rows_round_trip_with_first_rate_blank() {
        let dir = tempfile::tempdir().unwrap();
        let r = report(5);
        let files = emit_outputs(&r, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let rows = read_errors_csv(&dir.path().join("errors.csv")).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows[0].rates.is_none());
        assert_eq!(rows.iter().filter(|r| r.rates.is_some()).count(), 4);
        let rates = r.rates().unwrap();
        for (parsed, (row, rate)) in rows.iter().zip(r.rows.iter().zip(rates)) {
            assert_eq!(parsed.h, row.h);
            assert_eq!(parsed.errors, [row.errors.velocity_l2, row.errors.velocity_h1, row.errors.pressure_l2]);
            assert_eq!(parsed.rates, rate.map(|r| [r.l2, r.h1, r.pressure]));
        }
        let meta = std::fs::read_to_string(dir.path().join("metadata.txt")).unwrap();
        assert!(meta.lines().all(|l| l.contains('=')));
        assert!(meta.contains("pair=p2p1\n"));
        let plot = std::fs::read_to_string(dir.path().join("plot.gp")).unwrap();
        assert!(plot.contains("set terminal svg") && plot.contains("'errors.csv'"));
    }

    #[test]
    fn output_is_byte_identical_across_runs() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        emit_outputs(&report(4), a.path()).unwrap();
        emit_outputs(&report(4), b.path()).unwrap();
        for f in ["errors.csv", "metadata.txt", "plot.gp"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        }
    }
}
