//! CSV persistence of run logs and summary tables. Floats are written with 17
//! significant digits, so write/read round-trips are exact and re-running a
//! seed can be compared byte for byte against an archived log.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector6;

use crate::controller::GainCondition;
use crate::error::{Error, Result};
use crate::harness::experiment::{ExperimentLog, LogRow};
use crate::harness::metrics::RunSummary;
use crate::predictor::PredictorVariant;

const GROUPS: [&str; 9] = ["r", "rd", "xt", "xm", "vh", "yh", "u", "vs", "ig"];

fn header_line() -> String {
    let mut cols = vec!["t".to_string()];
    for g in GROUPS {
        for i in 0..6 {
            cols.push(format!("{g}{i}"));
        }
    }
    cols.join(",")
}

pub fn run_log_to_string(log: &ExperimentLog) -> String {
    let mut s = String::new();
    writeln!(s, "# config_hash={}", log.config_hash).unwrap();
    writeln!(s, "# variant={}", log.variant.as_str()).unwrap();
    writeln!(s, "# gain={}", log.gain.as_str()).unwrap();
    writeln!(s, "# seed={}", log.seed).unwrap();
    if let Some(reason) = &log.failure {
        writeln!(s, "# FAILED: {reason}").unwrap();
    }
    writeln!(s, "{}", header_line()).unwrap();
    for row in &log.rows {
        write!(s, "{:.16e}", row.t).unwrap();
        for v in [
            &row.r, &row.r_dot, &row.x_true, &row.x_meas, &row.v_hat, &row.y_hat, &row.u,
            &row.v_smc, &row.integral,
        ] {
            for i in 0..6 {
                write!(s, ",{:.16e}", v[i]).unwrap();
            }
        }
        s.push('\n');
    }
    s
}

pub fn write_run_log(log: &ExperimentLog, path: &Path) -> Result<()> {
    std::fs::write(path, run_log_to_string(log))?;
    Ok(())
}

fn parse_f64(field: &str, path: &Path) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{}: bad float '{field}'", path.display())))
}

pub fn read_run_log(path: &Path) -> Result<ExperimentLog> {
    let text = std::fs::read_to_string(path)?;
    let mut config_hash = String::new();
    let mut variant = None;
    let mut gain = None;
    let mut seed = None;
    let mut failure = None;
    let mut rows = Vec::new();
    let mut saw_header = false;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some(reason) = rest.strip_prefix("FAILED: ") {
                failure = Some(reason.to_string());
            } else if let Some((key, value)) = rest.split_once('=') {
                match key {
                    "config_hash" => config_hash = value.to_string(),
                    "variant" => variant = Some(PredictorVariant::parse(value)?),
                    "gain" => gain = Some(GainCondition::parse(value)?),
                    "seed" => {
                        seed = Some(value.parse::<u64>().map_err(|_| {
                            Error::Config(format!("{}: bad seed '{value}'", path.display()))
                        })?)
                    }
                    _ => {}
                }
            }
            continue;
        }
        if !saw_header {
            if line != header_line() {
                return Err(Error::Config(format!(
                    "{}: unexpected column header",
                    path.display()
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + GROUPS.len() * 6 {
            return Err(Error::Config(format!(
                "{}: expected {} columns, got {}",
                path.display(),
                1 + GROUPS.len() * 6,
                fields.len()
            )));
        }
        let t = parse_f64(fields[0], path)?;
        let mut vecs = [Vector6::zeros(); 9];
        for (g, vec) in vecs.iter_mut().enumerate() {
            for i in 0..6 {
                vec[i] = parse_f64(fields[1 + g * 6 + i], path)?;
            }
        }
        rows.push(LogRow {
            t,
            r: vecs[0],
            r_dot: vecs[1],
            x_true: vecs[2],
            x_meas: vecs[3],
            v_hat: vecs[4],
            y_hat: vecs[5],
            u: vecs[6],
            v_smc: vecs[7],
            integral: vecs[8],
        });
    }
    let variant =
        variant.ok_or_else(|| Error::Config(format!("{}: missing variant", path.display())))?;
    let gain = gain.ok_or_else(|| Error::Config(format!("{}: missing gain", path.display())))?;
    let seed = seed.ok_or_else(|| Error::Config(format!("{}: missing seed", path.display())))?;
    Ok(ExperimentLog {
        config_hash,
        variant,
        gain,
        seed,
        rows,
        failure,
    })
}

pub fn summaries_to_string(config_hash: &str, rows: &[RunSummary]) -> String {
    let mut s = String::new();
    writeln!(s, "# config_hash={config_hash}").unwrap();
    writeln!(
        s,
        "variant,gain,seed,track_transient_mm,track_stable_mm,model_transient_mm,model_stable_mm"
    )
    .unwrap();
    for r in rows {
        writeln!(
            s,
            "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.variant.as_str(),
            r.gain.as_str(),
            r.seed,
            r.track_transient_mm,
            r.track_stable_mm,
            r.model_transient_mm,
            r.model_stable_mm
        )
        .unwrap();
    }
    s
}

pub fn write_summaries(config_hash: &str, rows: &[RunSummary], path: &Path) -> Result<()> {
    std::fs::write(path, summaries_to_string(config_hash, rows))?;
    Ok(())
}

pub fn read_summaries(path: &Path) -> Result<(String, Vec<RunSummary>)> {
    let text = std::fs::read_to_string(path)?;
    let mut config_hash = String::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some(value) = rest.strip_prefix("config_hash=") {
                config_hash = value.to_string();
            }
            continue;
        }
        if line.starts_with("variant,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Config(format!(
                "{}: expected 7 columns, got {}",
                path.display(),
                fields.len()
            )));
        }
        rows.push(RunSummary {
            variant: PredictorVariant::parse(fields[0])?,
            gain: GainCondition::parse(fields[1])?,
            seed: fields[2].parse::<u64>().map_err(|_| {
                Error::Config(format!("{}: bad seed '{}'", path.display(), fields[2]))
            })?,
            track_transient_mm: parse_f64(fields[3], path)?,
            track_stable_mm: parse_f64(fields[4], path)?,
            model_transient_mm: parse_f64(fields[5], path)?,
            model_stable_mm: parse_f64(fields[6], path)?,
        });
    }
    Ok((config_hash, rows))
}
