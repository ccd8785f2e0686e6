//! Text report over a batch: tracking and modeling tables (phase x method x
//! gain), significance tests against the baseline, and the exclusion record.
//! The report is a pure function of the batch result, so regenerating it from
//! the same summaries reproduces it byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use crate::controller::GainCondition;
use crate::error::Result;
use crate::harness::batch::{variant_rank, BatchResult};
use crate::harness::metrics::{Phase, RunSummary};
use crate::harness::stats::{anova_oneway, bonferroni, welch_t};
use crate::predictor::PredictorVariant;

fn cell_values(
    summaries: &[RunSummary],
    variant: PredictorVariant,
    gain: GainCondition,
    field: impl Fn(&RunSummary) -> f64,
) -> Vec<f64> {
    summaries
        .iter()
        .filter(|s| s.variant == variant && s.gain == gain)
        .map(field)
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn format_cell(values: &[f64]) -> String {
    match values.len() {
        0 => format!("{:>21}", "-"),
        1 => format!("{:>21}", format!("{:.3} (single)", values[0])),
        n => {
            let (m, s) = mean_std(values);
            format!("{:>21}", format!("{m:.3} +- {s:.3} (n={n})"))
        }
    }
}

fn gains_present(summaries: &[RunSummary]) -> Vec<GainCondition> {
    GainCondition::ALL
        .into_iter()
        .filter(|g| summaries.iter().any(|s| s.gain == *g))
        .collect()
}

fn variants_present(summaries: &[RunSummary]) -> Vec<PredictorVariant> {
    PredictorVariant::ALL
        .into_iter()
        .filter(|v| summaries.iter().any(|s| s.variant == *v))
        .collect()
}

fn score_table(
    out: &mut String,
    title: &str,
    summaries: &[RunSummary],
    field: impl Fn(&RunSummary, Phase) -> f64 + Copy,
) {
    writeln!(out, "{title}").unwrap();
    let gains = gains_present(summaries);
    let variants = variants_present(summaries);
    let mut header = format!("{:<10} {:<8}", "phase", "method");
    for g in &gains {
        header.push_str(&format!(" {:>21}", g.as_str()));
    }
    writeln!(out, "{header}").unwrap();
    for phase in Phase::ALL {
        for v in &variants {
            let mut line = format!("{:<10} {:<8}", phase.as_str(), v.as_str());
            for g in &gains {
                let vals = cell_values(summaries, *v, *g, |s| field(s, phase));
                line.push_str(&format!(" {}", format_cell(&vals)));
            }
            writeln!(out, "{line}").unwrap();
        }
    }
    writeln!(out).unwrap();
}

fn significance_section(out: &mut String, summaries: &[RunSummary]) {
    writeln!(out, "Stable tracking significance vs baseline").unwrap();
    let baseline = PredictorVariant::NoPred;
    let learners: Vec<PredictorVariant> = variants_present(summaries)
        .into_iter()
        .filter(|v| v.is_learning())
        .collect();
    if learners.is_empty() || !variants_present(summaries).contains(&baseline) {
        writeln!(out, "  (needs the baseline and at least one learning method)").unwrap();
        writeln!(out).unwrap();
        return;
    }
    for g in gains_present(summaries) {
        let base = cell_values(summaries, baseline, g, |s| s.track_stable_mm);
        let mut groups = vec![base.clone()];
        for v in &learners {
            groups.push(cell_values(summaries, *v, g, |s| s.track_stable_mm));
        }
        if groups.iter().any(|gr| gr.len() < 2) {
            writeln!(out, "  gain={}: skipped (a cell has fewer than 2 runs)", g.as_str())
                .unwrap();
            continue;
        }
        match anova_oneway(&groups) {
            Ok((f, p)) => {
                writeln!(out, "  gain={}: ANOVA F={f:.3}, p={p:.3e}", g.as_str()).unwrap()
            }
            Err(e) => writeln!(out, "  gain={}: ANOVA failed: {e}", g.as_str()).unwrap(),
        }
        for v in &learners {
            let ours = cell_values(summaries, *v, g, |s| s.track_stable_mm);
            match welch_t(&ours, &base) {
                Ok((t, df, p)) => {
                    let adj = bonferroni(p, learners.len());
                    let marker = if adj < 0.05 { " *" } else { "" };
                    writeln!(
                        out,
                        "    {} vs {}: t={t:.3}, df={df:.1}, p={adj:.3e} (Bonferroni x{}){marker}",
                        v.as_str(),
                        baseline.as_str(),
                        learners.len()
                    )
                    .unwrap();
                }
                Err(e) => {
                    writeln!(out, "    {} vs {}: {e}", v.as_str(), baseline.as_str()).unwrap()
                }
            }
        }
    }
    writeln!(out).unwrap();
}

fn modeling_ratio_section(out: &mut String, summaries: &[RunSummary]) {
    let baseline = PredictorVariant::NoPred;
    if !variants_present(summaries).contains(&baseline) {
        return;
    }
    writeln!(out, "Stable modeling error, mean ratio to baseline").unwrap();
    for g in gains_present(summaries) {
        let base = cell_values(summaries, baseline, g, |s| s.model_stable_mm);
        if base.is_empty() {
            continue;
        }
        let (base_mean, _) = mean_std(&base);
        let mut line = format!("  gain={}:", g.as_str());
        for v in variants_present(summaries) {
            if v == baseline {
                continue;
            }
            let ours = cell_values(summaries, v, g, |s| s.model_stable_mm);
            if ours.is_empty() || base_mean == 0.0 {
                continue;
            }
            let (m, _) = mean_std(&ours);
            line.push_str(&format!(" {}={:.3}", v.as_str(), m / base_mean));
        }
        writeln!(out, "{line}").unwrap();
    }
    writeln!(out).unwrap();
}

pub fn emit_report(result: &BatchResult) -> String {
    let mut out = String::new();
    writeln!(out, "config_hash: {}", result.config_hash).unwrap();
    writeln!(
        out,
        "runs: {} scheduled, {} retained, {} excluded",
        result.scheduled,
        result.summaries.len(),
        result.exclusions.len()
    )
    .unwrap();
    writeln!(out).unwrap();

    score_table(
        &mut out,
        "Tracking RMS, planar (mm)",
        &result.summaries,
        |s, phase| match phase {
            Phase::Transient => s.track_transient_mm,
            Phase::Stable => s.track_stable_mm,
        },
    );
    score_table(
        &mut out,
        "Delay-compensation modeling RMS, planar (mm)",
        &result.summaries,
        |s, phase| match phase {
            Phase::Transient => s.model_transient_mm,
            Phase::Stable => s.model_stable_mm,
        },
    );
    significance_section(&mut out, &result.summaries);
    modeling_ratio_section(&mut out, &result.summaries);

    if result.exclusions.is_empty() {
        writeln!(out, "Exclusions: none").unwrap();
    } else {
        writeln!(out, "Exclusions ({} of {}):", result.exclusions.len(), result.scheduled)
            .unwrap();
        for e in &result.exclusions {
            writeln!(
                out,
                "  {}/{} seed {}: {}",
                e.variant.as_str(),
                e.gain.as_str(),
                e.seed,
                e.reason
            )
            .unwrap();
        }
    }
    out
}

/// Per-tick mean planar error traces as CSV: one column per cell.
pub fn plot_data_to_string(result: &BatchResult) -> String {
    let mut out = String::new();
    let cells: Vec<_> = result.mean_xy_error_mm.keys().copied().collect();
    let mut cols: Vec<_> = cells
        .iter()
        .map(|(v, g)| ((variant_rank(*v), *g), (*v, *g)))
        .collect();
    cols.sort_by_key(|(k, _)| *k);
    out.push_str("tick");
    for (_, (v, g)) in &cols {
        out.push_str(&format!(",{}_{}", v.as_str(), g.as_str()));
    }
    out.push('\n');
    let ticks = cols
        .first()
        .map(|(_, key)| result.mean_xy_error_mm[key].len())
        .unwrap_or(0);
    for k in 0..ticks {
        out.push_str(&k.to_string());
        for (_, key) in &cols {
            let trace = &result.mean_xy_error_mm[key];
            match trace.get(k) {
                Some(v) => out.push_str(&format!(",{v:.16e}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_report(result: &BatchResult, path: &Path) -> Result<()> {
    std::fs::write(path, emit_report(result))?;
    Ok(())
}

pub fn write_plot_data(result: &BatchResult, path: &Path) -> Result<()> {
    std::fs::write(path, plot_data_to_string(result))?;
    Ok(())
}
