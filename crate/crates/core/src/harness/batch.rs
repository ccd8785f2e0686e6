//! Seed sweeps over (variant, gain) cells. Normalizers are fitted once,
//! serially, from the shared calibration run; the runs themselves are
//! embarrassingly parallel and are collected in schedule order, so the result
//! does not depend on the worker count.

use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::controller::GainCondition;
use crate::error::{Error, Result};
use crate::harness::config::Config;
use crate::harness::experiment::{calibration_log, normalizer_for, run_experiment, ExperimentLog};
use crate::harness::metrics::{summarize, RunSummary};
use crate::predictor::{Normalizer, PredictorVariant};

/// Environment variable overriding the worker count (an explicit argument
/// still wins).
pub const WORKERS_ENV: &str = "SOFTSMITH_WORKERS";

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub variant: PredictorVariant,
    pub gain: GainCondition,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub config_hash: String,
    /// Number of runs scheduled; retained summaries plus exclusions.
    pub scheduled: usize,
    /// Retained runs in canonical (variant, gain, seed) order.
    pub summaries: Vec<RunSummary>,
    pub exclusions: Vec<Exclusion>,
    /// Per-tick mean planar tracking error |e_xy| in mm over a cell's
    /// retained seeds.
    pub mean_xy_error_mm: BTreeMap<(PredictorVariant, GainCondition), Vec<f64>>,
}

/// Canonical ordering of variants in tables: baseline first.
pub fn variant_rank(v: PredictorVariant) -> usize {
    PredictorVariant::ALL
        .iter()
        .position(|w| *w == v)
        .expect("variant is in ALL")
}

fn per_tick_xy_mm(log: &ExperimentLog) -> Vec<f64> {
    log.rows
        .iter()
        .map(|row| {
            let ex = row.x_meas[0] - row.r[0];
            let ey = row.x_meas[1] - row.r[1];
            (ex * ex + ey * ey).sqrt() * 1000.0
        })
        .collect()
}

fn resolve_workers(workers: Option<usize>) -> usize {
    workers
        .or_else(|| {
            std::env::var(WORKERS_ENV)
                .ok()
                .and_then(|s| s.parse::<usize>().ok())
        })
        // Zero lets the pool pick the hardware default.
        .unwrap_or(0)
}

/// Midpoint median; input need not be sorted.
fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct JobOutcome {
    variant: PredictorVariant,
    gain: GainCondition,
    seed: u64,
    summary: Option<RunSummary>,
    failure: Option<String>,
    per_tick: Vec<f64>,
}

/// Run seeds 1..=n_seeds for every (variant, gain) cell. Runs that diverge,
/// or whose stable tracking RMS exceeds exclusion_factor times their cell
/// median, are excluded from the summaries and reported as exclusions.
pub fn batch_run(
    config: &Config,
    variants: &[PredictorVariant],
    gains: &[GainCondition],
    n_seeds: u64,
    workers: Option<usize>,
) -> Result<BatchResult> {
    config.validate()?;
    if variants.is_empty() || gains.is_empty() || n_seeds == 0 {
        return Err(Error::Config("empty batch".into()));
    }

    let mut normalizers: BTreeMap<PredictorVariant, Normalizer> = BTreeMap::new();
    if variants.iter().any(|v| v.is_learning()) {
        let cal = calibration_log(config)?;
        if cal.diverged() {
            return Err(Error::Config("calibration run diverged".into()));
        }
        for v in variants {
            if v.is_learning() && !normalizers.contains_key(v) {
                normalizers.insert(*v, normalizer_for(config, *v, &cal)?);
            }
        }
    }

    let mut jobs = Vec::new();
    for v in variants {
        for g in gains {
            for seed in 1..=n_seeds {
                jobs.push((*v, *g, seed));
            }
        }
    }
    let scheduled = jobs.len();

    let delay_steps = config.plant.delay_steps;
    let transient_end = config.protocol.transient_end;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_workers(workers))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<JobOutcome>> = pool.install(|| {
        jobs.par_iter()
            .map(|(variant, gain, seed)| {
                let log =
                    run_experiment(config, *variant, *gain, *seed, normalizers.get(variant))?;
                let (summary, failure) = match &log.failure {
                    Some(reason) => (None, Some(reason.clone())),
                    None => (Some(summarize(&log, delay_steps, transient_end)?), None),
                };
                Ok(JobOutcome {
                    variant: *variant,
                    gain: *gain,
                    seed: *seed,
                    summary,
                    failure,
                    per_tick: per_tick_xy_mm(&log),
                })
            })
            .collect()
    });

    let mut completed: Vec<JobOutcome> = Vec::with_capacity(scheduled);
    let mut exclusions = Vec::new();
    for outcome in outcomes {
        let o = outcome?;
        match &o.failure {
            Some(reason) => exclusions.push(Exclusion {
                variant: o.variant,
                gain: o.gain,
                seed: o.seed,
                reason: reason.clone(),
            }),
            None => completed.push(o),
        }
    }

    // Outlier exclusion against the cell median of the stable tracking RMS.
    let mut cell_values: BTreeMap<(usize, GainCondition), Vec<f64>> = BTreeMap::new();
    for o in &completed {
        let s = o.summary.as_ref().expect("completed run has a summary");
        cell_values
            .entry((variant_rank(o.variant), o.gain))
            .or_default()
            .push(s.track_stable_mm);
    }
    let medians: BTreeMap<(usize, GainCondition), f64> = cell_values
        .iter()
        .map(|(k, v)| (*k, median(v)))
        .collect();

    let mut summaries = Vec::new();
    let mut retained: Vec<&JobOutcome> = Vec::new();
    for o in &completed {
        let s = o.summary.as_ref().expect("completed run has a summary");
        let med = medians[&(variant_rank(o.variant), o.gain)];
        if s.track_stable_mm > config.harness.exclusion_factor * med {
            exclusions.push(Exclusion {
                variant: o.variant,
                gain: o.gain,
                seed: o.seed,
                reason: format!(
                    "stable tracking RMS {:.3} mm exceeds {} x cell median {:.3} mm",
                    s.track_stable_mm, config.harness.exclusion_factor, med
                ),
            });
        } else {
            summaries.push(s.clone());
            retained.push(o);
        }
    }

    let sort_key =
        |v: PredictorVariant, g: GainCondition, seed: u64| (variant_rank(v), g, seed);
    summaries.sort_by_key(|s| sort_key(s.variant, s.gain, s.seed));
    exclusions.sort_by_key(|e| sort_key(e.variant, e.gain, e.seed));
    assert_eq!(summaries.len() + exclusions.len(), scheduled);

    let mut mean_xy_error_mm: BTreeMap<(PredictorVariant, GainCondition), Vec<f64>> =
        BTreeMap::new();
    let mut cell_counts: BTreeMap<(PredictorVariant, GainCondition), usize> = BTreeMap::new();
    for o in &retained {
        let key = (o.variant, o.gain);
        let acc = mean_xy_error_mm
            .entry(key)
            .or_insert_with(|| vec![0.0; o.per_tick.len()]);
        for (a, v) in acc.iter_mut().zip(&o.per_tick) {
            *a += v;
        }
        *cell_counts.entry(key).or_insert(0) += 1;
    }
    for (key, acc) in mean_xy_error_mm.iter_mut() {
        let n = cell_counts[key] as f64;
        for a in acc.iter_mut() {
            *a /= n;
        }
    }

    Ok(BatchResult {
        config_hash: config.hash(),
        scheduled,
        summaries,
        exclusions,
        mean_xy_error_mm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> Config {
        let mut cfg = Config::default();
        cfg.protocol.duration = 6.0;
        cfg.protocol.transient_end = 4.0;
        cfg
    }

    #[test]
    fn accounting_and_canonical_order() {
        let cfg = quick_config();
        let res = batch_run(
            &cfg,
            &[PredictorVariant::NoPred, PredictorVariant::Ldn3],
            &[GainCondition::Low, GainCondition::High],
            2,
            Some(1),
        )
        .unwrap();
        assert_eq!(res.scheduled, 8);
        assert_eq!(res.summaries.len() + res.exclusions.len(), 8);
        let keys: Vec<_> = res
            .summaries
            .iter()
            .map(|s| (variant_rank(s.variant), s.gain, s.seed))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(res.config_hash, cfg.hash());
    }

    #[test]
    fn worker_count_does_not_change_the_result() {
        let cfg = quick_config();
        let variants = [PredictorVariant::NoPred, PredictorVariant::Hist3];
        let gains = [GainCondition::Medium];
        let serial = batch_run(&cfg, &variants, &gains, 3, Some(1)).unwrap();
        let parallel = batch_run(&cfg, &variants, &gains, 3, Some(4)).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn divergent_runs_are_excluded_not_fatal() {
        let mut cfg = quick_config();
        cfg.plant.workspace_bound = 1e-3;
        let res = batch_run(
            &cfg,
            &[PredictorVariant::NoPred],
            &[GainCondition::Low],
            2,
            Some(1),
        )
        .unwrap();
        assert!(res.summaries.is_empty());
        assert_eq!(res.exclusions.len(), 2);
        assert!(res.exclusions[0].reason.contains("diverged"));
        assert!(res.mean_xy_error_mm.is_empty());
    }

    #[test]
    fn per_tick_traces_cover_the_protocol() {
        let cfg = quick_config();
        let res = batch_run(
            &cfg,
            &[PredictorVariant::NoPred],
            &[GainCondition::Low],
            2,
            Some(2),
        )
        .unwrap();
        let trace = &res.mean_xy_error_mm[&(PredictorVariant::NoPred, GainCondition::Low)];
        assert_eq!(trace.len(), cfg.protocol.ticks());
        assert!(trace.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let cfg = quick_config();
        assert!(batch_run(&cfg, &[], &[GainCondition::Low], 1, Some(1)).is_err());
        assert!(batch_run(&cfg, &[PredictorVariant::NoPred], &[], 1, Some(1)).is_err());
        assert!(
            batch_run(&cfg, &[PredictorVariant::NoPred], &[GainCondition::Low], 0, Some(1))
                .is_err()
        );
    }

    #[test]
    fn median_midpoint() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[5.0]), 5.0);
    }
}
