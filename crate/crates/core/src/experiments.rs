//! Evaluation harnesses: per-concept leave-one-out comparison and the
//! holdout-fraction sweep, both emitting machine-readable reports.
//!
//! Each evaluation holds a concept out, decomposes the human matrix fitted on
//! the remaining concepts, completes the held-out concept from its machine
//! vector, and compares the completed and raw machine rows against the human
//! row via `d'`. Per-concept iterations run in parallel; reports are reduced
//! in concept order so results do not depend on scheduling.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::completion::{complete_concept, FitConfig, FitError};
use crate::dataset::{holdout_size, split_concepts, BinaryFeatureMatrix, DatasetError};
use crate::lowrank::{truncated_svd, SvdError, DEFAULT_TOL};
use crate::metrics::{d_prime, paired_t, tally, DetectionTally, MetricError, RateCorrection};
use crate::scalar::{cst, Real};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("human and machine matrices have different labels")]
    LabelMismatch,
    #[error("need at least {needed} concepts for rank {rank}, have {have}")]
    TooFewConcepts {
        needed: usize,
        have: usize,
        rank: usize,
    },
    #[error("fraction {fraction} leaves {retained} retained concepts, need at least {needed}")]
    FractionTooLarge {
        fraction: f64,
        retained: usize,
        needed: usize,
    },
    #[error("fractions must be strictly increasing within (0, 1)")]
    BadFractions,
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error(transparent)]
    Svd(#[from] SvdError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("report I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Snapshot of the evaluation settings, embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub rank: usize,
    pub fit: FitConfig<f64>,
    pub correction: RateCorrection,
}

/// One held-out concept's raw-versus-completed comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptEvaluation {
    pub concept: String,
    pub d_prime_raw: f64,
    pub d_prime_completed: f64,
    pub tally_raw: DetectionTally,
    pub tally_completed: DetectionTally,
}

impl ConceptEvaluation {
    pub fn difference(&self) -> f64 {
        self.d_prime_completed - self.d_prime_raw
    }
}

/// A concept that could not be evaluated, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptFailure {
    pub concept: String,
    pub error: String,
}

/// Leave-one-out report: one row per evaluated concept plus aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub config: ExperimentConfig,
    pub per_concept: Vec<ConceptEvaluation>,
    pub failures: Vec<ConceptFailure>,
    pub mean_raw: f64,
    pub mean_completed: f64,
    /// Paired t over (completed - raw); absent when fewer than two concepts
    /// were evaluated or the differences have zero variance.
    pub paired_t_value: Option<f64>,
    pub df: usize,
}

/// One sweep evaluation, tagged with the repeat it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEvaluation {
    pub repeat: usize,
    #[serde(flatten)]
    pub evaluation: ConceptEvaluation,
}

/// Aggregates for a single holdout fraction, pooled across repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub repeats: usize,
    pub evaluated: usize,
    pub failed: usize,
    pub mean_d_prime_difference: f64,
    pub paired_t_value: Option<f64>,
    pub df: usize,
    pub evaluations: Vec<SweepEvaluation>,
}

/// Holdout-fraction sweep report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub repeats: usize,
    pub per_fraction: Vec<SweepRow>,
}

fn check_pair(
    human: &BinaryFeatureMatrix,
    machine: &BinaryFeatureMatrix,
) -> Result<(), ExperimentError> {
    if human.concepts() != machine.concepts() || human.features() != machine.features() {
        return Err(ExperimentError::LabelMismatch);
    }
    Ok(())
}

/// Evaluates one held-out concept against a decomposition basis.
fn evaluate_concept<T: Real>(
    basis: &BinaryFeatureMatrix,
    human_row: &[u8],
    machine_row: &[u8],
    concept: &str,
    rank: usize,
    fit_cfg: &FitConfig<T>,
    correction: RateCorrection,
) -> Result<ConceptEvaluation, ExperimentError> {
    let real = basis.to_real::<T>();
    let dec = truncated_svd(&real, rank, cst(DEFAULT_TOL))?;
    let completed = complete_concept(&dec, basis.features(), machine_row, fit_cfg)?;

    let tally_completed = tally(&completed.cells, human_row)?;
    let tally_raw = tally(machine_row, human_row)?;
    let d_completed = d_prime::<T>(&tally_completed, correction)?;
    let d_raw = d_prime::<T>(&tally_raw, correction)?;

    Ok(ConceptEvaluation {
        concept: concept.to_string(),
        d_prime_raw: d_raw.d_prime.to_f64().expect("finite d'"),
        d_prime_completed: d_completed.d_prime.to_f64().expect("finite d'"),
        tally_raw,
        tally_completed,
    })
}

fn aggregate_t(differences: &[f64]) -> (Option<f64>, usize) {
    let df = differences.len().saturating_sub(1);
    match paired_t(differences) {
        Ok(result) => (Some(result.t), result.df),
        Err(_) => (None, df),
    }
}

/// Leave-one-out comparison over every concept.
///
/// For each concept the decomposition is refitted on the remaining rows, the
/// concept is completed from its machine vector, and `d'` of the completed and
/// raw machine rows against the human row is recorded. Per-concept failures
/// are reported and excluded from the aggregates.
pub fn leave_one_out<T: Real>(
    human: &BinaryFeatureMatrix,
    machine: &BinaryFeatureMatrix,
    rank: usize,
    fit_cfg: &FitConfig<T>,
    correction: RateCorrection,
) -> Result<LooReport, ExperimentError> {
    check_pair(human, machine)?;
    let n = human.concept_count();
    if n < rank + 2 {
        return Err(ExperimentError::TooFewConcepts {
            needed: rank + 2,
            have: n,
            rank,
        });
    }

    let outcomes: Vec<(usize, Result<ConceptEvaluation, ExperimentError>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let result = (|| {
                let retained: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                let basis = human.select_concepts(&retained)?;
                let human_row: Vec<u8> = human.row(i).to_vec();
                let machine_row: Vec<u8> = machine.row(i).to_vec();
                evaluate_concept(
                    &basis,
                    &human_row,
                    &machine_row,
                    &human.concepts()[i],
                    rank,
                    fit_cfg,
                    correction,
                )
            })();
            (i, result)
        })
        .collect();

    let mut ordered = outcomes;
    ordered.sort_by_key(|(i, _)| *i);

    let mut per_concept = Vec::new();
    let mut failures = Vec::new();
    for (i, outcome) in ordered {
        match outcome {
            Ok(evaluation) => per_concept.push(evaluation),
            Err(error) => failures.push(ConceptFailure {
                concept: human.concepts()[i].clone(),
                error: error.to_string(),
            }),
        }
    }

    let evaluated = per_concept.len().max(1) as f64;
    let mean_raw = per_concept.iter().map(|e| e.d_prime_raw).sum::<f64>() / evaluated;
    let mean_completed = per_concept.iter().map(|e| e.d_prime_completed).sum::<f64>() / evaluated;
    let differences: Vec<f64> = per_concept.iter().map(|e| e.difference()).collect();
    let (paired_t_value, df) = aggregate_t(&differences);

    Ok(LooReport {
        config: ExperimentConfig {
            rank,
            fit: fit_cfg.to_f64(),
            correction,
        },
        per_concept,
        failures,
        mean_raw,
        mean_completed,
        paired_t_value,
        df,
    })
}

/// Per-repeat split seed: the base seed advanced by fraction, then repeat.
fn split_seed(seed: u64, fraction_index: usize, repeats: usize, repeat: usize) -> u64 {
    seed.wrapping_add((fraction_index * repeats + repeat) as u64)
}

/// Sweeps over holdout fractions: at each fraction, concepts are split
/// `repeats` times, the decomposition is fitted on the retained rows, and all
/// held-out concepts are completed and evaluated as in leave-one-out.
#[allow(clippy::too_many_arguments)]
pub fn holdout_sweep<T: Real>(
    human: &BinaryFeatureMatrix,
    machine: &BinaryFeatureMatrix,
    fractions: &[f64],
    repeats: usize,
    seed: u64,
    rank: usize,
    fit_cfg: &FitConfig<T>,
    correction: RateCorrection,
) -> Result<SweepReport, ExperimentError> {
    check_pair(human, machine)?;
    if repeats == 0 {
        return Err(ExperimentError::NoRepeats);
    }
    if fractions.is_empty()
        || fractions.windows(2).any(|w| w[0] >= w[1])
        || fractions.iter().any(|&f| !(0.0 < f && f < 1.0))
    {
        return Err(ExperimentError::BadFractions);
    }
    let n = human.concept_count();
    // the retained side must still support a rank-`rank` decomposition
    for &fraction in fractions {
        let retained = n - holdout_size(n, fraction);
        if retained < rank + 1 {
            return Err(ExperimentError::FractionTooLarge {
                fraction,
                retained,
                needed: rank + 1,
            });
        }
    }

    let mut per_fraction = Vec::with_capacity(fractions.len());
    for (fraction_index, &fraction) in fractions.iter().enumerate() {
        let mut evaluations = Vec::new();
        let mut failed = 0usize;
        for repeat in 0..repeats {
            let split = split_seed(seed, fraction_index, repeats, repeat);
            let (retained, held_out) = split_concepts(human, fraction, split)?;

            let outcomes: Vec<Result<ConceptEvaluation, ExperimentError>> = held_out
                .concepts()
                .par_iter()
                .map(|concept| {
                    let i = human
                        .concept_index(concept)
                        .expect("held-out concept exists in source");
                    let human_row: Vec<u8> = human.row(i).to_vec();
                    let machine_row: Vec<u8> = machine.row(i).to_vec();
                    evaluate_concept(
                        &retained,
                        &human_row,
                        &machine_row,
                        concept,
                        rank,
                        fit_cfg,
                        correction,
                    )
                })
                .collect();

            for outcome in outcomes {
                match outcome {
                    Ok(evaluation) => evaluations.push(SweepEvaluation { repeat, evaluation }),
                    Err(_) => failed += 1,
                }
            }
        }

        let differences: Vec<f64> = evaluations
            .iter()
            .map(|e| e.evaluation.difference())
            .collect();
        let mean = if differences.is_empty() {
            0.0
        } else {
            differences.iter().sum::<f64>() / differences.len() as f64
        };
        let (paired_t_value, df) = aggregate_t(&differences);
        per_fraction.push(SweepRow {
            fraction,
            repeats,
            evaluated: evaluations.len(),
            failed,
            mean_d_prime_difference: mean,
            paired_t_value,
            df,
            evaluations,
        });
    }

    Ok(SweepReport {
        config: ExperimentConfig {
            rank,
            fit: fit_cfg.to_f64(),
            correction,
        },
        seed,
        repeats,
        per_fraction,
    })
}

/// Report payloads accepted by [`emit_report`].
#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Loo(&'a LooReport),
    Sweep(&'a SweepReport),
}

/// Output encodings for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Delimited(char),
}

/// Writes a report to `path`. JSON is lossless (including the config
/// snapshot); the delimited form has one row per concept (leave-one-out) or
/// per fraction (sweep).
pub fn emit_report(report: Report<'_>, path: &Path, format: ReportFormat) -> Result<(), ExperimentError> {
    let text = match (report, format) {
        (Report::Loo(r), ReportFormat::Json) => {
            let mut s = serde_json::to_string_pretty(r)?;
            s.push('\n');
            s
        }
        (Report::Sweep(r), ReportFormat::Json) => {
            let mut s = serde_json::to_string_pretty(r)?;
            s.push('\n');
            s
        }
        (Report::Loo(r), ReportFormat::Delimited(d)) => loo_delimited(r, d),
        (Report::Sweep(r), ReportFormat::Delimited(d)) => sweep_delimited(r, d),
    };
    fs::write(path, text)?;
    Ok(())
}

fn loo_delimited(report: &LooReport, d: char) -> String {
    let mut out = String::new();
    let header = [
        "concept",
        "d_prime_raw",
        "d_prime_completed",
        "d_prime_difference",
        "raw_hits",
        "raw_misses",
        "raw_false_alarms",
        "raw_correct_rejections",
        "completed_hits",
        "completed_misses",
        "completed_false_alarms",
        "completed_correct_rejections",
    ];
    out.push_str(&header.join(&d.to_string()));
    out.push('\n');
    for row in &report.per_concept {
        let fields = [
            row.concept.clone(),
            row.d_prime_raw.to_string(),
            row.d_prime_completed.to_string(),
            row.difference().to_string(),
            row.tally_raw.hits.to_string(),
            row.tally_raw.misses.to_string(),
            row.tally_raw.false_alarms.to_string(),
            row.tally_raw.correct_rejections.to_string(),
            row.tally_completed.hits.to_string(),
            row.tally_completed.misses.to_string(),
            row.tally_completed.false_alarms.to_string(),
            row.tally_completed.correct_rejections.to_string(),
        ];
        out.push_str(&fields.join(&d.to_string()));
        out.push('\n');
    }
    out
}

fn sweep_delimited(report: &SweepReport, d: char) -> String {
    let mut out = String::new();
    let header = [
        "fraction",
        "repeats",
        "evaluated",
        "failed",
        "mean_d_prime_difference",
        "paired_t",
        "df",
    ];
    out.push_str(&header.join(&d.to_string()));
    out.push('\n');
    for row in &report.per_fraction {
        let fields = [
            row.fraction.to_string(),
            row.repeats.to_string(),
            row.evaluated.to_string(),
            row.failed.to_string(),
            row.mean_d_prime_difference.to_string(),
            row.paired_t_value.map_or_else(String::new, |t| t.to_string()),
            row.df.to_string(),
        ];
        out.push_str(&fields.join(&d.to_string()));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_seeds_are_distinct_per_fraction_and_repeat() {
        let mut seen = std::collections::HashSet::new();
        for fraction_index in 0..9 {
            for repeat in 0..5 {
                assert!(seen.insert(split_seed(42, fraction_index, 5, repeat)));
            }
        }
    }

    #[test]
    fn aggregate_t_reports_degenerate_samples_as_none() {
        assert_eq!(aggregate_t(&[]), (None, 0));
        assert_eq!(aggregate_t(&[1.0]), (None, 0));
        assert_eq!(aggregate_t(&[2.0, 2.0, 2.0]), (None, 2));
        let (t, df) = aggregate_t(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(df, 3);
        assert!((t.unwrap() - 3.872983).abs() < 1e-6);
    }
}
