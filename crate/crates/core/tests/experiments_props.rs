//! Integration tests for the leave-one-out and holdout-sweep harnesses.

use ndarray::Array2;

use featnorm::completion::FitConfig;
use featnorm::dataset::BinaryFeatureMatrix;
use featnorm::experiments::{
    emit_report, holdout_sweep, leave_one_out, ExperimentError, Report, ReportFormat,
};
use featnorm::metrics::{standard_normal_quantile, RateCorrection};
use featnorm::oracle::{fill_matrix, SyntheticOracle};
use featnorm_testkit::{low_rank_binary_matrix, pattern_matrix};

fn default_cfg() -> FitConfig<f64> {
    FitConfig::default()
}

/// Exact-rank-5 instance where every row repeats a pattern at least three
/// times, so leave-one-out bases always span all patterns.
fn exact_rank_instance() -> BinaryFeatureMatrix {
    let patterns = vec![
        vec![1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0, 0, 0, 1, 0],
        vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 0, 1, 0, 1, 1, 0, 0, 1, 0, 0, 0, 1],
        vec![1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 0, 1, 1],
        vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 1, 0, 0, 1, 0, 0, 1, 1, 0, 1, 0, 0],
        vec![1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 1, 0],
    ];
    pattern_matrix(&patterns, 3) // 15 concepts x 24 features
}

fn synthetic_pair(seed: u64) -> (BinaryFeatureMatrix, BinaryFeatureMatrix) {
    let human = low_rank_binary_matrix(30, 60, 4, 4.0, -0.8, seed);
    let oracle = SyntheticOracle::new(human.clone(), 0.25, 0.15, seed + 500).unwrap();
    let machine = fill_matrix(
        &oracle,
        human.concepts(),
        human.features(),
    )
    .unwrap();
    (human, machine)
}

#[test]
fn perfect_oracle_on_exact_rank_data_reproduces_rows_with_corrected_rates() {
    let human = exact_rank_instance();
    let report = leave_one_out(&human, &human, 5, &default_cfg(), RateCorrection::LogLinear)
        .unwrap();
    assert!(report.failures.is_empty());
    assert_eq!(report.per_concept.len(), human.concept_count());

    for row in &report.per_concept {
        // a noiseless fit reproduces the human row exactly
        assert_eq!(row.tally_completed.misses, 0, "{}", row.concept);
        assert_eq!(row.tally_completed.false_alarms, 0, "{}", row.concept);
        // perfect rates are degenerate, so the loglinear correction applies
        let signal = row.tally_completed.signal_total() as f64;
        let noise = row.tally_completed.noise_total() as f64;
        let expected = standard_normal_quantile((signal + 0.5) / (signal + 1.0)).unwrap()
            - standard_normal_quantile(0.5 / (noise + 1.0)).unwrap();
        assert!((row.d_prime_completed - expected).abs() < 1e-12);
    }
}

#[test]
fn noisy_oracle_improves_on_the_synthetic_instance() {
    let (human, machine) = synthetic_pair(42);
    let report =
        leave_one_out(&human, &machine, 4, &default_cfg(), RateCorrection::LogLinear).unwrap();
    assert!(report.failures.is_empty());
    assert!(
        report.mean_completed > report.mean_raw,
        "completed {} vs raw {}",
        report.mean_completed,
        report.mean_raw
    );
    assert!(report.paired_t_value.unwrap() > 0.0);
    assert_eq!(report.df, report.per_concept.len() - 1);
    // every evaluation classifies all m cells
    let m = human.feature_count() as u64;
    for row in &report.per_concept {
        assert_eq!(row.tally_raw.total(), m);
        assert_eq!(row.tally_completed.total(), m);
    }
    // means are the arithmetic means of the per-concept rows
    let n = report.per_concept.len() as f64;
    let mean_raw: f64 = report.per_concept.iter().map(|r| r.d_prime_raw).sum::<f64>() / n;
    assert!((report.mean_raw - mean_raw).abs() < 1e-12);
}

#[test]
fn loo_rejects_too_few_concepts() {
    let human = exact_rank_instance();
    let small = human.select_concepts(&[0, 1, 2, 3, 4, 5]).unwrap();
    // n = d + 1 is one concept short
    assert!(matches!(
        leave_one_out(&small, &small, 5, &default_cfg(), RateCorrection::LogLinear),
        Err(ExperimentError::TooFewConcepts { .. })
    ));
}

#[test]
fn loo_reports_are_bit_deterministic_across_thread_counts() {
    let (human, machine) = synthetic_pair(7);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            leave_one_out(&human, &machine, 4, &default_cfg(), RateCorrection::LogLinear).unwrap()
        })
    };
    let single = serde_json::to_string(&run(1)).unwrap();
    let multi = serde_json::to_string(&run(4)).unwrap();
    let again = serde_json::to_string(&run(4)).unwrap();
    assert_eq!(single, multi);
    assert_eq!(multi, again);
}

#[test]
fn failed_concepts_are_excluded_but_accounted_for() {
    // a concept with an all-zero human row has no signal cells, so its d'
    // is undefined and the row must land in the failure list
    let human = exact_rank_instance();
    let n = human.concept_count();
    let mut cells = human.cells().clone();
    for j in 0..human.feature_count() {
        cells[[3, j]] = 0;
    }
    let broken = BinaryFeatureMatrix::new(
        human.concepts().to_vec(),
        human.features().to_vec(),
        cells,
    )
    .unwrap();
    let report =
        leave_one_out(&broken, &broken, 5, &default_cfg(), RateCorrection::LogLinear).unwrap();
    assert_eq!(report.per_concept.len() + report.failures.len(), n);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].concept, broken.concepts()[3]);
    assert!(report.failures[0].error.contains("signal"));
}

#[test]
fn sweep_rows_match_loo_for_single_concept_holdouts() {
    let (human, machine) = synthetic_pair(13);
    let n = human.concept_count();
    let cfg = default_cfg();
    let loo = leave_one_out(&human, &machine, 4, &cfg, RateCorrection::LogLinear).unwrap();

    // fraction 1/n holds out exactly one concept per repeat
    let fraction = 1.0 / n as f64;
    let sweep = holdout_sweep(
        &human,
        &machine,
        &[fraction],
        8,
        99,
        4,
        &cfg,
        RateCorrection::LogLinear,
    )
    .unwrap();
    let row = &sweep.per_fraction[0];
    assert_eq!(row.evaluated, 8);
    for eval in &row.evaluations {
        let loo_row = loo
            .per_concept
            .iter()
            .find(|r| r.concept == eval.evaluation.concept)
            .expect("concept evaluated by leave-one-out");
        assert!(
            (eval.evaluation.d_prime_completed - loo_row.d_prime_completed).abs() <= 1e-10,
            "{}",
            eval.evaluation.concept
        );
        assert!((eval.evaluation.d_prime_raw - loo_row.d_prime_raw).abs() <= 1e-10);
    }
}

#[test]
fn noiseless_sweep_differences_concentrate_at_zero() {
    let human = exact_rank_instance();
    let sweep = holdout_sweep(
        &human,
        &human,
        &[0.2],
        3,
        5,
        5,
        &default_cfg(),
        RateCorrection::LogLinear,
    )
    .unwrap();
    let row = &sweep.per_fraction[0];
    // the raw oracle is already perfect and completion reproduces the rows,
    // so every difference is exactly zero and the t statistic degenerates
    assert_eq!(row.mean_d_prime_difference, 0.0);
    assert!(row.paired_t_value.is_none());
}

#[test]
fn sweep_bookkeeping_covers_fractions_and_df() {
    let (human, machine) = synthetic_pair(21);
    let cfg = default_cfg();
    let sweep = holdout_sweep(
        &human,
        &machine,
        &[0.1, 0.5, 0.8],
        2,
        42,
        4,
        &cfg,
        RateCorrection::LogLinear,
    )
    .unwrap();
    assert_eq!(sweep.per_fraction.len(), 3);
    for row in &sweep.per_fraction {
        assert_eq!(row.evaluated + row.failed, row.evaluations.len() + row.failed);
        assert_eq!(row.df, row.evaluated.saturating_sub(1));
        assert_eq!(row.repeats, 2);
    }
    // fractions must be strictly increasing and inside (0, 1)
    assert!(matches!(
        holdout_sweep(&human, &machine, &[0.5, 0.5], 2, 42, 4, &cfg, RateCorrection::LogLinear),
        Err(ExperimentError::BadFractions)
    ));
    // a fraction retaining fewer than rank + 1 concepts is rejected
    assert!(matches!(
        holdout_sweep(&human, &machine, &[0.95], 2, 42, 4, &cfg, RateCorrection::LogLinear),
        Err(ExperimentError::FractionTooLarge { .. })
    ));
}

#[test]
fn reports_round_trip_through_json_and_delimited_rows_count() {
    let (human, machine) = synthetic_pair(3);
    let cfg = default_cfg();
    let loo = leave_one_out(&human, &machine, 4, &cfg, RateCorrection::LogLinear).unwrap();
    let sweep = holdout_sweep(
        &human,
        &machine,
        &[0.2, 0.4],
        2,
        11,
        4,
        &cfg,
        RateCorrection::LogLinear,
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let loo_json = dir.path().join("loo.json");
    let loo_csv = dir.path().join("loo.csv");
    emit_report(Report::Loo(&loo), &loo_json, ReportFormat::Json).unwrap();
    emit_report(Report::Loo(&loo), &loo_csv, ReportFormat::Delimited(',')).unwrap();

    let reread: featnorm::experiments::LooReport =
        serde_json::from_str(&std::fs::read_to_string(&loo_json).unwrap()).unwrap();
    assert_eq!(reread, loo);

    let csv = std::fs::read_to_string(&loo_csv).unwrap();
    assert_eq!(csv.lines().count(), 1 + loo.per_concept.len());

    // config snapshot lands in the serialized report
    let json_text = std::fs::read_to_string(&loo_json).unwrap();
    assert!(json_text.contains("\"rank\": 4"));
    assert!(json_text.contains("\"l2_penalty\": 1.0"));

    let sweep_json = dir.path().join("sweep.json");
    let sweep_tsv = dir.path().join("sweep.tsv");
    emit_report(Report::Sweep(&sweep), &sweep_json, ReportFormat::Json).unwrap();
    emit_report(Report::Sweep(&sweep), &sweep_tsv, ReportFormat::Delimited('\t')).unwrap();
    let reread: featnorm::experiments::SweepReport =
        serde_json::from_str(&std::fs::read_to_string(&sweep_json).unwrap()).unwrap();
    assert_eq!(reread, sweep);
    let tsv = std::fs::read_to_string(&sweep_tsv).unwrap();
    assert_eq!(tsv.lines().count(), 1 + sweep.per_fraction.len());
}

#[test]
fn mismatched_label_grids_are_rejected() {
    let (human, _) = synthetic_pair(1);
    let (other, _) = synthetic_pair(2);
    let renamed = BinaryFeatureMatrix::new(
        human.concepts().iter().rev().cloned().collect(),
        human.features().to_vec(),
        Array2::zeros((human.concept_count(), human.feature_count())),
    )
    .unwrap();
    assert!(matches!(
        leave_one_out(&human, &renamed, 4, &default_cfg(), RateCorrection::LogLinear),
        Err(ExperimentError::LabelMismatch)
    ));
    // same labels but different cells is fine
    assert!(leave_one_out(&human, &other, 4, &default_cfg(), RateCorrection::LogLinear).is_ok());
}
