//! Subcommand implementations.

use std::path::Path;
use std::time::Duration;

use serde_json::json;

use featnorm::completion::FitConfig;
use featnorm::dataset::{
    parse_norm_table, parse_real_table, threshold_unanimous, BinaryFeatureMatrix, NormTable,
    ValueKind,
};
use featnorm::experiments::{
    emit_report, holdout_sweep, leave_one_out, Report, ReportFormat,
};
use featnorm::lowrank::{singular_value_profile, DEFAULT_RANK};
use featnorm::metrics::RateCorrection;
use featnorm::oracle::{
    fill_matrix, live_oracle, CachedOracle, Oracle, OracleConfig, PluralOverrides, ResponseCache,
    SyntheticOracle,
};

use crate::config_file::{resolve, resolve_opt, FileConfig};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::{IngestArgs, LooArgs, OracleFillArgs, ScreeArgs, SweepArgs};

const DEFAULT_RATER_TOTAL: u32 = 4;
const DEFAULT_AUTH_ENV: &str = "FEATNORM_API_TOKEN";

fn parse_delimiter(value: Option<String>) -> Result<char, CliError> {
    match value {
        None => Ok(','),
        Some(s) if s == "tab" => Ok('\t'),
        Some(s) => {
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(CliError::Usage(format!(
                    "delimiter must be a single character or \"tab\", got {s:?}"
                ))),
            }
        }
    }
}

fn parse_correction(value: Option<String>) -> Result<RateCorrection, CliError> {
    match value.as_deref() {
        None | Some("loglinear") => Ok(RateCorrection::LogLinear),
        Some("always") => Ok(RateCorrection::Always),
        Some("none") => Ok(RateCorrection::None),
        Some(other) => Err(CliError::Usage(format!(
            "correction must be loglinear, always, or none, got {other:?}"
        ))),
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_string(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn load_binary_matrix(path: &Path, delimiter: char) -> Result<BinaryFeatureMatrix, CliError> {
    let text = read_to_string(path)?;
    match parse_norm_table(&text, delimiter, ValueKind::Binary) {
        Ok(NormTable::Binary(matrix)) => Ok(matrix),
        Ok(NormTable::Counts(_)) => unreachable!("binary parse returns binary"),
        Err(err) => Err(CliError::parse_in(path, err)),
    }
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = jobs {
        if jobs == 0 {
            return Err(CliError::Usage("jobs must be at least 1".to_string()));
        }
        builder = builder.num_threads(jobs);
    }
    builder
        .build()
        .map_err(|e| CliError::Usage(format!("failed to build worker pool: {e}")))
}

pub fn ingest(args: IngestArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let delimiter = parse_delimiter(resolve_opt(args.common.delimiter, file.delimiter))?;
    let value_kind = resolve(args.value_kind, file.value_kind, "counts".to_string());
    let rater_total = resolve_opt(args.rater_total, file.rater_total);
    let threshold = resolve_opt(args.threshold, file.threshold);

    let (binary, resolved_rater_total, resolved_threshold) = match value_kind.as_str() {
        "binary" => {
            if rater_total.is_some() || threshold.is_some() {
                return Err(CliError::Usage(
                    "--rater-total and --threshold only apply to counts tables".to_string(),
                ));
            }
            (load_binary_matrix(&args.input, delimiter)?, None, None)
        }
        "counts" => {
            let rater_total = rater_total.unwrap_or(DEFAULT_RATER_TOTAL);
            let threshold = threshold.unwrap_or(rater_total);
            let text = read_to_string(&args.input)?;
            let counts = match parse_norm_table(&text, delimiter, ValueKind::Counts { rater_total })
            {
                Ok(NormTable::Counts(counts)) => counts,
                Ok(NormTable::Binary(_)) => unreachable!("counts parse returns counts"),
                Err(err) => return Err(CliError::parse_in(&args.input, err)),
            };
            let binary = threshold_unanimous(&counts, threshold)
                .map_err(|err| CliError::Usage(err.to_string()))?;
            (binary, Some(rater_total), Some(threshold))
        }
        other => {
            return Err(CliError::Usage(format!(
                "value_kind must be counts or binary, got {other:?}"
            )))
        }
    };

    let mut manifest = RunManifest::new(
        "ingest",
        None,
        json!({
            "delimiter": delimiter.to_string(),
            "value_kind": value_kind,
            "rater_total": resolved_rater_total,
            "threshold": resolved_threshold,
            "input": args.input,
            "output": args.output,
        }),
    );
    manifest.add_input(&args.input)?;
    manifest.add_output(&args.output);
    manifest.write_next_to(&args.output)?;

    let serialized = binary
        .to_delimited(delimiter)
        .map_err(|err| CliError::Usage(err.to_string()))?;
    write_string(&args.output, &serialized)?;

    println!("concepts: {}", binary.concept_count());
    println!("features: {}", binary.feature_count());
    println!("density: {:.6}", binary.density());
    Ok(())
}

pub fn scree(args: ScreeArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let delimiter = parse_delimiter(resolve_opt(args.common.delimiter, file.delimiter))?;

    let text = read_to_string(&args.input)?;
    let table =
        parse_real_table(&text, delimiter).map_err(|err| CliError::parse_in(&args.input, err))?;
    let profile = singular_value_profile(&table.cells)
        .map_err(|err| CliError::Numeric(err.to_string()))?;

    let mut manifest = RunManifest::new(
        "scree",
        None,
        json!({
            "delimiter": delimiter.to_string(),
            "input": args.input,
            "output": args.output,
        }),
    );
    manifest.add_input(&args.input)?;
    manifest.add_output(&args.output);
    manifest.write_next_to(&args.output)?;

    let mut out = format!("index{delimiter}singular_value\n");
    for (i, sigma) in profile.iter().enumerate() {
        out.push_str(&format!("{}{delimiter}{sigma}\n", i + 1));
    }
    write_string(&args.output, &out)?;
    println!("singular values: {}", profile.len());
    Ok(())
}

pub fn oracle_fill(args: OracleFillArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let delimiter = parse_delimiter(resolve_opt(args.common.delimiter, file.delimiter))?;
    let human = load_binary_matrix(&args.human, delimiter)?;
    let cache_path = resolve_opt(args.cache, file.cache).unwrap_or_else(|| {
        let mut name = args.output.file_name().unwrap_or_default().to_os_string();
        name.push(".cache.jsonl");
        args.output.with_file_name(name)
    });
    let seed = resolve(args.seed, file.seed, 42);
    let overrides = match resolve_opt(args.plural_overrides, file.plural_overrides) {
        Some(path) => {
            let text = read_to_string(&path)?;
            PluralOverrides::from_json_str(&text).map_err(CliError::from_oracle)?
        }
        None => PluralOverrides::default(),
    };

    let mut settings = json!({
        "mode": args.mode,
        "delimiter": delimiter.to_string(),
        "human": args.human,
        "output": args.output,
        "cache": cache_path,
    });

    let concepts = human.concepts().to_vec();
    let features = human.features().to_vec();

    let oracle: Box<dyn Oracle> = match args.mode.as_str() {
        "synthetic" => {
            let fp_rate = resolve(args.fp_rate, file.fp_rate, 0.0);
            let fn_rate = resolve(args.fn_rate, file.fn_rate, 0.0);
            settings["fp_rate"] = json!(fp_rate);
            settings["fn_rate"] = json!(fn_rate);
            settings["seed"] = json!(seed);
            let synthetic = SyntheticOracle::new(human.clone(), fp_rate, fn_rate, seed)
                .map_err(CliError::from_oracle)?;
            let cache = ResponseCache::open(&cache_path).map_err(CliError::from_oracle)?;
            Box::new(CachedOracle::new(synthetic, cache, overrides))
        }
        "live" => {
            let endpoint = resolve_opt(args.endpoint, file.endpoint).ok_or_else(|| {
                CliError::Usage("live mode requires --endpoint".to_string())
            })?;
            let model = resolve_opt(args.model, file.model).ok_or_else(|| {
                CliError::Usage("live mode requires --model".to_string())
            })?;
            let config = OracleConfig {
                endpoint_url: endpoint.clone(),
                model_id: model.clone(),
                timeout: Duration::from_secs(resolve(args.timeout_secs, file.timeout_secs, 30)),
                max_retries: resolve(args.max_retries, file.max_retries, 3),
                min_request_interval: Duration::from_millis(resolve(
                    args.min_interval_ms,
                    file.min_interval_ms,
                    0,
                )),
                cache_path: Some(cache_path.clone()),
                auth_token_env_var: resolve(
                    args.auth_env,
                    file.auth_env,
                    DEFAULT_AUTH_ENV.to_string(),
                ),
            };
            settings["endpoint"] = json!(config.endpoint_url);
            settings["model"] = json!(config.model_id);
            settings["timeout_secs"] = json!(config.timeout.as_secs());
            settings["max_retries"] = json!(config.max_retries);
            settings["min_interval_ms"] = json!(config.min_request_interval.as_millis() as u64);
            settings["auth_env"] = json!(config.auth_token_env_var);
            Box::new(live_oracle(&config, overrides).map_err(CliError::from_oracle)?)
        }
        other => {
            return Err(CliError::Usage(format!(
                "mode must be synthetic or live, got {other:?}"
            )))
        }
    };

    let mut manifest = RunManifest::new("oracle-fill", Some(seed), settings);
    manifest.add_input(&args.human)?;
    manifest.add_output(&args.output);
    manifest.write_next_to(&args.output)?;

    let machine =
        fill_matrix(oracle.as_ref(), &concepts, &features).map_err(CliError::from_oracle)?;
    let serialized = machine
        .to_delimited(delimiter)
        .map_err(|err| CliError::Usage(err.to_string()))?;
    write_string(&args.output, &serialized)?;

    println!("cells: {}", machine.concept_count() * machine.feature_count());
    println!("density: {:.6}", machine.density());
    println!("cache: {}", cache_path.display());
    Ok(())
}

fn fit_config(l2: f64, binarize_threshold: f64) -> FitConfig<f64> {
    FitConfig {
        l2_penalty: l2,
        binarize_threshold,
        ..FitConfig::default()
    }
}

pub fn loo(args: LooArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let delimiter = parse_delimiter(resolve_opt(args.common.delimiter, file.delimiter))?;
    let rank = resolve(args.rank, file.rank, DEFAULT_RANK);
    let l2 = resolve(args.l2, file.l2, 1.0);
    let binarize_threshold = resolve(args.binarize_threshold, file.binarize_threshold, 0.5);
    let correction = parse_correction(resolve_opt(args.correction, file.correction))?;
    let jobs = resolve_opt(args.jobs, file.jobs);

    let human = load_binary_matrix(&args.human, delimiter)?;
    let machine = load_binary_matrix(&args.machine, delimiter)?;
    let cfg = fit_config(l2, binarize_threshold);

    let json_path = args.out.with_extension("json");
    let csv_path = args.out.with_extension("csv");
    let mut manifest = RunManifest::new(
        "loo",
        None,
        json!({
            "delimiter": delimiter.to_string(),
            "rank": rank,
            "l2": l2,
            "binarize_threshold": binarize_threshold,
            "correction": correction.to_string(),
            "jobs": jobs,
            "human": args.human,
            "machine": args.machine,
        }),
    );
    manifest.add_input(&args.human)?;
    manifest.add_input(&args.machine)?;
    manifest.add_output(&json_path);
    manifest.add_output(&csv_path);
    manifest.write_next_to(&args.out)?;

    let pool = thread_pool(jobs)?;
    let report = pool
        .install(|| leave_one_out(&human, &machine, rank, &cfg, correction))
        .map_err(CliError::from_experiment)?;

    emit_report(Report::Loo(&report), &json_path, ReportFormat::Json)
        .map_err(CliError::from_experiment)?;
    emit_report(
        Report::Loo(&report),
        &csv_path,
        ReportFormat::Delimited(delimiter),
    )
    .map_err(CliError::from_experiment)?;

    println!("evaluated: {}", report.per_concept.len());
    println!("failed: {}", report.failures.len());
    println!("mean_d_prime_raw: {:.6}", report.mean_raw);
    println!("mean_d_prime_completed: {:.6}", report.mean_completed);
    match report.paired_t_value {
        Some(t) => println!("paired_t: {:.6} (df {})", t, report.df),
        None => println!("paired_t: degenerate (df {})", report.df),
    }
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let delimiter = parse_delimiter(resolve_opt(args.common.delimiter, file.delimiter))?;
    let rank = resolve(args.rank, file.rank, DEFAULT_RANK);
    let l2 = resolve(args.l2, file.l2, 1.0);
    let binarize_threshold = resolve(args.binarize_threshold, file.binarize_threshold, 0.5);
    let correction = parse_correction(resolve_opt(args.correction, file.correction))?;
    let jobs = resolve_opt(args.jobs, file.jobs);
    let repeats = resolve(args.repeats, file.repeats, 5);
    let seed = resolve(args.seed, file.seed, 42);
    let fractions = match resolve_opt(args.fractions, None) {
        Some(text) => text
            .split(',')
            .map(|token| {
                token.trim().parse::<f64>().map_err(|_| {
                    CliError::Usage(format!("fraction {token:?} is not a number"))
                })
            })
            .collect::<Result<Vec<f64>, CliError>>()?,
        None => file
            .fractions
            .unwrap_or_else(|| (1..=9).map(|i| i as f64 / 10.0).collect()),
    };

    let human = load_binary_matrix(&args.human, delimiter)?;
    let machine = load_binary_matrix(&args.machine, delimiter)?;
    let cfg = fit_config(l2, binarize_threshold);

    let json_path = args.out.with_extension("json");
    let csv_path = args.out.with_extension("csv");
    let mut manifest = RunManifest::new(
        "sweep",
        Some(seed),
        json!({
            "delimiter": delimiter.to_string(),
            "rank": rank,
            "l2": l2,
            "binarize_threshold": binarize_threshold,
            "correction": correction.to_string(),
            "fractions": fractions,
            "repeats": repeats,
            "jobs": jobs,
            "human": args.human,
            "machine": args.machine,
        }),
    );
    manifest.add_input(&args.human)?;
    manifest.add_input(&args.machine)?;
    manifest.add_output(&json_path);
    manifest.add_output(&csv_path);
    manifest.write_next_to(&args.out)?;

    let pool = thread_pool(jobs)?;
    let report = pool
        .install(|| {
            holdout_sweep(
                &human, &machine, &fractions, repeats, seed, rank, &cfg, correction,
            )
        })
        .map_err(CliError::from_experiment)?;

    emit_report(Report::Sweep(&report), &json_path, ReportFormat::Json)
        .map_err(CliError::from_experiment)?;
    emit_report(
        Report::Sweep(&report),
        &csv_path,
        ReportFormat::Delimited(delimiter),
    )
    .map_err(CliError::from_experiment)?;

    for row in &report.per_fraction {
        match row.paired_t_value {
            Some(t) => println!(
                "fraction {:.3}: mean_diff {:.6} t {:.6} df {}",
                row.fraction, row.mean_d_prime_difference, t, row.df
            ),
            None => println!(
                "fraction {:.3}: mean_diff {:.6} t degenerate df {}",
                row.fraction, row.mean_d_prime_difference, row.df
            ),
        }
    }
    Ok(())
}
