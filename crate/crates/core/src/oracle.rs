//! Machine feature verification: asks an oracle whether a single property is
//! true of a single concept and assembles the answers into binary vectors.
//!
//! Three oracle flavors share one trait: a live text-generation endpoint
//! speaking a minimal JSON protocol, a persistent append-only JSONL cache
//! layered over any inner oracle, and a synthetic oracle that flips
//! ground-truth bits at configured false-positive/false-negative rates for
//! offline experiments.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{BinaryFeatureMatrix, DatasetError};

const MAX_NEW_TOKENS: u32 = 8;
const BACKOFF_BASE: Duration = Duration::from_millis(200);
const BACKOFF_CAP: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("concept and feature labels must be non-empty")]
    EmptyQueryField,
    #[error("unknown concept {label:?}")]
    UnknownConcept { label: String },
    #[error("unknown feature {label:?}")]
    UnknownFeature { label: String },
    #[error("flip rates must lie in [0, 1)")]
    RatesOutOfRange,
    #[error("completion {text:?} has no leading true/false token")]
    UnparseableAnswer { text: String },
    #[error("oracle configuration error: {reason}")]
    Config { reason: String },
    #[error("request failed after {attempts} attempts: {source}")]
    Network {
        attempts: u32,
        source: reqwest::Error,
    },
    #[error("endpoint returned HTTP {status} after {attempts} attempts")]
    HttpStatus { status: u16, attempts: u32 },
    #[error("endpoint response has no text field: {body}")]
    Protocol { body: String },
    #[error("cache I/O error: {0}")]
    CacheIo(#[from] std::io::Error),
    #[error("cache line {line} is not a valid record")]
    CacheCorrupt { line: usize },
    #[error("plural override file is not a JSON string map: {0}")]
    BadOverrides(serde_json::Error),
    #[error("feature {feature:?} (index {index}): {source}")]
    Cell {
        feature: String,
        index: usize,
        #[source]
        source: Box<OracleError>,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// One feature-verification question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureQuery {
    pub concept: String,
    pub feature: String,
}

impl FeatureQuery {
    pub fn new(concept: impl Into<String>, feature: impl Into<String>) -> Result<Self, OracleError> {
        let concept = concept.into();
        let feature = feature.into();
        if concept.is_empty() || feature.is_empty() {
            return Err(OracleError::EmptyQueryField);
        }
        Ok(Self { concept, feature })
    }
}

/// Where an answer came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerSource {
    Live,
    Cache,
    Synthetic,
}

/// A single parsed oracle answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleAnswer {
    pub value: u8,
    pub raw_text: String,
    pub source: AnswerSource,
}

/// Transport and cache settings for the live oracle.
#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub endpoint_url: String,
    pub model_id: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub min_request_interval: Duration,
    pub cache_path: Option<PathBuf>,
    /// Name of the environment variable holding the bearer token; an empty
    /// name disables authentication.
    pub auth_token_env_var: String,
}

/// Concept-to-plural substitutions for the prompt template. Concepts without
/// an override get a literal `s` appended.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PluralOverrides {
    map: BTreeMap<String, String>,
}

impl PluralOverrides {
    pub fn from_json_str(text: &str) -> Result<Self, OracleError> {
        let map: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(OracleError::BadOverrides)?;
        Ok(Self { map })
    }

    pub fn insert(&mut self, concept: impl Into<String>, plural: impl Into<String>) {
        self.map.insert(concept.into(), plural.into());
    }

    pub fn plural_of(&self, concept: &str) -> String {
        self.map
            .get(concept)
            .cloned()
            .unwrap_or_else(|| format!("{concept}s"))
    }
}

/// Renders the fixed few-shot prompt for a query. Byte-identical output for
/// identical inputs; the terminal answer slot is left open for the model.
pub fn build_prompt(query: &FeatureQuery) -> String {
    build_prompt_with(query, &PluralOverrides::default())
}

pub fn build_prompt_with(query: &FeatureQuery, overrides: &PluralOverrides) -> String {
    let plural = overrides.plural_of(&query.concept);
    format!(
        "Q: Is the property [is_female] true for the concept [book]?\n\
         A: False\n\
         Q: Is the property [can_be_digital] true for the concept [book]\n\
         A: True\n\
         In one word True/False, answer the following question\n\
         Q: Is the property [{feature}] true for {plural}?\n\
         A:",
        feature = query.feature,
        plural = plural,
    )
}

/// Lowercase hex SHA-256 of the prompt text, used as part of the cache key.
pub fn prompt_sha256(prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Maps a completion to a bit: the first alphabetic token decides,
/// case-insensitively. Anything else is unparseable.
pub fn parse_answer(raw_text: &str) -> Result<u8, OracleError> {
    let mut token = String::new();
    for ch in raw_text.chars() {
        if ch.is_alphabetic() {
            token.extend(ch.to_lowercase());
        } else if !token.is_empty() {
            break;
        }
    }
    match token.as_str() {
        "true" => Ok(1),
        "false" => Ok(0),
        _ => Err(OracleError::UnparseableAnswer {
            text: raw_text.to_string(),
        }),
    }
}

/// Anything that can answer feature-verification queries.
pub trait Oracle: Send + Sync {
    fn answer(&self, concept: &str, feature: &str) -> Result<OracleAnswer, OracleError>;
}

// ---------------------------------------------------------------------------
// Response cache
// ---------------------------------------------------------------------------

/// One JSONL cache record. `value` is absent for completions that could not
/// be parsed; such records are kept for audit but never served as hits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub concept: String,
    pub feature: String,
    pub prompt_sha256: String,
    pub raw_text: String,
    pub value: Option<u8>,
    pub timestamp: u64,
}

/// Append-only JSONL response cache. Later records win on reload, and a torn
/// final line (from an interrupted run) is tolerated.
pub struct ResponseCache {
    entries: HashMap<(String, String), CacheRecord>,
    writer: Option<BufWriter<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            entries: HashMap::new(),
            writer: None,
        }
    }

    pub fn open(path: &Path) -> Result<Self, OracleError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
            let last = lines.len();
            for (idx, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(line) {
                    Ok(record) => {
                        entries.insert((record.concept.clone(), record.feature.clone()), record);
                    }
                    Err(_) if idx + 1 == last => {
                        // torn tail from a crashed append; the cell will be re-queried
                    }
                    Err(_) => return Err(OracleError::CacheCorrupt { line: idx + 1 }),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            entries,
            writer: Some(BufWriter::new(file)),
        })
    }

    /// A record counts as a hit only if it parsed to a value and was produced
    /// by the same prompt bytes.
    pub fn lookup(&self, concept: &str, feature: &str, prompt_hash: &str) -> Option<&CacheRecord> {
        self.entries
            .get(&(concept.to_string(), feature.to_string()))
            .filter(|record| record.value.is_some() && record.prompt_sha256 == prompt_hash)
    }

    pub fn append(&mut self, record: CacheRecord) -> Result<(), OracleError> {
        if let Some(writer) = self.writer.as_mut() {
            serde_json::to_writer(&mut *writer, &record).map_err(std::io::Error::other)?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        self.entries
            .insert((record.concept.clone(), record.feature.clone()), record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Cache layer over any oracle: hits short-circuit, misses are answered by
/// the inner oracle and appended (unparseable completions included).
pub struct CachedOracle<O> {
    inner: O,
    cache: Mutex<ResponseCache>,
    overrides: PluralOverrides,
}

impl<O: Oracle> CachedOracle<O> {
    pub fn new(inner: O, cache: ResponseCache, overrides: PluralOverrides) -> Self {
        Self {
            inner,
            cache: Mutex::new(cache),
            overrides,
        }
    }
}

impl<O: Oracle> Oracle for CachedOracle<O> {
    fn answer(&self, concept: &str, feature: &str) -> Result<OracleAnswer, OracleError> {
        let query = FeatureQuery::new(concept, feature)?;
        let prompt_hash = prompt_sha256(&build_prompt_with(&query, &self.overrides));
        let mut cache = self.cache.lock().expect("cache lock");
        if let Some(record) = cache.lookup(concept, feature, &prompt_hash) {
            return Ok(OracleAnswer {
                value: record.value.expect("hits always carry a value"),
                raw_text: record.raw_text.clone(),
                source: AnswerSource::Cache,
            });
        }
        let result = self.inner.answer(concept, feature);
        let record = match &result {
            Ok(answer) => CacheRecord {
                concept: concept.to_string(),
                feature: feature.to_string(),
                prompt_sha256: prompt_hash,
                raw_text: answer.raw_text.clone(),
                value: Some(answer.value),
                timestamp: unix_now(),
            },
            Err(OracleError::UnparseableAnswer { text }) => CacheRecord {
                concept: concept.to_string(),
                feature: feature.to_string(),
                prompt_sha256: prompt_hash,
                raw_text: text.clone(),
                value: None,
                timestamp: unix_now(),
            },
            Err(_) => return result,
        };
        cache.append(record)?;
        result
    }
}

// ---------------------------------------------------------------------------
// Live HTTP oracle
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GenerationRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_new_tokens: u32,
}

#[derive(Deserialize)]
struct GenerationResponse {
    text: Option<String>,
}

/// Blocking HTTP client for a minimal text-generation endpoint:
/// `POST {model, prompt, max_new_tokens}` answered by `{text}`. Outbound
/// requests are serialized and spaced by the configured minimum interval;
/// transient failures (transport errors, 429, 5xx) are retried with
/// exponential backoff.
pub struct HttpOracle {
    client: reqwest::blocking::Client,
    endpoint_url: String,
    model_id: String,
    max_retries: u32,
    min_request_interval: Duration,
    token: Option<String>,
    overrides: PluralOverrides,
    last_request: Mutex<Option<Instant>>,
}

impl HttpOracle {
    pub fn new(config: &OracleConfig, overrides: PluralOverrides) -> Result<Self, OracleError> {
        if config.endpoint_url.is_empty() {
            return Err(OracleError::Config {
                reason: "endpoint URL is empty".to_string(),
            });
        }
        let token = if config.auth_token_env_var.is_empty() {
            None
        } else {
            match std::env::var(&config.auth_token_env_var) {
                Ok(value) => Some(value),
                Err(_) => {
                    return Err(OracleError::Config {
                        reason: format!(
                            "environment variable {} is not set",
                            config.auth_token_env_var
                        ),
                    })
                }
            }
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| OracleError::Config {
                reason: format!("failed to build HTTP client: {e}"),
            })?;
        Ok(Self {
            client,
            endpoint_url: config.endpoint_url.clone(),
            model_id: config.model_id.clone(),
            max_retries: config.max_retries,
            min_request_interval: config.min_request_interval,
            token,
            overrides,
            last_request: Mutex::new(None),
        })
    }

    fn throttle(&self) {
        if self.min_request_interval.is_zero() {
            return;
        }
        let mut last = self.last_request.lock().expect("rate limit lock");
        if let Some(at) = *last {
            let elapsed = at.elapsed();
            if elapsed < self.min_request_interval {
                std::thread::sleep(self.min_request_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn post_prompt(&self, prompt: &str) -> Result<String, OracleError> {
        let attempts = self.max_retries + 1;
        let mut last_error: Option<OracleError> = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = BACKOFF_BASE * 2u32.saturating_pow(attempt - 1);
                std::thread::sleep(backoff.min(BACKOFF_CAP));
            }
            self.throttle();
            let mut request = self.client.post(&self.endpoint_url).json(&GenerationRequest {
                model: &self.model_id,
                prompt,
                max_new_tokens: MAX_NEW_TOKENS,
            });
            if let Some(token) = &self.token {
                request = request.bearer_auth(token);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let body = response.text().map_err(|source| OracleError::Network {
                            attempts: attempt + 1,
                            source,
                        })?;
                        let parsed: GenerationResponse = serde_json::from_str(&body)
                            .map_err(|_| OracleError::Protocol { body: body.clone() })?;
                        return parsed.text.ok_or(OracleError::Protocol { body });
                    }
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    let error = OracleError::HttpStatus {
                        status: status.as_u16(),
                        attempts: attempt + 1,
                    };
                    if !retryable {
                        return Err(error);
                    }
                    last_error = Some(error);
                }
                Err(source) => {
                    last_error = Some(OracleError::Network {
                        attempts: attempt + 1,
                        source,
                    });
                }
            }
        }
        Err(last_error.expect("at least one attempt"))
    }
}

impl Oracle for HttpOracle {
    fn answer(&self, concept: &str, feature: &str) -> Result<OracleAnswer, OracleError> {
        let query = FeatureQuery::new(concept, feature)?;
        let prompt = build_prompt_with(&query, &self.overrides);
        let raw_text = self.post_prompt(&prompt)?;
        let value = parse_answer(&raw_text)?;
        Ok(OracleAnswer {
            value,
            raw_text,
            source: AnswerSource::Live,
        })
    }
}

/// Assembles the live oracle with its cache layer per the configuration.
pub fn live_oracle(
    config: &OracleConfig,
    overrides: PluralOverrides,
) -> Result<CachedOracle<HttpOracle>, OracleError> {
    let cache = match &config.cache_path {
        Some(path) => ResponseCache::open(path)?,
        None => ResponseCache::in_memory(),
    };
    let transport = HttpOracle::new(config, overrides.clone())?;
    Ok(CachedOracle::new(transport, cache, overrides))
}

// ---------------------------------------------------------------------------
// Synthetic oracle
// ---------------------------------------------------------------------------

/// Answers queries by reading a ground-truth matrix and flipping bits:
/// 0 -> 1 with probability `fp_rate`, 1 -> 0 with probability `fn_rate`.
/// The flip decision is a pure function of `(seed, concept, feature)`, so
/// answers do not depend on query order.
pub struct SyntheticOracle {
    truth: BinaryFeatureMatrix,
    concept_index: HashMap<String, usize>,
    feature_index: HashMap<String, usize>,
    fp_rate: f64,
    fn_rate: f64,
    seed: u64,
}

impl SyntheticOracle {
    pub fn new(
        truth: BinaryFeatureMatrix,
        fp_rate: f64,
        fn_rate: f64,
        seed: u64,
    ) -> Result<Self, OracleError> {
        let valid = |r: f64| (0.0..1.0).contains(&r);
        if !valid(fp_rate) || !valid(fn_rate) {
            return Err(OracleError::RatesOutOfRange);
        }
        let concept_index = truth
            .concepts()
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        let feature_index = truth
            .features()
            .iter()
            .enumerate()
            .map(|(j, f)| (f.clone(), j))
            .collect();
        Ok(Self {
            truth,
            concept_index,
            feature_index,
            fp_rate,
            fn_rate,
            seed,
        })
    }

    /// Uniform draw in [0, 1) derived from the cell identity.
    fn cell_unit(&self, concept: &str, feature: &str) -> f64 {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update([0x1f]);
        hasher.update(concept.as_bytes());
        hasher.update([0x1f]);
        hasher.update(feature.as_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        let raw = u64::from_le_bytes(bytes);
        (raw >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl Oracle for SyntheticOracle {
    fn answer(&self, concept: &str, feature: &str) -> Result<OracleAnswer, OracleError> {
        let &row = self
            .concept_index
            .get(concept)
            .ok_or_else(|| OracleError::UnknownConcept {
                label: concept.to_string(),
            })?;
        let &col = self
            .feature_index
            .get(feature)
            .ok_or_else(|| OracleError::UnknownFeature {
                label: feature.to_string(),
            })?;
        let truth = self.truth.cells()[[row, col]];
        let u = self.cell_unit(concept, feature);
        let value = match truth {
            0 if u < self.fp_rate => 1,
            1 if u < self.fn_rate => 0,
            other => other,
        };
        Ok(OracleAnswer {
            value,
            raw_text: if value == 1 { "True" } else { "False" }.to_string(),
            source: AnswerSource::Synthetic,
        })
    }
}

// ---------------------------------------------------------------------------
// Vector / matrix fills
// ---------------------------------------------------------------------------

/// Answers every feature for one concept, in feature order. Failures carry
/// the failing cell's index and label.
pub fn fill_feature_vector(
    oracle: &dyn Oracle,
    concept: &str,
    features: &[String],
) -> Result<Vec<u8>, OracleError> {
    let mut cells = Vec::with_capacity(features.len());
    for (index, feature) in features.iter().enumerate() {
        let answer = oracle
            .answer(concept, feature)
            .map_err(|source| OracleError::Cell {
                feature: feature.clone(),
                index,
                source: Box::new(source),
            })?;
        cells.push(answer.value);
    }
    Ok(cells)
}

/// Fills a whole machine matrix over the given label grid.
pub fn fill_matrix(
    oracle: &dyn Oracle,
    concepts: &[String],
    features: &[String],
) -> Result<BinaryFeatureMatrix, OracleError> {
    let mut cells = ndarray::Array2::zeros((concepts.len(), features.len()));
    for (i, concept) in concepts.iter().enumerate() {
        let row = fill_feature_vector(oracle, concept, features)?;
        for (j, value) in row.into_iter().enumerate() {
            cells[[i, j]] = value;
        }
    }
    Ok(BinaryFeatureMatrix::new(
        concepts.to_vec(),
        features.to_vec(),
        cells,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn prompt_matches_template_for_the_dolphin_example() {
        let query = FeatureQuery::new("Dolphin", "has_two_eyes").unwrap();
        let prompt = build_prompt(&query);
        let expected = "Q: Is the property [is_female] true for the concept [book]?\n\
                        A: False\n\
                        Q: Is the property [can_be_digital] true for the concept [book]\n\
                        A: True\n\
                        In one word True/False, answer the following question\n\
                        Q: Is the property [has_two_eyes] true for Dolphins?\n\
                        A:";
        assert_eq!(prompt, expected);
    }

    #[test]
    fn prompt_substitutes_slots_and_is_deterministic() {
        let query = FeatureQuery::new("alligator", "is_green").unwrap();
        let prompt = build_prompt(&query);
        assert!(prompt.contains("Q: Is the property [is_green] true for alligators?"));
        // few-shot block is identical across queries
        let other = build_prompt(&FeatureQuery::new("Dolphin", "has_two_eyes").unwrap());
        let shared = "Q: Is the property [is_female] true for the concept [book]?\n\
                      A: False\n\
                      Q: Is the property [can_be_digital] true for the concept [book]\n\
                      A: True\n\
                      In one word True/False, answer the following question\n";
        assert!(prompt.starts_with(shared));
        assert!(other.starts_with(shared));
        assert_eq!(prompt, build_prompt(&query));
    }

    #[test]
    fn plural_overrides_replace_the_default_suffix() {
        let mut overrides = PluralOverrides::default();
        overrides.insert("goose", "geese");
        let query = FeatureQuery::new("goose", "can_fly").unwrap();
        let prompt = build_prompt_with(&query, &overrides);
        assert!(prompt.contains("true for geese?"));
        let parsed =
            PluralOverrides::from_json_str(r#"{"goose": "geese"}"#).unwrap();
        assert_eq!(parsed, overrides);
    }

    #[test]
    fn answers_parse_case_insensitively_with_punctuation() {
        assert_eq!(parse_answer("True").unwrap(), 1);
        assert_eq!(parse_answer(" false.").unwrap(), 0);
        assert_eq!(parse_answer("FALSE\n").unwrap(), 0);
        assert!(matches!(
            parse_answer("maybe"),
            Err(OracleError::UnparseableAnswer { .. })
        ));
        assert!(matches!(
            parse_answer("truthful"),
            Err(OracleError::UnparseableAnswer { .. })
        ));
        assert!(matches!(
            parse_answer("  ...  "),
            Err(OracleError::UnparseableAnswer { .. })
        ));
    }

    fn truth_matrix() -> BinaryFeatureMatrix {
        BinaryFeatureMatrix::new(
            vec!["cat".into(), "dog".into()],
            vec!["f1".into(), "f2".into(), "f3".into()],
            array![[1, 0, 1], [0, 1, 0]],
        )
        .unwrap()
    }

    #[test]
    fn noiseless_synthetic_oracle_reproduces_truth() {
        let oracle = SyntheticOracle::new(truth_matrix(), 0.0, 0.0, 7).unwrap();
        let row = fill_feature_vector(
            &oracle,
            "cat",
            &["f1".into(), "f2".into(), "f3".into()],
        )
        .unwrap();
        assert_eq!(row, vec![1, 0, 1]);
    }

    #[test]
    fn synthetic_oracle_is_deterministic_per_seed() {
        let truth = truth_matrix();
        let a = SyntheticOracle::new(truth.clone(), 0.4, 0.4, 11).unwrap();
        let b = SyntheticOracle::new(truth.clone(), 0.4, 0.4, 11).unwrap();
        let concepts = truth.concepts().to_vec();
        let features = truth.features().to_vec();
        let ma = fill_matrix(&a, &concepts, &features).unwrap();
        let mb = fill_matrix(&b, &concepts, &features).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn synthetic_oracle_rejects_unknown_labels_and_bad_rates() {
        let oracle = SyntheticOracle::new(truth_matrix(), 0.0, 0.0, 7).unwrap();
        assert!(matches!(
            oracle.answer("bird", "f1"),
            Err(OracleError::UnknownConcept { .. })
        ));
        assert!(matches!(
            oracle.answer("cat", "f9"),
            Err(OracleError::UnknownFeature { .. })
        ));
        assert!(matches!(
            SyntheticOracle::new(truth_matrix(), 1.0, 0.0, 7),
            Err(OracleError::RatesOutOfRange)
        ));
    }

    #[test]
    fn cell_errors_carry_the_failing_index() {
        let oracle = SyntheticOracle::new(truth_matrix(), 0.0, 0.0, 7).unwrap();
        let err = fill_feature_vector(&oracle, "cat", &["f1".into(), "nope".into()]).unwrap_err();
        match err {
            OracleError::Cell { index, feature, .. } => {
                assert_eq!(index, 1);
                assert_eq!(feature, "nope");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn prompt_hash_distinguishes_prompts() {
        let a = prompt_sha256("a");
        let b = prompt_sha256("b");
        assert_ne!(a, b);
        assert_eq!(a.len(), 64);
    }
}
