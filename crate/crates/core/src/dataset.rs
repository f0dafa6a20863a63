//! Ingestion, validation, thresholding, and splitting of concept-by-feature
//! norm tables.
//!
//! Tables are delimiter-separated text with a mandatory header row: a corner
//! token followed by the feature labels, then one row per concept. Labels are
//! UTF-8 and passed through verbatim; there is no quoting, so a label may not
//! contain the delimiter or a line break.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("input has no header row")]
    MissingHeader,
    #[error("header declares no feature columns")]
    NoFeatures,
    #[error("no concept rows after the header")]
    NoConcepts,
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: empty label")]
    EmptyLabel { line: usize },
    #[error("duplicate feature label {label:?}")]
    DuplicateFeature { label: String },
    #[error("line {line}: duplicate concept label {label:?}")]
    DuplicateConcept { line: usize, label: String },
    #[error("line {line}, column {column}: cell {token:?} is not an integer")]
    NonIntegerCell {
        line: usize,
        column: usize,
        token: String,
    },
    #[error("line {line}, column {column}: cell {token:?} is not a number")]
    NonNumericCell {
        line: usize,
        column: usize,
        token: String,
    },
    #[error("line {line}, column {column}: value {value} exceeds maximum {max}")]
    CellOutOfRange {
        line: usize,
        column: usize,
        value: u32,
        max: u32,
    },
    #[error("cell value {value} is not binary")]
    NonBinaryCell { value: u32 },
    #[error("rater total must be at least 1")]
    InvalidRaterTotal,
    #[error("threshold {threshold} outside [1, {rater_total}]")]
    ThresholdOutOfRange { threshold: u32, rater_total: u32 },
    #[error("holdout fraction {fraction} outside the open interval (0, 1)")]
    InvalidHoldoutFraction { fraction: f64 },
    #[error("need at least {needed} concepts, have {have}")]
    TooFewConcepts { needed: usize, have: usize },
    #[error("label {label:?} contains the delimiter or a line break")]
    UnserializableLabel { label: String },
    #[error("{rows}x{cols} grid does not match {concepts} concepts x {features} features")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        concepts: usize,
        features: usize,
    },
}

/// How cells of a norm table are interpreted while parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    /// Integer rater-agreement counts in `[0, rater_total]`.
    Counts { rater_total: u32 },
    /// Cells already thresholded to `{0, 1}`.
    Binary,
}

/// Result of [`parse_norm_table`], matching the requested [`ValueKind`].
#[derive(Debug, Clone, PartialEq)]
pub enum NormTable {
    Counts(RaterCountMatrix),
    Binary(BinaryFeatureMatrix),
}

/// Labeled concept-by-feature grid of rater agreement counts.
#[derive(Debug, Clone, PartialEq)]
pub struct RaterCountMatrix {
    concepts: Vec<String>,
    features: Vec<String>,
    counts: Array2<u32>,
    rater_total: u32,
}

/// Labeled concept-by-feature grid of `{0, 1}` cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryFeatureMatrix {
    concepts: Vec<String>,
    features: Vec<String>,
    cells: Array2<u8>,
}

fn validate_labels(
    concepts: &[String],
    features: &[String],
    rows: usize,
    cols: usize,
) -> Result<(), DatasetError> {
    if concepts.is_empty() {
        return Err(DatasetError::NoConcepts);
    }
    if features.is_empty() {
        return Err(DatasetError::NoFeatures);
    }
    if rows != concepts.len() || cols != features.len() {
        return Err(DatasetError::DimensionMismatch {
            rows,
            cols,
            concepts: concepts.len(),
            features: features.len(),
        });
    }
    let mut seen = HashSet::new();
    for label in features {
        if label.is_empty() {
            return Err(DatasetError::EmptyLabel { line: 1 });
        }
        if !seen.insert(label.as_str()) {
            return Err(DatasetError::DuplicateFeature {
                label: label.clone(),
            });
        }
    }
    let mut seen = HashSet::new();
    for (i, label) in concepts.iter().enumerate() {
        if label.is_empty() {
            return Err(DatasetError::EmptyLabel { line: i + 2 });
        }
        if !seen.insert(label.as_str()) {
            return Err(DatasetError::DuplicateConcept {
                line: i + 2,
                label: label.clone(),
            });
        }
    }
    Ok(())
}

impl RaterCountMatrix {
    pub fn new(
        concepts: Vec<String>,
        features: Vec<String>,
        counts: Array2<u32>,
        rater_total: u32,
    ) -> Result<Self, DatasetError> {
        if rater_total < 1 {
            return Err(DatasetError::InvalidRaterTotal);
        }
        let (rows, cols) = counts.dim();
        validate_labels(&concepts, &features, rows, cols)?;
        if let Some(&value) = counts.iter().find(|&&c| c > rater_total) {
            return Err(DatasetError::CellOutOfRange {
                line: 0,
                column: 0,
                value,
                max: rater_total,
            });
        }
        Ok(Self {
            concepts,
            features,
            counts,
            rater_total,
        })
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn counts(&self) -> &Array2<u32> {
        &self.counts
    }

    pub fn rater_total(&self) -> u32 {
        self.rater_total
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    /// Serializes back to the delimited table format.
    pub fn to_delimited(&self, delimiter: char) -> Result<String, DatasetError> {
        serialize_grid(&self.concepts, &self.features, delimiter, |i, j| {
            self.counts[[i, j]].to_string()
        })
    }
}

impl BinaryFeatureMatrix {
    pub fn new(
        concepts: Vec<String>,
        features: Vec<String>,
        cells: Array2<u8>,
    ) -> Result<Self, DatasetError> {
        let (rows, cols) = cells.dim();
        validate_labels(&concepts, &features, rows, cols)?;
        if let Some(&value) = cells.iter().find(|&&c| c > 1) {
            return Err(DatasetError::NonBinaryCell {
                value: value as u32,
            });
        }
        Ok(Self {
            concepts,
            features,
            cells,
        })
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn cells(&self) -> &Array2<u8> {
        &self.cells
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn row(&self, index: usize) -> ArrayView1<'_, u8> {
        self.cells.row(index)
    }

    pub fn concept_index(&self, label: &str) -> Option<usize> {
        self.concepts.iter().position(|c| c == label)
    }

    pub fn feature_index(&self, label: &str) -> Option<usize> {
        self.features.iter().position(|f| f == label)
    }

    /// Fraction of cells equal to one.
    pub fn density(&self) -> f64 {
        let ones = self.cells.iter().filter(|&&c| c == 1).count();
        ones as f64 / (self.concept_count() * self.feature_count()) as f64
    }

    /// Copies the `{0, 1}` cells into a real-valued grid.
    pub fn to_real<T: Real>(&self) -> Array2<T> {
        self.cells.mapv(|c| if c == 1 { T::one() } else { T::zero() })
    }

    /// New matrix containing the given concept rows, in the order listed.
    pub fn select_concepts(&self, indices: &[usize]) -> Result<Self, DatasetError> {
        let concepts: Vec<String> = indices.iter().map(|&i| self.concepts[i].clone()).collect();
        let mut cells = Array2::zeros((indices.len(), self.feature_count()));
        for (out, &src) in indices.iter().enumerate() {
            cells.row_mut(out).assign(&self.cells.row(src));
        }
        Self::new(concepts, self.features.clone(), cells)
    }

    /// Serializes back to the delimited table format; the result reparses to
    /// an identical matrix.
    pub fn to_delimited(&self, delimiter: char) -> Result<String, DatasetError> {
        serialize_grid(&self.concepts, &self.features, delimiter, |i, j| {
            self.cells[[i, j]].to_string()
        })
    }
}

fn serialize_grid(
    concepts: &[String],
    features: &[String],
    delimiter: char,
    cell: impl Fn(usize, usize) -> String,
) -> Result<String, DatasetError> {
    for label in concepts.iter().chain(features.iter()) {
        if label.contains(delimiter) || label.contains('\n') || label.contains('\r') {
            return Err(DatasetError::UnserializableLabel {
                label: label.clone(),
            });
        }
    }
    let mut out = String::new();
    out.push_str("concept");
    for feature in features {
        out.push(delimiter);
        out.push_str(feature);
    }
    out.push('\n');
    for (i, concept) in concepts.iter().enumerate() {
        out.push_str(concept);
        for j in 0..features.len() {
            out.push(delimiter);
            out.push_str(&cell(i, j));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Splits `text` into logical rows of fields. Tolerates CRLF endings and a
/// trailing final newline; everything else is strict.
fn split_rows(text: &str, delimiter: char) -> Vec<(usize, Vec<&str>)> {
    let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
    for (idx, line) in text.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        rows.push((idx + 1, line.split(delimiter).collect()));
    }
    // A final newline leaves one empty trailing row.
    if let Some((_, fields)) = rows.last() {
        if fields.len() == 1 && fields[0].is_empty() {
            rows.pop();
        }
    }
    rows
}

struct ParsedGrid<C> {
    concepts: Vec<String>,
    features: Vec<String>,
    cells: Vec<C>,
}

fn parse_grid<C>(
    text: &str,
    delimiter: char,
    parse_cell: impl Fn(usize, usize, &str) -> Result<C, DatasetError>,
) -> Result<ParsedGrid<C>, DatasetError> {
    let mut rows = split_rows(text, delimiter).into_iter();
    let (_, header) = rows.next().ok_or(DatasetError::MissingHeader)?;
    if header.len() < 2 {
        return Err(DatasetError::NoFeatures);
    }
    let features: Vec<String> = header[1..].iter().map(|s| s.to_string()).collect();
    let expected = header.len();

    let mut concepts = Vec::new();
    let mut cells = Vec::new();
    for (line, fields) in rows {
        if fields.len() != expected {
            return Err(DatasetError::RaggedRow {
                line,
                expected,
                found: fields.len(),
            });
        }
        concepts.push(fields[0].to_string());
        for (j, token) in fields[1..].iter().enumerate() {
            cells.push(parse_cell(line, j + 2, token)?);
        }
    }
    Ok(ParsedGrid {
        concepts,
        features,
        cells,
    })
}

/// Parses a delimited norm table as either rater counts or binary cells.
///
/// The first row must be a header (corner token, then feature labels); each
/// body row is a concept label followed by exactly one integer per feature.
pub fn parse_norm_table(
    text: &str,
    delimiter: char,
    kind: ValueKind,
) -> Result<NormTable, DatasetError> {
    let max = match kind {
        ValueKind::Counts { rater_total } => {
            if rater_total < 1 {
                return Err(DatasetError::InvalidRaterTotal);
            }
            rater_total
        }
        ValueKind::Binary => 1,
    };
    let grid = parse_grid(text, delimiter, |line, column, token| {
        let value: u32 = token
            .parse()
            .map_err(|_| DatasetError::NonIntegerCell {
                line,
                column,
                token: token.to_string(),
            })?;
        if value > max {
            return Err(DatasetError::CellOutOfRange {
                line,
                column,
                value,
                max,
            });
        }
        Ok(value)
    })?;
    let shape = (grid.concepts.len(), grid.features.len());
    match kind {
        ValueKind::Counts { rater_total } => {
            let counts = Array2::from_shape_vec(shape, grid.cells).expect("shape checked");
            Ok(NormTable::Counts(RaterCountMatrix::new(
                grid.concepts,
                grid.features,
                counts,
                rater_total,
            )?))
        }
        ValueKind::Binary => {
            let cells = grid.cells.iter().map(|&c| c as u8).collect();
            let cells = Array2::from_shape_vec(shape, cells).expect("shape checked");
            Ok(NormTable::Binary(BinaryFeatureMatrix::new(
                grid.concepts,
                grid.features,
                cells,
            )?))
        }
    }
}

/// Labeled real-valued table, as parsed by [`parse_real_table`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealTable {
    pub concepts: Vec<String>,
    pub features: Vec<String>,
    pub cells: Array2<f64>,
}

/// Parses a table with the same layout but real-valued cells (used for the
/// scree command, which accepts arbitrary numeric matrices).
pub fn parse_real_table(text: &str, delimiter: char) -> Result<RealTable, DatasetError> {
    let grid = parse_grid(text, delimiter, |line, column, token| {
        let value: f64 = token
            .parse()
            .map_err(|_| DatasetError::NonNumericCell {
                line,
                column,
                token: token.to_string(),
            })?;
        if !value.is_finite() {
            return Err(DatasetError::NonNumericCell {
                line,
                column,
                token: token.to_string(),
            });
        }
        Ok(value)
    })?;
    let shape = (grid.concepts.len(), grid.features.len());
    validate_labels(&grid.concepts, &grid.features, shape.0, shape.1)?;
    let cells = Array2::from_shape_vec(shape, grid.cells).expect("shape checked");
    Ok(RealTable {
        concepts: grid.concepts,
        features: grid.features,
        cells,
    })
}

/// Binarizes rater counts: a cell becomes 1 iff its count reaches `threshold`.
///
/// The default threshold equals the rater total, i.e. unanimity. Rows and
/// columns that end up all-zero are retained.
pub fn threshold_unanimous(
    counts: &RaterCountMatrix,
    threshold: u32,
) -> Result<BinaryFeatureMatrix, DatasetError> {
    if threshold < 1 || threshold > counts.rater_total {
        return Err(DatasetError::ThresholdOutOfRange {
            threshold,
            rater_total: counts.rater_total,
        });
    }
    let cells = counts.counts.mapv(|c| u8::from(c >= threshold));
    BinaryFeatureMatrix::new(counts.concepts.clone(), counts.features.clone(), cells)
}

/// Holdout size for `n` concepts at `fraction`: round half up, then clamp to
/// `[1, n - 1]` so both sides stay non-empty.
pub fn holdout_size(n: usize, fraction: f64) -> usize {
    let rounded = (n as f64 * fraction + 0.5).floor() as usize;
    rounded.clamp(1, n - 1)
}

/// Splits concepts into `(retained, held_out)` disjoint matrices.
///
/// Deterministic for a given seed; both sides keep the original concept order
/// and the full feature axis.
pub fn split_concepts(
    matrix: &BinaryFeatureMatrix,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(BinaryFeatureMatrix, BinaryFeatureMatrix), DatasetError> {
    let n = matrix.concept_count();
    if n < 2 {
        return Err(DatasetError::TooFewConcepts { needed: 2, have: n });
    }
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(DatasetError::InvalidHoldoutFraction {
            fraction: holdout_fraction,
        });
    }
    let k = holdout_size(n, holdout_fraction);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates; only the first k draws matter but the full pass keeps the
    // stream position independent of k.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut held: Vec<usize> = order[..k].to_vec();
    let mut retained: Vec<usize> = order[k..].to_vec();
    held.sort_unstable();
    retained.sort_unstable();

    Ok((
        matrix.select_concepts(&retained)?,
        matrix.select_concepts(&held)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn counts_2x2() -> RaterCountMatrix {
        RaterCountMatrix::new(
            vec!["cat".into(), "dog".into()],
            vec!["f1".into(), "f2".into()],
            array![[4, 0], [2, 4]],
            4,
        )
        .unwrap()
    }

    #[test]
    fn parses_count_table() {
        let table = "c,f1,f2\ncat,4,0\ndog,2,4\n";
        let parsed = parse_norm_table(table, ',', ValueKind::Counts { rater_total: 4 }).unwrap();
        match parsed {
            NormTable::Counts(m) => assert_eq!(m, counts_2x2()),
            NormTable::Binary(_) => panic!("expected counts"),
        }
    }

    #[test]
    fn ragged_row_is_rejected_with_line_number() {
        let table = "c,f1,f2\ncat,4,0\ndog,2\n";
        let err = parse_norm_table(table, ',', ValueKind::Counts { rater_total: 4 }).unwrap_err();
        match err {
            DatasetError::RaggedRow {
                line,
                expected,
                found,
            } => {
                assert_eq!((line, expected, found), (3, 3, 2));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_out_of_range_cells_are_rejected() {
        let dup = "c,f1,f1\ncat,1,0\n";
        assert!(matches!(
            parse_norm_table(dup, ',', ValueKind::Binary),
            Err(DatasetError::DuplicateFeature { .. })
        ));
        let dup_concept = "c,f1\ncat,1\ncat,0\n";
        assert!(matches!(
            parse_norm_table(dup_concept, ',', ValueKind::Binary),
            Err(DatasetError::DuplicateConcept { line: 3, .. })
        ));
        let out_of_range = "c,f1\ncat,5\n";
        assert!(matches!(
            parse_norm_table(out_of_range, ',', ValueKind::Counts { rater_total: 4 }),
            Err(DatasetError::CellOutOfRange { value: 5, max: 4, .. })
        ));
        let non_integer = "c,f1\ncat,x\n";
        assert!(matches!(
            parse_norm_table(non_integer, ',', ValueKind::Binary),
            Err(DatasetError::NonIntegerCell { line: 2, column: 2, .. })
        ));
    }

    #[test]
    fn threshold_requires_all_raters_by_default() {
        let binary = threshold_unanimous(&counts_2x2(), 4).unwrap();
        assert_eq!(binary.cells(), &array![[1u8, 0], [0, 1]]);

        // count 3 under threshold 4 stays 0
        let m = RaterCountMatrix::new(
            vec!["c".into()],
            vec!["f".into()],
            array![[3]],
            4,
        )
        .unwrap();
        assert_eq!(threshold_unanimous(&m, 4).unwrap().cells(), &array![[0u8]]);
        assert_eq!(threshold_unanimous(&m, 3).unwrap().cells(), &array![[1u8]]);
    }

    #[test]
    fn threshold_out_of_range_is_rejected() {
        let m = counts_2x2();
        assert!(matches!(
            threshold_unanimous(&m, 0),
            Err(DatasetError::ThresholdOutOfRange { .. })
        ));
        assert!(matches!(
            threshold_unanimous(&m, 5),
            Err(DatasetError::ThresholdOutOfRange { .. })
        ));
    }

    #[test]
    fn all_zero_counts_threshold_to_all_zero_matrix() {
        let m = RaterCountMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["f".into()],
            array![[0], [0]],
            4,
        )
        .unwrap();
        for threshold in 1..=4 {
            let out = threshold_unanimous(&m, threshold).unwrap();
            assert!(out.cells().iter().all(|&c| c == 0));
        }
    }

    #[test]
    fn density_counts_ones() {
        let ones = BinaryFeatureMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["f1".into(), "f2".into()],
            array![[1, 1], [1, 1]],
        )
        .unwrap();
        assert_eq!(ones.density(), 1.0);

        let zeros = BinaryFeatureMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["f1".into(), "f2".into()],
            array![[0, 0], [0, 0]],
        )
        .unwrap();
        assert_eq!(zeros.density(), 0.0);

        let quarter = BinaryFeatureMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["f1".into(), "f2".into()],
            array![[1, 0], [0, 0]],
        )
        .unwrap();
        assert_eq!(quarter.density(), 0.25);
    }

    #[test]
    fn holdout_sizes_follow_round_half_up_then_clamp() {
        // (n, fraction, expected holdout)
        let cases = [
            (10, 0.3, 3),
            (2, 0.9, 1),  // round(1.8) = 2, clamped to n - 1
            (3, 0.5, 2),  // round half up: 1.5 -> 2
            (4, 0.125, 1),
            (10, 0.05, 1), // round half up: 0.5 -> 1
            (10, 0.95, 9), // round(9.5) = 10, clamped to 9
            (60, 0.1, 6),
            (60, 0.9, 54),
        ];
        for (n, fraction, expected) in cases {
            assert_eq!(holdout_size(n, fraction), expected, "n={n} f={fraction}");
        }
    }

    fn numbered_matrix(n: usize, m: usize) -> BinaryFeatureMatrix {
        let concepts = (0..n).map(|i| format!("c{i}")).collect();
        let features = (0..m).map(|j| format!("f{j}")).collect();
        let cells = Array2::from_shape_fn((n, m), |(i, j)| ((i + j) % 2) as u8);
        BinaryFeatureMatrix::new(concepts, features, cells).unwrap()
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let m = numbered_matrix(10, 4);
        let (retained, held) = split_concepts(&m, 0.3, 7).unwrap();
        assert_eq!(retained.concept_count(), 7);
        assert_eq!(held.concept_count(), 3);

        let (retained2, held2) = split_concepts(&m, 0.3, 7).unwrap();
        assert_eq!(retained, retained2);
        assert_eq!(held, held2);

        let mut all: Vec<&String> = retained.concepts().iter().chain(held.concepts()).collect();
        all.sort();
        let mut expected: Vec<&String> = m.concepts().iter().collect();
        expected.sort();
        assert_eq!(all, expected);
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        let m = numbered_matrix(1, 3);
        assert!(matches!(
            split_concepts(&m, 0.5, 0),
            Err(DatasetError::TooFewConcepts { .. })
        ));
        let m = numbered_matrix(4, 3);
        assert!(matches!(
            split_concepts(&m, 0.0, 0),
            Err(DatasetError::InvalidHoldoutFraction { .. })
        ));
        assert!(matches!(
            split_concepts(&m, 1.0, 0),
            Err(DatasetError::InvalidHoldoutFraction { .. })
        ));
    }

    #[test]
    fn serialize_rejects_delimiter_in_label() {
        let m = BinaryFeatureMatrix::new(
            vec!["a,b".into()],
            vec!["f".into()],
            array![[1]],
        )
        .unwrap();
        assert!(matches!(
            m.to_delimited(','),
            Err(DatasetError::UnserializableLabel { .. })
        ));
        assert!(m.to_delimited('\t').is_ok());
    }
}
