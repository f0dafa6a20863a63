//! Completion of a single concept's feature vector.
//!
//! The feature-side factors of a [`RankDecomposition`] become regression
//! predictors (one row per feature, scaled by the singular values). A logistic
//! regression against the machine-generated binary vector recovers the
//! concept's left-singular coordinates; pushing those coordinates back through
//! the predictors yields per-feature probabilities, which are binarized into
//! the completed row.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lowrank::RankDecomposition;
use crate::scalar::{cst, Real};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("target has {target} cells but the design has {design} feature rows")]
    DimensionMismatch { target: usize, design: usize },
    #[error("{labels} feature labels for {rows} design rows")]
    LabelCountMismatch { labels: usize, rows: usize },
    #[error("embedding has {weights} weights but the design has {design} columns")]
    WeightCountMismatch { weights: usize, design: usize },
    #[error("initial weights have length {given}, expected {expected}")]
    BadInitialWeights { given: usize, expected: usize },
    #[error("target value {value} at index {index} is not binary")]
    NonBinaryTarget { index: usize, value: u8 },
    #[error("invalid fit configuration: {reason}")]
    InvalidConfig { reason: &'static str },
    #[error("design matrix contains a non-finite entry")]
    NonFiniteDesign,
    #[error("binarization threshold must lie strictly inside (0, 1)")]
    ThresholdOutOfRange,
    #[error("loss became non-finite during optimization")]
    NonFiniteLoss,
}

/// Regression predictors: row `j` is feature `j`'s right-singular vector
/// scaled by the singular values, i.e. row `j` of `V_d · diag(σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    rows: Array2<T>,
    feature_labels: Vec<String>,
}

impl<T: Real> DesignMatrix<T> {
    /// Builds a design from explicit predictor rows (one per feature).
    pub fn from_rows(rows: Array2<T>, feature_labels: Vec<String>) -> Result<Self, FitError> {
        if feature_labels.len() != rows.nrows() {
            return Err(FitError::LabelCountMismatch {
                labels: feature_labels.len(),
                rows: rows.nrows(),
            });
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFiniteDesign);
        }
        Ok(Self {
            rows,
            feature_labels,
        })
    }

    pub fn rows(&self) -> &Array2<T> {
        &self.rows
    }

    pub fn feature_labels(&self) -> &[String] {
        &self.feature_labels
    }

    pub fn feature_count(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.rows.ncols()
    }
}

/// Fitted weights for one concept: the predicted left-singular coordinates
/// plus an optional intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptEmbedding<T> {
    pub weights: Vec<T>,
    pub intercept: T,
    pub converged: bool,
    pub final_loss: T,
}

/// Optimizer and binarization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig<T> {
    /// L2 penalty on the weights (the intercept is never penalized).
    pub l2_penalty: T,
    pub max_iterations: usize,
    /// Convergence requires the gradient max-norm at or below this value.
    pub gradient_tolerance: T,
    pub include_intercept: bool,
    /// Probabilities strictly above this become 1.
    pub binarize_threshold: T,
}

impl<T: Real> Default for FitConfig<T> {
    fn default() -> Self {
        Self {
            l2_penalty: T::one(),
            max_iterations: 200,
            gradient_tolerance: cst(1e-8),
            include_intercept: true,
            binarize_threshold: cst(0.5),
        }
    }
}

impl<T: Real> FitConfig<T> {
    fn validate(&self) -> Result<(), FitError> {
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= T::zero()) {
            return Err(FitError::InvalidConfig {
                reason: "l2_penalty must be finite and non-negative",
            });
        }
        if self.max_iterations == 0 {
            return Err(FitError::InvalidConfig {
                reason: "max_iterations must be at least 1",
            });
        }
        if !(self.gradient_tolerance.is_finite() && self.gradient_tolerance > T::zero()) {
            return Err(FitError::InvalidConfig {
                reason: "gradient_tolerance must be finite and positive",
            });
        }
        if !(self.binarize_threshold > T::zero() && self.binarize_threshold < T::one()) {
            return Err(FitError::InvalidConfig {
                reason: "binarize_threshold must lie strictly inside (0, 1)",
            });
        }
        Ok(())
    }

    pub fn to_f64(&self) -> FitConfig<f64> {
        FitConfig {
            l2_penalty: self.l2_penalty.to_f64().expect("finite"),
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance.to_f64().expect("finite"),
            include_intercept: self.include_intercept,
            binarize_threshold: self.binarize_threshold.to_f64().expect("finite"),
        }
    }
}

/// Everything produced when completing one concept.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedConcept<T> {
    pub probabilities: Vec<T>,
    pub cells: Vec<u8>,
    pub embedding: ConceptEmbedding<T>,
}

/// Builds the regression predictors from a decomposition: row `j` of the
/// design is `(σ_1 V[j,1], ..., σ_d V[j,d])`, so the fitted weights live in
/// the same coordinates as rows of `left_coords`.
pub fn build_design_matrix<T: Real>(
    dec: &RankDecomposition<T>,
    feature_labels: &[String],
) -> Result<DesignMatrix<T>, FitError> {
    let m = dec.ncols();
    if feature_labels.len() != m {
        return Err(FitError::LabelCountMismatch {
            labels: feature_labels.len(),
            rows: m,
        });
    }
    let mut rows = dec.right_vectors().clone();
    for (k, &sigma) in dec.singular_values().iter().enumerate() {
        rows.column_mut(k).mapv_inplace(|v| v * sigma);
    }
    Ok(DesignMatrix {
        rows,
        feature_labels: feature_labels.to_vec(),
    })
}

#[inline]
fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + exp(z))` without overflow.
#[inline]
fn softplus<T: Real>(z: T) -> T {
    if z >= T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn check_target<T: Real>(design: &DesignMatrix<T>, target: &[u8]) -> Result<(), FitError> {
    if target.len() != design.feature_count() {
        return Err(FitError::DimensionMismatch {
            target: target.len(),
            design: design.feature_count(),
        });
    }
    for (index, &value) in target.iter().enumerate() {
        if value > 1 {
            return Err(FitError::NonBinaryTarget { index, value });
        }
    }
    Ok(())
}

/// L2-regularized negative Bernoulli log-likelihood:
/// `sum_j [softplus(z_j) - h_j z_j] + (λ/2) ||w||^2` with `z = Xw + b`.
pub fn logistic_loss<T: Real>(
    design: &DesignMatrix<T>,
    target: &[u8],
    weights: &[T],
    intercept: T,
    l2_penalty: T,
) -> Result<T, FitError> {
    check_target(design, target)?;
    if weights.len() != design.dimension() {
        return Err(FitError::WeightCountMismatch {
            weights: weights.len(),
            design: design.dimension(),
        });
    }
    let w = Array1::from_vec(weights.to_vec());
    let z = design.rows.dot(&w) + intercept;
    let mut loss = T::zero();
    for (&zj, &hj) in z.iter().zip(target.iter()) {
        let h = if hj == 1 { T::one() } else { T::zero() };
        loss += softplus(zj) - h * zj;
    }
    let half: T = cst(0.5);
    loss += half * l2_penalty * w.iter().map(|&v| v * v).sum::<T>();
    if !loss.is_finite() {
        return Err(FitError::NonFiniteLoss);
    }
    Ok(loss)
}

/// Gradient of [`logistic_loss`]: `(Xᵀ(p - h) + λw, Σ(p_j - h_j))`.
pub fn logistic_gradient<T: Real>(
    design: &DesignMatrix<T>,
    target: &[u8],
    weights: &[T],
    intercept: T,
    l2_penalty: T,
) -> Result<(Vec<T>, T), FitError> {
    check_target(design, target)?;
    if weights.len() != design.dimension() {
        return Err(FitError::WeightCountMismatch {
            weights: weights.len(),
            design: design.dimension(),
        });
    }
    let d = design.dimension();
    let mut grad_w = vec![T::zero(); d];
    let mut grad_b = T::zero();
    let w = Array1::from_vec(weights.to_vec());
    let z = design.rows.dot(&w) + intercept;
    for (j, &zj) in z.iter().enumerate() {
        let h = if target[j] == 1 { T::one() } else { T::zero() };
        let residual = sigmoid(zj) - h;
        for (gk, xk) in grad_w.iter_mut().zip(design.rows.row(j)) {
            *gk += residual * *xk;
        }
        grad_b += residual;
    }
    for k in 0..d {
        grad_w[k] += l2_penalty * weights[k];
    }
    Ok((grad_w, grad_b))
}

/// Fits the concept embedding starting from zero weights.
pub fn fit_concept_embedding<T: Real>(
    design: &DesignMatrix<T>,
    target: &[u8],
    cfg: &FitConfig<T>,
) -> Result<ConceptEmbedding<T>, FitError> {
    let init = vec![T::zero(); design.dimension()];
    fit_concept_embedding_from(design, target, cfg, &init, T::zero())
}

/// Fits from explicit starting weights. The regularized objective is strictly
/// convex for `l2_penalty > 0`, so every start reaches the same loss.
pub fn fit_concept_embedding_from<T: Real>(
    design: &DesignMatrix<T>,
    target: &[u8],
    cfg: &FitConfig<T>,
    initial_weights: &[T],
    initial_intercept: T,
) -> Result<ConceptEmbedding<T>, FitError> {
    cfg.validate()?;
    check_target(design, target)?;
    let d = design.dimension();
    if initial_weights.len() != d {
        return Err(FitError::BadInitialWeights {
            given: initial_weights.len(),
            expected: d,
        });
    }

    let mut weights = initial_weights.to_vec();
    let mut intercept = if cfg.include_intercept {
        initial_intercept
    } else {
        T::zero()
    };
    let dim = d + usize::from(cfg.include_intercept);
    let mut loss = logistic_loss(design, target, &weights, intercept, cfg.l2_penalty)?;
    let mut converged = false;

    for _ in 0..cfg.max_iterations {
        let (grad_w, grad_b) =
            logistic_gradient(design, target, &weights, intercept, cfg.l2_penalty)?;
        let mut grad_max = grad_w
            .iter()
            .fold(T::zero(), |acc, &g| acc.max(g.abs()));
        if cfg.include_intercept {
            grad_max = grad_max.max(grad_b.abs());
        }
        if grad_max <= cfg.gradient_tolerance {
            converged = true;
            break;
        }

        // Newton system: H = [XᵀWX + λI, XᵀW1; 1ᵀWX, 1ᵀW1], W = diag(p(1-p)).
        let w_vec = Array1::from_vec(weights.clone());
        let z = design.rows.dot(&w_vec) + intercept;
        let mut hessian = Array2::<T>::zeros((dim, dim));
        for (j, &zj) in z.iter().enumerate() {
            let p = sigmoid(zj);
            let weight = p * (T::one() - p);
            for a in 0..d {
                let xa = design.rows[[j, a]];
                for b in a..d {
                    hessian[[a, b]] += weight * xa * design.rows[[j, b]];
                }
                if cfg.include_intercept {
                    hessian[[a, d]] += weight * xa;
                }
            }
            if cfg.include_intercept {
                hessian[[d, d]] += weight;
            }
        }
        for a in 0..d {
            hessian[[a, a]] += cfg.l2_penalty;
        }
        // mirror the upper triangle
        for a in 0..dim {
            for b in 0..a {
                hessian[[a, b]] = hessian[[b, a]];
            }
        }

        let mut rhs = Array1::<T>::zeros(dim);
        for a in 0..d {
            rhs[a] = -grad_w[a];
        }
        if cfg.include_intercept {
            rhs[d] = -grad_b;
        }
        let step = solve_spd(hessian, rhs).ok_or(FitError::NonFiniteLoss)?;

        // Backtracking line search: halve until the loss stops increasing.
        let mut scale = T::one();
        let mut accepted = false;
        for _ in 0..60 {
            let mut try_weights = weights.clone();
            for a in 0..d {
                try_weights[a] = weights[a] + scale * step[a];
            }
            let try_intercept = if cfg.include_intercept {
                intercept + scale * step[d]
            } else {
                intercept
            };
            match logistic_loss(design, target, &try_weights, try_intercept, cfg.l2_penalty) {
                Ok(new_loss) if new_loss <= loss => {
                    weights = try_weights;
                    intercept = try_intercept;
                    loss = new_loss;
                    accepted = true;
                    break;
                }
                _ => scale *= cst(0.5),
            }
        }
        if !accepted {
            break;
        }
    }

    if !converged {
        // the loop may have stopped exactly at tolerance on its last pass
        let (grad_w, grad_b) =
            logistic_gradient(design, target, &weights, intercept, cfg.l2_penalty)?;
        let mut grad_max = grad_w.iter().fold(T::zero(), |acc, &g| acc.max(g.abs()));
        if cfg.include_intercept {
            grad_max = grad_max.max(grad_b.abs());
        }
        converged = grad_max <= cfg.gradient_tolerance;
    }

    if !loss.is_finite() || weights.iter().any(|w| !w.is_finite()) || !intercept.is_finite() {
        return Err(FitError::NonFiniteLoss);
    }
    Ok(ConceptEmbedding {
        weights,
        intercept,
        converged,
        final_loss: loss,
    })
}

/// Cholesky solve of a symmetric positive definite system; returns `None` if
/// the factorization breaks down even after adding diagonal jitter.
fn solve_spd<T: Real>(matrix: Array2<T>, rhs: Array1<T>) -> Option<Array1<T>> {
    let dim = matrix.nrows();
    let trace = (0..dim).map(|i| matrix[[i, i]]).sum::<T>().max(T::one());
    for &jitter_scale in &[0.0, 1e-12, 1e-8, 1e-4] {
        let mut a = matrix.clone();
        let jitter = trace * cst(jitter_scale);
        for i in 0..dim {
            a[[i, i]] += jitter;
        }
        if let Some(solution) = cholesky_solve(&mut a, &rhs) {
            if solution.iter().all(|v| v.is_finite()) {
                return Some(solution);
            }
        }
    }
    None
}

fn cholesky_solve<T: Real>(a: &mut Array2<T>, rhs: &Array1<T>) -> Option<Array1<T>> {
    let n = a.nrows();
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= a[[j, k]] * a[[j, k]];
        }
        if !diag.is_finite() || diag <= T::zero() {
            return None;
        }
        let root = diag.sqrt();
        a[[j, j]] = root;
        for i in j + 1..n {
            let mut value = a[[i, j]];
            for k in 0..j {
                value -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = value / root;
        }
    }
    // forward then backward substitution
    let mut y = rhs.clone();
    for i in 0..n {
        for k in 0..i {
            let partial = a[[i, k]] * y[k];
            y[i] -= partial;
        }
        y[i] /= a[[i, i]];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let partial = a[[k, i]] * y[k];
            y[i] -= partial;
        }
        y[i] /= a[[i, i]];
    }
    Some(y)
}

/// Per-feature probabilities `σ(w · x_j + b)` under the logistic link.
pub fn predict_feature_probabilities<T: Real>(
    embedding: &ConceptEmbedding<T>,
    design: &DesignMatrix<T>,
) -> Result<Vec<T>, FitError> {
    if embedding.weights.len() != design.dimension() {
        return Err(FitError::WeightCountMismatch {
            weights: embedding.weights.len(),
            design: design.dimension(),
        });
    }
    let w = Array1::from_vec(embedding.weights.clone());
    let z = design.rows.dot(&w) + embedding.intercept;
    Ok(z.iter().map(|&zj| sigmoid(zj)).collect())
}

/// Binarizes probabilities: 1 iff `p > threshold` (strict, so ties become 0).
pub fn binarize<T: Real>(probabilities: &[T], threshold: T) -> Result<Vec<u8>, FitError> {
    if !(threshold > T::zero() && threshold < T::one()) {
        return Err(FitError::ThresholdOutOfRange);
    }
    Ok(probabilities
        .iter()
        .map(|&p| u8::from(p > threshold))
        .collect())
}

/// Full completion of one concept: design build, fit, predict, binarize.
pub fn complete_concept<T: Real>(
    dec: &RankDecomposition<T>,
    feature_labels: &[String],
    machine_vector: &[u8],
    cfg: &FitConfig<T>,
) -> Result<CompletedConcept<T>, FitError> {
    let design = build_design_matrix(dec, feature_labels)?;
    let embedding = fit_concept_embedding(&design, machine_vector, cfg)?;
    let probabilities = predict_feature_probabilities(&embedding, &design)?;
    let cells = binarize(&probabilities, cfg.binarize_threshold)?;
    Ok(CompletedConcept {
        probabilities,
        cells,
        embedding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowrank::truncated_svd;
    use ndarray::array;

    fn labels(m: usize) -> Vec<String> {
        (0..m).map(|j| format!("f{j}")).collect()
    }

    fn design_from(rows: Array2<f64>) -> DesignMatrix<f64> {
        let m = rows.nrows();
        DesignMatrix::from_rows(rows, labels(m)).unwrap()
    }

    #[test]
    fn design_rows_are_sigma_scaled_right_vectors() {
        let m: Array2<f64> = array![[3.0, 0.0], [0.0, 2.0]];
        let dec = truncated_svd(&m, 2, 1e-10).unwrap();
        let design = build_design_matrix(&dec, &labels(2)).unwrap();
        // reconstruct through the design: U · designᵀ must give the matrix back
        let rec = dec.left_coords().dot(&design.rows().t());
        for (a, b) in rec.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_singular_value_gives_zero_design_column() {
        let m = array![[1.0, 2.0], [2.0, 4.0]];
        let dec = truncated_svd(&m, 2, 1e-10).unwrap();
        let design = build_design_matrix(&dec, &labels(2)).unwrap();
        assert!(design.rows().column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaling_is_elementwise() {
        // sigma = [2, 1], V row = (0.5, 0.5) -> design row (1.0, 0.5)
        let row = [0.5 * 2.0, 0.5 * 1.0];
        assert_eq!(row, [1.0, 0.5]);
    }

    #[test]
    fn all_zero_target_drives_probabilities_below_half() {
        let design = design_from(array![
            [1.0, 0.2],
            [-0.3, 0.4],
            [0.8, -0.6],
            [0.1, 0.9],
            [-0.5, -0.2]
        ]);
        let cfg = FitConfig::default();
        let fit = fit_concept_embedding(&design, &[0, 0, 0, 0, 0], &cfg).unwrap();
        assert!(fit.converged);
        assert!(fit.intercept < -5.0, "intercept {}", fit.intercept);
        for &w in &fit.weights {
            assert!(w.abs() < 1e-3, "weight {w}");
        }
        let probs = predict_feature_probabilities(&fit, &design).unwrap();
        assert!(probs.iter().all(|&p| p < 0.5));
    }

    #[test]
    fn separable_sign_case_fits_positive_weight() {
        let design = design_from(array![[1.0], [-1.0]]);
        let cfg = FitConfig {
            l2_penalty: 0.01,
            include_intercept: false,
            ..FitConfig::default()
        };
        let fit = fit_concept_embedding(&design, &[1, 0], &cfg).unwrap();
        assert!(fit.weights[0] > 0.0);
    }

    #[test]
    fn probabilities_match_logistic_link() {
        let design = design_from(array![[1.0], [2.0]]);
        let embedding = ConceptEmbedding {
            weights: vec![0.0],
            intercept: 0.0,
            converged: true,
            final_loss: 0.0,
        };
        let probs = predict_feature_probabilities(&embedding, &design).unwrap();
        assert!(probs.iter().all(|&p| p == 0.5));

        // w·x + b = ln 3 gives sigma = 3/4
        let embedding = ConceptEmbedding {
            weights: vec![3.0f64.ln()],
            intercept: 0.0,
            converged: true,
            final_loss: 0.0,
        };
        let probs = predict_feature_probabilities(&embedding, &design_from(array![[1.0]])).unwrap();
        assert!((probs[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn binarize_is_strict_at_the_threshold() {
        assert_eq!(binarize(&[0.5], 0.5).unwrap(), vec![0]);
        assert_eq!(binarize(&[0.51], 0.5).unwrap(), vec![1]);
        assert_eq!(binarize(&[0.5, 0.5, 0.5], 0.5).unwrap(), vec![0, 0, 0]);
        assert!(matches!(
            binarize(&[0.5], 0.0),
            Err(FitError::ThresholdOutOfRange)
        ));
        assert!(matches!(
            binarize(&[0.5], 1.0),
            Err(FitError::ThresholdOutOfRange)
        ));
    }

    #[test]
    fn rejects_non_binary_targets_and_bad_shapes() {
        let design = design_from(array![[1.0], [2.0]]);
        let cfg = FitConfig::default();
        assert!(matches!(
            fit_concept_embedding(&design, &[1, 2], &cfg),
            Err(FitError::NonBinaryTarget { index: 1, value: 2 })
        ));
        assert!(matches!(
            fit_concept_embedding(&design, &[1], &cfg),
            Err(FitError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn all_zero_machine_vector_completes_to_all_zeros() {
        let m = array![
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
            [1.0, 1.0, 0.0, 0.0]
        ];
        let dec = truncated_svd(&m, 2, 1e-10).unwrap();
        let cfg = FitConfig::default();
        let completed = complete_concept(&dec, &labels(4), &[0, 0, 0, 0], &cfg).unwrap();
        assert_eq!(completed.cells, vec![0, 0, 0, 0]);
    }
}
