//! Truncated singular value decomposition of dense real matrices.
//!
//! The decomposition is computed with one-sided Jacobi (Hestenes) rotations,
//! which orthogonalize the columns of the thin side of the matrix. The method
//! is slower than bidiagonalization on large inputs but delivers singular
//! values and vectors at close to machine precision, which the downstream
//! orthonormality contracts rely on.

use ndarray::Array2;
use thiserror::Error;

use crate::scalar::{cst, Real};

/// Default truncation rank for norm matrices.
pub const DEFAULT_RANK: usize = 10;

/// Default orthonormality tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Sweep budget for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SvdError {
    #[error("matrix has a zero dimension")]
    EmptyMatrix,
    #[error("matrix contains a non-finite entry")]
    NonFiniteInput,
    #[error("rank {rank} outside [1, {max}]")]
    RankOutOfRange { rank: usize, max: usize },
    #[error("tolerance must be a finite positive number")]
    InvalidTolerance,
    #[error("Jacobi sweeps did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

/// Truncated SVD triplet: `left_coords * diag(singular_values) * right_vectorsᵀ`
/// is the best rank-`d` approximation of the decomposed matrix.
///
/// Row `i` of `left_coords` holds concept `i`'s left-singular coordinates;
/// columns of both vector blocks are orthonormal and singular values are
/// non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct RankDecomposition<T> {
    left_coords: Array2<T>,
    singular_values: Vec<T>,
    right_vectors: Array2<T>,
}

impl<T: Real> RankDecomposition<T> {
    pub fn left_coords(&self) -> &Array2<T> {
        &self.left_coords
    }

    pub fn singular_values(&self) -> &[T] {
        &self.singular_values
    }

    pub fn right_vectors(&self) -> &Array2<T> {
        &self.right_vectors
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Rows (concepts) of the decomposed matrix.
    pub fn nrows(&self) -> usize {
        self.left_coords.nrows()
    }

    /// Columns (features) of the decomposed matrix.
    pub fn ncols(&self) -> usize {
        self.right_vectors.nrows()
    }

    /// Multiplies the triplet back out: `left_coords · diag(σ) · right_vectorsᵀ`.
    pub fn reconstruct(&self) -> Array2<T> {
        let mut scaled = self.left_coords.clone();
        for (k, &sigma) in self.singular_values.iter().enumerate() {
            scaled.column_mut(k).mapv_inplace(|v| v * sigma);
        }
        scaled.dot(&self.right_vectors.t())
    }
}

/// Top-`rank` singular triplets of `matrix`.
///
/// Signs follow a fixed convention (the largest-magnitude entry of each right
/// singular vector is positive, ties broken by lowest index), so identical
/// inputs produce bit-identical outputs.
pub fn truncated_svd<T: Real>(
    matrix: &Array2<T>,
    rank: usize,
    tol: T,
) -> Result<RankDecomposition<T>, SvdError> {
    let (n, m) = matrix.dim();
    let max_rank = n.min(m);
    if rank < 1 || rank > max_rank {
        return Err(SvdError::RankOutOfRange {
            rank,
            max: max_rank,
        });
    }
    let full = jacobi_svd(matrix, tol)?;
    Ok(RankDecomposition {
        left_coords: full.left_coords.slice(ndarray::s![.., ..rank]).to_owned(),
        singular_values: full.singular_values[..rank].to_vec(),
        right_vectors: full.right_vectors.slice(ndarray::s![.., ..rank]).to_owned(),
    })
}

/// All `min(n, m)` singular values of `matrix`, non-increasing.
pub fn singular_value_profile<T: Real>(matrix: &Array2<T>) -> Result<Vec<T>, SvdError> {
    let full = jacobi_svd(matrix, cst(DEFAULT_TOL))?;
    Ok(full.singular_values)
}

/// Full decomposition at rank `min(n, m)`.
fn jacobi_svd<T: Real>(matrix: &Array2<T>, tol: T) -> Result<RankDecomposition<T>, SvdError> {
    let (n, m) = matrix.dim();
    if n == 0 || m == 0 {
        return Err(SvdError::EmptyMatrix);
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(SvdError::NonFiniteInput);
    }
    if !(tol.is_finite() && tol > T::zero()) {
        return Err(SvdError::InvalidTolerance);
    }

    // Work on the side with the fewer columns so rotations act on q = min(n, m)
    // columns of length p = max(n, m).
    let transposed = n < m;
    let mut work: Array2<T> = if transposed {
        matrix.t().to_owned()
    } else {
        matrix.clone()
    };
    let (p, q) = work.dim();
    let mut rot: Array2<T> = Array2::eye(q);

    // Converge the pairwise column cosines two orders below the requested
    // tolerance, but never below what the scalar type can represent.
    let threshold = (tol * cst(1e-2)).max(T::epsilon() * cst(8.0));
    let frobenius = work.iter().map(|&v| v * v).sum::<T>().sqrt();
    let negligible = frobenius * T::epsilon();

    let mut converged = frobenius == T::zero();
    let mut sweeps = 0;
    while !converged {
        if sweeps >= MAX_SWEEPS {
            return Err(SvdError::NoConvergence { sweeps });
        }
        sweeps += 1;
        let mut max_cosine = T::zero();
        for i in 0..q - 1 {
            for j in i + 1..q {
                let mut aii = T::zero();
                let mut ajj = T::zero();
                let mut aij = T::zero();
                for r in 0..p {
                    let vi = work[[r, i]];
                    let vj = work[[r, j]];
                    aii += vi * vi;
                    ajj += vj * vj;
                    aij += vi * vj;
                }
                let norms = (aii * ajj).sqrt();
                if norms <= negligible * negligible {
                    continue;
                }
                let cosine = aij.abs() / norms;
                if cosine > max_cosine {
                    max_cosine = cosine;
                }
                if cosine <= threshold {
                    continue;
                }
                // Rutishauser rotation zeroing the (i, j) Gram entry.
                let zeta = (ajj - aii) / (aij + aij);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for r in 0..p {
                    let vi = work[[r, i]];
                    let vj = work[[r, j]];
                    work[[r, i]] = c * vi - s * vj;
                    work[[r, j]] = s * vi + c * vj;
                }
                for r in 0..q {
                    let vi = rot[[r, i]];
                    let vj = rot[[r, j]];
                    rot[[r, i]] = c * vi - s * vj;
                    rot[[r, j]] = s * vi + c * vj;
                }
            }
        }
        converged = max_cosine <= threshold;
    }

    // Column norms are the singular values; order them descending, treating
    // norms at roundoff level as exact zeros.
    let mut norms: Vec<T> = (0..q)
        .map(|k| (0..p).map(|r| work[[r, k]] * work[[r, k]]).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| {
        norms[b]
            .partial_cmp(&norms[a])
            .expect("finite norms")
            .then(a.cmp(&b))
    });
    let s_max = norms[order[0]];
    let cutoff = s_max * T::epsilon() * cst(p.max(q) as f64);
    for v in norms.iter_mut() {
        if *v <= cutoff {
            *v = T::zero();
        }
    }

    let mut spanning = Array2::zeros((p, q)); // normalized columns of `work`
    let mut rotations = Array2::zeros((q, q)); // reordered accumulated rotations
    let mut singular_values = Vec::with_capacity(q);
    let mut zero_positions = Vec::new();
    for (pos, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        singular_values.push(sigma);
        for r in 0..q {
            rotations[[r, pos]] = rot[[r, src]];
        }
        if sigma > T::zero() {
            for r in 0..p {
                spanning[[r, pos]] = work[[r, src]] / sigma;
            }
        } else {
            zero_positions.push(pos);
        }
    }
    for pos in zero_positions {
        complete_orthonormal_column(&mut spanning, pos);
    }

    let (left_coords, right_vectors) = if transposed {
        (rotations, spanning)
    } else {
        (spanning, rotations)
    };
    let mut dec = RankDecomposition {
        left_coords,
        singular_values,
        right_vectors,
    };
    apply_sign_convention(&mut dec);
    Ok(dec)
}

/// Fills column `pos` with a deterministic unit vector orthogonal to all other
/// populated columns. Needed when the matrix is rank deficient and some
/// singular values are exactly zero.
fn complete_orthonormal_column<T: Real>(basis: &mut Array2<T>, pos: usize) {
    let (p, q) = basis.dim();
    let mut best: Option<(T, Vec<T>)> = None;
    for candidate in 0..p {
        let mut v = vec![T::zero(); p];
        v[candidate] = T::one();
        // Two Gram-Schmidt passes keep the residual orthogonal at roundoff.
        for _ in 0..2 {
            for k in 0..q {
                if k == pos {
                    continue;
                }
                let dot = (0..p).map(|r| basis[[r, k]] * v[r]).sum::<T>();
                for r in 0..p {
                    v[r] -= dot * basis[[r, k]];
                }
            }
        }
        let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        if best.as_ref().is_none_or(|(b, _)| norm > *b) {
            best = Some((norm, v));
        }
    }
    let (norm, v) = best.expect("at least one candidate");
    for r in 0..p {
        basis[[r, pos]] = v[r] / norm;
    }
}

/// Flips triplet signs so the largest-magnitude entry of each right singular
/// vector is positive; ties break toward the lowest row index.
fn apply_sign_convention<T: Real>(dec: &mut RankDecomposition<T>) {
    let m = dec.right_vectors.nrows();
    let n = dec.left_coords.nrows();
    for k in 0..dec.singular_values.len() {
        let mut lead = T::zero();
        let mut lead_value = T::zero();
        for r in 0..m {
            let value = dec.right_vectors[[r, k]];
            if value.abs() > lead {
                lead = value.abs();
                lead_value = value;
            }
        }
        if lead_value < T::zero() {
            for r in 0..m {
                dec.right_vectors[[r, k]] = -dec.right_vectors[[r, k]];
            }
            for r in 0..n {
                dec.left_coords[[r, k]] = -dec.left_coords[[r, k]];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn svd64(matrix: &Array2<f64>, rank: usize) -> RankDecomposition<f64> {
        truncated_svd(matrix, rank, DEFAULT_TOL).unwrap()
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let dec = svd64(&Array2::eye(2), 2);
        assert_eq!(dec.singular_values(), &[1.0, 1.0]);
    }

    #[test]
    fn diagonal_matrix_recovers_diagonal() {
        let m = array![[3.0, 0.0], [0.0, 2.0]];
        let dec = svd64(&m, 2);
        assert!((dec.singular_values()[0] - 3.0).abs() < 1e-12);
        assert!((dec.singular_values()[1] - 2.0).abs() < 1e-12);
        let rec = dec.reconstruct();
        for (a, b) in rec.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_one_outer_product_has_zero_second_value() {
        // outer product of (1, 2) with (1, 2): sigma = sqrt(5) * sqrt(5) = 5
        let m = array![[1.0, 2.0], [2.0, 4.0]];
        let dec = svd64(&m, 2);
        assert!((dec.singular_values()[0] - 5.0).abs() < 1e-12);
        assert_eq!(dec.singular_values()[1], 0.0);
        // the completed null vector still keeps columns orthonormal
        let v = dec.right_vectors();
        let dot = v.column(0).dot(&v.column(1));
        assert!(dot.abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_profile_is_all_zeros() {
        let m = Array2::<f64>::zeros((3, 5));
        let profile = singular_value_profile(&m).unwrap();
        assert_eq!(profile, vec![0.0; 3]);
    }

    #[test]
    fn profile_of_diagonal() {
        let m = array![[3.0, 0.0], [0.0, 2.0]];
        assert_eq!(singular_value_profile(&m).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = array![[1.0, f64::NAN]];
        assert!(matches!(
            truncated_svd(&m, 1, DEFAULT_TOL),
            Err(SvdError::NonFiniteInput)
        ));
        let m = array![[1.0, 2.0]];
        assert!(matches!(
            truncated_svd(&m, 2, DEFAULT_TOL),
            Err(SvdError::RankOutOfRange { rank: 2, max: 1 })
        ));
        assert!(matches!(
            truncated_svd(&m, 0, DEFAULT_TOL),
            Err(SvdError::RankOutOfRange { rank: 0, .. })
        ));
        assert!(matches!(
            truncated_svd(&m, 1, 0.0),
            Err(SvdError::InvalidTolerance)
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let m: Array2<f32> = array![[3.0, 0.0], [0.0, 2.0]];
        let dec = truncated_svd(&m, 2, 1e-5f32).unwrap();
        assert!((dec.singular_values()[0] - 3.0).abs() < 1e-5);
    }

    #[test]
    fn determinism_is_bitwise() {
        let m = array![
            [0.3, -1.2, 0.7, 2.2],
            [1.1, 0.4, -0.9, 0.0],
            [-0.5, 0.8, 1.6, -2.0]
        ];
        let a = svd64(&m, 3);
        let b = svd64(&m, 3);
        assert_eq!(a.singular_values(), b.singular_values());
        assert_eq!(a.left_coords(), b.left_coords());
        assert_eq!(a.right_vectors(), b.right_vectors());
    }
}
