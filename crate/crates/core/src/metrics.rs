//! Signal-detection agreement metrics and the paired t statistic.
//!
//! Machine cells are classified against human cells as hits, misses, false
//! alarms, or correct rejections, with the human matrix treated as the source
//! of signal. The agreement measure is `d' = z(HR) - z(FAR)`, where `z` is
//! the standard normal quantile function.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::BinaryFeatureMatrix;
use crate::scalar::{cst, Real};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch: predicted has {predicted} cells, truth has {truth}")]
    ShapeMismatch { predicted: usize, truth: usize },
    #[error("label order differs between predicted and truth matrices")]
    LabelMismatch,
    #[error("value {value} at index {index} is not binary")]
    NonBinaryValue { index: usize, value: u8 },
    #[error("no signal cells (hits + misses = 0)")]
    EmptySignal,
    #[error("no noise cells (false alarms + correct rejections = 0)")]
    EmptyNoise,
    #[error("degenerate rate without correction (HR = {hit_rate}, FAR = {false_alarm_rate})")]
    DegenerateRate {
        hit_rate: f64,
        false_alarm_rate: f64,
    },
    #[error("probability must lie strictly inside (0, 1)")]
    ProbabilityOutOfRange,
    #[error("need at least {needed} samples, have {have}")]
    TooFewSamples { needed: usize, have: usize },
    #[error("differences have zero sample variance")]
    ZeroVariance,
}

/// Four-way classification counts of machine cells against human cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionTally {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_rejections: u64,
}

impl DetectionTally {
    pub fn total(&self) -> u64 {
        self.hits + self.misses + self.false_alarms + self.correct_rejections
    }

    /// Cells where the human matrix says the feature holds.
    pub fn signal_total(&self) -> u64 {
        self.hits + self.misses
    }

    /// Cells where the human matrix says the feature does not hold.
    pub fn noise_total(&self) -> u64 {
        self.false_alarms + self.correct_rejections
    }
}

/// Handling of hit/false-alarm rates of exactly 0 or 1, which would otherwise
/// map to infinite `z` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RateCorrection {
    /// Add 0.5 to each numerator and 1 to each denominator, but only when one
    /// of the two rates is degenerate.
    #[default]
    #[serde(rename = "loglinear")]
    LogLinear,
    /// Apply the log-linear adjustment unconditionally.
    Always,
    /// Never correct; degenerate rates are an error.
    None,
}

impl std::fmt::Display for RateCorrection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RateCorrection::LogLinear => write!(f, "loglinear"),
            RateCorrection::Always => write!(f, "always"),
            RateCorrection::None => write!(f, "none"),
        }
    }
}

/// Hit rate, false-alarm rate, and their separation in z units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DPrimeResult<T> {
    pub hit_rate: T,
    pub false_alarm_rate: T,
    pub d_prime: T,
    pub correction_applied: bool,
}

/// Tallies a predicted binary vector against a truth vector of equal length.
pub fn tally(predicted: &[u8], truth: &[u8]) -> Result<DetectionTally, MetricError> {
    if predicted.len() != truth.len() {
        return Err(MetricError::ShapeMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    let mut out = DetectionTally {
        hits: 0,
        misses: 0,
        false_alarms: 0,
        correct_rejections: 0,
    };
    for (index, (&p, &t)) in predicted.iter().zip(truth.iter()).enumerate() {
        if p > 1 {
            return Err(MetricError::NonBinaryValue { index, value: p });
        }
        if t > 1 {
            return Err(MetricError::NonBinaryValue { index, value: t });
        }
        match (p, t) {
            (1, 1) => out.hits += 1,
            (0, 1) => out.misses += 1,
            (1, 0) => out.false_alarms += 1,
            _ => out.correct_rejections += 1,
        }
    }
    Ok(out)
}

/// Tallies two whole matrices cell by cell; labels must match in order.
pub fn tally_matrices(
    predicted: &BinaryFeatureMatrix,
    truth: &BinaryFeatureMatrix,
) -> Result<DetectionTally, MetricError> {
    if predicted.concepts() != truth.concepts() || predicted.features() != truth.features() {
        return Err(MetricError::LabelMismatch);
    }
    let p: Vec<u8> = predicted.cells().iter().copied().collect();
    let t: Vec<u8> = truth.cells().iter().copied().collect();
    tally(&p, &t)
}

/// `d'` for a tally under the chosen degenerate-rate correction.
pub fn d_prime<T: Real>(
    tally: &DetectionTally,
    correction: RateCorrection,
) -> Result<DPrimeResult<T>, MetricError> {
    let signal = tally.signal_total();
    let noise = tally.noise_total();
    if signal == 0 {
        return Err(MetricError::EmptySignal);
    }
    if noise == 0 {
        return Err(MetricError::EmptyNoise);
    }

    let raw_hr: T = cst::<T>(tally.hits as f64) / cst(signal as f64);
    let raw_far: T = cst::<T>(tally.false_alarms as f64) / cst(noise as f64);
    let degenerate = raw_hr == T::zero()
        || raw_hr == T::one()
        || raw_far == T::zero()
        || raw_far == T::one();

    let apply = match correction {
        RateCorrection::Always => true,
        RateCorrection::LogLinear => degenerate,
        RateCorrection::None => {
            if degenerate {
                return Err(MetricError::DegenerateRate {
                    hit_rate: raw_hr.to_f64().unwrap_or(f64::NAN),
                    false_alarm_rate: raw_far.to_f64().unwrap_or(f64::NAN),
                });
            }
            false
        }
    };

    let (hit_rate, false_alarm_rate) = if apply {
        (
            cst::<T>(tally.hits as f64 + 0.5) / cst(signal as f64 + 1.0),
            cst::<T>(tally.false_alarms as f64 + 0.5) / cst(noise as f64 + 1.0),
        )
    } else {
        (raw_hr, raw_far)
    };

    let d_prime = standard_normal_quantile(hit_rate)? - standard_normal_quantile(false_alarm_rate)?;
    Ok(DPrimeResult {
        hit_rate,
        false_alarm_rate,
        d_prime,
        correction_applied: apply,
    })
}

/// Paired t statistic over a sample of differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedT<T> {
    pub t: T,
    pub df: usize,
}

/// `t = mean / (sd / sqrt(n))` with the unbiased sample standard deviation;
/// `df = n - 1`. Zero variance is reported as an error, not as infinity.
pub fn paired_t<T: Real>(differences: &[T]) -> Result<PairedT<T>, MetricError> {
    let n = differences.len();
    if n < 2 {
        return Err(MetricError::TooFewSamples { needed: 2, have: n });
    }
    let count: T = cst(n as f64);
    let mean = differences.iter().copied().sum::<T>() / count;
    let ss = differences
        .iter()
        .map(|&d| (d - mean) * (d - mean))
        .sum::<T>();
    let sd = (ss / cst(n as f64 - 1.0)).sqrt();
    if sd == T::zero() {
        return Err(MetricError::ZeroVariance);
    }
    Ok(PairedT {
        t: mean / (sd / count.sqrt()),
        df: n - 1,
    })
}

// ---------------------------------------------------------------------------
// Standard normal CDF and quantile.
// ---------------------------------------------------------------------------

/// Standard normal CDF, accurate to roughly machine precision through a
/// rational-approximation erfc.
pub fn standard_normal_cdf<T: Real>(z: T) -> T {
    let half: T = cst(0.5);
    half * erfc(-z / cst(std::f64::consts::SQRT_2))
}

fn standard_normal_pdf<T: Real>(z: T) -> T {
    let inv_sqrt_2pi: T = cst(0.398_942_280_401_432_7);
    (-(z * z) * cst(0.5)).exp() * inv_sqrt_2pi
}

/// Inverse standard normal CDF with absolute error below 1e-9 in double
/// precision: Acklam's rational approximation polished by one Halley step
/// against the erfc-based CDF.
pub fn standard_normal_quantile<T: Real>(p: T) -> Result<T, MetricError> {
    if !(p > T::zero() && p < T::one()) {
        return Err(MetricError::ProbabilityOutOfRange);
    }
    let half: T = cst(0.5);
    // Reflect the upper half onto the lower tail, where the CDF is relatively
    // accurate; `1 - p` is exact for p > 0.5, so antisymmetry is bitwise.
    if p > half {
        Ok(-quantile_lower_half(T::one() - p))
    } else {
        Ok(quantile_lower_half(p))
    }
}

fn quantile_lower_half<T: Real>(p: T) -> T {
    let mut x = acklam_quantile(p);

    // Halley refinement: u = (CDF(x) - p) / pdf(x); x <- x - u / (1 + x u / 2).
    let pdf = standard_normal_pdf(x);
    if pdf > T::min_positive_value() * cst(1e6) {
        let u = (standard_normal_cdf(x) - p) / pdf;
        x = x - u / (T::one() + x * u * cst(0.5));
    }
    x
}

/// Acklam's rational approximation to the normal quantile (relative error
/// about 1.15e-9); the refinement step above removes the residual error.
#[allow(clippy::excessive_precision)]
fn acklam_quantile<T: Real>(p: T) -> T {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low: T = cst(0.02425);
    let p_high = T::one() - p_low;
    let c = |v: f64| cst::<T>(v);

    if p < p_low {
        let q = (-(p.ln() + p.ln())).sqrt();
        (((((c(C[0]) * q + c(C[1])) * q + c(C[2])) * q + c(C[3])) * q + c(C[4])) * q + c(C[5]))
            / ((((c(D[0]) * q + c(D[1])) * q + c(D[2])) * q + c(D[3])) * q + T::one())
    } else if p <= p_high {
        let q = p - cst(0.5);
        let r = q * q;
        (((((c(A[0]) * r + c(A[1])) * r + c(A[2])) * r + c(A[3])) * r + c(A[4])) * r + c(A[5]))
            * q
            / (((((c(B[0]) * r + c(B[1])) * r + c(B[2])) * r + c(B[3])) * r + c(B[4])) * r
                + T::one())
    } else {
        let one_minus = T::one() - p;
        let q = (-(one_minus.ln() + one_minus.ln())).sqrt();
        -(((((c(C[0]) * q + c(C[1])) * q + c(C[2])) * q + c(C[3])) * q + c(C[4])) * q + c(C[5]))
            / ((((c(D[0]) * q + c(D[1])) * q + c(D[2])) * q + c(D[3])) * q + T::one())
    }
}

/// Complementary error function via Cody's rational Chebyshev approximations,
/// relative error around 1e-16 across the three branches.
#[allow(clippy::excessive_precision)]
fn erfc<T: Real>(x: T) -> T {
    let y = x.abs();
    let thresh: T = cst(0.46875);
    let result = if y <= thresh {
        return T::one() - erf_small(x);
    } else if y <= cst(4.0) {
        erfc_mid(y)
    } else {
        erfc_large(y)
    };
    if x < T::zero() {
        cst::<T>(2.0) - result
    } else {
        result
    }
}

/// erf on |x| <= 0.46875.
#[allow(clippy::excessive_precision)]
fn erf_small<T: Real>(x: T) -> T {
    const A: [f64; 5] = [
        3.16112374387056560e00,
        1.13864154151050156e02,
        3.77485237685302021e02,
        3.20937758913846947e03,
        1.85777706184603153e-1,
    ];
    const B: [f64; 4] = [
        2.36012909523441209e01,
        2.44024637934444173e02,
        1.28261652607737228e03,
        2.84423683343917062e03,
    ];
    let c = |v: f64| cst::<T>(v);
    let ysq = x * x;
    let mut xnum = c(A[4]) * ysq;
    let mut xden = ysq;
    for i in 0..3 {
        xnum = (xnum + c(A[i])) * ysq;
        xden = (xden + c(B[i])) * ysq;
    }
    x * (xnum + c(A[3])) / (xden + c(B[3]))
}

/// erfc on 0.46875 < y <= 4.
#[allow(clippy::excessive_precision)]
fn erfc_mid<T: Real>(y: T) -> T {
    const C: [f64; 9] = [
        5.64188496988670089e-1,
        8.88314979438837594e00,
        6.61191906371416295e01,
        2.98635138197400131e02,
        8.81952221241769090e02,
        1.71204761263407058e03,
        2.05107837782607147e03,
        1.23033935479799725e03,
        2.15311535474403846e-8,
    ];
    const D: [f64; 8] = [
        1.57449261107098347e01,
        1.17693950891312499e02,
        5.37181101862009858e02,
        1.62138957456669019e03,
        3.29079923573345963e03,
        4.36261909014324716e03,
        3.43936767414372164e03,
        1.23033935480374942e03,
    ];
    let c = |v: f64| cst::<T>(v);
    let mut xnum = c(C[8]) * y;
    let mut xden = y;
    for i in 0..7 {
        xnum = (xnum + c(C[i])) * y;
        xden = (xden + c(D[i])) * y;
    }
    let ratio = (xnum + c(C[7])) / (xden + c(D[7]));
    scaled_by_gaussian(y, ratio)
}

/// erfc on y > 4.
#[allow(clippy::excessive_precision)]
fn erfc_large<T: Real>(y: T) -> T {
    const P: [f64; 6] = [
        3.05326634961232344e-1,
        3.60344899949804439e-1,
        1.25781726111229246e-1,
        1.60837851487422766e-2,
        6.58749161529837803e-4,
        1.63153871373020978e-2,
    ];
    const Q: [f64; 5] = [
        2.56852019228982242e00,
        1.87295284992346047e00,
        5.27905102951428412e-1,
        6.05183413124413191e-2,
        2.33520497626869185e-3,
    ];
    // 1 / sqrt(pi)
    let sqrpi: T = cst(5.641_895_835_477_562_9e-1);
    let c = |v: f64| cst::<T>(v);
    let ysq = T::one() / (y * y);
    let mut xnum = c(P[5]) * ysq;
    let mut xden = ysq;
    for i in 0..4 {
        xnum = (xnum + c(P[i])) * ysq;
        xden = (xden + c(Q[i])) * ysq;
    }
    let ratio = (sqrpi - ysq * (xnum + c(P[4])) / (xden + c(Q[4]))) / y;
    scaled_by_gaussian(y, ratio)
}

/// Multiplies by `exp(-y^2)` computed as `exp(-ysq^2) * exp(-del)` with `ysq`
/// truncated to 1/16 steps, which keeps the product accurate for large `y`.
fn scaled_by_gaussian<T: Real>(y: T, ratio: T) -> T {
    let sixteenth: T = cst(1.0 / 16.0);
    let ysq = (y * cst(16.0)).trunc() * sixteenth;
    let del = (y - ysq) * (y + ysq);
    (-(ysq * ysq)).exp() * (-del).exp() * ratio
}
