//! The key-rate lower bound.
//!
//! Reverse reconciliation: the rate is `S(B|E) - H(B|A)`. Conditioning Eve on
//! whether the raw bits agree reduces her entropy to the spectrum of a
//! rank-two operator whose dominant eigenvalue is bounded below by `lambda`,
//! which in turn needs a lower bound `B` on `|<h0|h1>|^2`. `B` comes from
//! mismatched-basis statistics through `eta <= Re<h1|h0>`.

use serde::Serialize;

use crate::attack::{BiasTerms, ChannelStatistics, JointKeyDistribution};
use crate::qmath::binary_entropy;
use crate::{Error, Real, Result};

/// `q00` or `q11` at or below this aborts the protocol.
pub const ABORT_WEIGHT: f64 = 1e-9;
/// `q00 + q11` at or below this leaves `lambda` undefined.
pub const MIN_CORRECT_WEIGHT: f64 = 1e-12;
/// Unclamped `lambda` above `1 + LAMBDA_OVERFLOW` is reported as inconsistent.
pub const LAMBDA_OVERFLOW: f64 = 1e-9;

/// Lower bound on `Re<h1|h0>` from observable statistics.
///
/// `Re<e0|e1>`, `Re<e2|e3>` and `Re<e1|e3>` are recovered exactly; `Re<e0|e3>`
/// is bounded below using Cauchy-Schwarz on the unobservable `Re<e1|e2>`.
pub fn eta_lower_bound<T: Real>(s: &ChannelStatistics<T>) -> Result<T> {
    s.validate()?;
    let t = BiasTerms::new(s.b)?;
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let xy = t.xy();

    let re01 = s.p0plus - half;
    let re23 = s.p1plus - half;
    // pe1 = X^2 <e1|e1> + Y^2 <e3|e3> + 2XY Re<e1|e3>, with <e3|e3> = 1 - qz1.
    let re13 = (s.pe1 - t.x2() * s.qz0 - t.y2() * (T::one() - s.qz1)) / (two * xy);
    // peminus = 1/2 - Re(X^2 <e0|e1> + XY <e0|e3> + XY <e1|e2> + Y^2 <e2|e3>)
    // and Re<e1|e2> <= |<e1|e2>| <= sqrt(qz0 qz1).
    let re03_lower =
        (half - s.peminus - t.x2() * re01 - t.y2() * re23) / xy - (s.qz0 * s.qz1).sqrt();

    Ok(t.gamma * re01 - t.gamma * s.qz0 + t.delta * re03_lower - t.delta * re13)
}

/// The eigenvalue bound, clamped into `[1/2, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaBound<T> {
    pub value: T,
    pub unclamped: T,
}

impl<T: Real> LambdaBound<T> {
    /// True when the raw value exceeded one, which exact statistics can never
    /// produce.
    pub fn overflowed(&self) -> bool {
        self.unclamped > T::one() + T::lit(LAMBDA_OVERFLOW)
    }
}

/// `lambda = 1/2 + sqrt(4 (q00 - q11)^2 + B) / (4 (q00 + q11))`.
pub fn lambda_from<T: Real>(q: &JointKeyDistribution<T>, cap_b: T) -> Result<LambdaBound<T>> {
    if cap_b.is_nan() || cap_b < T::zero() {
        return Err(Error::validation(format!(
            "B = {cap_b} must be non-negative"
        )));
    }
    let correct = q.q00 + q.q11;
    if correct <= T::lit(MIN_CORRECT_WEIGHT) {
        return Err(Error::Abort(format!(
            "q00 + q11 = {correct} vanishes: too much noise"
        )));
    }
    let diff = q.q00 - q.q11;
    let unclamped =
        T::lit(0.5) + (T::lit(4.0) * diff * diff + cap_b).sqrt() / (T::lit(4.0) * correct);
    Ok(LambdaBound {
        value: unclamped.min(T::one()).max(T::lit(0.5)),
        unclamped,
    })
}

/// `q_ij` read off the channel statistics:
/// `q00 = pe1 / 2`, `q01 = qz0 / 2`, `q10 = peminus / 2`, `q11 = (1 - p0plus) / 2`.
pub fn weights_from_statistics<T: Real>(
    s: &ChannelStatistics<T>,
) -> Result<JointKeyDistribution<T>> {
    let half = T::lit(0.5);
    JointKeyDistribution::from_weights(
        half * s.pe1,
        half * s.qz0,
        half * s.peminus,
        half * (T::one() - s.p0plus),
    )
}

/// Everything that goes into the bound, plus the bound itself.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KeyRateReport<T> {
    pub eta: T,
    /// `max(eta, 0)^2`, the lower bound on `|<h0|h1>|^2`.
    #[serde(rename = "capB")]
    pub cap_b: T,
    pub lambda: T,
    #[serde(rename = "hBA")]
    pub h_b_given_a: T,
    #[serde(rename = "sBEC")]
    pub s_bec: T,
    /// Upper bound on `S(EC)`.
    #[serde(rename = "sEC_upper")]
    pub s_ec_upper: T,
    /// Secret bits per kept round (lower bound).
    pub r: T,
    pub aborted: bool,
    pub abort_reason: Option<String>,
    pub diagnostics: Vec<String>,
    pub statistics: ChannelStatistics<T>,
    pub distribution: JointKeyDistribution<T>,
}

/// Key-rate bound from observable statistics alone.
pub fn key_rate<T: Real>(s: &ChannelStatistics<T>) -> Result<KeyRateReport<T>> {
    s.validate()?;
    key_rate_with_weights(s, &weights_from_statistics(s)?)
}

/// Key-rate bound with the acceptance weights supplied separately.
pub fn key_rate_with_weights<T: Real>(
    s: &ChannelStatistics<T>,
    q: &JointKeyDistribution<T>,
) -> Result<KeyRateReport<T>> {
    let eta = eta_lower_bound(s)?;
    let cap_b = if eta > T::zero() {
        eta * eta
    } else {
        T::zero()
    };

    let mut diagnostics = Vec::new();
    let mut abort_reason = None;
    let abort = T::lit(ABORT_WEIGHT);
    if q.q00 <= abort || q.q11 <= abort {
        abort_reason = Some(format!(
            "q00 = {} and q11 = {} must both be positive",
            q.q00, q.q11
        ));
    }
    if eta < T::zero() {
        diagnostics.push(format!("eta = {eta} is negative; using B = 0"));
    }

    let lambda = match lambda_from(q, cap_b) {
        Ok(l) => {
            if l.overflowed() {
                diagnostics.push(format!(
                    "lambda = {} exceeds 1; statistics are inconsistent, clamped",
                    l.unclamped
                ));
            }
            l.value
        }
        Err(Error::Abort(msg)) => {
            abort_reason.get_or_insert(msg);
            T::lit(0.5)
        }
        Err(e) => return Err(e),
    };

    let p_correct = q.p_correct();
    let h_correct = binary_entropy(p_correct)?;
    let h_lambda = binary_entropy(lambda)?;
    let s_ec_upper = h_correct + q.p01 + q.p10 + p_correct * h_lambda;
    let r = binary_entropy(q.p00 + q.p01)? - h_correct - q.p01 - q.p10 - p_correct * h_lambda;

    Ok(KeyRateReport {
        eta,
        cap_b,
        lambda,
        h_b_given_a: q.h_b_given_a()?,
        s_bec: q.joint_entropy()?,
        s_ec_upper,
        r,
        aborted: abort_reason.is_some(),
        abort_reason,
        diagnostics,
        statistics: *s,
        distribution: *q,
    })
}
