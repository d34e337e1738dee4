//! Key-rate sweeps over the depolarizing scenario and the noise-threshold
//! solver `tau(b) = inf { q : r(q, b) <= 0 }`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::attack::check_bias;
use crate::bound::{self, KeyRateReport};
use crate::depol::DepolScenario;
use crate::qmath::binary_entropy;
use crate::{Error, Real, Result};

/// Coarse scan resolution of the threshold solver.
pub const SCAN_STEP: f64 = 1e-3;
/// Width of the final bisection bracket.
pub const THRESHOLD_TOL: f64 = 1e-6;

pub const SWEEP_HEADER: &str = "b,q,r,eta,lambda,p_wrong,h_pcorrect,aborted";
pub const THRESHOLD_HEADER: &str = "b,tau_q";

/// Points `min, min + step, ...` not exceeding `max` (up to rounding).
pub fn stepped_range<T: Real>(name: &str, min: T, max: T, step: T) -> Result<Vec<T>> {
    if !step.is_finite() || step <= T::zero() {
        return Err(Error::validation(format!(
            "{name} step must be positive, got {step}"
        )));
    }
    if !min.is_finite() || !max.is_finite() || min > max {
        return Err(Error::validation(format!(
            "{name} range [{min}, {max}] is empty"
        )));
    }
    let span = ((max - min) / step).to_f64().unwrap_or(f64::INFINITY);
    if span > 1e7 {
        return Err(Error::validation(format!(
            "{name} grid has too many points"
        )));
    }
    let n = (span + 1e-9).floor() as u64 + 1;
    Ok((0..n)
        .map(|i| (min + T::count(i) * step).min(max))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepGrid<T> {
    pub b_values: Vec<T>,
    pub q_min: T,
    pub q_max: T,
    pub q_step: T,
}

impl<T: Real> SweepGrid<T> {
    pub fn new(b_values: Vec<T>, q_min: T, q_max: T, q_step: T) -> Result<Self> {
        let grid = Self {
            b_values,
            q_min,
            q_max,
            q_step,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b_values.is_empty() {
            return Err(Error::validation("sweep needs at least one b value"));
        }
        for &b in &self.b_values {
            check_bias(b)?;
        }
        if self.q_min < T::zero() || self.q_max > T::one() {
            return Err(Error::validation(format!(
                "q range [{}, {}] must lie within [0, 1]",
                self.q_min, self.q_max
            )));
        }
        stepped_range("q", self.q_min, self.q_max, self.q_step).map(|_| ())
    }

    pub fn q_values(&self) -> Result<Vec<T>> {
        stepped_range("q", self.q_min, self.q_max, self.q_step)
    }

    /// Grid points in output order: `b` outer, `q` inner.
    pub fn points(&self) -> Result<Vec<(T, T)>> {
        self.validate()?;
        let qs = self.q_values()?;
        Ok(self
            .b_values
            .iter()
            .flat_map(|&b| qs.iter().map(move |&q| (b, q)))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow<T> {
    pub b: T,
    pub q: T,
    pub r: T,
    pub eta: T,
    pub lambda: T,
    /// `p01 + p10`, the raw-key error rate.
    pub p_wrong: T,
    /// `h(p00 + p11)`.
    pub h_pcorrect: T,
    pub aborted: bool,
}

impl<T: Real> SweepRow<T> {
    pub fn from_report(b: T, q: T, rep: &KeyRateReport<T>) -> Result<Self> {
        let d = &rep.distribution;
        Ok(Self {
            b,
            q,
            r: rep.r,
            eta: rep.eta,
            lambda: rep.lambda,
            p_wrong: d.p_wrong(),
            h_pcorrect: binary_entropy(d.p_correct())?,
            aborted: rep.aborted,
        })
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            fmt_g(self.b.as_f64()),
            fmt_g(self.q.as_f64()),
            fmt_g(self.r.as_f64()),
            fmt_g(self.eta.as_f64()),
            fmt_g(self.lambda.as_f64()),
            fmt_g(self.p_wrong.as_f64()),
            fmt_g(self.h_pcorrect.as_f64()),
            self.aborted
        )
    }
}

/// Key-rate report of the depolarizing scenario from its closed forms.
pub fn depol_report<T: Real>(q: T, b: T) -> Result<KeyRateReport<T>> {
    let s = DepolScenario::new(q, b)?;
    bound::key_rate_with_weights(&s.closed_form_statistics(), &s.closed_form_qij()?)
}

pub fn key_rate_at<T: Real>(q: T, b: T) -> Result<T> {
    Ok(depol_report(q, b)?.r)
}

/// One row per grid point in grid order. Points are evaluated in parallel.
pub fn sweep_keyrate<T: Real>(grid: &SweepGrid<T>) -> Result<Vec<SweepRow<T>>> {
    grid.points()?
        .into_par_iter()
        .map(|(b, q)| SweepRow::from_report(b, q, &depol_report(q, b)?))
        .collect()
}

/// First `q` at which the key rate stops being positive, to within
/// [`THRESHOLD_TOL`]. `None` if the rate is already non-positive at `q = 0`.
pub fn threshold<T: Real>(b: T) -> Result<Option<T>> {
    check_bias(b)?;
    let r = |q: T| key_rate_at(q, b);
    if r(T::zero())? <= T::zero() {
        return Ok(None);
    }
    let steps = (1.0 / SCAN_STEP).round() as u64;
    let step = T::lit(SCAN_STEP);
    let mut lo = T::zero();
    let mut hi = None;
    for i in 1..=steps {
        let q = (T::count(i) * step).min(T::one());
        if r(q)? <= T::zero() {
            hi = Some(q);
            break;
        }
        lo = q;
    }
    let Some(mut hi) = hi else {
        return Err(Error::Numeric(format!(
            "key rate stays positive on [0, 1] at b = {b}"
        )));
    };
    let tol = T::lit(THRESHOLD_TOL);
    while hi - lo > tol {
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if r(mid)? > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(T::lit(0.5) * (lo + hi)))
}

pub fn thresholds<T: Real>(b_values: &[T]) -> Result<Vec<(T, Option<T>)>> {
    b_values
        .par_iter()
        .map(|&b| Ok((b, threshold(b)?)))
        .collect()
}

pub fn sweep_csv<T: Real>(rows: &[SweepRow<T>]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

pub fn threshold_csv<T: Real>(rows: &[(T, Option<T>)]) -> String {
    let mut out = String::from(THRESHOLD_HEADER);
    out.push('\n');
    for (b, tau) in rows {
        let tau = tau
            .map(|t| format!("{:.4}", t.as_f64()))
            .unwrap_or_default();
        let _ = writeln!(out, "{},{}", fmt_g(b.as_f64()), tau);
    }
    out
}

/// C `printf("%.12g")`.
pub fn fmt_g(v: f64) -> String {
    const P: i32 = 12;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (P - 1 - exp) as usize, v)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
