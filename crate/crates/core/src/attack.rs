//! Restricted collective attacks `(b, U)`.
//!
//! Eve replaces the forward qubit by `|e> = X|0> + Y|1>` with
//! `X = sqrt(1/2 + b)`, `Y = sqrt(1/2 - b)`, and probes the returning qubit
//! with a unitary `U` on transit qubit and ancilla:
//!
//! ```text
//! U|0> = |0, e0> + |1, e1>
//! U|1> = |0, e2> + |1, e3>
//! ```
//!
//! The four (unnormalized) ancilla vectors `e0..e3` determine everything the
//! legitimate users can observe as well as Eve's side information.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::qmath::{self, binary_entropy, shannon_entropy, ComplexVec, HermitianMatrix};
use crate::{Error, Real, Result};

/// Unitarity residuals above this fail validation.
pub const UNITARITY_TOL: f64 = 1e-9;
/// Attacks are restricted to `|b| <= 1/2 - BIAS_MARGIN`.
pub const BIAS_MARGIN: f64 = 1e-6;
/// Largest ancilla dimension accepted by the exact entropy oracle.
pub const MAX_ORACLE_DIM: usize = 8;
/// Acceptance normalizations at or below this are degenerate.
pub const MIN_NORMALIZATION: f64 = 1e-12;

/// Scalars derived from the bias `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasTerms<T> {
    pub b: T,
    /// `sqrt(1/2 + b)`: amplitude of `|0>` in `|e>`.
    pub x: T,
    /// `sqrt(1/2 - b)`: amplitude of `|1>` in `|e>`.
    pub y: T,
    /// `sqrt(1 + 2b)`.
    pub gamma: T,
    /// `sqrt(1 - 2b)`.
    pub delta: T,
    /// Amplitude of `|+>` in `|e>`.
    pub alpha: T,
    /// Amplitude of `|->` in `|e>`.
    pub beta: T,
}

impl<T: Real> BiasTerms<T> {
    pub fn new(b: T) -> Result<Self> {
        check_bias(b)?;
        let half = T::lit(0.5);
        let x = (half + b).sqrt();
        let y = (half - b).sqrt();
        let two = T::lit(2.0);
        let r2 = T::SQRT_2();
        Ok(Self {
            b,
            x,
            y,
            gamma: (T::one() + two * b).sqrt(),
            delta: (T::one() - two * b).sqrt(),
            alpha: (x + y) / r2,
            beta: (x - y) / r2,
        })
    }

    /// `X^2 = 1/2 + b`.
    pub fn x2(&self) -> T {
        T::lit(0.5) + self.b
    }

    /// `Y^2 = 1/2 - b`.
    pub fn y2(&self) -> T {
        T::lit(0.5) - self.b
    }

    /// `X Y = sqrt(1/4 - b^2)`.
    pub fn xy(&self) -> T {
        (self.x2() * self.y2()).sqrt()
    }
}

pub(crate) fn check_bias<T: Real>(b: T) -> Result<()> {
    if !b.is_finite() || b.abs() > T::lit(0.5 - BIAS_MARGIN) {
        return Err(Error::BiasOutOfRange(b.as_f64()));
    }
    Ok(())
}

/// Eve's attack: forward bias plus the four ancilla vectors defining `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec<T> {
    b: T,
    e: [ComplexVec<T>; 4],
}

/// Outcome of checking the unitarity conditions and the bias range.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport<T> {
    /// `| <e0|e0> + <e1|e1> - 1 |`
    pub norm_residual_01: T,
    /// `| <e2|e2> + <e3|e3> - 1 |`
    pub norm_residual_23: T,
    /// `| <e0|e2> + <e1|e3> |`
    pub orthogonality_residual: T,
    pub bias_in_range: bool,
    pub passed: bool,
}

impl<T: Real> ValidationReport<T> {
    pub fn max_residual(&self) -> T {
        self.norm_residual_01
            .max(self.norm_residual_23)
            .max(self.orthogonality_residual)
    }
}

/// States derived linearly from `e0..e3`.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedStates<T> {
    /// Ancilla states in `U|+> = |+, f0> + |-, f1>`, `U|-> = |+, f2> + |-, f3>`.
    pub f: [ComplexVec<T>; 4],
    /// `U|e> = |+, g0> + |-, g1>`.
    pub g0: ComplexVec<T>,
    pub g1: ComplexVec<T>,
    /// `g0 - g1`: Eve's state when the users share raw bit 0 correctly.
    pub h0: ComplexVec<T>,
    /// `e0 - e1`: Eve's state when the users share raw bit 1 correctly.
    pub h1: ComplexVec<T>,
}

/// Acceptance weights `q_ij` and probabilities `p_ij` of the raw key pair
/// `(k_A = i, k_B = j)` given that both users keep the round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointKeyDistribution<T> {
    pub q00: T,
    pub q01: T,
    pub q10: T,
    pub q11: T,
    #[serde(rename = "N")]
    pub n: T,
    pub p00: T,
    pub p01: T,
    pub p10: T,
    pub p11: T,
}

impl<T: Real> JointKeyDistribution<T> {
    /// Normalizes the weights. Round-off negatives down to `-1e-12` are
    /// clamped to zero.
    pub fn from_weights(q00: T, q01: T, q10: T, q11: T) -> Result<Self> {
        let clamp = |name: &str, q: T| -> Result<T> {
            if !q.is_finite() || q < -T::tol(1e-12) {
                return Err(Error::validation(format!(
                    "acceptance weight {name} = {q} is negative"
                )));
            }
            Ok(q.max(T::zero()))
        };
        let (q00, q01, q10, q11) = (
            clamp("q00", q00)?,
            clamp("q01", q01)?,
            clamp("q10", q10)?,
            clamp("q11", q11)?,
        );
        let n = q00 + q01 + q10 + q11;
        if n <= T::lit(MIN_NORMALIZATION) {
            return Err(Error::DegenerateAttack(n.as_f64()));
        }
        Ok(Self {
            q00,
            q01,
            q10,
            q11,
            n,
            p00: q00 / n,
            p01: q01 / n,
            p10: q10 / n,
            p11: q11 / n,
        })
    }

    /// Probability that the raw key bits agree.
    pub fn p_correct(&self) -> T {
        self.p00 + self.p11
    }

    /// Raw-key error rate `p01 + p10`.
    pub fn p_wrong(&self) -> T {
        self.p01 + self.p10
    }

    /// `H({p_ij})`.
    pub fn joint_entropy(&self) -> Result<T> {
        shannon_entropy(&[self.p00, self.p01, self.p10, self.p11])
    }

    /// `H(B|A) = H(AB) - h(p00 + p01)`.
    pub fn h_b_given_a(&self) -> Result<T> {
        Ok(self.joint_entropy()? - binary_entropy(self.p00 + self.p01)?)
    }
}

/// The observable quantities that determine the key-rate bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelStatistics<T> {
    /// Forward-channel bias.
    pub b: T,
    /// P(A measures |1> | B resent |0>) = <e1|e1>.
    pub qz0: T,
    /// P(A measures |0> | B resent |1>) = <e2|e2>.
    pub qz1: T,
    /// P(A measures |+> | B resent |0>).
    pub p0plus: T,
    /// P(A measures |+> | B resent |1>).
    pub p1plus: T,
    /// P(A measures |1> | B reflected).
    pub pe1: T,
    /// P(A measures |-> | B reflected), also written `Q_e`.
    pub peminus: T,
}

impl<T: Real> ChannelStatistics<T> {
    pub fn validate(&self) -> Result<()> {
        check_bias(self.b)?;
        let slack = T::tol(1e-12);
        for (name, v) in self.fields() {
            if !v.is_finite() || v < -slack || v > T::one() + slack {
                return Err(Error::validation(format!(
                    "{name} = {v} is not a probability"
                )));
            }
        }
        Ok(())
    }

    pub fn fields(&self) -> [(&'static str, T); 6] {
        [
            ("qz0", self.qz0),
            ("qz1", self.qz1),
            ("p0plus", self.p0plus),
            ("p1plus", self.p1plus),
            ("pe1", self.pe1),
            ("peminus", self.peminus),
        ]
    }
}

impl<T: Real> AttackSpec<T> {
    /// Structural check only (common dimension, finite entries); unitarity is
    /// reported by [`AttackSpec::validate`].
    pub fn new(
        b: T,
        e0: ComplexVec<T>,
        e1: ComplexVec<T>,
        e2: ComplexVec<T>,
        e3: ComplexVec<T>,
    ) -> Result<Self> {
        let d = e0.dim();
        for (i, v) in [&e1, &e2, &e3].into_iter().enumerate() {
            if v.dim() != d {
                return Err(Error::validation(format!(
                    "e{}: dimension {} differs from e0 dimension {d}",
                    i + 1,
                    v.dim()
                )));
            }
        }
        if !b.is_finite() {
            return Err(Error::validation("b is not finite"));
        }
        for (i, v) in [&e0, &e1, &e2, &e3].into_iter().enumerate() {
            if v.entries()
                .iter()
                .any(|z| !z.re.is_finite() || !z.im.is_finite())
            {
                return Err(Error::validation(format!("e{i}: non-finite entry")));
            }
        }
        Ok(Self {
            b,
            e: [e0, e1, e2, e3],
        })
    }

    /// Eve does nothing on the return leg (`d = 1`).
    pub fn identity(b: T) -> Self {
        let one = ComplexVec::basis(1, 0);
        let zero = ComplexVec::zeros(1);
        Self {
            b,
            e: [one.clone(), zero.clone(), zero, one],
        }
    }

    pub fn bias(&self) -> T {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.e[0].dim()
    }

    pub fn e(&self, i: usize) -> &ComplexVec<T> {
        &self.e[i]
    }

    fn ip(&self, i: usize, j: usize) -> Complex<T> {
        self.e[i].inner(&self.e[j]).expect("common dimension")
    }

    pub fn validate(&self) -> ValidationReport<T> {
        let one = T::one();
        let norm_residual_01 = (self.ip(0, 0).re + self.ip(1, 1).re - one).abs();
        let norm_residual_23 = (self.ip(2, 2).re + self.ip(3, 3).re - one).abs();
        let orthogonality_residual = (self.ip(0, 2) + self.ip(1, 3)).norm();
        let bias_in_range = check_bias(self.b).is_ok();
        let tol = T::tol(UNITARITY_TOL);
        let passed = bias_in_range
            && norm_residual_01 <= tol
            && norm_residual_23 <= tol
            && orthogonality_residual <= tol;
        ValidationReport {
            norm_residual_01,
            norm_residual_23,
            orthogonality_residual,
            bias_in_range,
            passed,
        }
    }

    fn ensure_valid(&self) -> Result<BiasTerms<T>> {
        let terms = BiasTerms::new(self.b)?;
        let report = self.validate();
        if !report.passed {
            return Err(Error::validation(format!(
                "attack violates unitarity (max residual {:e})",
                report.max_residual()
            )));
        }
        Ok(terms)
    }

    /// `f`, `g` and `h` states via the `|+>, |->` basis change.
    pub fn derive_states(&self) -> Result<DerivedStates<T>> {
        let t = self.ensure_valid()?;
        let half = T::lit(0.5);
        let [e0, e1, e2, e3] = &self.e;
        let comb = |s: [T; 4]| {
            ComplexVec::linear_combination(&[
                (half * s[0], e0),
                (half * s[1], e1),
                (half * s[2], e2),
                (half * s[3], e3),
            ])
        };
        let (p, m) = (T::one(), -T::one());
        let f = [
            comb([p, p, p, p])?,
            comb([p, m, p, m])?,
            comb([p, p, m, m])?,
            comb([p, m, m, p])?,
        ];
        let g0 = ComplexVec::linear_combination(&[(t.alpha, &f[0]), (t.beta, &f[2])])?;
        let g1 = ComplexVec::linear_combination(&[(t.alpha, &f[1]), (t.beta, &f[3])])?;
        let h0 = &g0 - &g1;
        let h1 = e0 - e1;
        Ok(DerivedStates { f, g0, g1, h0, h1 })
    }

    /// `g1 = (X e0 - X e1 + Y e2 - Y e3) / sqrt 2`, written directly in the
    /// `e` states.
    pub fn g1_from_e(&self) -> Result<ComplexVec<T>> {
        let t = self.ensure_valid()?;
        let (x, y) = (t.x / T::SQRT_2(), t.y / T::SQRT_2());
        ComplexVec::linear_combination(&[
            (x, &self.e[0]),
            (-x, &self.e[1]),
            (y, &self.e[2]),
            (-y, &self.e[3]),
        ])
    }

    /// Transit-qubit state reaching A when `a0|0> + a1|1>` is probed by `U`,
    /// with Eve's ancilla traced out.
    pub fn output_state(&self, a0: T, a1: T) -> HermitianMatrix<T> {
        let [e0, e1, e2, e3] = &self.e;
        let v0 = ComplexVec::linear_combination(&[(a0, e0), (a1, e2)]).expect("common dimension");
        let v1 = ComplexVec::linear_combination(&[(a0, e1), (a1, e3)]).expect("common dimension");
        // rho_ij = <v_j|v_i>
        let (r00, r01, r11) = (
            v0.norm_sqr(),
            v1.inner(&v0).expect("common dimension"),
            v1.norm_sqr(),
        );
        HermitianMatrix::from_rows(vec![
            vec![Complex::new(r00, T::zero()), r01],
            vec![r01.conj(), Complex::new(r11, T::zero())],
        ])
        .expect("2x2 Hermitian by construction")
    }

    /// `<h0|h1>`, the overlap the key-rate bound lower-bounds.
    pub fn h_overlap(&self) -> Result<Complex<T>> {
        let s = self.derive_states()?;
        s.h0.inner(&s.h1)
    }

    pub fn joint_distribution(&self) -> Result<JointKeyDistribution<T>> {
        let s = self.derive_states()?;
        let quarter = T::lit(0.25);
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        let q00 = quarter * (T::one() - two * s.g0.inner(&s.g1)?.re);
        let q11 = quarter * (T::one() - two * self.ip(0, 1).re);
        let q01 = half * self.ip(1, 1).re;
        let q10 = half * s.g1.norm_sqr();
        JointKeyDistribution::from_weights(q00, q01, q10, q11)
    }

    /// Statistics the users would observe, from exact inner products.
    pub fn exact_statistics(&self) -> Result<ChannelStatistics<T>> {
        let t = self.ensure_valid()?;
        let s = self.derive_states()?;
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        let prob = |v: T| v.max(T::zero()).min(T::one());
        Ok(ChannelStatistics {
            b: self.b,
            qz0: prob(self.ip(1, 1).re),
            qz1: prob(self.ip(2, 2).re),
            p0plus: prob(half * (T::one() + two * self.ip(0, 1).re)),
            p1plus: prob(half * (T::one() + two * self.ip(2, 3).re)),
            pe1: prob(
                t.x2() * self.ip(1, 1).re
                    + t.y2() * self.ip(3, 3).re
                    + two * t.xy() * self.ip(1, 3).re,
            ),
            peminus: prob(s.g1.norm_sqr()),
        })
    }

    /// `S(B|E) = S(BE) - S(E)` of the state shared after a kept round, by
    /// exact diagonalization. Limited to ancilla dimension `<= 8`.
    pub fn exact_conditional_entropy(&self) -> Result<T> {
        if self.dim() > MAX_ORACLE_DIM {
            return Err(Error::Capability(format!(
                "exact entropy oracle supports ancilla dimension <= {MAX_ORACLE_DIM}, got {}",
                self.dim()
            )));
        }
        let s = self.derive_states()?;
        // Normalization is checked here; the entropy routine rescales by the trace.
        self.joint_distribution()?;
        let (quarter, half) = (T::lit(0.25), T::lit(0.5));
        let rho_b0 = HermitianMatrix::from_outer_products(&[(quarter, &s.h0), (half, &s.g1)])?;
        let rho_b1 = HermitianMatrix::from_outer_products(&[(quarter, &s.h1), (half, &self.e[1])])?;
        let rho_be = HermitianMatrix::block_diagonal(&[&rho_b0, &rho_b1])?;
        let rho_e = rho_b0.sum(&rho_b1)?;
        Ok(qmath::von_neumann_entropy(&rho_be)? - qmath::von_neumann_entropy(&rho_e)?)
    }
}

/// Random valid attack: the first two columns of a Haar-like random unitary
/// on transit qubit and ancilla give `(e0; e1)` and `(e2; e3)`. The bias is
/// uniform in `[-0.45, 0.45]`.
pub fn random_attack<T: Real, R: Rng + ?Sized>(d: usize, rng: &mut R) -> AttackSpec<T> {
    let u = qmath::random_unitary::<T, _>(2 * d, rng);
    let b = T::lit(rng.random_range(-0.45..=0.45));
    from_columns(b, &u.column(0), &u.column(1), d)
}

/// Random valid attack close to the identity: the identity columns plus
/// Gaussian noise of scale `eps`, re-orthonormalized.
pub fn perturbed_identity_attack<T: Real, R: Rng + ?Sized>(
    d: usize,
    eps: T,
    b: T,
    rng: &mut R,
) -> AttackSpec<T> {
    loop {
        let mut cols = [ComplexVec::basis(2 * d, 0), ComplexVec::basis(2 * d, d)];
        for col in &mut cols {
            let noise = qmath::random_complex_vec::<T, _>(2 * d, rng).scale(eps);
            *col = &*col + &noise;
        }
        if let Ok(q) = qmath::gram_schmidt(&cols) {
            return from_columns(b, &q[0], &q[1], d);
        }
    }
}

fn from_columns<T: Real>(
    b: T,
    col0: &ComplexVec<T>,
    col1: &ComplexVec<T>,
    d: usize,
) -> AttackSpec<T> {
    let split = |v: &ComplexVec<T>| {
        let (lo, hi) = v.entries().split_at(d);
        (
            ComplexVec::new(lo.to_vec()).expect("d >= 1"),
            ComplexVec::new(hi.to_vec()).expect("d >= 1"),
        )
    };
    let (e0, e1) = split(col0);
    let (e2, e3) = split(col1);
    AttackSpec::new(b, e0, e1, e2, e3).expect("common dimension")
}

/// On-disk attack format: `{"b", "dim", "e0".."e3": [[re, im], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackFile<T> {
    pub b: T,
    pub dim: usize,
    pub e0: Vec<[T; 2]>,
    pub e1: Vec<[T; 2]>,
    pub e2: Vec<[T; 2]>,
    pub e3: Vec<[T; 2]>,
}

impl<T: Real> TryFrom<AttackFile<T>> for AttackSpec<T> {
    type Error = Error;

    fn try_from(file: AttackFile<T>) -> Result<Self> {
        if file.dim == 0 {
            return Err(Error::validation("dim: must be at least 1"));
        }
        if !file.b.is_finite() {
            return Err(Error::validation("b: not a finite number"));
        }
        let convert = |name: &str, raw: Vec<[T; 2]>| -> Result<ComplexVec<T>> {
            if raw.len() != file.dim {
                return Err(Error::validation(format!(
                    "{name}: expected {} entries (dim), found {}",
                    file.dim,
                    raw.len()
                )));
            }
            if raw.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("{name}: non-finite entry")));
            }
            ComplexVec::new(
                raw.into_iter()
                    .map(|[re, im]| Complex::new(re, im))
                    .collect(),
            )
        };
        let e0 = convert("e0", file.e0)?;
        let e1 = convert("e1", file.e1)?;
        let e2 = convert("e2", file.e2)?;
        let e3 = convert("e3", file.e3)?;
        AttackSpec::new(file.b, e0, e1, e2, e3)
    }
}

impl<T: Real> From<&AttackSpec<T>> for AttackFile<T> {
    fn from(a: &AttackSpec<T>) -> Self {
        let raw = |v: &ComplexVec<T>| v.entries().iter().map(|z| [z.re, z.im]).collect();
        Self {
            b: a.b,
            dim: a.dim(),
            e0: raw(&a.e[0]),
            e1: raw(&a.e[1]),
            e2: raw(&a.e[2]),
            e3: raw(&a.e[3]),
        }
    }
}
