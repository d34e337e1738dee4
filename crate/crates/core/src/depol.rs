//! Depolarizing noise on the return leg, `E_q(rho) = (1 - q) rho + (q/2) I`,
//! with an unbiased or biased forward channel.

use num_complex::Complex;

use crate::attack::{check_bias, AttackSpec, BiasTerms, ChannelStatistics, JointKeyDistribution};
use crate::qmath::{ComplexVec, SquareMatrix};
use crate::{Error, Real, Result};

/// Depolarization parameter `q` and forward bias `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepolScenario<T> {
    q: T,
    b: T,
}

impl<T: Real> DepolScenario<T> {
    pub fn new(q: T, b: T) -> Result<Self> {
        if !(q >= T::zero() && q <= T::one()) {
            return Err(Error::validation(format!("q = {q} outside [0, 1]")));
        }
        check_bias(b)?;
        Ok(Self { q, b })
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn b(&self) -> T {
        self.b
    }

    fn terms(&self) -> BiasTerms<T> {
        BiasTerms::new(self.b).expect("bias checked at construction")
    }

    /// `Q_e = (1 - q)(1/2 - sqrt(1/4 - b^2)) + q/2`.
    pub fn q_e(&self) -> T {
        let half = T::lit(0.5);
        (T::one() - self.q) * (half - self.terms().xy()) + half * self.q
    }

    pub fn closed_form_statistics(&self) -> ChannelStatistics<T> {
        let half = T::lit(0.5);
        let qz = half * self.q;
        ChannelStatistics {
            b: self.b,
            qz0: qz,
            qz1: qz,
            p0plus: half,
            p1plus: half,
            pe1: half - self.b * (T::one() - self.q),
            peminus: self.q_e(),
        }
    }

    pub fn closed_form_qij(&self) -> Result<JointKeyDistribution<T>> {
        let half = T::lit(0.5);
        let quarter = T::lit(0.25);
        JointKeyDistribution::from_weights(
            half * (half - self.b * (T::one() - self.q)),
            quarter * self.q,
            half * self.q_e(),
            quarter,
        )
    }

    /// Stinespring dilation with a four-dimensional ancilla indexed by the
    /// Pauli Kraus operators in the order `(I, X, Y, Z)`.
    pub fn dilation(&self) -> AttackSpec<T> {
        dilation_from_kraus(self.b, &pauli_kraus(self.q))
            .expect("Pauli Kraus set is a valid channel")
    }
}

/// `{sqrt(1 - 3q/4) I, sqrt(q/4) X, sqrt(q/4) Y, sqrt(q/4) Z}`.
pub fn pauli_kraus<T: Real>(q: T) -> [SquareMatrix<T>; 4] {
    let z = Complex::new(T::zero(), T::zero());
    let r = |x: T| Complex::new(x, T::zero());
    let i = |x: T| Complex::new(T::zero(), x);
    let a = (T::one() - T::lit(0.75) * q).max(T::zero()).sqrt();
    let c = (T::lit(0.25) * q).sqrt();
    let m = |rows: [[Complex<T>; 2]; 2]| {
        SquareMatrix::from_rows(rows.iter().map(|row| row.to_vec()).collect()).expect("2x2")
    };
    [
        m([[r(a), z], [z, r(a)]]),
        m([[z, r(c)], [r(c), z]]),
        m([[z, i(-c)], [i(c), z]]),
        m([[r(c), z], [z, r(-c)]]),
    ]
}

/// `sum_k K_k rho K_k^dagger`.
pub fn apply_channel<T: Real>(
    kraus: &[SquareMatrix<T>],
    rho: &SquareMatrix<T>,
) -> Result<SquareMatrix<T>> {
    let mut out = SquareMatrix::zeros(rho.dim());
    for k in kraus {
        let term = k.matmul(rho)?.matmul(&k.adjoint())?;
        for i in 0..rho.dim() {
            for j in 0..rho.dim() {
                out[(i, j)] = out[(i, j)] + term[(i, j)];
            }
        }
    }
    Ok(out)
}

/// Attack whose return-leg unitary is `U|psi>|0> = sum_k K_k|psi> |k>`:
/// `e0 = (<0|K_k|0>)_k`, `e1 = (<1|K_k|0>)_k`, `e2 = (<0|K_k|1>)_k`,
/// `e3 = (<1|K_k|1>)_k`.
pub fn dilation_from_kraus<T: Real>(b: T, kraus: &[SquareMatrix<T>]) -> Result<AttackSpec<T>> {
    if kraus.iter().any(|k| k.dim() != 2) {
        return Err(Error::validation("Kraus operators must be 2x2"));
    }
    let col = |i: usize, j: usize| ComplexVec::new(kraus.iter().map(|k| k[(i, j)]).collect());
    AttackSpec::new(b, col(0, 0)?, col(1, 0)?, col(0, 1)?, col(1, 1)?)
}

/// `K'_j = sum_k W_jk K_k`: another Kraus set for the same channel when `W`
/// is unitary.
pub fn mix_kraus<T: Real>(
    kraus: &[SquareMatrix<T>],
    w: &SquareMatrix<T>,
) -> Result<Vec<SquareMatrix<T>>> {
    if w.dim() != kraus.len() {
        return Err(Error::DimensionMismatch {
            left: w.dim(),
            right: kraus.len(),
        });
    }
    Ok((0..w.dim())
        .map(|j| {
            let mut out = SquareMatrix::zeros(2);
            for (k, op) in kraus.iter().enumerate() {
                for r in 0..2 {
                    for c in 0..2 {
                        out[(r, c)] = out[(r, c)] + w[(j, k)] * op[(r, c)];
                    }
                }
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bound;
    use crate::qmath::{random_complex_vec, random_unitary, HermitianMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type D = DepolScenario<f64>;

    fn stats_diff(a: &ChannelStatistics<f64>, b: &ChannelStatistics<f64>) -> f64 {
        a.fields()
            .iter()
            .zip(b.fields())
            .map(|((_, x), (_, y))| (x - y).abs())
            .fold((a.b - b.b).abs(), f64::max)
    }

    #[test]
    fn closed_form_examples() {
        let s = D::new(0.0, 0.0).unwrap().closed_form_statistics();
        assert_eq!((s.qz0, s.qz1, s.peminus, s.pe1), (0.0, 0.0, 0.0, 0.5));

        let s = D::new(0.1, 0.0).unwrap().closed_form_statistics();
        assert!((s.qz0 - 0.05).abs() < 1e-15);
        assert!((s.peminus - 0.05).abs() < 1e-15);
        assert_eq!(s.pe1, 0.5);

        let s = D::new(0.1, -0.1).unwrap().closed_form_statistics();
        assert!((s.pe1 - 0.59).abs() < 1e-15);
    }

    #[test]
    fn closed_form_weights() {
        let q = D::new(0.0, 0.0).unwrap().closed_form_qij().unwrap();
        assert_eq!(
            (q.q00, q.q01, q.q10, q.q11, q.n),
            (0.25, 0.0, 0.0, 0.25, 0.5)
        );
        let q = D::new(0.1, 0.0).unwrap().closed_form_qij().unwrap();
        for (got, want) in [
            (q.q00, 0.25),
            (q.q01, 0.025),
            (q.q10, 0.025),
            (q.q11, 0.25),
            (q.n, 0.55),
        ] {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn scenario_validation() {
        assert!(D::new(-0.1, 0.0).is_err());
        assert!(D::new(1.1, 0.0).is_err());
        assert!(D::new(f64::NAN, 0.0).is_err());
        assert!(matches!(D::new(0.1, 0.5), Err(Error::BiasOutOfRange(_))));
    }

    #[test]
    fn noiseless_dilation_is_embedded_identity() {
        let a = D::new(0.0, 0.0).unwrap().dilation();
        assert_eq!(a.dim(), 4);
        let one = ComplexVec::<f64>::basis(4, 0);
        let zero = ComplexVec::<f64>::zeros(4);
        assert_eq!((a.e(0), a.e(1), a.e(2), a.e(3)), (&one, &zero, &zero, &one));
    }

    #[test]
    fn dilation_reproduces_closed_forms() {
        for i in 0..=20 {
            for j in -5..=5 {
                let s = D::new(i as f64 / 20.0, j as f64 * 0.09).unwrap();
                let a = s.dilation();
                let report = a.validate();
                assert!(report.passed && report.max_residual() < 1e-12);
                let exact = a.exact_statistics().unwrap();
                assert!(stats_diff(&exact, &s.closed_form_statistics()) < 1e-12);
                let q = a.joint_distribution().unwrap();
                let cf = s.closed_form_qij().unwrap();
                for (x, y) in [
                    (q.q00, cf.q00),
                    (q.q01, cf.q01),
                    (q.q10, cf.q10),
                    (q.q11, cf.q11),
                ] {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fully_depolarizing() {
        let s = D::new(1.0, 0.2)
            .unwrap()
            .dilation()
            .exact_statistics()
            .unwrap();
        assert!((s.qz0 - 0.5).abs() < 1e-15);
        assert!((s.peminus - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kraus_set_realizes_the_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let q: f64 = rand::Rng::random(&mut rng);
            let v = random_complex_vec::<f64, _>(2, &mut rng);
            let w: f64 = rand::Rng::random(&mut rng);
            let mut rho = HermitianMatrix::from_outer_products(&[(w, &v)]).unwrap();
            rho.add_outer(1.0 - w, &random_complex_vec(2, &mut rng))
                .unwrap();
            let rho = rho.scaled(1.0 / rho.trace()).as_square();
            let out = apply_channel(&pauli_kraus(q), &rho).unwrap();
            let mut expect = rho.clone();
            for i in 0..2 {
                for j in 0..2 {
                    expect[(i, j)] *= 1.0 - q;
                }
                expect[(i, i)] += q / 2.0;
            }
            assert!(out.max_abs_diff(&expect).unwrap() < 1e-12);
        }
    }

    #[test]
    fn reflection_branch_matches_channel_on_forward_state() {
        // E_q(|e><e|) = (1 - q)|e><e| + (q/2)(|e><e| + |e'><e'|), <e'|e> = 0.
        for &(q, b) in &[(0.0, 0.0), (0.1, 0.0), (0.3, -0.2), (0.7, 0.4)] {
            let s = D::new(q, b).unwrap();
            let t = BiasTerms::new(b).unwrap();
            let e = ComplexVec::from_real(&[t.x, t.y]).unwrap();
            let e_perp = ComplexVec::from_real(&[t.y, -t.x]).unwrap();
            let expect =
                HermitianMatrix::from_outer_products(&[(1.0 - q / 2.0, &e), (q / 2.0, &e_perp)])
                    .unwrap()
                    .as_square();
            let got = s.dilation().output_state(t.x, t.y).as_square();
            assert!(got.max_abs_diff(&expect).unwrap() < 1e-12);
        }
    }

    #[test]
    fn any_dilation_gives_the_same_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(q, b) in &[(0.1, 0.0), (0.25, -0.1), (0.6, 0.3)] {
            let s = D::new(q, b).unwrap();
            let w: SquareMatrix<f64> = random_unitary(4, &mut rng);
            let mixed = dilation_from_kraus(b, &mix_kraus(&pauli_kraus(q), &w).unwrap()).unwrap();
            assert!(mixed.validate().passed);
            let d = stats_diff(
                &mixed.exact_statistics().unwrap(),
                &s.dilation().exact_statistics().unwrap(),
            );
            assert!(d < 1e-12);
            let (x, y) = (
                mixed.joint_distribution().unwrap(),
                s.closed_form_qij().unwrap(),
            );
            assert!((x.p00 - y.p00).abs() < 1e-12 && (x.p10 - y.p10).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_bias_eta_is_one_minus_two_q() {
        for i in 0..=25 {
            let q = i as f64 / 50.0;
            let s = D::new(q, 0.0).unwrap().closed_form_statistics();
            assert!((bound::eta_lower_bound(&s).unwrap() - (1.0 - 2.0 * q)).abs() < 1e-12);
        }
    }
}
