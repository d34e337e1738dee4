//! Monte-Carlo simulation of the protocol under a given attack.
//!
//! Every round: B reflects or measures-and-resends with probability 1/2
//! each; the returning qubit passes Eve's unitary; A measures in Z or X with
//! probability 1/2 each, sampling from the transit-qubit state with Eve's
//! ancilla traced out. B's key-balancing discard of reflected rounds is
//! applied after the quantum stage. Runs are split into shards with
//! independent ChaCha streams; the tally of a run is the ordered merge of its
//! shard tallies, so results depend only on `(seed, iterations, shards)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{AttackSpec, BiasTerms, ChannelStatistics, JointKeyDistribution};
use crate::{Error, Real, Result};

/// Generator used for every shard; shard `k` uses stream `k` of the seed.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9), stream = shard index";

pub const REFLECT: usize = 0;
pub const MEASURED_0: usize = 1;
pub const MEASURED_1: usize = 2;
pub const BASIS_Z: usize = 0;
pub const BASIS_X: usize = 1;
/// Outcome index 1 is `|1>` in the Z basis and `|->` in the X basis.
pub const OUTCOME_1_OR_MINUS: usize = 1;

/// How B discards reflected rounds so that both raw key values are equally
/// likely before A's sifting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceMode {
    /// Keep each reflected round with probability `1/2 + b_hat`, where
    /// `b_hat` is estimated from the same shard.
    Analytic,
    /// Keep a uniformly random subset of the reflected rounds of exactly the
    /// size of the measured-`|0>` set.
    #[default]
    Empirical,
}

#[derive(Clone, Debug)]
pub struct SimulationConfig<T> {
    pub attack: AttackSpec<T>,
    pub iterations: u64,
    pub seed: u64,
    pub balance_mode: BalanceMode,
    pub shards: usize,
}

impl<T: Real> SimulationConfig<T> {
    pub fn new(attack: AttackSpec<T>, iterations: u64, seed: u64) -> Self {
        Self {
            attack,
            iterations,
            seed,
            balance_mode: BalanceMode::default(),
            shards: 1,
        }
    }

    pub fn with_shards(mut self, shards: usize) -> Self {
        self.shards = shards;
        self
    }

    pub fn with_balance(mut self, mode: BalanceMode) -> Self {
        self.balance_mode = mode;
        self
    }

    fn shard_iterations(&self, shard: usize) -> u64 {
        let k = self.shards as u64;
        self.iterations / k + u64::from((shard as u64) < self.iterations % k)
    }
}

/// Event counters of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationTally {
    pub iterations: u64,
    /// `counts[action][basis][outcome]` with action in
    /// `{REFLECT, MEASURED_0, MEASURED_1}`.
    pub counts: [[[u64; 2]; 2]; 3],
    /// Reflected rounds B keeps after balancing, `[basis][outcome]`.
    pub reflect_kept: [[u64; 2]; 2],
    pub balance_mode: BalanceMode,
}

impl SimulationTally {
    pub fn empty(balance_mode: BalanceMode) -> Self {
        Self {
            iterations: 0,
            counts: [[[0; 2]; 2]; 3],
            reflect_kept: [[0; 2]; 2],
            balance_mode,
        }
    }

    /// Counters add exactly.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.balance_mode != other.balance_mode {
            return Err(Error::validation(
                "cannot merge tallies with different balance modes",
            ));
        }
        self.iterations += other.iterations;
        for a in 0..3 {
            for b in 0..2 {
                for o in 0..2 {
                    self.counts[a][b][o] += other.counts[a][b][o];
                }
            }
        }
        for b in 0..2 {
            for o in 0..2 {
                self.reflect_kept[b][o] += other.reflect_kept[b][o];
            }
        }
        Ok(())
    }

    pub fn action_total(&self, action: usize) -> u64 {
        self.counts[action].iter().flatten().sum()
    }

    pub fn total(&self) -> u64 {
        (0..3).map(|a| self.action_total(a)).sum()
    }

    pub fn reflect_kept_total(&self) -> u64 {
        self.reflect_kept.iter().flatten().sum()
    }

    /// Kept rounds where the raw bits disagree: B resent `|0>` and A saw
    /// `|1>`, or B reflected (and kept) and A saw `|->`.
    pub fn raw_key_errors(&self) -> u64 {
        self.counts[MEASURED_0][BASIS_Z][1] + self.reflect_kept[BASIS_X][1]
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.total() != self.iterations {
            return Err(Error::validation(format!(
                "counters sum to {} but {} iterations were run",
                self.total(),
                self.iterations
            )));
        }
        for b in 0..2 {
            for o in 0..2 {
                if self.reflect_kept[b][o] > self.counts[REFLECT][b][o] {
                    return Err(Error::validation(
                        "more reflected rounds kept than observed",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Outcome probabilities A sees for each transit state.
struct SampledChannel {
    p_measure0: f64,
    /// `p_one[input][basis]`: probability of outcome index 1, where input is
    /// `REFLECT` (state `|e>`), `MEASURED_0` (`|0>`) or `MEASURED_1` (`|1>`).
    p_one: [[f64; 2]; 3],
}

impl SampledChannel {
    fn new<T: Real>(attack: &AttackSpec<T>) -> Result<Self> {
        let t = BiasTerms::new(attack.bias())?;
        let report = attack.validate();
        if !report.passed {
            return Err(Error::validation(format!(
                "attack violates unitarity (max residual {:e})",
                report.max_residual()
            )));
        }
        let (zero, one) = (T::zero(), T::one());
        let inputs = [(t.x, t.y), (one, zero), (zero, one)];
        let mut p_one = [[0.0; 2]; 3];
        for (slot, (a0, a1)) in p_one.iter_mut().zip(inputs) {
            let rho = attack.output_state(a0, a1);
            let tr = rho.trace();
            let (r00, r11, r01) = (rho.get(0, 0).re, rho.get(1, 1).re, rho.get(0, 1).re);
            let half = T::lit(0.5);
            let p1 = r11 / tr;
            let pminus = half * (r00 + r11 - (r01 + r01)) / tr;
            *slot = [clamp01(p1.as_f64()), clamp01(pminus.as_f64())];
        }
        Ok(Self {
            p_measure0: clamp01(t.x2().as_f64()),
            p_one,
        })
    }
}

fn clamp01(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

fn check_config<T: Real>(config: &SimulationConfig<T>) -> Result<()> {
    if config.iterations == 0 {
        return Err(Error::validation("iterations must be at least 1"));
    }
    if config.shards == 0 {
        return Err(Error::validation("shards must be at least 1"));
    }
    Ok(())
}

/// Runs one shard of `config`. `run` merges shards `0..config.shards` in order.
pub fn run_shard<T: Real>(config: &SimulationConfig<T>, shard: usize) -> Result<SimulationTally> {
    check_config(config)?;
    if shard >= config.shards {
        return Err(Error::validation(format!(
            "shard {shard} out of range for {} shards",
            config.shards
        )));
    }
    let channel = SampledChannel::new(&config.attack)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(shard as u64);

    let n = config.shard_iterations(shard);
    let mut tally = SimulationTally::empty(config.balance_mode);
    tally.iterations = n;
    for _ in 0..n {
        let action = if rng.random_bool(0.5) {
            REFLECT
        } else if rng.random::<f64>() < channel.p_measure0 {
            MEASURED_0
        } else {
            MEASURED_1
        };
        let basis = usize::from(rng.random_bool(0.5));
        let outcome = usize::from(rng.random::<f64>() < channel.p_one[action][basis]);
        tally.counts[action][basis][outcome] += 1;
    }
    balance(&mut tally, &mut rng)?;
    Ok(tally)
}

fn balance<R: Rng>(tally: &mut SimulationTally, rng: &mut R) -> Result<()> {
    let cells = [(0, 0), (0, 1), (1, 0), (1, 1)];
    let reflect = tally.counts[REFLECT];
    let measured0 = tally.action_total(MEASURED_0);
    let measured = measured0 + tally.action_total(MEASURED_1);
    let numeric = |e: &dyn std::fmt::Display| Error::Numeric(format!("balancing draw failed: {e}"));
    match tally.balance_mode {
        BalanceMode::Empirical => {
            let mut population = tally.action_total(REFLECT);
            let mut draws = measured0.min(population);
            for (b, o) in cells {
                let in_cell = reflect[b][o];
                let take = if draws == 0 || in_cell == 0 {
                    0
                } else {
                    Hypergeometric::new(population, in_cell, draws)
                        .map_err(|e| numeric(&e))?
                        .sample(rng)
                };
                tally.reflect_kept[b][o] = take;
                population -= in_cell;
                draws -= take;
            }
        }
        BalanceMode::Analytic => {
            let keep = if measured == 0 {
                0.5
            } else {
                measured0 as f64 / measured as f64
            };
            for (b, o) in cells {
                tally.reflect_kept[b][o] = Binomial::new(reflect[b][o], keep)
                    .map_err(|e| numeric(&e))?
                    .sample(rng);
            }
        }
    }
    Ok(())
}

/// Simulates `config.iterations` rounds across `config.shards` shards
/// (executed on the current rayon pool).
pub fn run<T: Real>(config: &SimulationConfig<T>) -> Result<SimulationTally> {
    check_config(config)?;
    SampledChannel::new(&config.attack)?;
    let shards: Vec<SimulationTally> = (0..config.shards)
        .into_par_iter()
        .map(|k| run_shard(config, k))
        .collect::<Result<_>>()?;
    let mut tally = SimulationTally::empty(config.balance_mode);
    for s in &shards {
        tally.merge(s)?;
    }
    Ok(tally)
}

/// A binomial proportion with its sample size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FieldEstimate<T> {
    pub value: Option<T>,
    /// `sqrt(p_hat (1 - p_hat) / n)`.
    pub std_error: Option<T>,
    pub successes: u64,
    pub trials: u64,
}

impl<T: Real> FieldEstimate<T> {
    fn proportion(successes: u64, trials: u64) -> Self {
        if trials == 0 {
            return Self {
                value: None,
                std_error: None,
                successes,
                trials,
            };
        }
        let p = T::count(successes) / T::count(trials);
        Self {
            value: Some(p),
            std_error: Some((p * (T::one() - p) / T::count(trials)).sqrt()),
            successes,
            trials,
        }
    }

    fn shifted(mut self, by: T) -> Self {
        self.value = self.value.map(|v| v + by);
        self
    }

    pub fn available(&self) -> bool {
        self.value.is_some()
    }
}

/// Statistics estimated from a tally, with binomial standard errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate<T> {
    /// From `P(B measures 0) = 1/2 + b`.
    pub b: FieldEstimate<T>,
    pub qz0: FieldEstimate<T>,
    pub qz1: FieldEstimate<T>,
    pub p0plus: FieldEstimate<T>,
    pub p1plus: FieldEstimate<T>,
    pub pe1: FieldEstimate<T>,
    pub peminus: FieldEstimate<T>,
    /// Empirical acceptance weights, normalized per A's basis among rounds B keeps.
    pub q00: FieldEstimate<T>,
    pub q01: FieldEstimate<T>,
    pub q10: FieldEstimate<T>,
    pub q11: FieldEstimate<T>,
    /// Names of fields whose conditioning event had no samples.
    pub unavailable: Vec<&'static str>,
}

impl<T: Real> Estimate<T> {
    pub fn fields(&self) -> [(&'static str, &FieldEstimate<T>); 11] {
        [
            ("b", &self.b),
            ("qz0", &self.qz0),
            ("qz1", &self.qz1),
            ("p0plus", &self.p0plus),
            ("p1plus", &self.p1plus),
            ("pe1", &self.pe1),
            ("peminus", &self.peminus),
            ("q00", &self.q00),
            ("q01", &self.q01),
            ("q10", &self.q10),
            ("q11", &self.q11),
        ]
    }

    pub fn is_partial(&self) -> bool {
        !self.unavailable.is_empty()
    }

    fn require(&self, names: &[&'static str]) -> Result<Vec<T>> {
        let fields = self.fields();
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(names.len());
        for name in names {
            let f = fields
                .iter()
                .find(|(n, _)| n == name)
                .expect("known field")
                .1;
            match f.value {
                Some(v) => out.push(v),
                None => missing.push(*name),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(Error::PartialEstimate(missing))
        }
    }

    pub fn statistics(&self) -> Result<ChannelStatistics<T>> {
        let v = self.require(&["b", "qz0", "qz1", "p0plus", "p1plus", "pe1", "peminus"])?;
        let s = ChannelStatistics {
            b: v[0],
            qz0: v[1],
            qz1: v[2],
            p0plus: v[3],
            p1plus: v[4],
            pe1: v[5],
            peminus: v[6],
        };
        s.validate()?;
        Ok(s)
    }

    pub fn joint(&self) -> Result<JointKeyDistribution<T>> {
        let v = self.require(&["q00", "q01", "q10", "q11"])?;
        JointKeyDistribution::from_weights(v[0], v[1], v[2], v[3])
    }
}

/// Conditional frequencies of a tally.
pub fn estimate<T: Real>(t: &SimulationTally) -> Estimate<T> {
    let c = &t.counts;
    let row = |a: usize, basis: usize| c[a][basis][0] + c[a][basis][1];
    let p = FieldEstimate::<T>::proportion;

    let measured0 = t.action_total(MEASURED_0);
    let measured = measured0 + t.action_total(MEASURED_1);
    let kept = &t.reflect_kept;
    let kept_z = kept[BASIS_Z][0] + kept[BASIS_Z][1] + row(MEASURED_0, BASIS_Z);
    let kept_x = kept[BASIS_X][0] + kept[BASIS_X][1] + row(MEASURED_0, BASIS_X);

    let mut est = Estimate {
        b: p(measured0, measured).shifted(-T::lit(0.5)),
        qz0: p(c[MEASURED_0][BASIS_Z][1], row(MEASURED_0, BASIS_Z)),
        qz1: p(c[MEASURED_1][BASIS_Z][0], row(MEASURED_1, BASIS_Z)),
        p0plus: p(c[MEASURED_0][BASIS_X][0], row(MEASURED_0, BASIS_X)),
        p1plus: p(c[MEASURED_1][BASIS_X][0], row(MEASURED_1, BASIS_X)),
        pe1: p(c[REFLECT][BASIS_Z][1], row(REFLECT, BASIS_Z)),
        peminus: p(c[REFLECT][BASIS_X][1], row(REFLECT, BASIS_X)),
        q00: p(kept[BASIS_Z][1], kept_z),
        q01: p(c[MEASURED_0][BASIS_Z][1], kept_z),
        q10: p(kept[BASIS_X][1], kept_x),
        q11: p(c[MEASURED_0][BASIS_X][1], kept_x),
        unavailable: Vec::new(),
    };
    est.unavailable = est
        .fields()
        .iter()
        .filter(|(_, f)| !f.available())
        .map(|(n, _)| *n)
        .collect();
    est
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bound;
    use crate::depol::DepolScenario;

    type A = AttackSpec<f64>;

    fn depol(q: f64, b: f64) -> DepolScenario<f64> {
        DepolScenario::new(q, b).unwrap()
    }

    fn within(f: &FieldEstimate<f64>, truth: f64, sigmas: f64) -> bool {
        let (v, se) = (f.value.unwrap(), f.std_error.unwrap());
        (v - truth).abs() <= sigmas * se
    }

    #[test]
    fn noiseless_run_has_no_errors() {
        let t = run(&SimulationConfig::new(A::identity(0.0), 100_000, 7)).unwrap();
        t.check_invariants().unwrap();
        assert_eq!(t.raw_key_errors(), 0);
        let e = estimate::<f64>(&t);
        assert_eq!(e.qz0.value, Some(0.0));
        assert_eq!(e.qz1.value, Some(0.0));
        assert_eq!(e.peminus.value, Some(0.0));
        assert!(within(&e.b, 0.0, 3.0));
        let r = bound::key_rate(&e.statistics().unwrap()).unwrap();
        // Only b_hat and the mismatched-basis frequencies fluctuate.
        assert!(r.r > 0.99);
    }

    #[test]
    fn same_seed_same_tally() {
        let cfg = SimulationConfig::new(depol(0.1, 0.0).dilation(), 20_000, 42);
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
        let other = SimulationConfig {
            seed: 43,
            ..cfg.clone()
        };
        assert_ne!(run(&cfg).unwrap(), run(&other).unwrap());
        let analytic = cfg.clone().with_balance(BalanceMode::Analytic);
        assert_eq!(run(&analytic).unwrap(), run(&analytic).unwrap());
    }

    #[test]
    fn shards_merge_exactly() {
        let cfg = SimulationConfig::new(depol(0.2, -0.1).dilation(), 10_001, 5).with_shards(2);
        let whole = run(&cfg).unwrap();
        let mut merged = run_shard(&cfg, 0).unwrap();
        merged.merge(&run_shard(&cfg, 1).unwrap()).unwrap();
        assert_eq!(whole, merged);
        assert_eq!(whole.iterations, 10_001);
        whole.check_invariants().unwrap();
        assert!(run_shard(&cfg, 2).is_err());
    }

    #[test]
    fn merge_rejects_mixed_modes() {
        let mut a = SimulationTally::empty(BalanceMode::Analytic);
        assert!(a
            .merge(&SimulationTally::empty(BalanceMode::Empirical))
            .is_err());
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let bad = A::new(
            0.0,
            crate::qmath::ComplexVec::from_real(&[1.0]).unwrap(),
            crate::qmath::ComplexVec::from_real(&[1.0]).unwrap(),
            crate::qmath::ComplexVec::from_real(&[0.0]).unwrap(),
            crate::qmath::ComplexVec::from_real(&[1.0]).unwrap(),
        )
        .unwrap();
        assert!(run(&SimulationConfig::new(bad, 10, 1)).is_err());
        assert!(run(&SimulationConfig::new(A::identity(0.0), 0, 1)).is_err());
        assert!(run(&SimulationConfig::new(A::identity(0.0), 10, 1).with_shards(0)).is_err());
    }

    #[test]
    fn z_error_rate_converges() {
        let t = run(&SimulationConfig::new(
            depol(0.1, 0.0).dilation(),
            1_000_000,
            1,
        ))
        .unwrap();
        let e = estimate::<f64>(&t);
        let n = e.qz0.trials as f64;
        assert!((e.qz0.value.unwrap() - 0.05).abs() <= 3.0 * (0.05f64 * 0.95 / n).sqrt());
    }

    #[test]
    fn pe1_converges_under_negative_bias() {
        let t = run(&SimulationConfig::new(
            depol(0.1, -0.1).dilation(),
            1_000_000,
            2,
        ))
        .unwrap();
        let e = estimate::<f64>(&t);
        assert!(within(&e.pe1, 0.59, 3.0));
        assert!(within(&e.b, -0.1, 3.0));
    }

    #[test]
    fn estimated_rate_tracks_analytic_rate() {
        let s = depol(0.1, 0.0);
        let analytic = bound::key_rate(&s.closed_form_statistics()).unwrap().r;
        let t = run(&SimulationConfig::new(s.dilation(), 1_000_000, 3).with_shards(4)).unwrap();
        let r_hat = bound::key_rate(&estimate::<f64>(&t).statistics().unwrap())
            .unwrap()
            .r;
        assert!((r_hat - analytic).abs() < 0.02, "{r_hat} vs {analytic}");
    }

    #[test]
    fn empirical_balancing_is_exact() {
        let t = run(&SimulationConfig::new(
            depol(0.1, 0.2).dilation(),
            200_000,
            4,
        ))
        .unwrap();
        assert_eq!(t.reflect_kept_total(), t.action_total(MEASURED_0));
        t.check_invariants().unwrap();
        // Kept rounds are a uniform subsample: the kept X-basis fraction matches.
        let e = estimate::<f64>(&t);
        assert!(within(&e.q00, 0.5 * (0.5 - 0.2 * 0.9), 4.0));
    }

    #[test]
    fn analytic_balancing_converges() {
        let t = run(
            &SimulationConfig::new(depol(0.1, -0.2).dilation(), 400_000, 6)
                .with_balance(BalanceMode::Analytic),
        )
        .unwrap();
        let kept = t.reflect_kept_total() as f64;
        let m0 = t.action_total(MEASURED_0) as f64;
        let n_r = t.action_total(REFLECT) as f64;
        let n_m = m0 + t.action_total(MEASURED_1) as f64;
        let p = m0 / n_m;
        let sd = (n_r * p * (1.0 - p) + p * p * t.iterations as f64).sqrt();
        assert!(
            (kept - m0).abs() <= 3.0 * sd,
            "kept {kept}, measured0 {m0}, sd {sd}"
        );
    }

    #[test]
    fn tiny_run_reports_partial_estimate() {
        let t = run(&SimulationConfig::new(A::identity(0.0), 1, 0)).unwrap();
        let e = estimate::<f64>(&t);
        assert!(e.is_partial());
        assert!(matches!(e.statistics(), Err(Error::PartialEstimate(_))));
    }

    #[test]
    fn tally_serializes() {
        let t = run(&SimulationConfig::new(A::identity(0.0), 100, 0)).unwrap();
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["iterations"], 100);
        assert_eq!(v["balance_mode"], "empirical");
        let back: SimulationTally = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
    }
}
