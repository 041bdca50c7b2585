//! Discrete bounded priors, their moments, and the scalar Gaussian-channel
//! posterior machinery (denoiser, posterior variance, mmse and its derivative).
//!
//! The denoiser takes the natural field `h = s*snr + z*sqrt(snr)` rather than
//! the raw channel output `y`; the two are related by `h = y*snr`, and the
//! field form avoids a division by zero at `snr = 0`. All posterior sums are
//! normalized with log-sum-exp, which is exact and overflow-free for bounded
//! discrete support.

use thiserror::Error;

use crate::quadrature::{expect_normal, QuadratureError, DEFAULT_QUAD_TOL};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PriorError {
    #[error("atom {index} has negative probability {prob}")]
    NegativeProb { index: usize, prob: f64 },
    #[error("prior has empty support")]
    EmptySupport,
    #[error("atom {index} has non-finite value or probability")]
    NonFiniteValue { index: usize },
    #[error("total probability mass {mass} cannot be normalized")]
    Unnormalizable { mass: f64 },
    #[error("bias {eps} exceeds the donor atom mass {available}")]
    BiasTooLarge { eps: f64, available: f64 },
}

/// A single support point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

/// Finite discrete prior with bounded support and cached moments.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePrior {
    atoms: Vec<Atom>,
    mean: f64,
    second_moment: f64,
    fourth_moment: f64,
}

impl DiscretePrior {
    /// Build a prior from (value, probability) pairs. Probabilities are
    /// normalized to sum to one; duplicate values are merged; zero-mass atoms
    /// are dropped.
    pub fn new(atoms: &[(f64, f64)]) -> Result<Self, PriorError> {
        if atoms.is_empty() {
            return Err(PriorError::EmptySupport);
        }
        for (i, &(v, p)) in atoms.iter().enumerate() {
            if !v.is_finite() || !p.is_finite() {
                return Err(PriorError::NonFiniteValue { index: i });
            }
            if p < 0.0 {
                return Err(PriorError::NegativeProb { index: i, prob: p });
            }
        }
        let mass: f64 = atoms.iter().map(|&(_, p)| p).sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(PriorError::Unnormalizable { mass });
        }
        let mut sorted: Vec<Atom> = atoms
            .iter()
            .map(|&(value, prob)| Atom {
                value,
                prob: prob / mass,
            })
            .collect();
        sorted.sort_by(|a, b| a.value.total_cmp(&b.value));
        let mut merged: Vec<Atom> = Vec::with_capacity(sorted.len());
        for a in sorted {
            match merged.last_mut() {
                Some(last) if last.value == a.value => last.prob += a.prob,
                _ => merged.push(a),
            }
        }
        merged.retain(|a| a.prob > 0.0);
        if merged.is_empty() {
            return Err(PriorError::EmptySupport);
        }
        let moment = |k: i32| merged.iter().map(|a| a.prob * a.value.powi(k)).sum();
        Ok(Self {
            mean: moment(1),
            second_moment: moment(2),
            fourth_moment: moment(4),
            atoms: merged,
        })
    }

    /// Bernoulli 0/1 prior with success probability rho.
    pub fn bernoulli(rho: f64) -> Result<Self, PriorError> {
        Self::new(&[(1.0, rho), (0.0, 1.0 - rho)])
    }

    /// Single point mass at `a`.
    pub fn dirac(a: f64) -> Result<Self, PriorError> {
        Self::new(&[(a, 1.0)])
    }

    /// Equiprobable +/-1 prior.
    pub fn rademacher() -> Result<Self, PriorError> {
        Self::new(&[(1.0, 0.5), (-1.0, 0.5)])
    }

    /// Two-group community prior: value sqrt((1-rho)/rho) with probability
    /// rho and -sqrt(rho/(1-rho)) with probability 1-rho. Zero mean and unit
    /// second moment by construction.
    pub fn community(rho: f64) -> Result<Self, PriorError> {
        if !(0.0 < rho && rho < 1.0) {
            return Err(PriorError::Unnormalizable { mass: rho });
        }
        let plus = ((1.0 - rho) / rho).sqrt();
        let minus = -(rho / (1.0 - rho)).sqrt();
        Self::new(&[(plus, rho), (minus, 1.0 - rho)])
    }

    /// Move `eps` of mass from the lowest-value atom to the highest-value
    /// atom. Zero-mean priors need this to make `E = v` non-stationary; the
    /// caller removes the bias at the end of an analysis.
    pub fn with_bias(&self, eps: f64) -> Result<Self, PriorError> {
        let lo = 0;
        let hi = self.atoms.len() - 1;
        if lo == hi {
            return Err(PriorError::BiasTooLarge {
                eps,
                available: 0.0,
            });
        }
        if !(eps >= 0.0) || eps > self.atoms[lo].prob {
            return Err(PriorError::BiasTooLarge {
                eps,
                available: self.atoms[lo].prob,
            });
        }
        let pairs: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let p = if i == lo {
                    a.prob - eps
                } else if i == hi {
                    a.prob + eps
                } else {
                    a.prob
                };
                (a.value, p)
            })
            .collect();
        Self::new(&pairs)
    }

    /// Community prior with the default 1e-4 bias applied.
    pub fn community_biased(rho: f64, eps: f64) -> Result<Self, PriorError> {
        Self::community(rho)?.with_bias(eps)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// E[S]
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// v = E[S^2]
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// E[S^4]
    pub fn fourth_moment(&self) -> f64 {
        self.fourth_moment
    }

    /// Var(S) = v - E[S]^2
    pub fn variance(&self) -> f64 {
        self.second_moment - self.mean * self.mean
    }

    pub fn support_min(&self) -> f64 {
        self.atoms.first().unwrap().value
    }

    pub fn support_max(&self) -> f64 {
        self.atoms.last().unwrap().value
    }

    /// Shannon entropy -sum p ln p in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .atoms
            .iter()
            .map(|a| a.prob * a.prob.ln())
            .sum::<f64>()
    }

    /// Draw one value according to the prior from a uniform u in [0,1).
    pub fn sample_from_uniform(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += a.prob;
            if u < acc {
                return a.value;
            }
        }
        self.atoms.last().unwrap().value
    }

    /// Posterior weights over atoms given field h at signal-to-noise snr,
    /// with log-sum-exp normalization. Weights are written into `out`.
    fn posterior_weights(&self, h: f64, snr: f64, out: &mut Vec<f64>) {
        out.clear();
        let mut max_logit = f64::NEG_INFINITY;
        for a in &self.atoms {
            let logit = a.prob.ln() - 0.5 * a.value * a.value * snr + a.value * h;
            out.push(logit);
            if logit > max_logit {
                max_logit = logit;
            }
        }
        let mut norm = 0.0;
        for l in out.iter_mut() {
            *l = (*l - max_logit).exp();
            norm += *l;
        }
        for l in out.iter_mut() {
            *l /= norm;
        }
    }

    /// Posterior mean E[X | field h] for the scalar channel h = x*snr + z*sqrt(snr).
    pub fn posterior_mean(&self, h: f64, snr: f64) -> f64 {
        self.posterior_mean_var(h, snr).0
    }

    /// Posterior variance Var[X | field h]; also the field-derivative of the
    /// posterior mean.
    pub fn posterior_var(&self, h: f64, snr: f64) -> f64 {
        self.posterior_mean_var(h, snr).1
    }

    /// (posterior mean, posterior variance) in one pass.
    pub fn posterior_mean_var(&self, h: f64, snr: f64) -> (f64, f64) {
        debug_assert!(snr >= 0.0 && h.is_finite());
        let mut w = Vec::with_capacity(self.atoms.len());
        self.posterior_weights(h, snr, &mut w);
        let mut m = 0.0;
        let mut m2 = 0.0;
        for (wi, a) in w.iter().zip(&self.atoms) {
            m += wi * a.value;
            m2 += wi * a.value * a.value;
        }
        (m, (m2 - m * m).max(0.0))
    }

    /// Scalar mmse at signal-to-noise ratio snr:
    /// E_{S,Z}[(S - E[X | S*snr + sqrt(snr) Z])^2].
    pub fn mmse(&self, snr: f64) -> Result<f64, QuadratureError> {
        self.mmse_tol(snr, DEFAULT_QUAD_TOL)
    }

    pub fn mmse_tol(&self, snr: f64, tol: f64) -> Result<f64, QuadratureError> {
        debug_assert!(snr >= 0.0);
        let sqrt_snr = snr.sqrt();
        let mut total = 0.0;
        for s in &self.atoms {
            let val = expect_normal(
                |z| {
                    let eta = self.posterior_mean(s.value * snr + sqrt_snr * z, snr);
                    let d = s.value - eta;
                    d * d
                },
                tol,
            )?;
            total += s.prob * val;
        }
        Ok(total.clamp(0.0, self.variance()))
    }

    /// d mmse / d snr = -E[Var(X|Y)^2]; nonpositive everywhere.
    pub fn mmse_derivative(&self, snr: f64) -> Result<f64, QuadratureError> {
        debug_assert!(snr >= 0.0);
        let sqrt_snr = snr.sqrt();
        let mut total = 0.0;
        for s in &self.atoms {
            let val = expect_normal(
                |z| {
                    let pv = self.posterior_var(s.value * snr + sqrt_snr * z, snr);
                    pv * pv
                },
                DEFAULT_QUAD_TOL,
            )?;
            total += s.prob * val;
        }
        Ok(-total)
    }
}

/// Effective scalar channel noise: snr = (v - E)/Delta, sigma^2 = 1/snr.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveNoise {
    snr: f64,
}

impl EffectiveNoise {
    pub fn from_snr(snr: f64) -> Self {
        assert!(snr >= 0.0 && snr.is_finite(), "snr must be finite and >= 0");
        Self { snr }
    }

    /// Build from an MSE level E in [0, v] and noise variance Delta.
    pub fn from_mse(e: f64, v: f64, delta: f64) -> Self {
        assert!(delta > 0.0, "delta must be positive");
        assert!((0.0..=v).contains(&e), "E must lie in [0, v]");
        Self {
            snr: (v - e) / delta,
        }
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }

    pub fn sigma2(&self) -> f64 {
        1.0 / self.snr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn bernoulli_moments() {
        let p = DiscretePrior::bernoulli(0.02).unwrap();
        assert_relative_eq!(p.mean(), 0.02, epsilon = 1e-15);
        assert_relative_eq!(p.second_moment(), 0.02, epsilon = 1e-15);
        assert_relative_eq!(p.variance(), 0.0196, epsilon = 1e-15);
        assert_relative_eq!(p.fourth_moment(), 0.02, epsilon = 1e-15);
    }

    #[test]
    fn community_prior_zero_mean_unit_second_moment() {
        let p = DiscretePrior::community(0.3).unwrap();
        assert_relative_eq!(p.mean(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(p.second_moment(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn dirac_moments() {
        let p = DiscretePrior::dirac(2.5).unwrap();
        assert_relative_eq!(p.mean(), 2.5, epsilon = 1e-15);
        assert_relative_eq!(p.second_moment(), 6.25, epsilon = 1e-15);
        assert_eq!(p.variance(), 0.0);
    }

    #[test]
    fn rejects_invalid_input() {
        assert!(matches!(
            DiscretePrior::new(&[]),
            Err(PriorError::EmptySupport)
        ));
        assert!(matches!(
            DiscretePrior::new(&[(1.0, -0.2), (0.0, 1.2)]),
            Err(PriorError::NegativeProb { .. })
        ));
        assert!(matches!(
            DiscretePrior::new(&[(f64::NAN, 1.0)]),
            Err(PriorError::NonFiniteValue { .. })
        ));
        assert!(matches!(
            DiscretePrior::new(&[(1.0, 0.0), (2.0, 0.0)]),
            Err(PriorError::Unnormalizable { .. })
        ));
    }

    #[test]
    fn bias_transform_moves_mass() {
        let p = DiscretePrior::community_biased(0.3, 1e-4).unwrap();
        assert!(p.mean() > 0.0);
        let unbiased = DiscretePrior::community(0.3).unwrap();
        let gap = p.mean() - unbiased.mean();
        let span = unbiased.support_max() - unbiased.support_min();
        assert_relative_eq!(gap, 1e-4 * span, epsilon = 1e-12);
    }

    #[test]
    fn entropy_values() {
        assert_relative_eq!(
            DiscretePrior::bernoulli(0.5).unwrap().entropy(),
            std::f64::consts::LN_2,
            epsilon = 1e-14
        );
        assert_eq!(DiscretePrior::dirac(1.0).unwrap().entropy(), 0.0);
        // -0.1 ln 0.1 - 0.9 ln 0.9
        assert_relative_eq!(
            DiscretePrior::bernoulli(0.1).unwrap().entropy(),
            0.325_082_973_391_448_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn posterior_mean_closed_forms() {
        let dirac = DiscretePrior::dirac(1.7).unwrap();
        assert_relative_eq!(dirac.posterior_mean(3.0, 2.0), 1.7, epsilon = 1e-14);
        assert_relative_eq!(dirac.posterior_mean(-40.0, 0.1), 1.7, epsilon = 1e-14);

        let rad = DiscretePrior::rademacher().unwrap();
        for &h in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
            for &snr in &[0.0, 0.3, 2.0] {
                assert_relative_eq!(rad.posterior_mean(h, snr), h.tanh(), epsilon = 1e-13);
            }
        }

        let ber = DiscretePrior::bernoulli(0.3).unwrap();
        assert_relative_eq!(ber.posterior_mean(0.0, 0.0), 0.3, epsilon = 1e-14);
    }

    #[test]
    fn posterior_handles_huge_fields_without_overflow() {
        let ber = DiscretePrior::bernoulli(0.1).unwrap();
        let (m, var) = ber.posterior_mean_var(1e7, 1e6);
        assert!(m.is_finite() && var.is_finite());
        assert!(m >= 0.0 && m <= 1.0);
        let (m, _) = ber.posterior_mean_var(-1e7, 1e6);
        assert!(m.abs() < 1e-12);
    }

    #[test]
    fn mmse_at_zero_snr_is_prior_variance() {
        let ber = DiscretePrior::bernoulli(0.02).unwrap();
        assert_relative_eq!(ber.mmse(0.0).unwrap(), 0.0196, epsilon = 1e-12);
        let dirac = DiscretePrior::dirac(3.0).unwrap();
        assert_relative_eq!(dirac.mmse(7.7).unwrap(), 0.0, epsilon = 1e-14);
    }

    // Independent Simpson oracle for E_Z[g(Z)], used to cross-check the
    // Gauss-Hermite route.
    fn simpson_normal<F: Fn(f64) -> f64>(g: F) -> f64 {
        let m = 100_001;
        let (a, b) = (-10.0f64, 10.0f64);
        let h = (b - a) / (m - 1) as f64;
        let f = |z: f64| g(z) * (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(a) + f(b);
        for i in 1..m - 1 {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn rademacher_mmse_matches_frozen_oracle() {
        // 1 - E[tanh^2(1 + Z)], frozen from an independent pre-build oracle.
        let rad = DiscretePrior::rademacher().unwrap();
        let got = rad.mmse(1.0).unwrap();
        assert_relative_eq!(got, MMSE_RAD_SNR1, epsilon = 5e-9);
        // and against the in-test Simpson route
        let simpson = 1.0 - simpson_normal(|z| (1.0 + z).tanh().powi(2));
        assert_relative_eq!(got, simpson, epsilon = 1e-9);
    }

    const MMSE_RAD_SNR1: f64 = 0.449_599_509_206_7;

    #[test]
    fn mmse_monotone_nonincreasing_in_snr() {
        let priors = [
            DiscretePrior::bernoulli(0.02).unwrap(),
            DiscretePrior::bernoulli(0.3).unwrap(),
            DiscretePrior::community_biased(0.3, 1e-4).unwrap(),
        ];
        for p in &priors {
            let grid: Vec<f64> = (0..30).map(|i| 0.25 * i as f64).collect();
            let mut prev = f64::INFINITY;
            for &snr in &grid {
                let m = p.mmse(snr).unwrap();
                assert!(m <= prev + 1e-12, "mmse increased at snr={snr}");
                assert!(m >= -1e-15 && m <= p.variance() + 1e-12);
                prev = m;
            }
        }
    }

    #[test]
    fn mmse_decays_exponentially_for_discrete_priors() {
        // Qualitative check: ln mmse is close to affine in snr over a window.
        let p = DiscretePrior::bernoulli(0.3).unwrap();
        let grid: Vec<f64> = (0..10).map(|i| 4.0 + 2.0 * i as f64).collect();
        let logs: Vec<f64> = grid.iter().map(|&s| p.mmse(s).unwrap().ln()).collect();
        let n = grid.len() as f64;
        let sx: f64 = grid.iter().sum();
        let sy: f64 = logs.iter().sum();
        let sxx: f64 = grid.iter().map(|x| x * x).sum();
        let sxy: f64 = grid.iter().zip(&logs).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n;
        assert!(slope < 0.0, "mmse must decay, slope={slope}");
        for (&x, &y) in grid.iter().zip(&logs) {
            assert!(
                (slope * x + intercept - y).abs() < 1.0,
                "log-linear fit residual too large at snr={x}"
            );
        }
    }

    #[test]
    fn mmse_derivative_matches_finite_differences() {
        let cases = [
            (DiscretePrior::rademacher().unwrap(), 1.0),
            (DiscretePrior::bernoulli(0.3).unwrap(), 0.5),
            (DiscretePrior::bernoulli(0.02).unwrap(), 3.0),
            (DiscretePrior::community_biased(0.3, 1e-4).unwrap(), 2.0),
        ];
        for (p, snr) in &cases {
            let d = p.mmse_derivative(*snr).unwrap();
            assert!(d <= 0.0);
            let h = 1e-4 * snr.max(1.0);
            let fd = (p.mmse(snr + h).unwrap() - p.mmse(snr - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(d, fd, max_relative = 1e-6, epsilon = 1e-10);
        }
        let dirac = DiscretePrior::dirac(1.0).unwrap();
        assert_relative_eq!(dirac.mmse_derivative(2.0).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn mmse_derivative_at_zero_snr_finite_difference() {
        let p = DiscretePrior::bernoulli(0.3).unwrap();
        let d = p.mmse_derivative(0.0).unwrap();
        let h = 1e-5;
        // one-sided difference at the boundary
        let fd = (p.mmse(h).unwrap() - p.mmse(0.0).unwrap()) / h;
        assert_relative_eq!(d, fd, max_relative = 1e-3, epsilon = 1e-8);
    }

    #[test]
    fn posterior_quadrature_matches_direct_summation_oracle() {
        // naive direct-summation denoiser without log-sum-exp, valid in a
        // moderate (h, snr) regime where nothing overflows
        fn naive_eta(p: &DiscretePrior, h: f64, snr: f64) -> (f64, f64) {
            let mut num = 0.0;
            let mut num2 = 0.0;
            let mut den = 0.0;
            for a in p.atoms() {
                let w = a.prob * (-0.5 * a.value * a.value * snr + a.value * h).exp();
                num += w * a.value;
                num2 += w * a.value * a.value;
                den += w;
            }
            let m = num / den;
            (m, num2 / den - m * m)
        }
        let priors = [
            DiscretePrior::bernoulli(0.3).unwrap(),
            DiscretePrior::community_biased(0.3, 1e-4).unwrap(),
            DiscretePrior::new(&[(-1.5, 0.2), (0.3, 0.5), (2.0, 0.3)]).unwrap(),
        ];
        let mut state = 0x1234_5678_9abc_def0u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for p in &priors {
            for _ in 0..50 {
                let h = 40.0 * (next() - 0.5);
                let snr = 20.0 * next();
                let (m, var) = p.posterior_mean_var(h, snr);
                let (m_ref, var_ref) = naive_eta(p, h, snr);
                assert_relative_eq!(m, m_ref, epsilon = 1e-10, max_relative = 1e-10);
                assert_relative_eq!(var, var_ref, epsilon = 1e-10, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn effective_noise_relation() {
        let n = EffectiveNoise::from_mse(0.01, 0.02, 0.0008);
        assert_relative_eq!(n.snr(), 12.5, epsilon = 1e-12);
        assert_relative_eq!(n.sigma2(), 0.08, epsilon = 1e-12);
        let zero = EffectiveNoise::from_mse(0.02, 0.02, 0.0008);
        assert_eq!(zero.snr(), 0.0);
    }

    proptest! {
        #[test]
        fn posterior_mean_stays_in_support_hull(
            h in -200.0f64..200.0,
            snr in 0.0f64..50.0,
            rho in 0.01f64..0.99,
        ) {
            let p = DiscretePrior::bernoulli(rho).unwrap();
            let (m, var) = p.posterior_mean_var(h, snr);
            prop_assert!(m >= p.support_min() - 1e-12);
            prop_assert!(m <= p.support_max() + 1e-12);
            prop_assert!(var >= 0.0);
            prop_assert!(var <= (p.support_max() - p.support_min()).powi(2));
        }

        #[test]
        fn normalization_is_scale_invariant(scale in 0.1f64..10.0) {
            let a = DiscretePrior::new(&[(1.0, 0.3 * scale), (0.0, 0.7 * scale)]).unwrap();
            let b = DiscretePrior::bernoulli(0.3).unwrap();
            prop_assert!((a.mean() - b.mean()).abs() < 1e-13);
            prop_assert!((a.second_moment() - b.second_moment()).abs() < 1e-13);
        }
    }
}
