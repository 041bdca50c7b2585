//! Exhaustive-enumeration posterior for small n.
//!
//! For n small enough to sum over support^n, the Gibbs posterior
//! P(x | s, z) ~ prod_i P0(x_i) exp(-H(x)) with
//! H(x) = sum_{i<=j} [ x_i^2 x_j^2/(2 n Delta) - s_i s_j x_i x_j/(n Delta)
//!                     - z_ij x_i x_j / sqrt(n Delta) ]
//! is computed exactly (up to floating point) with a streaming log-sum-exp
//! over a mixed-radix enumeration. This is the ground truth used to check
//! the Nishimori identities, the finite-n mutual information / I-MMSE
//! relation, and the matrix-vector MMSE inequality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::prior::DiscretePrior;

/// Enumeration budget: |support|^n may not exceed this.
pub const MAX_CONFIGS: u64 = 1 << 24;
pub const MAX_N: usize = 14;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("enumeration budget exceeded: {support}^{n} configurations")]
    TooLarge { support: usize, n: usize },
}

/// Disorder realization of a small system: signal and symmetric noise.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub n: usize,
    pub delta: f64,
    pub signal: Vec<f64>,
    /// z_ij for i <= j, row-major packed upper triangle (diagonal included).
    pub noise: Vec<f64>,
}

impl SmallInstance {
    pub fn sample(prior: &DiscretePrior, n: usize, delta: f64, rng: &mut ChaCha12Rng) -> Self {
        let signal: Vec<f64> = (0..n)
            .map(|_| prior.sample_from_uniform(rng.random::<f64>()))
            .collect();
        let noise: Vec<f64> = (0..n * (n + 1) / 2)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Self {
            n,
            delta,
            signal,
            noise,
        }
    }

    #[inline]
    fn z(&self, i: usize, j: usize) -> f64 {
        // packed upper triangle index for i <= j
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.noise[i * self.n - i * (i + 1) / 2 + j]
    }
}

/// Exact posterior summaries of one disorder realization.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub n: usize,
    pub log_z: f64,
    /// -ln(Z)/n
    pub free_energy: f64,
    /// <x_i>
    pub marginal_means: Vec<f64>,
    /// <x_i x_j>, row-major n x n (diagonal = <x_i^2>)
    pub pair_means: Vec<f64>,
    /// (1/n) sum_i (s_i - <x_i>)^2
    pub vmse: f64,
    /// (1/n^2) sum_ij (s_i s_j - <x_i x_j>)^2
    pub mmse: f64,
    /// <q> with q = (1/n) sum_i s_i x_i
    pub overlap: f64,
    /// <q^2>
    pub overlap_sq: f64,
}

/// Exhaustive posterior over support^n via streaming log-sum-exp.
pub fn exact_posterior(
    instance: &SmallInstance,
    prior: &DiscretePrior,
) -> Result<OracleResult, OracleError> {
    let n = instance.n;
    let support: Vec<f64> = prior.atoms().iter().map(|a| a.value).collect();
    let log_probs: Vec<f64> = prior.atoms().iter().map(|a| a.prob.ln()).collect();
    let k = support.len();
    let configs = (k as u64).checked_pow(n as u32);
    match configs {
        Some(c) if c <= MAX_CONFIGS && n <= MAX_N => {}
        _ => {
            return Err(OracleError::TooLarge {
                support: k,
                n,
            })
        }
    }
    let configs = configs.unwrap();

    let nf = n as f64;
    let inv_2nd = 1.0 / (2.0 * nf * instance.delta);
    let inv_nd = 1.0 / (nf * instance.delta);
    let inv_sqrt_nd = 1.0 / (nf * instance.delta).sqrt();

    // streaming accumulators, rescaled against the running max log-weight
    let mut max_lw = f64::NEG_INFINITY;
    let mut z_acc = 0.0f64;
    let mut mean_acc = vec![0.0f64; n];
    let mut pair_acc = vec![0.0f64; n * n];

    let mut digits = vec![0usize; n];
    let mut x: Vec<f64> = vec![support[0]; n];
    for _ in 0..configs {
        // log weight of configuration x
        let mut lw = 0.0;
        for i in 0..n {
            lw += log_probs[digits[i]];
        }
        let mut h = 0.0;
        for i in 0..n {
            let xi = x[i];
            for j in i..n {
                let xj = x[j];
                let xx = xi * xj;
                h += xx * xx * inv_2nd
                    - instance.signal[i] * instance.signal[j] * xx * inv_nd
                    - instance.z(i, j) * xx * inv_sqrt_nd;
            }
        }
        lw -= h;

        if lw > max_lw {
            let rescale = if max_lw.is_finite() {
                (max_lw - lw).exp()
            } else {
                0.0
            };
            z_acc *= rescale;
            mean_acc.iter_mut().for_each(|a| *a *= rescale);
            pair_acc.iter_mut().for_each(|a| *a *= rescale);
            max_lw = lw;
        }
        let wgt = (lw - max_lw).exp();
        z_acc += wgt;
        for i in 0..n {
            let wxi = wgt * x[i];
            mean_acc[i] += wxi;
            for j in 0..n {
                pair_acc[i * n + j] += wxi * x[j];
            }
        }

        // mixed-radix increment
        for pos in 0..n {
            digits[pos] += 1;
            if digits[pos] < k {
                x[pos] = support[digits[pos]];
                break;
            }
            digits[pos] = 0;
            x[pos] = support[0];
        }
    }

    let log_z = max_lw + z_acc.ln();
    let marginal_means: Vec<f64> = mean_acc.iter().map(|a| a / z_acc).collect();
    let pair_means: Vec<f64> = pair_acc.iter().map(|a| a / z_acc).collect();

    let mut vmse = 0.0;
    for i in 0..n {
        let d = instance.signal[i] - marginal_means[i];
        vmse += d * d;
    }
    vmse /= nf;
    let mut mmse = 0.0;
    let mut overlap = 0.0;
    let mut overlap_sq = 0.0;
    for i in 0..n {
        overlap += instance.signal[i] * marginal_means[i];
        for j in 0..n {
            let d = instance.signal[i] * instance.signal[j] - pair_means[i * n + j];
            mmse += d * d;
            overlap_sq += instance.signal[i] * instance.signal[j] * pair_means[i * n + j];
        }
    }
    mmse /= nf * nf;
    overlap /= nf;
    overlap_sq /= nf * nf;

    Ok(OracleResult {
        n,
        log_z,
        free_energy: -log_z / nf,
        marginal_means,
        pair_means,
        vmse,
        mmse,
        overlap,
        overlap_sq,
    })
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            stderr: (var / n).sqrt(),
        }
    }

    /// |mean| <= k stderr
    pub fn consistent_with_zero(&self, k: f64) -> bool {
        self.mean.abs() <= k * self.stderr
    }
}

/// Monte Carlo check of the Nishimori identities over disorder:
/// E[S_i <X_i>] = E[<X_i>^2], E[S_i S_j <X_i X_j>] = E[<X_i X_j>^2],
/// and E[S^2] = E[<X_i^2>]. Gaps are averaged over coordinates.
#[derive(Debug, Clone)]
pub struct NishimoriReport {
    pub first_moment_gap: Estimate,
    pub pair_moment_gap: Estimate,
    pub second_moment_gap: Estimate,
    pub samples: usize,
}

pub fn nishimori_check(
    prior: &DiscretePrior,
    n: usize,
    delta: f64,
    num_samples: usize,
    seed: u64,
) -> Result<NishimoriReport, OracleError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut g1 = Vec::with_capacity(num_samples);
    let mut g2 = Vec::with_capacity(num_samples);
    let mut g3 = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let inst = SmallInstance::sample(prior, n, delta, &mut rng);
        let res = exact_posterior(&inst, prior)?;
        let nf = n as f64;
        let mut a = 0.0;
        let mut b = 0.0;
        let mut c = 0.0;
        for i in 0..n {
            a += inst.signal[i] * res.marginal_means[i] - res.marginal_means[i].powi(2);
            c += prior.second_moment() - res.pair_means[i * n + i];
            for j in 0..n {
                let pm = res.pair_means[i * n + j];
                b += inst.signal[i] * inst.signal[j] * pm - pm * pm;
            }
        }
        g1.push(a / nf);
        g2.push(b / (nf * nf));
        g3.push(c / nf);
    }
    Ok(NishimoriReport {
        first_moment_gap: Estimate::from_samples(&g1),
        pair_moment_gap: Estimate::from_samples(&g2),
        second_moment_gap: Estimate::from_samples(&g3),
        samples: num_samples,
    })
}

/// Finite-n mutual information per variable:
/// I_n/n = -E[ln Z]/n + v^2/(4 Delta) + (2 E[S^4] - v^2)/(4 Delta n),
/// Monte Carlo over the disorder.
pub fn finite_n_mutual_information(
    prior: &DiscretePrior,
    n: usize,
    delta: f64,
    num_samples: usize,
    seed: u64,
) -> Result<Estimate, OracleError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let v = prior.second_moment();
    let s4 = prior.fourth_moment();
    let shift = v * v / (4.0 * delta) + (2.0 * s4 - v * v) / (4.0 * delta * n as f64);
    let mut vals = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let inst = SmallInstance::sample(prior, n, delta, &mut rng);
        let res = exact_posterior(&inst, prior)?;
        vals.push(res.free_energy + shift);
    }
    Ok(Estimate::from_samples(&vals))
}

/// Finite-difference I-MMSE check at one Delta: the derivative of I_n/n in
/// 1/Delta must equal Mmmse_n/4 up to an O(1/n) defect bounded by
/// 2 E[S^4]/n. Disorder is shared between the two finite-difference points
/// (common random numbers), so the residual is estimated pairwise.
#[derive(Debug, Clone)]
pub struct ImmseReport {
    /// centered finite difference of I_n/n in 1/Delta
    pub derivative: Estimate,
    /// Mmmse_n / 4
    pub quarter_mmse: Estimate,
    /// pairwise residual derivative - quarter_mmse
    pub residual: Estimate,
    /// deterministic part of the allowed defect: 2 E[S^4]/n + O(h^2) slack
    pub bound: f64,
    pub pass: bool,
}

pub fn immse_check(
    prior: &DiscretePrior,
    n: usize,
    delta: f64,
    fd_step: f64,
    num_samples: usize,
    seed: u64,
) -> Result<ImmseReport, OracleError> {
    let inv_delta = 1.0 / delta;
    let d_hi = 1.0 / (inv_delta + fd_step);
    let d_lo = 1.0 / (inv_delta - fd_step);
    let v = prior.second_moment();
    let s4 = prior.fourth_moment();
    let nf = n as f64;
    let shift = |d: f64| v * v / (4.0 * d) + (2.0 * s4 - v * v) / (4.0 * d * nf);

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut fd = Vec::with_capacity(num_samples);
    let mut qm = Vec::with_capacity(num_samples);
    let mut res_v = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        // one disorder draw shared by all three evaluation points
        let base = SmallInstance::sample(prior, n, delta, &mut rng);
        let at = |d: f64| {
            let inst = SmallInstance {
                delta: d,
                ..base.clone()
            };
            exact_posterior(&inst, prior)
        };
        let hi = at(d_hi)?;
        let lo = at(d_lo)?;
        let mid = at(delta)?;
        let deriv =
            ((hi.free_energy + shift(d_hi)) - (lo.free_energy + shift(d_lo))) / (2.0 * fd_step);
        fd.push(deriv);
        qm.push(mid.mmse / 4.0);
        res_v.push(deriv - mid.mmse / 4.0);
    }
    let residual = Estimate::from_samples(&res_v);
    let bound = 2.0 * s4 / nf;
    let pass = residual.mean.abs() <= bound + 3.0 * residual.stderr;
    Ok(ImmseReport {
        derivative: Estimate::from_samples(&fd),
        quarter_mmse: Estimate::from_samples(&qm),
        residual,
        bound,
        pass,
    })
}

/// One row of the matrix-vs-vector MMSE inequality sweep.
#[derive(Debug, Clone)]
pub struct InequalityRow {
    pub n: usize,
    pub mmse: Estimate,
    pub vmse: Estimate,
    /// v^2 - (v - Vmmse)^2 + (E[S^4] - v^2)/n - Mmmse  (>= 0 up to MC error)
    pub slack: f64,
    pub slack_stderr: f64,
    /// overlap variance B_n = E[<q^2>] - E[<q>]^2 (>= 0)
    pub overlap_variance: f64,
    pub pass: bool,
}

/// Check Mmmse_n <= v^2 - (v - Vmmse_n)^2 + C/n with C = E[S^4] - v^2
/// across a grid of sizes, along with the nonnegativity of the overlap
/// variance that drives the proof.
pub fn mmse_inequality_check(
    prior: &DiscretePrior,
    sizes: &[usize],
    delta: f64,
    num_samples: usize,
    seed: u64,
) -> Result<Vec<InequalityRow>, OracleError> {
    let v = prior.second_moment();
    let c = prior.fourth_moment() - v * v;
    let mut rows = Vec::with_capacity(sizes.len());
    for (k, &n) in sizes.iter().enumerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ (k as u64));
        let mut mm = Vec::with_capacity(num_samples);
        let mut vm = Vec::with_capacity(num_samples);
        let mut slack_samples = Vec::with_capacity(num_samples);
        let mut q1 = Vec::with_capacity(num_samples);
        let mut q2 = Vec::with_capacity(num_samples);
        for _ in 0..num_samples {
            let inst = SmallInstance::sample(prior, n, delta, &mut rng);
            let res = exact_posterior(&inst, prior)?;
            mm.push(res.mmse);
            vm.push(res.vmse);
            q1.push(res.overlap);
            q2.push(res.overlap_sq);
            slack_samples.push(res.mmse);
        }
        let mmse = Estimate::from_samples(&mm);
        let vmse = Estimate::from_samples(&vm);
        let rhs = v * v - (v - vmse.mean) * (v - vmse.mean) + c / n as f64;
        let slack = rhs - mmse.mean;
        // first-order error propagation through the nonlinear rhs
        let slack_stderr =
            (mmse.stderr.powi(2) + (2.0 * (v - vmse.mean) * vmse.stderr).powi(2)).sqrt();
        let eq1 = Estimate::from_samples(&q1);
        let eq2 = Estimate::from_samples(&q2);
        let overlap_variance = eq2.mean - eq1.mean * eq1.mean;
        rows.push(InequalityRow {
            n,
            mmse,
            vmse,
            slack,
            slack_stderr,
            overlap_variance,
            pass: slack >= -3.0 * slack_stderr && overlap_variance >= -3.0 * eq2.stderr,
        });
    }
    Ok(rows)
}

/// Soft superadditivity probe: I_{2n}(two joined halves) vs 2 I_n; the
/// unnormalized mutual information n*i_n must not decrease when systems are
/// merged. Reported with its combined standard error, not hard-asserted.
#[derive(Debug, Clone)]
pub struct SuperadditivityReport {
    pub small: Estimate,
    pub large: Estimate,
    /// large*2n - 2*(small*n), in nats
    pub gain: f64,
    pub combined_stderr: f64,
}

pub fn superadditivity_check(
    prior: &DiscretePrior,
    n_half: usize,
    delta: f64,
    num_samples: usize,
    seed: u64,
) -> Result<SuperadditivityReport, OracleError> {
    let small = finite_n_mutual_information(prior, n_half, delta, num_samples, seed)?;
    let large = finite_n_mutual_information(prior, 2 * n_half, delta, num_samples, seed ^ 1)?;
    let nf = n_half as f64;
    let gain = large.mean * 2.0 * nf - 2.0 * small.mean * nf;
    let combined = ((large.stderr * 2.0 * nf).powi(2) + (2.0 * small.stderr * nf).powi(2)).sqrt();
    Ok(SuperadditivityReport {
        small,
        large,
        gain,
        combined_stderr: combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_one(prior: &DiscretePrior, n: usize, delta: f64, seed: u64) -> SmallInstance {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        SmallInstance::sample(prior, n, delta, &mut rng)
    }

    // Slow reference: explicit double loop with direct normalization.
    fn reference_posterior(inst: &SmallInstance, prior: &DiscretePrior) -> (Vec<f64>, Vec<f64>) {
        let n = inst.n;
        let atoms = prior.atoms();
        let k = atoms.len();
        let total = (k as u64).pow(n as u32);
        let nf = n as f64;
        let mut weights = Vec::with_capacity(total as usize);
        let mut configs = Vec::with_capacity(total as usize);
        for idx in 0..total {
            let mut rest = idx;
            let mut x = vec![0.0; n];
            let mut logp = 0.0;
            for pos in 0..n {
                let digit = (rest % k as u64) as usize;
                rest /= k as u64;
                x[pos] = atoms[digit].value;
                logp += atoms[digit].prob.ln();
            }
            let mut h = 0.0;
            for i in 0..n {
                for j in i..n {
                    h += x[i].powi(2) * x[j].powi(2) / (2.0 * nf * inst.delta)
                        - inst.signal[i] * inst.signal[j] * x[i] * x[j] / (nf * inst.delta)
                        - inst.z(i, j) * x[i] * x[j] / (nf * inst.delta).sqrt();
                }
            }
            weights.push(logp - h);
            configs.push(x);
        }
        let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = weights.iter().map(|w| (w - max).exp()).sum();
        let mut means = vec![0.0; n];
        let mut pairs = vec![0.0; n * n];
        for (w, x) in weights.iter().zip(&configs) {
            let p = (w - max).exp() / z;
            for i in 0..n {
                means[i] += p * x[i];
                for j in 0..n {
                    pairs[i * n + j] += p * x[i] * x[j];
                }
            }
        }
        (means, pairs)
    }

    #[test]
    fn matches_reference_implementation() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let inst = sample_one(&prior, 8, 0.5, 99);
        let res = exact_posterior(&inst, &prior).unwrap();
        let (means, pairs) = reference_posterior(&inst, &prior);
        for i in 0..8 {
            assert_relative_eq!(res.marginal_means[i], means[i], epsilon = 1e-12);
            for j in 0..8 {
                assert_relative_eq!(
                    res.pair_means[i * 8 + j],
                    pairs[i * 8 + j],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let inst = sample_one(&prior, 8, 0.5, 1);
        let too_big = SmallInstance {
            n: 30,
            ..inst
        };
        assert!(matches!(
            exact_posterior(&too_big, &prior),
            Err(OracleError::TooLarge { .. })
        ));
    }

    #[test]
    fn deep_noise_posterior_is_the_prior() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let inst = sample_one(&prior, 6, 1e8, 5);
        let res = exact_posterior(&inst, &prior).unwrap();
        for i in 0..6 {
            assert_relative_eq!(res.marginal_means[i], prior.mean(), epsilon = 1e-3);
        }
    }

    #[test]
    fn noiseless_posterior_recovers_pair_products() {
        let prior = DiscretePrior::bernoulli(0.5).unwrap();
        let inst = sample_one(&prior, 6, 1e-8, 12);
        let res = exact_posterior(&inst, &prior).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert_relative_eq!(
                        res.pair_means[i * 6 + j],
                        inst.signal[i] * inst.signal[j],
                        epsilon = 1e-6
                    );
                }
            }
        }
    }

    #[test]
    fn reproducible_bit_for_bit() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let a = exact_posterior(&sample_one(&prior, 7, 0.4, 31), &prior).unwrap();
        let b = exact_posterior(&sample_one(&prior, 7, 0.4, 31), &prior).unwrap();
        assert_eq!(a.log_z, b.log_z);
        assert_eq!(a.marginal_means, b.marginal_means);
    }

    #[test]
    fn nishimori_gaps_vanish_in_expectation() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let rep = nishimori_check(&prior, 6, 0.5, 400, 7).unwrap();
        assert!(
            rep.first_moment_gap.consistent_with_zero(3.0),
            "first-moment gap {} +- {}",
            rep.first_moment_gap.mean,
            rep.first_moment_gap.stderr
        );
        assert!(
            rep.pair_moment_gap.consistent_with_zero(3.0),
            "pair gap {} +- {}",
            rep.pair_moment_gap.mean,
            rep.pair_moment_gap.stderr
        );
        assert!(
            rep.second_moment_gap.consistent_with_zero(3.0),
            "second-moment gap {} +- {}",
            rep.second_moment_gap.mean,
            rep.second_moment_gap.stderr
        );
    }

    #[test]
    fn nishimori_exact_for_dirac() {
        let prior = DiscretePrior::dirac(1.0).unwrap();
        let rep = nishimori_check(&prior, 5, 0.5, 20, 3).unwrap();
        assert!(rep.first_moment_gap.mean.abs() < 1e-12);
        assert!(rep.pair_moment_gap.mean.abs() < 1e-12);
    }

    #[test]
    fn mutual_information_limits() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        // deep noise: no information
        let hi = finite_n_mutual_information(&prior, 6, 1e6, 60, 11).unwrap();
        assert!(
            hi.mean.abs() <= 3.0 * hi.stderr + 1e-4,
            "I/n = {} +- {} at huge delta",
            hi.mean,
            hi.stderr
        );
        // zero noise: entropy per variable
        let lo = finite_n_mutual_information(&prior, 6, 1e-4, 60, 13).unwrap();
        assert!(
            (lo.mean - prior.entropy()).abs() <= 3.0 * lo.stderr + 1e-2,
            "I/n = {} +- {} vs H(S) = {}",
            lo.mean,
            lo.stderr,
            prior.entropy()
        );
    }

    #[test]
    fn finite_n_mutual_information_approaches_asymptotic_value() {
        use crate::potential::ScalarModel;
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let mi = finite_n_mutual_information(&prior, 8, 0.5, 2000, 21).unwrap();
        let asym = ScalarModel::new(prior, 0.5)
            .report()
            .unwrap()
            .global_min_value;
        let gap = (mi.mean - asym).abs();
        assert!(
            gap <= 0.15,
            "I_8/8 = {} vs min i_RS = {asym}: gap {gap} nats",
            mi.mean
        );
    }

    #[test]
    fn superadditivity_soft_trend() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let rep = superadditivity_check(&prior, 4, 0.5, 400, 29).unwrap();
        assert!(
            rep.gain >= -3.0 * rep.combined_stderr,
            "superadditivity gain {} below -3 sigma ({})",
            rep.gain,
            rep.combined_stderr
        );
    }

    #[test]
    fn immse_relation_holds() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let rep = immse_check(&prior, 6, 0.5, 0.05, 300, 17).unwrap();
        assert!(
            rep.pass,
            "I-MMSE residual {} +- {} vs bound {}",
            rep.residual.mean, rep.residual.stderr, rep.bound
        );
        // derivative must be positive (MMSE is nonnegative)
        assert!(rep.derivative.mean > 0.0);
    }

    #[test]
    fn matrix_vector_inequality_across_sizes() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let rows = mmse_inequality_check(&prior, &[4, 6, 8], 0.5, 250, 23).unwrap();
        for row in rows {
            assert!(
                row.pass,
                "inequality failed at n={}: slack {} +- {}",
                row.n, row.slack, row.slack_stderr
            );
            assert!(row.overlap_variance >= -1e-10);
        }
    }

    #[test]
    fn dirac_inequality_trivially_tight() {
        let prior = DiscretePrior::dirac(1.0).unwrap();
        let rows = mmse_inequality_check(&prior, &[4], 0.5, 10, 1).unwrap();
        assert!(rows[0].mmse.mean.abs() < 1e-12);
        assert!(rows[0].vmse.mean.abs() < 1e-12);
    }
}
