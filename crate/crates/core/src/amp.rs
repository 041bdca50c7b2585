//! AMP on sampled rank-one instances, plain and spatially coupled.
//!
//! The iteration uses the field normalization h = W shat / (sqrt(n) Delta),
//! under which the stationary field statistics are s*snr + sqrt(snr)*zeta
//! with snr = |shat|^2/(n Delta), matching the denoiser exponent. The
//! Onsager coefficient is b = sum_j eta'(h_j)/(n Delta), with eta' the
//! field-derivative of the denoiser, i.e. the posterior variance.
//!
//! Iterates are numbered so that t = 1 is the initialization
//! shat = mean + small perturbation; with that convention the per-iteration
//! vector MSE tracks the state-evolution value E^(t) index for index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::prior::DiscretePrior;
use crate::spatial_coupling::{pinned_blocks, CouplingMatrix};

const PERTURB_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const PERTURB_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AmpError {
    #[error("AMP diverged at iteration {t}: vmse {vmse} exceeds 10 v")]
    Diverged { t: usize, vmse: f64 },
    #[error("instance requires n >= 2, got {n}")]
    TooSmall { n: usize },
}

/// A sampled spiked-Wigner instance: W = s s^T / sqrt(n) + sqrt(Delta) Z
/// with Z symmetric, upper triangle (diagonal included) i.i.d. N(0,1).
#[derive(Debug, Clone)]
pub struct Instance {
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    pub signal: Vec<f64>,
    /// Row-major dense n x n symmetric observation.
    pub w: Vec<f64>,
}

/// Draw an instance. The RNG stream is ChaCha12 seeded from `seed`; the
/// signal is drawn first, then the upper-triangular noise row by row, so a
/// fixed seed reproduces the instance bit for bit.
pub fn sample_instance(
    prior: &DiscretePrior,
    n: usize,
    delta: f64,
    seed: u64,
) -> Result<Instance, AmpError> {
    if n < 2 {
        return Err(AmpError::TooSmall { n });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let signal: Vec<f64> = (0..n)
        .map(|_| prior.sample_from_uniform(rng.random::<f64>()))
        .collect();
    let sqrt_n = (n as f64).sqrt();
    let sqrt_delta = delta.sqrt();
    let mut w = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i..n {
            let z: f64 = rng.sample(StandardNormal);
            let val = signal[i] * signal[j] / sqrt_n + sqrt_delta * z;
            w[i * n + j] = val;
            w[j * n + i] = val;
        }
    }
    Ok(Instance {
        n,
        delta,
        seed,
        signal,
        w,
    })
}

/// Where the per-iteration effective snr comes from.
#[derive(Debug, Clone)]
pub enum SnrSource {
    /// Nishimori-consistent estimate |shat|^2 / (n Delta); works on real data.
    Empirical,
    /// Offline state-evolution values, indexed like the AMP iterates
    /// (values[t] = E^(t), values[0] = v).
    SeDriven(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct AmpOptions {
    pub t_max: usize,
    pub snr_source: SnrSource,
}

impl Default for AmpOptions {
    fn default() -> Self {
        Self {
            t_max: 50,
            snr_source: SnrSource::Empirical,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AmpIterate {
    pub t: usize,
    /// |shat - s|^2 / n
    pub vmse: f64,
    /// |shat shat^T - s s^T|_F^2 / n^2
    pub mmse: f64,
    /// effective snr used at this iterate (0 at t = 1)
    pub snr: f64,
}

#[derive(Debug, Clone)]
pub struct AmpTrace {
    pub iterates: Vec<AmpIterate>,
    pub estimate: Vec<f64>,
}

fn init_estimate(prior: &DiscretePrior, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ PERTURB_SALT);
    let m = prior.mean();
    let (lo, hi) = (prior.support_min(), prior.support_max());
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() - 0.5;
            (m + 2.0 * PERTURB_SCALE * u).clamp(lo, hi)
        })
        .collect()
}

fn vmse_of(est: &[f64], signal: &[f64]) -> f64 {
    let n = est.len() as f64;
    est.iter()
        .zip(signal)
        .map(|(a, s)| (a - s) * (a - s))
        .sum::<f64>()
        / n
}

fn mmse_of(est: &[f64], signal: &[f64]) -> f64 {
    let n = est.len() as f64;
    let ee: f64 = est.iter().map(|x| x * x).sum();
    let ss: f64 = signal.iter().map(|x| x * x).sum();
    let es: f64 = est.iter().zip(signal).map(|(a, b)| a * b).sum();
    (ee * ee + ss * ss - 2.0 * es * es) / (n * n)
}

/// Run AMP on an instance; iterates are recorded from t = 1 (the init state)
/// through t = t_max.
pub fn run_amp(
    instance: &Instance,
    prior: &DiscretePrior,
    opts: &AmpOptions,
) -> Result<AmpTrace, AmpError> {
    let n = instance.n;
    let nf = n as f64;
    let delta = instance.delta;
    let v = prior.second_moment();
    let inv_sqrt_n_delta = 1.0 / (nf.sqrt() * delta);

    let mut cur = init_estimate(prior, n, instance.seed);
    let mut prev: Vec<f64> = vec![0.0; n];
    let mut onsager = 0.0f64;
    let mut field = vec![0.0f64; n];

    let mut iterates = Vec::with_capacity(opts.t_max);
    iterates.push(AmpIterate {
        t: 1,
        vmse: vmse_of(&cur, &instance.signal),
        mmse: mmse_of(&cur, &instance.signal),
        snr: 0.0,
    });

    for t in 2..=opts.t_max {
        let snr = match &opts.snr_source {
            SnrSource::Empirical => {
                cur.iter().map(|x| x * x).sum::<f64>() / (nf * delta)
            }
            SnrSource::SeDriven(se) => {
                let e_prev = se.get(t - 1).copied().unwrap_or_else(|| {
                    se.last().copied().unwrap_or(v)
                });
                ((v - e_prev) / delta).max(0.0)
            }
        };
        // field h = W cur / (sqrt(n) Delta) - onsager * prev
        for i in 0..n {
            let row = &instance.w[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (wij, sj) in row.iter().zip(&cur) {
                acc += wij * sj;
            }
            field[i] = acc * inv_sqrt_n_delta - onsager * prev[i];
        }
        let mut pv_sum = 0.0;
        for i in 0..n {
            let (mean, var) = prior.posterior_mean_var(field[i], snr);
            prev[i] = mean; // reuse prev as scratch for the new estimate
            pv_sum += var;
        }
        std::mem::swap(&mut cur, &mut prev); // cur = new, prev = old
        onsager = pv_sum / (nf * delta);

        let vmse = vmse_of(&cur, &instance.signal);
        iterates.push(AmpIterate {
            t,
            vmse,
            mmse: mmse_of(&cur, &instance.signal),
            snr,
        });
        if vmse > 10.0 * v {
            return Err(AmpError::Diverged { t, vmse });
        }
    }
    Ok(AmpTrace {
        iterates,
        estimate: cur,
    })
}

/// Spatially coupled instance: per-block signals and the in-window
/// observation blocks w_{i_mu j_nu} = s_{i_mu} s_{j_nu} sqrt(Lambda/n) + z sqrt(Delta).
#[derive(Debug)]
pub struct CoupledInstance {
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    pub l: usize,
    pub w_window: usize,
    pub kernel: Vec<f64>,
    /// signals[mu] has length n
    pub signals: Vec<Vec<f64>>,
    /// blocks[mu * (w+1) + d] holds the n x n block for the pair
    /// (mu, (mu + d) mod (L+1)), row index in block mu.
    blocks: Vec<Vec<f64>>,
}

impl CoupledInstance {
    fn block(&self, mu: usize, d: usize) -> &[f64] {
        &self.blocks[mu * (self.w_window + 1) + d]
    }
}

pub fn sample_coupled_instance(
    prior: &DiscretePrior,
    n: usize,
    coupling: &CouplingMatrix,
    delta: f64,
    seed: u64,
) -> Result<CoupledInstance, AmpError> {
    if n < 2 {
        return Err(AmpError::TooSmall { n });
    }
    let l = coupling.l;
    let w = coupling.w;
    let n_blocks = l + 1;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let signals: Vec<Vec<f64>> = (0..n_blocks)
        .map(|_| {
            (0..n)
                .map(|_| prior.sample_from_uniform(rng.random::<f64>()))
                .collect()
        })
        .collect();
    let sqrt_delta = delta.sqrt();
    let mut blocks = Vec::with_capacity(n_blocks * (w + 1));
    for mu in 0..n_blocks {
        for d in 0..=w {
            let nu = (mu + d) % n_blocks;
            let lam = coupling.kernel()[d];
            let scale = (lam / n as f64).sqrt();
            let mut b = vec![0.0f64; n * n];
            if d == 0 {
                for i in 0..n {
                    for j in i..n {
                        let z: f64 = rng.sample(StandardNormal);
                        let val = signals[mu][i] * signals[mu][j] * scale + sqrt_delta * z;
                        b[i * n + j] = val;
                        b[j * n + i] = val;
                    }
                }
            } else {
                for i in 0..n {
                    for j in 0..n {
                        let z: f64 = rng.sample(StandardNormal);
                        b[i * n + j] = signals[mu][i] * signals[nu][j] * scale + sqrt_delta * z;
                    }
                }
            }
            blocks.push(b);
        }
    }
    Ok(CoupledInstance {
        n,
        delta,
        seed,
        l,
        w_window: w,
        kernel: coupling.kernel().to_vec(),
        signals,
        blocks,
    })
}

#[derive(Debug, Clone)]
pub struct CoupledAmpIterate {
    pub t: usize,
    /// per-block |shat_mu - s_mu|^2 / n
    pub vmse: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CoupledAmpTrace {
    pub iterates: Vec<CoupledAmpIterate>,
    pub pinned: Vec<bool>,
}

/// Coupled AMP with the seed blocks clamped to the true signal. Field and
/// Onsager sums are weighted blockwise by sqrt(Lambda_{mu nu}/n) and
/// Lambda_{mu nu} respectively.
pub fn run_coupled_amp(
    instance: &CoupledInstance,
    prior: &DiscretePrior,
    opts: &AmpOptions,
) -> Result<CoupledAmpTrace, AmpError> {
    let n = instance.n;
    let nf = n as f64;
    let delta = instance.delta;
    let v = prior.second_moment();
    let n_blocks = instance.l + 1;
    let w = instance.w_window;
    let pinned = pinned_blocks(instance.l, w);

    // estimates per block; pinned blocks carry the truth throughout
    let mut cur: Vec<Vec<f64>> = (0..n_blocks)
        .map(|mu| {
            if pinned[mu] {
                instance.signals[mu].clone()
            } else {
                init_estimate(prior, n, instance.seed ^ (mu as u64))
            }
        })
        .collect();
    let mut prev: Vec<Vec<f64>> = vec![vec![0.0; n]; n_blocks];
    let mut onsager = vec![0.0f64; n_blocks];
    let mut fields: Vec<Vec<f64>> = vec![vec![0.0; n]; n_blocks];

    let record = |est: &Vec<Vec<f64>>, t: usize| CoupledAmpIterate {
        t,
        vmse: (0..n_blocks)
            .map(|mu| vmse_of(&est[mu], &instance.signals[mu]))
            .collect(),
    };
    let mut iterates = vec![record(&cur, 1)];

    for t in 2..=opts.t_max {
        // per-block empirical effective snr
        let block_power: Vec<f64> = cur
            .iter()
            .map(|e| e.iter().map(|x| x * x).sum::<f64>() / nf)
            .collect();
        let snr: Vec<f64> = (0..n_blocks)
            .map(|mu| {
                let mut mix = instance.kernel[0] * block_power[mu];
                for d in 1..=w {
                    let up = (mu + d) % n_blocks;
                    let dn = (mu + n_blocks - d) % n_blocks;
                    mix += instance.kernel[d] * (block_power[up] + block_power[dn]);
                }
                mix / delta
            })
            .collect();

        // fields: h_mu = (1/Delta) sum_nu sqrt(Lambda/n) W_(mu nu) cur_nu
        //         - onsager_mu * prev_mu
        for mu in 0..n_blocks {
            if pinned[mu] {
                continue;
            }
            let f = &mut fields[mu];
            f.iter_mut().for_each(|x| *x = 0.0);
            for d in 0..=w {
                let lam = instance.kernel[d];
                let scale = (lam / nf).sqrt() / delta;
                // neighbor nu = mu + d (block stored at (mu, d))
                let nu_up = (mu + d) % n_blocks;
                let b = instance.block(mu, d);
                let est = &cur[nu_up];
                for i in 0..n {
                    let row = &b[i * n..(i + 1) * n];
                    let mut acc = 0.0;
                    for (wij, sj) in row.iter().zip(est) {
                        acc += wij * sj;
                    }
                    f[i] += acc * scale;
                }
                if d > 0 {
                    // neighbor nu = mu - d (block stored at (nu_dn, d),
                    // transposed access)
                    let nu_dn = (mu + n_blocks - d) % n_blocks;
                    let b = instance.block(nu_dn, d);
                    let est = &cur[nu_dn];
                    for j in 0..n {
                        let sj = est[j];
                        if sj != 0.0 {
                            let row = &b[j * n..(j + 1) * n];
                            for i in 0..n {
                                f[i] += row[i] * sj * scale;
                            }
                        }
                    }
                }
            }
            for i in 0..n {
                f[i] -= onsager[mu] * prev[mu][i];
            }
        }

        // denoise and collect per-block posterior-variance sums
        let mut pv_sum = vec![0.0f64; n_blocks];
        for mu in 0..n_blocks {
            if pinned[mu] {
                prev[mu].copy_from_slice(&instance.signals[mu]);
                continue;
            }
            let mut s = 0.0;
            for i in 0..n {
                let (mean, var) = prior.posterior_mean_var(fields[mu][i], snr[mu]);
                prev[mu][i] = mean;
                s += var;
            }
            pv_sum[mu] = s;
        }
        std::mem::swap(&mut cur, &mut prev);
        for mu in 0..n_blocks {
            let mut b = instance.kernel[0] * pv_sum[mu];
            for d in 1..=w {
                let up = (mu + d) % n_blocks;
                let dn = (mu + n_blocks - d) % n_blocks;
                b += instance.kernel[d] * (pv_sum[up] + pv_sum[dn]);
            }
            onsager[mu] = b / (nf * delta);
        }

        let it = record(&cur, t);
        for (mu, &vm) in it.vmse.iter().enumerate() {
            if !pinned[mu] && vm > 10.0 * v {
                return Err(AmpError::Diverged { t, vmse: vm });
            }
        }
        iterates.push(it);
    }
    Ok(CoupledAmpTrace { iterates, pinned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::ScalarModel;
    use crate::spatial_coupling::triangle_coupling;
    use crate::state_evolution::{run_se, SeOptions};
    use approx::assert_relative_eq;

    #[test]
    fn sampling_is_deterministic_and_symmetric() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let a = sample_instance(&prior, 50, 0.5, 42).unwrap();
        let b = sample_instance(&prior, 50, 0.5, 42).unwrap();
        assert_eq!(a.signal, b.signal);
        assert_eq!(a.w, b.w);
        let c = sample_instance(&prior, 50, 0.5, 43).unwrap();
        assert_ne!(a.w, c.w);
        for i in 0..50 {
            for j in 0..50 {
                assert_eq!(a.w[i * 50 + j], a.w[j * 50 + i]);
            }
        }
    }

    #[test]
    fn zero_noise_instance_is_exact_outer_product() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let inst = sample_instance(&prior, 20, 0.0, 7).unwrap();
        let sqrt_n = 20f64.sqrt();
        for i in 0..20 {
            for j in 0..20 {
                assert_relative_eq!(
                    inst.w[i * 20 + j],
                    inst.signal[i] * inst.signal[j] / sqrt_n,
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn empirical_signal_moments_match_prior() {
        let prior = DiscretePrior::bernoulli(0.02).unwrap();
        let n = 10_000;
        let inst = sample_instance(&prior, n, 0.001, 1).unwrap();
        let mean = inst.signal.iter().sum::<f64>() / n as f64;
        let bound = 5.0 * (prior.variance() / n as f64).sqrt();
        assert!(
            (mean - prior.mean()).abs() <= bound,
            "sample mean {mean} outside CLT bound {bound}"
        );
    }

    #[test]
    fn near_noiseless_recovery() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let n = 500;
        let inst = sample_instance(&prior, n, 1e-5, 3).unwrap();
        let trace = run_amp(&inst, &prior, &AmpOptions::default()).unwrap();
        let last = trace.iterates.last().unwrap();
        assert!(
            last.vmse <= 1e-3 * prior.second_moment(),
            "vmse {} too large at delta -> 0",
            last.vmse
        );
    }

    #[test]
    fn estimates_stay_in_support_hull() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let inst = sample_instance(&prior, 300, 0.2, 9).unwrap();
        let trace = run_amp(
            &inst,
            &prior,
            &AmpOptions {
                t_max: 15,
                ..Default::default()
            },
        )
        .unwrap();
        for &x in &trace.estimate {
            assert!(x >= prior.support_min() - 1e-12);
            assert!(x <= prior.support_max() + 1e-12);
        }
    }

    #[test]
    fn amp_tracks_state_evolution_moderately() {
        // Small-n smoke version of the tracking criterion.
        let prior = DiscretePrior::bernoulli(0.02).unwrap();
        let delta = 0.0008;
        let n = 2000;
        let n_seeds = 4;
        let t_max = 12;
        let model = ScalarModel::new(prior.clone(), delta);
        let se = run_se(
            &model,
            model.v(),
            &SeOptions {
                t_max,
                tol: 0.0,
                record: true,
            },
        );
        let mut mean_vmse = vec![0.0f64; t_max + 1];
        for seed in 0..n_seeds {
            let inst = sample_instance(&prior, n, delta, seed).unwrap();
            let trace = run_amp(
                &inst,
                &prior,
                &AmpOptions {
                    t_max,
                    ..Default::default()
                },
            )
            .unwrap();
            for it in &trace.iterates {
                mean_vmse[it.t] += it.vmse / n_seeds as f64;
            }
        }
        let tol = 4.0 / (n as f64).sqrt();
        for t in 1..=t_max {
            let diff = (mean_vmse[t] - se.values[t]).abs();
            assert!(
                diff <= tol,
                "tracking broke at t={t}: amp {} vs se {} (tol {tol})",
                mean_vmse[t],
                se.values[t]
            );
        }
    }

    #[test]
    fn se_driven_snr_matches_empirical_closely() {
        let prior = DiscretePrior::bernoulli(0.02).unwrap();
        let delta = 0.0008;
        let n = 1500;
        let t_max = 10;
        let model = ScalarModel::new(prior.clone(), delta);
        let se = run_se(
            &model,
            model.v(),
            &SeOptions {
                t_max,
                tol: 0.0,
                record: true,
            },
        );
        let inst = sample_instance(&prior, n, delta, 11).unwrap();
        let emp = run_amp(
            &inst,
            &prior,
            &AmpOptions {
                t_max,
                snr_source: SnrSource::Empirical,
            },
        )
        .unwrap();
        let drv = run_amp(
            &inst,
            &prior,
            &AmpOptions {
                t_max,
                snr_source: SnrSource::SeDriven(se.values.clone()),
            },
        )
        .unwrap();
        for (a, b) in emp.iterates.iter().zip(&drv.iterates) {
            assert!(
                (a.vmse - b.vmse).abs() <= 0.2 * (a.vmse + 1e-6),
                "snr sources disagree at t={}: {} vs {}",
                a.t,
                a.vmse,
                b.vmse
            );
        }
    }

    #[test]
    fn coupled_sampling_deterministic() {
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let c = triangle_coupling(8, 2).unwrap();
        let a = sample_coupled_instance(&prior, 30, &c, 0.3, 5).unwrap();
        let b = sample_coupled_instance(&prior, 30, &c, 0.3, 5).unwrap();
        assert_eq!(a.signals, b.signals);
        assert_eq!(a.blocks.len(), b.blocks.len());
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn coupled_amp_with_zero_window_matches_uncoupled_runs() {
        // w = 0 decouples the chain: the pinned block is block L, all other
        // blocks behave like independent uncoupled instances.
        let prior = DiscretePrior::bernoulli(0.3).unwrap();
        let n = 400;
        let delta = 0.02;
        let c = triangle_coupling(4, 0).unwrap();
        let cinst = sample_coupled_instance(&prior, n, &c, delta, 17).unwrap();
        let trace = run_coupled_amp(
            &cinst,
            &prior,
            &AmpOptions {
                t_max: 10,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(trace.pinned[4]);
        let last = trace.iterates.last().unwrap();
        for mu in 0..4 {
            // each unpinned block converges like a plain instance would
            assert!(
                last.vmse[mu] < 0.1 * prior.second_moment(),
                "block {mu} failed to converge: {}",
                last.vmse[mu]
            );
        }
        assert_eq!(last.vmse[4], 0.0, "pinned block stays exact");
    }
}
