//! Spatially coupled system: banded doubly stochastic coupling matrices on a
//! ring of L+1 blocks, coupled state evolution with pinned seed blocks, the
//! coupled potential, and the shift-difference diagnostic behind threshold
//! saturation.
//!
//! The seed is the arc {0..w-1} union {L-w..L} (the ring form of
//! {-w-1..w-1} mod L+1); pinned blocks hold E_mu = 0 at every sweep. Updates
//! are synchronous (Jacobi), matching the definition of the coupled SE
//! operator.

use thiserror::Error;

use crate::potential::{PotentialError, ScalarModel, ThresholdError};
use crate::prior::DiscretePrior;
use crate::state_evolution::{self, SeOptions};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CouplingError {
    #[error("window w={w} must satisfy 2w <= L={l}")]
    BadWindow { l: usize, w: usize },
    #[error("effective snr negative at block {mu}: profile exceeds v")]
    NegativeSnr { mu: usize },
}

/// Banded circulant doubly stochastic coupling matrix, stored as its kernel
/// row: entry(mu, nu) = kernel[ring_distance(mu, nu)] for distances <= w.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    /// Chain parameter L; the matrix is (L+1) x (L+1).
    pub l: usize,
    pub w: usize,
    kernel: Vec<f64>,
}

impl CouplingMatrix {
    /// Build from a half-kernel [g(0), g(1), ..., g(w)]; row sums must be 1.
    pub fn from_kernel(l: usize, w: usize, kernel: Vec<f64>) -> Result<Self, CouplingError> {
        if 2 * w > l || kernel.len() != w + 1 {
            return Err(CouplingError::BadWindow { l, w });
        }
        Ok(Self { l, w, kernel })
    }

    pub fn size(&self) -> usize {
        self.l + 1
    }

    fn ring_distance(&self, mu: usize, nu: usize) -> usize {
        let d = mu.abs_diff(nu);
        d.min(self.size() - d)
    }

    pub fn entry(&self, mu: usize, nu: usize) -> f64 {
        let d = self.ring_distance(mu, nu);
        if d <= self.w {
            self.kernel[d]
        } else {
            0.0
        }
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Largest entry.
    pub fn sup_entry(&self) -> f64 {
        self.kernel.iter().copied().fold(0.0, f64::max)
    }

    pub fn row_sum(&self, mu: usize) -> f64 {
        (0..self.size()).map(|nu| self.entry(mu, nu)).sum()
    }

    /// Discrete Fourier transform of the kernel row (real by symmetry).
    pub fn kernel_dft(&self) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|j| {
                (0..n)
                    .map(|k| {
                        let angle = 2.0 * std::f64::consts::PI * (j * k % n) as f64 / n as f64;
                        self.entry(0, k) * angle.cos()
                    })
                    .sum()
            })
            .collect()
    }
}

/// The triangle kernel of base 2w+1 and height 1/(w+1):
/// Lambda_{mu nu} = (1 - |mu-nu|/(w+1)) / (w+1) on the window. Being the
/// autocorrelation of a rectangular window it has a nonnegative Fourier
/// transform.
pub fn triangle_coupling(l: usize, w: usize) -> Result<CouplingMatrix, CouplingError> {
    let kernel: Vec<f64> = (0..=w)
        .map(|d| (1.0 - d as f64 / (w + 1) as f64) / (w + 1) as f64)
        .collect();
    CouplingMatrix::from_kernel(l, w, kernel)
}

/// Seed blocks pinned to perfect knowledge: {0..w-1} union {L-w..L}.
pub fn pinned_blocks(l: usize, w: usize) -> Vec<bool> {
    (0..=l).map(|mu| mu < w || mu >= l - w).collect()
}

/// Seed and topology variant for a coupled run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PinMode {
    /// Ring with the seed arc {0..w-1} union {L-w..L} (the standard model).
    RingSeed,
    /// Open chain (window values clamp at the ends) with blocks {0..w}
    /// pinned at the left end only; a single wave travels rightward, which
    /// is the convenient geometry for wave-speed studies.
    OpenLeftSeed,
    /// No pinning at all, on the ring (homogeneous reduction checks).
    Unpinned,
}

impl PinMode {
    pub fn topology(self) -> ChainTopology {
        match self {
            PinMode::OpenLeftSeed => ChainTopology::OpenClamped,
            _ => ChainTopology::Ring,
        }
    }

    fn mask(self, l: usize, w: usize) -> Vec<bool> {
        match self {
            PinMode::RingSeed => pinned_blocks(l, w),
            PinMode::OpenLeftSeed => (0..=l).map(|mu| mu <= w).collect(),
            PinMode::Unpinned => vec![false; l + 1],
        }
    }
}

/// Per-block MSE profile with its pinned mask.
#[derive(Debug, Clone)]
pub struct CoupledProfile {
    pub values: Vec<f64>,
    pub pinned: Vec<bool>,
}

impl CoupledProfile {
    /// Initial condition: v outside the seed, 0 on it.
    pub fn initial(model: &ScalarModel, coupling: &CouplingMatrix, pin_mode: PinMode) -> Self {
        let pinned = pin_mode.mask(coupling.l, coupling.w);
        let v = model.v();
        let values = pinned.iter().map(|&p| if p { 0.0 } else { v }).collect();
        Self { values, pinned }
    }

    pub fn max_unpinned(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.pinned)
            .filter(|(_, &p)| !p)
            .map(|(&e, _)| e)
            .fold(0.0, f64::max)
    }
}

/// Effective snr of block mu: Sigma_mu^-2 = (v - sum_nu Lambda_{mu nu} E_nu)/Delta.
pub fn sigma_mu_snr(
    values: &[f64],
    coupling: &CouplingMatrix,
    model: &ScalarModel,
    mu: usize,
    topology: ChainTopology,
) -> Result<f64, CouplingError> {
    debug_assert_eq!(values.len(), coupling.size());
    let w = coupling.w as isize;
    let mut mixed = 0.0;
    for d in -w..=w {
        mixed += coupling.kernel[d.unsigned_abs()] * value_at(values, mu as isize + d, topology);
    }
    let snr = (model.v() - mixed) / model.delta;
    if snr < -1e-9 {
        return Err(CouplingError::NegativeSnr { mu });
    }
    Ok(snr.max(0.0))
}

/// One synchronous sweep of the coupled SE operator; pinned blocks stay 0.
pub fn t_c(
    values: &[f64],
    pinned: &[bool],
    coupling: &CouplingMatrix,
    model: &ScalarModel,
    topology: ChainTopology,
) -> Result<Vec<f64>, CouplingError> {
    let mut out = vec![0.0; values.len()];
    for mu in 0..values.len() {
        if pinned[mu] {
            continue;
        }
        let snr = sigma_mu_snr(values, coupling, model, mu, topology)?;
        out[mu] = model
            .prior
            .mmse(snr)
            .expect("scalar mmse quadrature converges for bounded discrete priors");
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct CoupledSeOptions {
    pub t_max: usize,
    /// Sup-norm convergence tolerance between sweeps.
    pub tol: f64,
    pub pin_mode: PinMode,
    pub record_history: bool,
    /// Early exit once every unpinned block is at or below this value.
    pub stop_below: Option<f64>,
}

impl Default for CoupledSeOptions {
    fn default() -> Self {
        Self {
            t_max: 100_000,
            tol: 1e-10,
            pin_mode: PinMode::RingSeed,
            record_history: false,
            stop_below: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoupledTrace {
    pub profile: CoupledProfile,
    /// Snapshots E^(0), E^(1), ... when recording was requested.
    pub history: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub sup_gap: f64,
}

/// Run coupled SE to convergence in sup norm.
pub fn run_coupled_se(
    model: &ScalarModel,
    coupling: &CouplingMatrix,
    opts: &CoupledSeOptions,
) -> Result<CoupledTrace, CouplingError> {
    let topology = opts.pin_mode.topology();
    let mut profile = CoupledProfile::initial(model, coupling, opts.pin_mode);
    let mut history = Vec::new();
    if opts.record_history {
        history.push(profile.values.clone());
    }
    let mut gap = f64::INFINITY;
    for t in 1..=opts.t_max {
        let next = t_c(&profile.values, &profile.pinned, coupling, model, topology)?;
        gap = profile
            .values
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        profile.values = next;
        if opts.record_history {
            history.push(profile.values.clone());
        }
        let reached_target = opts
            .stop_below
            .map(|th| profile.max_unpinned() <= th)
            .unwrap_or(false);
        if gap < opts.tol || reached_target {
            return Ok(CoupledTrace {
                profile,
                history,
                iterations: t,
                converged: true,
                sup_gap: gap,
            });
        }
    }
    Ok(CoupledTrace {
        profile,
        history,
        iterations: opts.t_max,
        converged: false,
        sup_gap: gap,
    })
}

/// Coupled algorithmic threshold on a finite chain: the largest Delta at
/// which the coupled-SE limit satisfies max_mu E_mu <= E_good(Delta) + 1e-6.
/// Bisection to 1e-4 relative on the stated bracket.
pub fn delta_amp_coupled(
    prior: &DiscretePrior,
    w: usize,
    l: usize,
    lo: f64,
    hi: f64,
) -> Result<f64, ThresholdError> {
    let coupling = triangle_coupling(l, w).expect("valid (L, w)");
    let succeeds = |delta: f64| -> bool {
        coupled_se_saturates(prior, &coupling, delta)
    };
    if !succeeds(lo) || succeeds(hi) {
        return Err(ThresholdError::NoBracket { lo, hi });
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > 1e-4 * hi {
        let mid = 0.5 * (lo + hi);
        if succeeds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Success indicator for threshold-saturation experiments: does the pinned
/// coupled SE drive every block down to the uncoupled floor?
pub fn coupled_se_saturates(
    prior: &DiscretePrior,
    coupling: &CouplingMatrix,
    delta: f64,
) -> bool {
    let model = ScalarModel::new(prior.clone(), delta);
    let floor = state_evolution::e_good(&model, &SeOptions::default()).fixed_point;
    let opts = CoupledSeOptions {
        stop_below: Some(floor + 1e-6),
        ..CoupledSeOptions::default()
    };
    match run_coupled_se(&model, coupling, &opts) {
        Ok(trace) => trace.profile.max_unpinned() <= floor + 1e-6,
        Err(_) => false,
    }
}

/// How boundary blocks see the profile when evaluating the open-chain
/// potential: indices beyond the ends are clamped to the end values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainTopology {
    Ring,
    OpenClamped,
}

fn value_at(values: &[f64], idx: isize, topology: ChainTopology) -> f64 {
    let n = values.len() as isize;
    match topology {
        ChainTopology::Ring => values[idx.rem_euclid(n) as usize],
        ChainTopology::OpenClamped => values[idx.clamp(0, n - 1) as usize],
    }
}

/// Coupled RS potential
/// F_c(E) = sum_mu [ (v-E_mu)/(4 Delta) sum_nu Lambda_{mu nu}(v-E_nu) - I(Sigma_mu) ].
pub fn coupled_potential(
    values: &[f64],
    coupling: &CouplingMatrix,
    model: &ScalarModel,
    topology: ChainTopology,
) -> Result<f64, PotentialError> {
    let n = values.len() as isize;
    let v = model.v();
    let w = coupling.w as isize;
    let mut total = 0.0;
    for mu in 0..n {
        let mut mixed = 0.0;
        for d in -w..=w {
            let lam = coupling.kernel[d.unsigned_abs()];
            mixed += lam * value_at(values, mu + d, topology);
        }
        let e_mu = values[mu as usize];
        let m = ((v - mixed) / model.delta).max(0.0);
        total += (v - e_mu) * (v - mixed) / (4.0 * model.delta) - model.log_partition(m)?;
    }
    Ok(total)
}

/// Open-chain shift: [S(E)]_0 = E_0, [S(E)]_mu = E_{mu-1}.
pub fn shift_profile(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    out.push(values[0]);
    out.extend_from_slice(&values[..values.len() - 1]);
    out
}

/// F_c(S(E)) - F_c(E) on the open chain.
pub fn shift_difference(
    values: &[f64],
    coupling: &CouplingMatrix,
    model: &ScalarModel,
) -> Result<f64, PotentialError> {
    let shifted = shift_profile(values);
    Ok(coupled_potential(&shifted, coupling, model, ChainTopology::OpenClamped)?
        - coupled_potential(values, coupling, model, ChainTopology::OpenClamped)?)
}

/// Telescoped boundary form of the same difference: for a profile flat at
/// both ends it collapses to f_u(E_0) - f_u(E_L).
pub fn boundary_shift_difference(
    values: &[f64],
    coupling: &CouplingMatrix,
    model: &ScalarModel,
) -> Result<f64, PotentialError> {
    let n = values.len() as isize;
    let v = model.v();
    let w = coupling.w as isize;
    let boundary_term = |mu: isize| -> Result<f64, PotentialError> {
        let mut mixed = 0.0;
        for d in -w..=w {
            let lam = coupling.kernel[d.unsigned_abs()];
            mixed += lam * value_at(values, mu + d, ChainTopology::OpenClamped);
        }
        let e_mu = value_at(values, mu, ChainTopology::OpenClamped);
        let m = ((v - mixed) / model.delta).max(0.0);
        Ok((v - e_mu) * (v - mixed) / (4.0 * model.delta) - model.log_partition(m)?)
    };
    // The interior telescopes away; only the two end blocks survive.
    Ok(boundary_term(-1)? - boundary_term(n - 1)?)
}

/// Saturated profile construction: flatten to `floor` up to the last index
/// mu* where the profile is still at or below it, copy the rising front, and
/// hold the maximum from the argmax onward. The result is nondecreasing and
/// dominates the input on the rising side.
pub fn saturated_profile(values: &[f64], floor: f64) -> Vec<f64> {
    let n = values.len();
    let mu_max = (0..n)
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    let e_max = values[mu_max];
    let mut mu_star = 0;
    while mu_star + 1 < n && values[mu_star + 1] <= floor {
        mu_star += 1;
    }
    let mut out = vec![0.0; n];
    for mu in 0..n {
        out[mu] = if mu <= mu_star {
            floor
        } else if mu <= mu_max {
            values[mu].max(floor)
        } else {
            e_max
        };
    }
    // enforce monotonicity of the front
    for mu in 1..n {
        if out[mu] < out[mu - 1] {
            out[mu] = out[mu - 1];
        }
    }
    out
}
