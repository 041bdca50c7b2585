//! The replica-symmetric potential i_RS(E; Delta), its stationary structure,
//! and the two noise thresholds derived from it.
//!
//! i_RS(E) = ((v-E)^2 + v^2)/(4 Delta) - E_{S,Z}[ln sum_x P0(x)
//! exp(-x^2/(2 Sigma^2) + x (S/Sigma^2 + Z/Sigma))] with Sigma^-2 = (v-E)/Delta.
//! Its global minimum is the asymptotic mutual information per variable and
//! its minimizer the asymptotic vector MMSE. Stationary points coincide with
//! the fixed points of state evolution: dE i_RS = (E - mmse((v-E)/Delta))/(2 Delta),
//! so the derivative vanishes exactly where E = T_u(E).

use thiserror::Error;

use crate::prior::DiscretePrior;
use crate::quadrature::{expect_normal, QuadratureError, DEFAULT_QUAD_TOL};
use crate::state_evolution::{self, SeOptions};

/// Grid resolution for the stationary-point sign-change scan.
pub const DEFAULT_SCAN_GRID: usize = 512;

/// Bisection refinement tolerance for stationary points (absolute, in E).
pub const ROOT_TOL: f64 = 1e-12;

/// Two minima whose potential values differ by less than this are treated as
/// degenerate (first-order transition point).
pub const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PotentialError {
    #[error("E = {e} outside the domain [0, {v}]")]
    DomainError { e: f64, v: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ThresholdError {
    #[error("indicator does not change over [{lo}, {hi}]; no bracket")]
    NoBracket { lo: f64, hi: f64 },
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Prior plus noise level: the scalar single-letter model.
#[derive(Debug, Clone)]
pub struct ScalarModel {
    pub prior: DiscretePrior,
    pub delta: f64,
}

impl ScalarModel {
    pub fn new(prior: DiscretePrior, delta: f64) -> Self {
        assert!(delta > 0.0 && delta.is_finite(), "delta must be positive");
        Self { prior, delta }
    }

    pub fn v(&self) -> f64 {
        self.prior.second_moment()
    }

    fn check_domain(&self, e: f64) -> Result<(), PotentialError> {
        if !(0.0..=self.v() + 1e-15).contains(&e) || !e.is_finite() {
            return Err(PotentialError::DomainError { e, v: self.v() });
        }
        Ok(())
    }

    /// The RS potential i_RS(E; Delta) in nats.
    pub fn i_rs(&self, e: f64) -> Result<f64, PotentialError> {
        self.i_rs_tol(e, DEFAULT_QUAD_TOL)
    }

    /// i_RS with an explicit quadrature agreement tolerance (tight finite
    /// differences need better-than-default agreement).
    pub fn i_rs_tol(&self, e: f64, tol: f64) -> Result<f64, PotentialError> {
        self.check_domain(e)?;
        let v = self.v();
        let quad = (v - e) * (v - e) + v * v;
        // e may sit one ulp above v after caller stencil arithmetic
        let m = ((v - e) / self.delta).max(0.0);
        Ok(quad / (4.0 * self.delta) - self.log_partition_tol(m, tol)?)
    }

    /// E_{S,Z} ln sum_x P0(x) exp(-x^2 m/2 + x (S m + Z sqrt(m))) for m >= 0.
    pub(crate) fn log_partition(&self, m: f64) -> Result<f64, PotentialError> {
        self.log_partition_tol(m, DEFAULT_QUAD_TOL)
    }

    fn log_partition_tol(&self, m: f64, tol: f64) -> Result<f64, PotentialError> {
        let sqrt_m = m.sqrt();
        let atoms = self.prior.atoms();
        let mut total = 0.0;
        for s in atoms {
            let val = expect_normal(
                |z| {
                    let field = s.value * m + sqrt_m * z;
                    let mut max_logit = f64::NEG_INFINITY;
                    let mut logits = [0.0f64; 8];
                    let mut heap;
                    let slice: &mut [f64] = if atoms.len() <= 8 {
                        &mut logits[..atoms.len()]
                    } else {
                        heap = vec![0.0; atoms.len()];
                        &mut heap
                    };
                    for (l, a) in slice.iter_mut().zip(atoms) {
                        *l = a.prob.ln() - 0.5 * a.value * a.value * m + a.value * field;
                        if *l > max_logit {
                            max_logit = *l;
                        }
                    }
                    let sum: f64 = slice.iter().map(|l| (l - max_logit).exp()).sum();
                    max_logit + sum.ln()
                },
                tol,
            )?;
            total += s.prob * val;
        }
        Ok(total)
    }

    /// dE i_RS = (E - T_u(E)) / (2 Delta): vanishes exactly at SE fixed points.
    pub fn i_rs_derivative(&self, e: f64) -> Result<f64, PotentialError> {
        self.check_domain(e)?;
        let t = self.prior.mmse((self.v() - e) / self.delta)?;
        Ok((e - t) / (2.0 * self.delta))
    }

    /// Free-energy form of the potential: f_u(E) = i_RS(E) - v^2/(4 Delta).
    pub fn f_u(&self, e: f64) -> Result<f64, PotentialError> {
        Ok(self.i_rs(e)? - self.v() * self.v() / (4.0 * self.delta))
    }

    /// All solutions of E = mmse((v-E)/Delta) in [0, v], sorted ascending.
    pub fn stationary_points(&self) -> Result<Vec<StationaryPoint>, PotentialError> {
        self.stationary_points_grid(DEFAULT_SCAN_GRID)
    }

    pub fn stationary_points_grid(
        &self,
        grid: usize,
    ) -> Result<Vec<StationaryPoint>, PotentialError> {
        let v = self.v();
        let g = |e: f64| -> Result<f64, PotentialError> {
            Ok(e - self.prior.mmse((v - e) / self.delta)?)
        };
        let mut roots: Vec<f64> = Vec::new();
        let mut prev_e = 0.0;
        let mut prev_g = g(0.0)?;
        if prev_g == 0.0 {
            roots.push(0.0);
        }
        for i in 1..=grid {
            let e = v * i as f64 / grid as f64;
            let cur = g(e)?;
            if cur == 0.0 {
                roots.push(e);
            } else if prev_g * cur < 0.0 {
                let (mut lo, mut hi, mut glo) = (prev_e, e, prev_g);
                while hi - lo > ROOT_TOL {
                    let mid = 0.5 * (lo + hi);
                    let gm = g(mid)?;
                    if glo * gm <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                        glo = gm;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            prev_e = e;
            prev_g = cur;
        }
        roots.dedup_by(|a, b| (*a - *b).abs() < 10.0 * ROOT_TOL);

        let mut out = Vec::with_capacity(roots.len());
        let h = (v / grid as f64) * 0.5;
        for e in roots {
            let value = self.i_rs(e)?;
            let lo = (e - h).max(0.0);
            let hi = (e + h).min(v);
            let second = self.i_rs(lo)? + self.i_rs(hi)? - 2.0 * value;
            let kind = if second >= 0.0 {
                StationaryKind::Minimum
            } else {
                StationaryKind::Maximum
            };
            out.push(StationaryPoint { e, value, kind });
        }
        Ok(out)
    }

    /// Full stationary analysis: global minimum, MMSE formulas, gap.
    pub fn report(&self) -> Result<PotentialReport, PotentialError> {
        let v = self.v();
        let points = self.stationary_points()?;
        let minima: Vec<&StationaryPoint> = points
            .iter()
            .filter(|p| p.kind == StationaryKind::Minimum)
            .collect();
        // Smallest-E minimizer wins ties: deterministic output at the
        // first-order transition, flagged below.
        let global = minima
            .iter()
            .copied()
            .min_by(|a, b| {
                (a.value, a.e)
                    .partial_cmp(&(b.value, b.e))
                    .expect("finite potential values")
            })
            .or(points.first())
            .cloned();
        let (global_min_e, global_min_value) = match global {
            Some(p) => (p.e, p.value),
            // A prior with no interior stationary point in scan resolution:
            // fall back to the better endpoint.
            None => {
                let at0 = self.i_rs(0.0)?;
                let atv = self.i_rs(v)?;
                if at0 <= atv {
                    (0.0, at0)
                } else {
                    (v, atv)
                }
            }
        };
        // Degenerate minima within TIE_TOL mark the transition itself; the
        // wider scale converts a 1e-6 window in Delta into potential units
        // through d(f_bad - f_good)/dDelta^-1 = (mmmse_bad - mmmse_good)/4.
        let at_transition = minima.iter().any(|p| {
            if p.e == global_min_e {
                return false;
            }
            let dgap_ddelta = ((v - global_min_e).powi(2) - (v - p.e).powi(2)).abs()
                / (4.0 * self.delta * self.delta);
            (p.value - global_min_value).abs() < TIE_TOL.max(1e-6 * dgap_ddelta)
        });
        let gap = self.potential_gap_with(&points)?;
        Ok(PotentialReport {
            mmmse: v * v - (v - global_min_e) * (v - global_min_e),
            vmmse: global_min_e,
            global_min_e,
            global_min_value,
            potential_gap: gap,
            assumption_violation: points.len() > 3,
            at_transition,
            stationary_points: points,
        })
    }

    /// inf over stationary points outside the basin of E_good of
    /// f_u(E) - f_u(E_good); +infinity when no stationary point lies outside.
    pub fn potential_gap(&self) -> Result<f64, PotentialError> {
        let points = self.stationary_points()?;
        self.potential_gap_with(&points)
    }

    fn potential_gap_with(&self, points: &[StationaryPoint]) -> Result<f64, PotentialError> {
        let opts = SeOptions::default();
        let e_good = state_evolution::e_good(self, &opts).fixed_point;
        let f_good = self.f_u(e_good)?;
        let mut gap = f64::INFINITY;
        for p in points {
            let reached = state_evolution::run_se(self, p.e, &opts).fixed_point;
            if (reached - e_good).abs() > 1e-7 * self.v().max(1.0) {
                gap = gap.min(self.f_u(p.e)? - f_good);
            }
        }
        Ok(gap)
    }

    /// Asymptotic matrix and vector MMSE from the potential minimizer.
    pub fn asymptotic_mmse(&self) -> Result<MmseReport, PotentialError> {
        let report = self.report()?;
        Ok(MmseReport {
            mmmse: report.mmmse,
            vmmse: report.vmmse,
            at_transition: report.at_transition,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationaryKind {
    Minimum,
    Maximum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryPoint {
    pub e: f64,
    pub value: f64,
    pub kind: StationaryKind,
}

#[derive(Debug, Clone)]
pub struct PotentialReport {
    pub stationary_points: Vec<StationaryPoint>,
    pub global_min_e: f64,
    pub global_min_value: f64,
    pub mmmse: f64,
    pub vmmse: f64,
    pub potential_gap: f64,
    /// More than three stationary points found (outside the model class).
    pub assumption_violation: bool,
    /// Two minima are degenerate to within [`TIE_TOL`].
    pub at_transition: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct MmseReport {
    pub mmmse: f64,
    pub vmmse: f64,
    pub at_transition: bool,
}

/// Mutual information of the scalar channel y = s + sigma z at
/// snr = sigma^-2, in nats. Zero at snr = 0, H(S) as snr -> infinity.
pub fn scalar_mutual_information(
    prior: &DiscretePrior,
    snr: f64,
) -> Result<f64, QuadratureError> {
    assert!(snr >= 0.0, "snr must be nonnegative");
    if snr == 0.0 {
        return Ok(0.0);
    }
    let sqrt_snr = snr.sqrt();
    let atoms = prior.atoms();
    let mut total = 0.0;
    for s in atoms {
        let val = expect_normal(
            |z| {
                let mut max_logit = f64::NEG_INFINITY;
                let mut logits = [0.0f64; 8];
                let mut heap;
                let slice: &mut [f64] = if atoms.len() <= 8 {
                    &mut logits[..atoms.len()]
                } else {
                    heap = vec![0.0; atoms.len()];
                    &mut heap
                };
                for (l, a) in slice.iter_mut().zip(atoms) {
                    let d = a.value - s.value;
                    *l = a.prob.ln() - 0.5 * d * d * snr + d * sqrt_snr * z;
                    if *l > max_logit {
                        max_logit = *l;
                    }
                }
                let sum: f64 = slice.iter().map(|l| (l - max_logit).exp()).sum();
                max_logit + sum.ln()
            },
            DEFAULT_QUAD_TOL,
        )?;
        total += s.prob * val;
    }
    Ok(-total)
}

/// Algorithmic threshold: largest Delta at which state evolution started from
/// E = v still reaches the floor E_good. Bisection on the stated bracket to
/// 1e-6 relative.
pub fn delta_amp(prior: &DiscretePrior, lo: f64, hi: f64) -> Result<f64, ThresholdError> {
    assert!(0.0 < lo && lo < hi);
    let reaches = |delta: f64| -> bool {
        let model = ScalarModel::new(prior.clone(), delta);
        let opts = SeOptions::default();
        let floor = state_evolution::e_good(&model, &opts).fixed_point;
        let from_v = state_evolution::run_se(&model, model.v(), &opts).fixed_point;
        (from_v - floor).abs() <= 1e-7 * model.v().max(1e-12)
    };
    if !reaches(lo) || reaches(hi) {
        return Err(ThresholdError::NoBracket { lo, hi });
    }
    Ok(bisect(lo, hi, 1e-6, reaches))
}

/// Potential threshold: the noise at which the global minimizer of i_RS
/// jumps from the informative branch to the uninformative one.
///
/// The indicator tracks the branch of argmin i_RS through the overlap
/// v - argmin, classified against the geometric midpoint of the overlaps at
/// the two bracket ends. Inside a first-order coexistence window this flips
/// exactly where the potential gap changes sign; for a weakly biased
/// zero-mean prior (smoothed transition) it flips where the informative
/// branch collapses.
pub fn delta_rs(prior: &DiscretePrior, lo: f64, hi: f64) -> Result<f64, ThresholdError> {
    assert!(0.0 < lo && lo < hi);
    let overlap = |delta: f64| -> Result<f64, ThresholdError> {
        let model = ScalarModel::new(prior.clone(), delta);
        let report = model.report()?;
        Ok((model.v() - report.global_min_e).max(f64::MIN_POSITIVE))
    };
    let o_lo = overlap(lo)?;
    let o_hi = overlap(hi)?;
    if !(o_lo > o_hi * 4.0) {
        return Err(ThresholdError::NoBracket { lo, hi });
    }
    let kappa = (o_lo * o_hi).sqrt();
    let informative = |delta: f64| overlap(delta).map(|o| o > kappa).unwrap_or(false);
    Ok(bisect(lo, hi, 1e-6, informative))
}

/// Bisect a monotone true->false indicator to the given relative tolerance;
/// returns the midpoint of the final bracket.
fn bisect<F: FnMut(f64) -> bool>(mut lo: f64, mut hi: f64, rel_tol: f64, mut ok: F) -> f64 {
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
