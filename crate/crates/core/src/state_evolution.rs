//! State evolution for the underlying (uncoupled) system.
//!
//! The recursion E^(t+1) = mmse((v - E^(t))/Delta) started from E^(0) = v
//! tracks the asymptotic per-coordinate MSE of AMP. Monotonicity of the mmse
//! function makes the sequence monotone from either end of [0, v].

use crate::potential::ScalarModel;

/// Convergence controls. The defaults match the geometric convergence away
/// from transitions; near a threshold the cap prevents hangs and the trace
/// reports the last Cauchy gap instead of guessing the limit.
#[derive(Debug, Clone, Copy)]
pub struct SeOptions {
    pub t_max: usize,
    pub tol: f64,
    /// Keep the per-iteration values (disable for threshold bisection loops).
    pub record: bool,
}

impl Default for SeOptions {
    fn default() -> Self {
        Self {
            t_max: 10_000,
            tol: 1e-12,
            record: false,
        }
    }
}

/// Result of an SE run.
#[derive(Debug, Clone)]
pub struct SeTrace {
    /// Recorded iterates starting at E^(0) (empty unless requested).
    pub values: Vec<f64>,
    pub fixed_point: f64,
    pub iterations: usize,
    pub converged: bool,
    /// |E^(t+1) - E^(t)| at the last step taken.
    pub cauchy_gap: f64,
}

/// The SE operator T_u(E) = mmse((v - E)/Delta).
pub fn t_u(model: &ScalarModel, e: f64) -> f64 {
    let v = model.v();
    debug_assert!((0.0..=v + 1e-12).contains(&e), "E outside [0, v]");
    model
        .prior
        .mmse((v - e).max(0.0) / model.delta)
        .expect("scalar mmse quadrature converges for bounded discrete priors")
}

/// Iterate SE from `e0` until the step falls below `opts.tol` or `opts.t_max`
/// is hit.
pub fn run_se(model: &ScalarModel, e0: f64, opts: &SeOptions) -> SeTrace {
    let mut values = if opts.record {
        Vec::with_capacity(64)
    } else {
        Vec::new()
    };
    if opts.record {
        values.push(e0);
    }
    let mut e = e0;
    let mut gap = f64::INFINITY;
    for t in 1..=opts.t_max {
        let next = t_u(model, e);
        gap = (next - e).abs();
        e = next;
        if opts.record {
            values.push(e);
        }
        if gap < opts.tol {
            return SeTrace {
                values,
                fixed_point: newton_polish(model, e),
                iterations: t,
                converged: true,
                cauchy_gap: gap,
            };
        }
    }
    SeTrace {
        values,
        fixed_point: e,
        iterations: opts.t_max,
        converged: false,
        cauchy_gap: gap,
    }
}

/// One guarded Newton step on g(E) = E - T_u(E); accepted only when it stays
/// inside [0, v] and strictly shrinks |g|.
fn newton_polish(model: &ScalarModel, e: f64) -> f64 {
    let v = model.v();
    let g = |x: f64| x - t_u(model, x);
    let g0 = g(e);
    if g0 == 0.0 {
        return e;
    }
    let d = (1e-7 * v).max(1e-300);
    let hi = (e + d).min(v);
    let lo = (e - d).max(0.0);
    if hi <= lo {
        return e;
    }
    let slope = (g(hi) - g(lo)) / (hi - lo);
    if !slope.is_finite() || slope.abs() < 1e-12 {
        return e;
    }
    let candidate = e - g0 / slope;
    if (0.0..=v).contains(&candidate) && g(candidate).abs() < g0.abs() {
        candidate
    } else {
        e
    }
}

/// The MSE floor: fixed point reached from full knowledge, E^(0) = 0.
pub fn e_good(model: &ScalarModel, opts: &SeOptions) -> SeTrace {
    run_se(model, 0.0, opts)
}

/// Does SE from `e` converge to the floor reached from E^(0) = 0?
pub fn in_basin(model: &ScalarModel, e: f64, opts: &SeOptions) -> bool {
    let floor = e_good(model, opts).fixed_point;
    let reached = run_se(model, e, opts).fixed_point;
    (reached - floor).abs() <= 1e-7 * model.v().max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::DiscretePrior;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ber02(delta: f64) -> ScalarModel {
        ScalarModel::new(DiscretePrior::bernoulli(0.02).unwrap(), delta)
    }

    #[test]
    fn operator_endpoints() {
        let m = ber02(0.0012);
        assert_relative_eq!(t_u(&m, m.v()), m.prior.variance(), epsilon = 1e-12);
        let dirac = ScalarModel::new(DiscretePrior::dirac(2.0).unwrap(), 0.3);
        for &e in &[0.0, 1.0, 4.0] {
            assert_relative_eq!(t_u(&dirac, e), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn dirac_collapses_in_one_step() {
        let dirac = ScalarModel::new(DiscretePrior::dirac(2.0).unwrap(), 0.3);
        let trace = run_se(&dirac, dirac.v(), &SeOptions::default());
        assert!(trace.converged);
        assert_eq!(trace.fixed_point, 0.0);
        assert!(trace.iterations <= 2);
    }

    #[test]
    fn below_amp_threshold_reaches_unique_minimum() {
        let m = ber02(0.0008);
        let opts = SeOptions::default();
        let from_v = run_se(&m, m.v(), &opts);
        let floor = e_good(&m, &opts);
        assert!(from_v.converged && floor.converged);
        assert!((from_v.fixed_point - floor.fixed_point).abs() < 1e-9);
        // frozen from the pre-build scan: unique root near 0.0013116
        assert_relative_eq!(from_v.fixed_point, 1.3116e-3, max_relative = 1e-3);
    }

    #[test]
    fn between_thresholds_stalls_at_bad_minimum() {
        let m = ber02(0.0012);
        let opts = SeOptions::default();
        let from_v = run_se(&m, m.v(), &opts);
        let floor = e_good(&m, &opts);
        assert!(from_v.fixed_point > floor.fixed_point + 1e-3);
        // frozen from the pre-build scan: bad root 0.0193239, good 0.0064165
        assert_relative_eq!(from_v.fixed_point, 1.93239e-2, max_relative = 1e-3);
        assert_relative_eq!(floor.fixed_point, 6.41646e-3, max_relative = 1e-3);
    }

    #[test]
    fn monotone_from_both_ends() {
        let m = ber02(0.0012);
        let opts = SeOptions {
            record: true,
            ..SeOptions::default()
        };
        let down = run_se(&m, m.v(), &opts);
        for w in down.values.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "not nonincreasing from E0=v");
        }
        let up = run_se(&m, 0.0, &opts);
        for w in up.values.windows(2) {
            assert!(w[1] >= w[0] - 1e-15, "not nondecreasing from E0=0");
        }
        for &x in down.values.iter().chain(&up.values) {
            assert!((0.0..=m.v() + 1e-15).contains(&x));
        }
    }

    #[test]
    fn deep_noise_has_single_uninformative_fixed_point() {
        // at huge delta both starting points land on the same root, which
        // sits at the no-information value Var(S)
        let prior = DiscretePrior::bernoulli(0.02).unwrap();
        let m = ScalarModel::new(prior, 1e4 * 0.02);
        let opts = SeOptions::default();
        let floor = e_good(&m, &opts).fixed_point;
        let from_v = run_se(&m, m.v(), &opts).fixed_point;
        assert!((floor - from_v).abs() < 1e-10);
        assert_relative_eq!(floor, m.prior.variance(), epsilon = 1e-4);
    }

    #[test]
    fn basin_membership() {
        let m = ber02(0.0012);
        let opts = SeOptions::default();
        assert!(in_basin(&m, 0.0, &opts));
        // middle stationary point from the pre-build scan: 0.0149615
        assert!(in_basin(&m, 0.0149, &opts), "just below the unstable root");
        assert!(!in_basin(&m, 0.0151, &opts), "just above the unstable root");
        assert!(!in_basin(&m, m.v(), &opts));

        let low_noise = ber02(0.0008);
        assert!(in_basin(&low_noise, low_noise.v(), &opts));
    }

    #[test]
    fn fixed_points_are_stationary_points_of_the_potential() {
        for &delta in &[0.0008, 0.0012, 0.00125] {
            let m = ber02(delta);
            let opts = SeOptions::default();
            for start in [0.0, m.v()] {
                let fp = run_se(&m, start, &opts).fixed_point;
                let d = m.i_rs_derivative(fp).unwrap();
                assert!(
                    d.abs() <= 1e-8,
                    "potential derivative {d} at SE fixed point {fp}, delta={delta}"
                );
            }
        }
    }

    #[test]
    fn max_iterations_reports_unconverged() {
        let m = ber02(0.0012);
        let opts = SeOptions {
            t_max: 3,
            tol: 1e-15,
            record: true,
        };
        let trace = run_se(&m, m.v(), &opts);
        assert!(!trace.converged);
        assert_eq!(trace.iterations, 3);
        assert_eq!(trace.values.len(), 4);
        assert!(trace.cauchy_gap.is_finite());
    }

    proptest! {
        // E >= G implies T_u(E) >= T_u(G): the operator maintains degradation.
        #[test]
        fn monotone_degradation(a in 0.0f64..1.0, b in 0.0f64..1.0, rho in 0.05f64..0.5) {
            let prior = DiscretePrior::bernoulli(rho).unwrap();
            let m = ScalarModel::new(prior, 0.05);
            let v = m.v();
            let (lo, hi) = if a <= b { (a * v, b * v) } else { (b * v, a * v) };
            prop_assert!(t_u(&m, hi) >= t_u(&m, lo) - 1e-12);
        }
    }
}
