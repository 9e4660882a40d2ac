//! Safeguarded Newton iteration for monotone scalar equations.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootResult {
    pub root: f64,
    pub iterations: u32,
    pub converged: bool,
    pub residual: f64,
}

/// Open domain `(lower, upper)` for the unknown plus the first step used
/// when the root has not been bracketed yet. Steps double on each expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
}

impl Bracket {
    pub fn unbounded(width: f64) -> Self {
        Bracket { lower: f64::NEG_INFINITY, upper: f64::INFINITY, width }
    }

    pub fn positive(width: f64) -> Self {
        Bracket { lower: 0.0, upper: f64::INFINITY, width }
    }
}

const FLAT_SLOPE: f64 = 1e-14;

/// Solve `f(x) = 0` for monotone `f` starting from `x0`.
///
/// The direction of monotonicity is taken from `df(x0)` (or from a probe
/// step when the slope is flat there). Newton steps are accepted while they
/// stay inside the interval known to contain the root; otherwise the
/// iteration bisects a known bracket or expands geometrically towards the
/// unbracketed side. `iterations` counts evaluations after the one at `x0`.
///
/// Returns [`Error::NoRoot`] when `max_iterations` is exhausted without a
/// sign change.
pub fn newton_root<F, D>(f: F, df: D, x0: f64, tol: f64, max_iterations: u32, domain: Bracket) -> Result<RootResult>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if !(x0 > domain.lower && x0 < domain.upper) {
        return Err(Error::Domain(format!("initial guess {x0} outside ({}, {})", domain.lower, domain.upper)));
    }
    let mut x = x0;
    let mut fx = f(x);
    let mut iterations = 0u32;
    let mut width = domain.width.abs().max(f64::MIN_POSITIVE);

    let slope0 = df(x);
    let sign = if slope0.abs() >= FLAT_SLOPE {
        slope0.signum()
    } else {
        let probe = x + width;
        if probe < domain.upper {
            let fp = f(probe);
            iterations += 1;
            if fp < fx {
                -1.0
            } else {
                1.0
            }
        } else {
            1.0
        }
    };

    // Work with the increasing function g = sign * f. `lo`/`hi` are points
    // where g < 0 / g > 0 has been observed.
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    loop {
        if !fx.is_finite() {
            return Err(Error::Domain(format!("non-finite function value at {x}")));
        }
        let gx = sign * fx;
        if gx.abs() <= tol {
            return Ok(RootResult { root: x, iterations, converged: true, residual: fx });
        }
        if gx < 0.0 {
            lo = Some(lo.map_or(x, |l: f64| l.max(x)));
        } else {
            hi = Some(hi.map_or(x, |h: f64| h.min(x)));
        }
        if iterations >= max_iterations {
            return match (lo, hi) {
                (Some(_), Some(_)) => Ok(RootResult { root: x, iterations, converged: false, residual: fx }),
                _ => Err(Error::NoRoot),
            };
        }
        let left = lo.unwrap_or(domain.lower);
        let right = hi.unwrap_or(domain.upper);
        if let (Some(l), Some(h)) = (lo, hi) {
            if h - l <= 4.0 * f64::EPSILON * l.abs().max(h.abs()) {
                // bracket collapsed to adjacent floats
                return Ok(RootResult { root: x, iterations, converged: true, residual: fx });
            }
        }

        let slope = sign * df(x);
        let newton = if slope.abs() >= FLAT_SLOPE { x - gx / slope } else { f64::NAN };
        let next = if newton > left && newton < right {
            newton
        } else if let (Some(l), Some(h)) = (lo, hi) {
            0.5 * (l + h)
        } else if gx < 0.0 {
            let step = x + width;
            width *= 2.0;
            if step < domain.upper {
                step
            } else {
                0.5 * (x + domain.upper)
            }
        } else {
            let step = x - width;
            width *= 2.0;
            if step > domain.lower {
                step
            } else {
                0.5 * (x + domain.lower)
            }
        };
        x = next;
        fx = f(x);
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::bs_call_price;
    use crate::model::bs_call_delta;
    use crate::numkit::{Purpose, RngStream, StreamId};
    use proptest::prelude::*;

    #[test]
    fn square_root_of_four() {
        let r = newton_root(|x| x * x - 4.0, |x| 2.0 * x, 3.0, 1e-12, 50, Bracket::positive(1.0)).unwrap();
        assert!(r.converged);
        assert!((r.root - 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_in_one_step() {
        let r = newton_root(|x| x - 1.25, |_| 1.0, 7.0, 1e-12, 50, Bracket::unbounded(1.0)).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.root, 1.25);
    }

    #[test]
    fn decreasing_function() {
        let r = newton_root(|x| 3.0 - x.exp(), |x| -x.exp(), 0.0, 1e-12, 50, Bracket::unbounded(1.0)).unwrap();
        assert!((r.root - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn inverts_call_price() {
        let (k, r, v, t) = (95.0, 0.05, 0.3f64.sqrt(), 0.08);
        let target = bs_call_price(103.0, k, r, v, t).unwrap();
        let res = newton_root(
            |s| bs_call_price(s, k, r, v, t).unwrap() - target,
            |s| bs_call_delta(s, k, r, v, t).unwrap(),
            100.0,
            1e-10,
            100,
            Bracket::positive(v * 0.02f64.sqrt() * 100.0),
        )
        .unwrap();
        assert!((res.root - 103.0).abs() < 1e-8, "{res:?}");
    }

    #[test]
    fn flat_start_uses_bisection_and_expansion() {
        // arctan-like function with vanishing slope far out
        let f = |x: f64| (x - 50.0).tanh();
        let df = |x: f64| 1.0 - (x - 50.0).tanh().powi(2);
        let r = newton_root(f, df, 0.0, 1e-12, 200, Bracket::unbounded(1.0)).unwrap();
        assert!(r.converged);
        assert!((r.root - 50.0).abs() < 1e-10);
    }

    #[test]
    fn no_sign_change_is_reported() {
        let e = newton_root(|x| x.exp() + 1.0, |x| x.exp(), 0.0, 1e-12, 60, Bracket::unbounded(1.0));
        assert_eq!(e, Err(Error::NoRoot));
    }

    #[test]
    fn bs_inversion_iteration_count() {
        // 1000 targets whose roots lie within four standard deviations of the
        // spot, starting from the spot itself
        let (k, r, v, t, tau) = (95.0, 0.05, 0.3f64.sqrt(), 0.08, 0.02f64);
        let mut st = RngStream::new(11, StreamId::new(Purpose::Test, 0, 0));
        let mut worst = 0;
        for _ in 0..1000 {
            let z = (8.0 * st.uniform() - 4.0).clamp(-4.0, 4.0);
            let s_star = 100.0 * ((0.08 - 0.5 * v * v) * tau + v * tau.sqrt() * z).exp();
            let target = bs_call_price(s_star, k, r, v, t).unwrap();
            let res = newton_root(
                |s| bs_call_price(s, k, r, v, t).unwrap() - target,
                |s| bs_call_delta(s, k, r, v, t).unwrap(),
                100.0,
                1e-10,
                100,
                Bracket::positive(v * tau.sqrt() * 100.0),
            )
            .unwrap();
            assert!(res.converged);
            worst = worst.max(res.iterations);
        }
        assert!(worst <= 8, "worst iteration count {worst}");
    }

    proptest! {
        #[test]
        fn bracketed_convergence_on_monotone_cubics(
            a in 0.1f64..10.0, b in -5.0f64..5.0, x0 in -20.0f64..20.0, flip in any::<bool>()
        ) {
            let s = if flip { -1.0 } else { 1.0 };
            let f = |x: f64| s * (a * (x - b) + (x - b).powi(3));
            let df = |x: f64| s * (a + 3.0 * (x - b).powi(2));
            let r = newton_root(f, df, x0, 1e-10, 200, Bracket::unbounded(1.0)).unwrap();
            prop_assert!(r.converged);
            prop_assert!(r.iterations <= 200);
            prop_assert!(f(r.root).abs() <= 1e-10);
        }
    }
}
