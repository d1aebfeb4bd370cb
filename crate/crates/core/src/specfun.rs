//! Special functions needed by the calibration: `ln Γ`, the unit-ball volume
//! constant `v_m`, and the two real branches of the Lambert-W function.

use std::f64::consts::{E, PI};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for positive finite arguments.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("log_gamma requires a positive finite argument, got {x}")));
    }
    if x < 0.5 {
        // Γ(x) = Γ(x+1)/x keeps the Lanczos sum in its accurate range.
        return Ok(lanczos_log_gamma(x + 1.0) - x.ln());
    }
    Ok(lanczos_log_gamma(x))
}

fn lanczos_log_gamma(x: f64) -> f64 {
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Volume of the unit ball in `m` dimensions, `π^{m/2} / Γ(m/2 + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeConstant {
    pub m: u32,
    pub value: f64,
}

impl VolumeConstant {
    pub fn new(m: u32) -> Result<Self> {
        Ok(Self { m, value: volume_constant(m)? })
    }
}

/// `v_m`, assembled in log space so large `m` underflows gracefully instead of overflowing.
pub fn volume_constant(m: u32) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("volume constant requires m >= 1".into()));
    }
    let half = f64::from(m) / 2.0;
    Ok((half * PI.ln() - log_gamma(half + 1.0)?).exp())
}

/// Real branch of the Lambert-W function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LambertBranch {
    /// `W₀`: defined on `[-1/e, ∞)`, values in `[-1, ∞)`.
    Principal,
    /// `W₋₁`: defined on `[-1/e, 0)`, values in `(-∞, -1]`.
    Secondary,
}

const INV_E: f64 = 1.0 / E;
const MAX_HALLEY_ITERS: usize = 64;

/// Solves `w·e^w = x` on the requested real branch.
pub fn lambert_w(branch: LambertBranch, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("lambert_w requires a finite argument, got {x}")));
    }
    // Arguments within a few ulps of -1/e are the branch point.
    let gap = x + INV_E;
    if gap < -4.0 * f64::EPSILON * INV_E {
        return Err(Error::Domain(format!("lambert_w argument {x} is below -1/e")));
    }
    if gap <= 4.0 * f64::EPSILON * INV_E && gap <= 0.0 {
        return Ok(-1.0);
    }
    match branch {
        LambertBranch::Principal => Ok(principal(x)),
        LambertBranch::Secondary => {
            if x >= 0.0 {
                return Err(Error::Domain(format!(
                    "secondary Lambert-W branch is defined on [-1/e, 0), got {x}"
                )));
            }
            Ok(secondary(x))
        }
    }
}

fn principal(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x.abs() < 1e-9 {
        // Series is exact to working precision here.
        return x * (1.0 - x * (1.0 - 1.5 * x));
    }
    if x > 1e10 {
        return log_space_newton(x.ln(), x.ln() - x.ln().ln(), |w| w.ln());
    }
    let guess = if x < -0.25 {
        branch_point_series(x, 1.0)
    } else if x < 3.0 {
        let l = (1.0 + x).ln();
        l * (1.0 - l / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    halley(x, guess)
}

fn secondary(x: f64) -> f64 {
    if x < -0.25 {
        return halley(x, branch_point_series(x, -1.0));
    }
    // w + ln(-w) = ln(-x); avoids forming e^w for very negative w.
    let l1 = (-x).ln();
    let l2 = (-l1).ln();
    log_space_newton(l1, l1 - l2 + l2 / l1, |w| (-w).ln())
}

/// Puiseux expansion about the branch point; `sign` picks the branch.
fn branch_point_series(x: f64, sign: f64) -> f64 {
    let p = sign * (2.0 * (E * x + 1.0)).max(0.0).sqrt();
    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
}

fn halley(x: f64, mut w: f64) -> f64 {
    for _ in 0..MAX_HALLEY_ITERS {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        if !step.is_finite() {
            break;
        }
        let next = w - step;
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * next.abs().max(f64::MIN_POSITIVE);
        w = next;
        if done {
            break;
        }
    }
    w
}

/// Newton on `w + log_abs(w) = target`.
fn log_space_newton(target: f64, mut w: f64, log_abs: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..MAX_HALLEY_ITERS {
        let g = w + log_abs(w) - target;
        let step = g / (1.0 + 1.0 / w);
        let next = w - step;
        let done = (next - w).abs() <= 2.0 * f64::EPSILON * next.abs();
        w = next;
        if done {
            break;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln_factorial(n: u32) -> f64 {
        (2..=n).map(|k| f64::from(k).ln()).sum()
    }

    #[test]
    fn log_gamma_anchor_values() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-15);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-15);
        let half = log_gamma(0.5).unwrap();
        assert!((half - PI.sqrt().ln()).abs() < 1e-14);
        assert!((half - 0.572_364_942_9).abs() < 1e-10);
    }

    #[test]
    fn log_gamma_matches_factorials_and_half_integers() {
        for n in 1..=199u32 {
            let exact = ln_factorial(n - 1);
            let got = log_gamma(f64::from(n)).unwrap();
            assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1.0), "n={n}: {got} vs {exact}");
        }
        // Γ(n + 1/2) = (2n)! √π / (4^n n!)
        for n in 0..=199u32 {
            let exact = ln_factorial(2 * n) + 0.5 * PI.ln() - f64::from(n) * 4f64.ln() - ln_factorial(n);
            let got = log_gamma(f64::from(n) + 0.5).unwrap();
            assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1.0), "n={n}: {got} vs {exact}");
        }
    }

    #[test]
    fn log_gamma_rejects_bad_input() {
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.5).is_err());
        assert!(log_gamma(f64::NAN).is_err());
        assert!(log_gamma(f64::INFINITY).is_err());
    }

    #[test]
    fn volume_constant_small_dimensions() {
        assert!((volume_constant(1).unwrap() - 2.0).abs() < 1e-14);
        assert!((volume_constant(2).unwrap() - PI).abs() < 1e-14);
        assert!((volume_constant(3).unwrap() - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!(volume_constant(0).is_err());
        assert_eq!(VolumeConstant::new(2).unwrap().m, 2);
    }

    #[test]
    fn volume_constant_peaks_at_five() {
        let vals: Vec<f64> = (1..=60).map(|m| volume_constant(m).unwrap()).collect();
        let (argmax, max) = vals
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert_eq!(argmax + 1, 5);
        assert!((max - 5.264).abs() < 1e-3);
        assert!((max - 8.0 * PI * PI / 15.0).abs() < 1e-13);
    }

    #[test]
    fn volume_constant_recurrence_and_tail() {
        for m in 3..=300u32 {
            let lhs = volume_constant(m).unwrap();
            let rhs = volume_constant(m - 2).unwrap() * 2.0 * PI / f64::from(m);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs, "m={m}");
        }
        for m in 5..=200 {
            assert!(volume_constant(m + 1).unwrap() < volume_constant(m).unwrap());
        }
        for m in 1..5 {
            assert!(volume_constant(m + 1).unwrap() > volume_constant(m).unwrap());
        }
        let big = volume_constant(1000).unwrap();
        assert!(big >= 0.0 && big < 1e-300);
    }

    /// Bisection on `w·e^w` over the secondary branch, independent of the Halley path.
    fn secondary_by_bisection(x: f64) -> f64 {
        let (mut lo, mut hi) = (-800.0_f64, -1.0_f64);
        // w·e^w is decreasing on (-∞, -1], so f(lo) > x > f(hi)
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if mid * mid.exp() > x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lambert_anchor_values() {
        assert_eq!(lambert_w(LambertBranch::Principal, 0.0).unwrap(), 0.0);
        assert!((lambert_w(LambertBranch::Principal, E).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lambert_w(LambertBranch::Secondary, -INV_E).unwrap(), -1.0);
        assert_eq!(lambert_w(LambertBranch::Principal, -INV_E).unwrap(), -1.0);

        let oracle = secondary_by_bisection(-0.1);
        assert!((oracle - (-3.577_152)).abs() < 1e-6);
        let w = lambert_w(LambertBranch::Secondary, -0.1).unwrap();
        assert!((w - oracle).abs() < 1e-12, "{w} vs {oracle}");
    }

    #[test]
    fn lambert_domain_errors() {
        assert!(lambert_w(LambertBranch::Principal, -0.5).is_err());
        assert!(lambert_w(LambertBranch::Secondary, -0.5).is_err());
        assert!(lambert_w(LambertBranch::Secondary, 0.0).is_err());
        assert!(lambert_w(LambertBranch::Secondary, 1.0).is_err());
        assert!(lambert_w(LambertBranch::Principal, f64::NAN).is_err());
    }

    fn check_round_trip(branch: LambertBranch, x: f64) {
        let w = lambert_w(branch, x).unwrap();
        let resid = (w * w.exp() - x).abs();
        assert!(resid <= 1e-12 * x.abs().max(1.0), "{branch:?} x={x:e}: w={w}, resid={resid:e}");
        match branch {
            LambertBranch::Principal => assert!(w >= -1.0),
            LambertBranch::Secondary => assert!(w <= -1.0),
        }
    }

    #[test]
    fn lambert_round_trip_wide_range() {
        for i in 0..=2000 {
            let t = f64::from(i) / 2000.0;
            check_round_trip(LambertBranch::Principal, -INV_E + t * (INV_E + 10.0));
            check_round_trip(LambertBranch::Secondary, -INV_E * (1.0 - t) - 1e-300 * t);
        }
        for e in -300..=300 {
            let x = 10f64.powi(e);
            check_round_trip(LambertBranch::Principal, x);
            check_round_trip(LambertBranch::Principal, -x.min(INV_E));
            if x < INV_E {
                check_round_trip(LambertBranch::Secondary, -x);
            }
        }
        for k in 1..40 {
            let x = -INV_E + 10f64.powi(-k);
            if x < 0.0 {
                check_round_trip(LambertBranch::Principal, x);
                check_round_trip(LambertBranch::Secondary, x);
            }
        }
    }

    #[test]
    fn lambert_tiny_principal_is_relatively_accurate() {
        for &x in &[-1e-22, -7.4e-13, 3e-18, -1e-300] {
            let w = lambert_w(LambertBranch::Principal, x).unwrap();
            assert!(((w - x) / x).abs() < 1e-12 || ((w * w.exp() - x) / x).abs() < 1e-14);
        }
    }
}
