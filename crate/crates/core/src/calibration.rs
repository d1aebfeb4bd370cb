//! Analytic false-alarm calibration.
//!
//! Under the nominal hypothesis the per-frame evidence `δ` is modelled as
//! `E/v_m − d_α^m` with `E ~ Exp(1)`, truncated at the training bound `φ`.
//! The false-alarm exponent `ω₀ > 0` solves `E[e^{ωδ}] = 1`:
//!
//! ```text
//! (e^{v_m c} / v_m)·(ω − v_m) = e^{(ω − v_m)φ} − e^{−(ω − v_m)c},   c = d_α^m
//! ```
//!
//! Dropping the `e^{−(ω−v_m)c}` term (the `c → 0` limit) gives a closed form via
//! Lambert-W. Both equations share the trivial root `ω = v_m`, which is never
//! returned. The threshold for a target rate is `h = −ln(FAR)/ω₀`, and the rate
//! is bounded by `e^{−ω₀h}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{powi, DetectorModel};
use crate::quadrature;
use crate::specfun::{lambert_w, volume_constant, LambertBranch};

/// Below this `ω₀` a threshold would be meaningless.
pub const OMEGA0_FLOOR: f64 = 1e-12;
/// Closed-form and exact roots disagreeing by more than this are logged.
pub const CROSS_CHECK_WARN: f64 = 0.05;
/// The exact solver is consulted only when `d_α^m` exceeds this.
pub const CROSS_CHECK_MIN_POW: f64 = 1e-8;

/// `θ = v_m·e^{−v_m d_α^m}`.
pub fn theta(v_m: f64, d_alpha: f64, m: u32) -> Result<f64> {
    theta_from_pow(v_m, powi(d_alpha, m as usize))
}

/// `θ` from `c = d_α^m` directly.
pub fn theta_from_pow(v_m: f64, d_alpha_pow: f64) -> Result<f64> {
    if !(v_m > 0.0) || !v_m.is_finite() {
        return Err(Error::Domain(format!("v_m must be positive and finite, got {v_m}")));
    }
    if !(d_alpha_pow >= 0.0) || !d_alpha_pow.is_finite() {
        return Err(Error::Domain(format!("d_alpha^m must be finite and non-negative, got {d_alpha_pow}")));
    }
    Ok(v_m * (-v_m * d_alpha_pow).exp())
}

/// Lambert-W branch that yields the nontrivial root for a given `φθ`.
pub fn nontrivial_branch(phi_theta: f64) -> Result<LambertBranch> {
    if phi_theta < 1.0 {
        Ok(LambertBranch::Secondary)
    } else if phi_theta > 1.0 {
        Ok(LambertBranch::Principal)
    } else {
        Err(Error::Degenerate("phi*theta = 1 gives a double root".into()))
    }
}

/// Closed-form exponent `ω₀ = v_m − θ − W(−φθ e^{−φθ})/φ`.
///
/// `−φθe^{−φθ}` has two real Lambert preimages. One is `−φθ` itself and maps
/// back to `ω = v_m`; the other branch is taken.
pub fn omega0_lambert(v_m: f64, theta: f64, phi: f64) -> Result<f64> {
    for (name, v) in [("v_m", v_m), ("theta", theta), ("phi", phi)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if theta > v_m {
        return Err(Error::Domain(format!("theta = {theta} exceeds v_m = {v_m}")));
    }
    let p = phi * theta;
    let branch = nontrivial_branch(p)?;
    let z = (-p * (-p).exp()).max(-std::f64::consts::E.recip());
    let w = lambert_w(branch, z)?;
    if (w * w.exp() - z).abs() > 1e-12 * z.abs().max(1.0) {
        return Err(Error::Internal(format!("Lambert-W residual too large at z = {z:e}")));
    }
    let x = -theta - w / phi;
    if x.abs() <= 1e-9 {
        return Err(Error::Degenerate(format!("nontrivial root coincides with omega = v_m (phi*theta = {p})")));
    }
    let omega = (v_m - theta) - w / phi;
    if !(omega > 0.0) {
        return Err(Error::Degenerate(format!("omega0 = {omega:e} is not positive (phi*theta = {p})")));
    }
    Ok(omega)
}

/// Residual of the asymptotic identity `e^{(ω−v_m)φ} = (e^{v_m c}/v_m)(ω − v_m) + 1`.
pub fn asymptotic_identity_residual(omega: f64, v_m: f64, d_alpha_pow: f64, phi: f64) -> f64 {
    let x = omega - v_m;
    let a0 = (v_m * d_alpha_pow).exp() / v_m;
    (x * phi).exp() - (a0 * x + 1.0)
}

/// Exact moment equation, rearranged per side of `v_m` to avoid cancellation.
fn exact_equation(omega: f64, v_m: f64, c: f64, phi: f64) -> f64 {
    let a0 = (v_m * c).exp() / v_m;
    let x = omega - v_m;
    if x < 0.0 {
        a0 * omega + (v_m * c).exp() * (-omega * c).exp_m1() - (x * phi).exp()
    } else {
        a0 * x + (-x * c).exp_m1() - (x * phi).exp_m1()
    }
}

/// Residual of the exact moment equation at `omega`.
pub fn exact_equation_residual(omega: f64, v_m: f64, d_alpha_pow: f64, phi: f64) -> f64 {
    exact_equation(omega, v_m, d_alpha_pow, phi)
}

/// Exact exponent for `d_α` in `m` dimensions.
pub fn omega0_exact(v_m: f64, d_alpha: f64, m: u32, phi: f64) -> Result<f64> {
    omega0_exact_from_pow(v_m, powi(d_alpha, m as usize), phi)
}

/// Nontrivial positive root of the exact moment equation, by bracketing and bisection.
pub fn omega0_exact_from_pow(v_m: f64, c: f64, phi: f64) -> Result<f64> {
    for (name, v) in [("v_m", v_m), ("phi", phi)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!("d_alpha^m must be finite and non-negative, got {c}")));
    }
    let f = |w: f64| exact_equation(w, v_m, c, phi);
    // slope at the trivial root decides which side the other root is on
    let slope = (v_m * c).exp() / v_m - c - phi;
    let (lo, hi) = if slope < 0.0 {
        // f(0) = −e^{−v_m φ} < 0, f > 0 just below v_m
        let mut lo = 0.0;
        let mut hi = None;
        for j in 1..=60 {
            let w = v_m * (1.0 - 0.5f64.powi(j));
            if f(w) > 0.0 {
                hi = Some(w);
                break;
            }
            lo = w;
        }
        let hi = hi.ok_or_else(|| Error::NoRoot(format!("no sign change below v_m = {v_m}")))?;
        (lo, hi)
    } else if slope > 0.0 {
        let span = 50.0 / phi;
        let mut lo = None;
        for j in 1..=60 {
            let w = v_m + span * 0.5f64.powi(j);
            if f(w) > 0.0 {
                lo = Some(w);
                break;
            }
        }
        let lo = lo.ok_or_else(|| Error::NoRoot(format!("no positive excursion above v_m = {v_m}")))?;
        let mut hi = v_m + span;
        let mut grown = 0;
        while f(hi) >= 0.0 {
            hi = v_m + 2.0 * (hi - v_m);
            grown += 1;
            if grown > 200 || !hi.is_finite() {
                return Err(Error::NoRoot("bracket expansion failed above v_m".into()));
            }
        }
        (lo, hi)
    } else {
        return Err(Error::Degenerate("moment equation has a double root at v_m".into()));
    };
    let root = bisect(f, lo, hi);
    let residual = f(root);
    if residual.abs() > 1e-10 {
        return Err(Error::Internal(format!("exact root residual {residual:e} exceeds 1e-10")));
    }
    if !(root > 0.0) {
        return Err(Error::Degenerate(format!("exact omega0 = {root:e} is not positive")));
    }
    Ok(root)
}

/// Bisection with `f(lo) < 0 < f(hi)` or the reverse, run until the bracket stops shrinking.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    for _ in 0..4000 {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    if f_lo.abs() <= f_hi.abs() {
        lo
    } else {
        hi
    }
}

/// `∫_{−c}^{φ} e^{ωy}·v_m e^{−v_m c} e^{−v_m y} dy`, evaluated numerically.
pub fn moment_by_quadrature(omega: f64, v_m: f64, d_alpha_pow: f64, phi: f64) -> f64 {
    let scale = v_m * (-v_m * d_alpha_pow).exp();
    let integrand = |y: f64| scale * ((omega - v_m) * y).exp();
    quadrature::integrate(integrand, -d_alpha_pow, 0.0, 64) + quadrature::integrate(integrand, 0.0, phi, 256)
}

/// `h = −ln(FAR)/ω₀`.
pub fn threshold_for_far(target_far: f64, omega0: f64) -> Result<f64> {
    if !(target_far > 0.0 && target_far < 1.0) {
        return Err(Error::Domain(format!("target false-alarm rate must lie in (0, 1), got {target_far}")));
    }
    if !(omega0 > 0.0) || !omega0.is_finite() {
        return Err(Error::Domain(format!("omega0 must be positive and finite, got {omega0}")));
    }
    Ok(-target_far.ln() / omega0)
}

/// Upper bound `e^{−ω₀h}` on the false-alarm rate.
pub fn far_bound(h: f64, omega0: f64) -> Result<f64> {
    if !(h >= 0.0) || !(omega0 > 0.0) {
        return Err(Error::Domain(format!("far_bound needs h >= 0 and omega0 > 0, got h = {h}, omega0 = {omega0}")));
    }
    Ok((-omega0 * h).exp())
}

/// Result of calibrating a model to a target false-alarm rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub m: usize,
    pub v_m: f64,
    pub d_alpha: f64,
    pub d_alpha_pow: f64,
    pub phi: f64,
    pub theta: f64,
    pub omega0: f64,
    pub lambert_branch: &'static str,
    pub target_far: f64,
    pub h: f64,
    pub far_bound: f64,
    /// Exact-equation exponent, when the cross-check ran and succeeded.
    pub omega0_exact: Option<f64>,
    pub exact_relative_gap: Option<f64>,
}

/// Derives `θ`, `ω₀`, `h` and the rate bound for a trained model.
pub fn calibrate(model: &DetectorModel, target_far: f64) -> Result<Calibration> {
    if !(target_far > 0.0 && target_far < 1.0) {
        return Err(Error::Domain(format!("target false-alarm rate must lie in (0, 1), got {target_far}")));
    }
    let m = u32::try_from(model.m).map_err(|_| Error::Domain("dimension too large".into()))?;
    let v_m = volume_constant(m)?;
    let c = model.d_alpha_pow();
    let theta = theta_from_pow(v_m, c)?;
    let branch = nontrivial_branch(model.phi * theta)?;
    let omega0 = omega0_lambert(v_m, theta, model.phi)?;
    if omega0 <= OMEGA0_FLOOR {
        return Err(Error::Degenerate(format!("omega0 = {omega0:e} is below {OMEGA0_FLOOR:e}")));
    }
    let (omega0_exact, exact_relative_gap) = if c > CROSS_CHECK_MIN_POW {
        match omega0_exact_from_pow(v_m, c, model.phi) {
            Ok(exact) => {
                let gap = (omega0 - exact).abs() / exact;
                if gap > CROSS_CHECK_WARN {
                    log::warn!(
                        "closed-form omega0 {omega0:e} differs from the exact root {exact:e} by {:.1}%",
                        100.0 * gap
                    );
                }
                (Some(exact), Some(gap))
            }
            Err(e) => {
                log::warn!("exact omega0 cross-check failed: {e}");
                (None, None)
            }
        }
    } else {
        (None, None)
    };
    let h = threshold_for_far(target_far, omega0)?;
    let bound = far_bound(h, omega0)?;
    Ok(Calibration {
        m: model.m,
        v_m,
        d_alpha: model.d_alpha,
        d_alpha_pow: c,
        phi: model.phi,
        theta,
        omega0,
        lambert_branch: match branch {
            LambertBranch::Principal => "principal",
            LambertBranch::Secondary => "secondary",
        },
        target_far,
        h,
        far_bound: bound,
        omega0_exact,
        exact_relative_gap,
    })
}
