//! Tightest probability bounds for a scalar random variable with known mean and variance.
//!
//! Every bound is evaluated on the standardized threshold `η̃ = (η − μ)/σ`, so the
//! results are invariant under a joint affine change of units of the variable and the
//! thresholds.

use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

/// Mean and (strictly positive) variance of a scalar random variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    mu: f64,
    var: f64,
}

impl Moments {
    pub fn new(mu: f64, var: f64) -> Result<Self> {
        if !mu.is_finite() || !var.is_finite() {
            return Err(invalid(format!("moments must be finite (mu={mu}, var={var})")));
        }
        if var <= 0.0 {
            return Err(invalid(format!("variance must be strictly positive, got {var}")));
        }
        Ok(Self { mu, var })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn var(&self) -> f64 {
        self.var
    }

    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }

    /// Distance of `x` from the mean in standard deviations.
    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mu) / self.sd()
    }

    /// Inverse of [`Moments::standardize`].
    pub fn destandardize(&self, t: f64) -> f64 {
        self.mu + self.sd() * t
    }
}

/// A closed threshold pair `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(invalid(format!("interval ends must be finite ({lo}, {hi})")));
        }
        if lo >= hi {
            return Err(invalid(format!("interval requires lo < hi, got ({lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Feasible range of the CDF `F(η)` over all distributions with given moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfEnvelope {
    pub lower: f64,
    pub upper: f64,
}

fn check_threshold(eta: f64) -> Result<()> {
    if eta.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("threshold must be finite, got {eta}")))
    }
}

/// `1 / (1 + t²)`, the standardized one-sided bound.
fn cantelli(t: f64) -> f64 {
    1.0 / (1.0 + t * t)
}

/// Tightest upper bound on `Pr(x > η)` (equivalently `Pr(x ≥ η)`).
///
/// `σ²/(σ² + (η−μ)²)` for `η ≥ μ` and `1` below the mean. At `η = μ` both
/// branches agree on `1`.
pub fn upper_tail_bound(m: &Moments, eta: f64) -> Result<f64> {
    check_threshold(eta)?;
    if eta < m.mu {
        return Ok(1.0);
    }
    Ok(cantelli(m.standardize(eta)))
}

/// Feasible interval for the CDF at `η`.
pub fn cdf_envelope(m: &Moments, eta: f64) -> Result<CdfEnvelope> {
    check_threshold(eta)?;
    let t = m.standardize(eta);
    let lower = if eta >= m.mu { 1.0 - cantelli(t) } else { 0.0 };
    let upper = if eta > m.mu { 1.0 } else { cantelli(t) };
    Ok(CdfEnvelope { lower, upper })
}

/// Upper bound on `Pr(x ≤ η₁ or x ≥ η₂)` in the two-branch closed form.
///
/// With `a = (μ−η₁)/σ` and `b = (η₂−μ)/σ` for `η₁ < μ < η₂`: returns
/// `max{1/(ab), 1/(1+min(a,b)²)}` when `ab ≥ 1`, otherwise `1`. Thresholds on the same
/// side of the mean give `1`.
///
/// This form is attained for symmetric intervals and when the one-sided branch
/// dominates, but for asymmetric intervals with `ab > 1` a three-atom distribution with
/// its middle atom at the interval midpoint can exceed it (e.g. `a = 1, b = 2`: 5/9
/// against 1/2). See [`outside_interval_sharp_bound`].
pub fn outside_interval_upper_bound(m: &Moments, iv: &Interval) -> Result<f64> {
    let Some((a, b)) = straddle_distances(m, iv) else {
        return Ok(1.0);
    };
    let product = a * b;
    if product < 1.0 {
        return Ok(1.0);
    }
    let near = a.min(b);
    Ok((1.0 / product).max(cantelli(near)))
}

/// Sharp upper bound on `Pr(x ≤ η₁ or x ≥ η₂)` over all distributions with the given
/// moments.
///
/// With `a ≤ b` the standardized distances to the nearer and farther threshold:
/// `1` if `ab ≤ 1`; `1/(1+a²)` if `(ab−1)(b²−a²) > 4ab + (b−a)²`; otherwise
/// `(4 + (b−a)²)/(a+b)²`.
pub fn outside_interval_sharp_bound(m: &Moments, iv: &Interval) -> Result<f64> {
    let Some((d1, d2)) = straddle_distances(m, iv) else {
        return Ok(1.0);
    };
    let (a, b) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
    if a * b <= 1.0 {
        return Ok(1.0);
    }
    let gap = b - a;
    // three-point optimum (atoms at both thresholds and the midpoint of the gap) is
    // feasible only while its far-threshold mass stays non-negative
    if (a * b - 1.0) * (b * b - a * a) > 4.0 * a * b + gap * gap {
        return Ok(cantelli(a));
    }
    Ok((4.0 + gap * gap) / ((a + b) * (a + b)))
}

/// Tightest upper bound on `Pr(η₁ ≤ x ≤ η₂)`.
///
/// Same-side thresholds give the one-sided bound at the nearer threshold; an interval
/// strictly containing the mean gives `1`. A threshold exactly at the mean is rejected.
pub fn inside_interval_upper_bound(m: &Moments, iv: &Interval) -> Result<f64> {
    if iv.lo == m.mu || iv.hi == m.mu {
        return Err(Error::DegenerateThreshold(format!("interval end coincides with the mean {}", m.mu)));
    }
    if iv.lo < m.mu && m.mu < iv.hi {
        return Ok(1.0);
    }
    let near = m.standardize(iv.lo).abs().min(m.standardize(iv.hi).abs());
    Ok(cantelli(near))
}

/// Lower bound on `Pr(η₁ ≤ x ≤ η₂)`, the complement of
/// [`outside_interval_upper_bound`] on its non-trivial branch and `0` elsewhere.
pub fn inside_interval_lower_bound(m: &Moments, iv: &Interval) -> Result<f64> {
    let Some((a, b)) = straddle_distances(m, iv) else {
        return Ok(0.0);
    };
    if a * b < 1.0 {
        return Ok(0.0);
    }
    Ok(1.0 - outside_interval_upper_bound(m, iv)?)
}

/// Worst-case true-positive probability `s/(1+s)` for a signal-to-noise ratio `s`.
pub fn tp_bound_from_snr(s: f64) -> Result<f64> {
    if !(s >= 0.0) || s.is_infinite() {
        return Err(invalid(format!("snr must be finite and non-negative, got {s}")));
    }
    Ok(s / (1.0 + s))
}

/// Standardized distances `(μ−η₁, η₂−μ)/σ` when the interval strictly straddles the mean.
fn straddle_distances(m: &Moments, iv: &Interval) -> Option<(f64, f64)> {
    if iv.lo < m.mu && m.mu < iv.hi {
        Some((-m.standardize(iv.lo), m.standardize(iv.hi)))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(mu: f64, var: f64) -> Moments {
        Moments::new(mu, var).unwrap()
    }

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn rejects_bad_moments() {
        assert!(Moments::new(0.0, 0.0).is_err());
        assert!(Moments::new(0.0, -1.0).is_err());
        assert!(Moments::new(f64::NAN, 1.0).is_err());
        assert!(Moments::new(0.0, f64::INFINITY).is_err());
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
    }

    #[test]
    fn tail_examples() {
        assert_eq!(upper_tail_bound(&m(0.0, 1.0), 2.0).unwrap(), 0.2);
        assert_eq!(upper_tail_bound(&m(0.0, 1.0), -1.0).unwrap(), 1.0);
        assert_eq!(upper_tail_bound(&m(0.0, 1.0), 1.0).unwrap(), 0.5);
        assert_eq!(upper_tail_bound(&m(0.0, 1.0), 0.0).unwrap(), 1.0);
        assert!(upper_tail_bound(&m(0.0, 1.0), f64::NAN).is_err());
    }

    #[test]
    fn envelope_examples() {
        let e = cdf_envelope(&m(0.0, 1.0), 0.0).unwrap();
        assert_eq!((e.lower, e.upper), (0.0, 1.0));
        let e = cdf_envelope(&m(0.0, 1.0), 3.0).unwrap();
        assert!((e.lower - 0.9).abs() < 1e-15);
        assert_eq!(e.upper, 1.0);
        let e = cdf_envelope(&m(2.0, 4.0), 0.0).unwrap();
        assert_eq!((e.lower, e.upper), (0.0, 0.5));
    }

    #[test]
    fn outside_examples() {
        let unit = m(0.0, 1.0);
        assert_eq!(outside_interval_upper_bound(&unit, &iv(-2.0, 2.0)).unwrap(), 0.25);
        assert_eq!(outside_interval_upper_bound(&unit, &iv(-0.5, 1.0)).unwrap(), 1.0);
        assert_eq!(outside_interval_upper_bound(&unit, &iv(-4.0, 1.0)).unwrap(), 0.5);
        // same side
        assert_eq!(outside_interval_upper_bound(&unit, &iv(1.0, 2.0)).unwrap(), 1.0);
        assert_eq!(outside_interval_upper_bound(&unit, &iv(-3.0, -1.0)).unwrap(), 1.0);
    }

    #[test]
    fn sharp_outside_agrees_on_shared_examples() {
        let unit = m(0.0, 1.0);
        for (lo, hi) in [(-2.0, 2.0), (-0.5, 1.0), (-4.0, 1.0), (-1.0, 3.0)] {
            let a = outside_interval_upper_bound(&unit, &iv(lo, hi)).unwrap();
            let b = outside_interval_sharp_bound(&unit, &iv(lo, hi)).unwrap();
            assert!((a - b).abs() < 1e-15, "({lo},{hi}): {a} vs {b}");
        }
        // asymmetric middle region: two-branch form undershoots
        let two_branch = outside_interval_upper_bound(&unit, &iv(-1.0, 2.0)).unwrap();
        let sharp = outside_interval_sharp_bound(&unit, &iv(-1.0, 2.0)).unwrap();
        assert_eq!(two_branch, 0.5);
        assert!((sharp - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn inside_examples() {
        let unit = m(0.0, 1.0);
        assert_eq!(inside_interval_upper_bound(&unit, &iv(1.0, 3.0)).unwrap(), 0.5);
        assert_eq!(inside_interval_upper_bound(&unit, &iv(-1.0, 1.0)).unwrap(), 1.0);
        assert_eq!(inside_interval_upper_bound(&m(5.0, 4.0), &iv(1.0, 3.0)).unwrap(), 0.5);
        assert!(matches!(inside_interval_upper_bound(&unit, &iv(0.0, 1.0)), Err(Error::DegenerateThreshold(_))));
        assert!(matches!(inside_interval_upper_bound(&unit, &iv(-1.0, 0.0)), Err(Error::DegenerateThreshold(_))));

        assert_eq!(inside_interval_lower_bound(&unit, &iv(-2.0, 2.0)).unwrap(), 0.75);
        assert_eq!(inside_interval_lower_bound(&unit, &iv(-0.5, 1.0)).unwrap(), 0.0);
        assert_eq!(inside_interval_lower_bound(&unit, &iv(1.0, 2.0)).unwrap(), 0.0);
    }

    #[test]
    fn snr_examples() {
        assert_eq!(tp_bound_from_snr(0.0).unwrap(), 0.0);
        assert_eq!(tp_bound_from_snr(4.0).unwrap(), 0.8);
        assert!((tp_bound_from_snr(1e6).unwrap() - 0.999999).abs() < 1e-9);
        assert!(tp_bound_from_snr(-1e-3).is_err());
        assert!(tp_bound_from_snr(f64::NAN).is_err());
    }

    fn moments_strategy() -> impl Strategy<Value = Moments> {
        (-50.0..50.0f64, 0.01..100.0f64).prop_map(|(mu, var)| Moments::new(mu, var).unwrap())
    }

    proptest! {
        #[test]
        fn envelope_is_ordered(mm in moments_strategy(), t in -20.0..20.0f64) {
            let e = cdf_envelope(&mm, mm.destandardize(t)).unwrap();
            prop_assert!(0.0 <= e.lower && e.lower <= e.upper && e.upper <= 1.0);
        }

        #[test]
        fn envelope_lower_complements_tail(mm in moments_strategy(), t in 0.0..20.0f64) {
            let eta = mm.destandardize(t);
            prop_assume!(eta >= mm.mu());
            let e = cdf_envelope(&mm, eta).unwrap();
            let tail = upper_tail_bound(&mm, eta).unwrap();
            prop_assert!((e.lower - (1.0 - tail)).abs() < 1e-15);
        }

        #[test]
        fn reflection_symmetry(mm in moments_strategy(), eta in -100.0..100.0f64) {
            // Pr(x ≥ η) for (μ, σ²) equals Pr(−x ≤ −η), whose bound is the CDF upper
            // envelope of the reflected variable at −η.
            let reflected = Moments::new(-mm.mu(), mm.var()).unwrap();
            let tail = upper_tail_bound(&mm, eta).unwrap();
            let cdf_upper = cdf_envelope(&reflected, -eta).unwrap().upper;
            if eta != mm.mu() {
                prop_assert!((tail - cdf_upper).abs() < 1e-12);
            }
        }

        #[test]
        fn affine_equivariance(
            mm in moments_strategy(),
            t1 in -6.0..6.0f64,
            w in 0.1..6.0f64,
            a in 0.1..10.0f64,
            shift in -10.0..10.0f64,
        ) {
            let (e1, e2) = (mm.destandardize(t1), mm.destandardize(t1 + w));
            prop_assume!(e1 != mm.mu() && e2 != mm.mu());
            let moved = Moments::new(a * mm.mu() + shift, a * a * mm.var()).unwrap();
            let (f1, f2) = (a * e1 + shift, a * e2 + shift);
            prop_assume!(f1 != moved.mu() && f2 != moved.mu());
            let i0 = Interval::new(e1, e2).unwrap();
            let i1 = Interval::new(f1, f2).unwrap();
            let tol = 1e-9;
            prop_assert!((upper_tail_bound(&mm, e1).unwrap() - upper_tail_bound(&moved, f1).unwrap()).abs() < tol);
            prop_assert!((outside_interval_upper_bound(&mm, &i0).unwrap() - outside_interval_upper_bound(&moved, &i1).unwrap()).abs() < tol);
            prop_assert!((inside_interval_upper_bound(&mm, &i0).unwrap() - inside_interval_upper_bound(&moved, &i1).unwrap()).abs() < tol);
            prop_assert!((inside_interval_lower_bound(&mm, &i0).unwrap() - inside_interval_lower_bound(&moved, &i1).unwrap()).abs() < tol);
        }

        #[test]
        fn tail_is_monotone_above_mean(mm in moments_strategy(), t in 0.0..30.0f64, dt in 0.0..5.0f64) {
            let lo = upper_tail_bound(&mm, mm.destandardize(t)).unwrap();
            let hi = upper_tail_bound(&mm, mm.destandardize(t + dt)).unwrap();
            prop_assert!(hi <= lo);
        }

        #[test]
        fn sharp_outside_dominates_two_branch(mm in moments_strategy(), a in 0.05..8.0f64, b in 0.05..8.0f64) {
            let i = Interval::new(mm.destandardize(-a), mm.destandardize(b)).unwrap();
            let two = outside_interval_upper_bound(&mm, &i).unwrap();
            let sharp = outside_interval_sharp_bound(&mm, &i).unwrap();
            prop_assert!(sharp >= two - 1e-12);
        }
    }
}
