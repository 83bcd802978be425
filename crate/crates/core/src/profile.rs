//! Inhomogeneous line shapes and frequency classes.
//!
//! A profile `p(Δ)` enters the dynamics only through its resolvent
//!
//! ```text
//! f(v) = ∫ dΔ p(Δ) / (1 + v + iΔ)
//! ```
//!
//! which has closed forms for the homogeneous, Lorentzian and Gaussian
//! shapes. The time-domain solvers instead work with a finite set of
//! [`FrequencyClasses`] produced by [`LineProfile::discretize`].

use crate::erfc::{scaled_erfc, scaled_erfc_derivative};
use crate::error::{Error, Result};
use crate::quadrature::gauss_hermite;
use crate::C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

/// Lorentzian classes are truncated at this many half widths.
pub const LORENTZIAN_TRUNCATION: f64 = 40.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LineProfile {
    Homogeneous,
    /// `width` is the half width at half maximum.
    Lorentzian { width: f64 },
    /// `width` is the standard deviation σ.
    Gaussian { width: f64 },
    /// Explicit classes as `(detuning, weight)` pairs.
    Discrete { nodes: Vec<(f64, f64)> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Lorentzian,
    Gaussian,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Lorentzian => "lorentzian",
            Family::Gaussian => "gaussian",
        }
    }

    /// Profile of this family with the given half width at half maximum.
    pub fn with_hwhm(self, hwhm: f64) -> LineProfile {
        if hwhm <= 0.0 {
            return LineProfile::Homogeneous;
        }
        match self {
            Family::Lorentzian => LineProfile::Lorentzian { width: hwhm },
            Family::Gaussian => LineProfile::Gaussian { width: hwhm / (2.0 * LN_2).sqrt() },
        }
    }
}

impl LineProfile {
    pub fn lorentzian(hwhm: f64) -> Result<Self> {
        let p = LineProfile::Lorentzian { width: hwhm };
        p.validate()?;
        Ok(p)
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        let p = LineProfile::Gaussian { width: sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn gaussian_from_hwhm(hwhm: f64) -> Result<Self> {
        Self::gaussian(hwhm / (2.0 * LN_2).sqrt())
    }

    pub fn discrete(nodes: Vec<(f64, f64)>) -> Result<Self> {
        let p = LineProfile::Discrete { nodes };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LineProfile::Homogeneous => Ok(()),
            LineProfile::Lorentzian { width } | LineProfile::Gaussian { width } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "{} width must be positive, got {width}",
                        self.kind_name()
                    )));
                }
                Ok(())
            }
            LineProfile::Discrete { nodes } => {
                if nodes.is_empty() {
                    return Err(Error::InvalidArgument("discrete profile needs nodes".into()));
                }
                if nodes.iter().any(|(d, p)| !d.is_finite() || !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::InvalidArgument("discrete weights must be nonnegative".into()));
                }
                let sum: f64 = nodes.iter().map(|n| n.1).sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "discrete weights sum to {sum}, expected 1"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LineProfile::Homogeneous => "homogeneous",
            LineProfile::Lorentzian { .. } => "lorentzian",
            LineProfile::Gaussian { .. } => "gaussian",
            LineProfile::Discrete { .. } => "discrete",
        }
    }

    /// Half width at half maximum (zero when homogeneous).
    pub fn hwhm(&self) -> Option<f64> {
        match self {
            LineProfile::Homogeneous => Some(0.0),
            LineProfile::Lorentzian { width } => Some(*width),
            LineProfile::Gaussian { width } => Some(width * (2.0 * LN_2).sqrt()),
            LineProfile::Discrete { .. } => None,
        }
    }

    /// Characteristic spectral extent used for grid sizing.
    pub fn spread(&self) -> f64 {
        match self {
            LineProfile::Homogeneous => 0.0,
            LineProfile::Lorentzian { width } => *width,
            LineProfile::Gaussian { width } => 3.0 * width,
            LineProfile::Discrete { nodes } => {
                nodes.iter().map(|n| n.0.abs()).fold(0.0, f64::max)
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            LineProfile::Discrete { nodes } => FrequencyClasses::new(nodes.clone())
                .map(|c| c.pairing().is_some())
                .unwrap_or(false),
            _ => true,
        }
    }

    /// Line shape `p(Δ)`.
    pub fn density(&self, detuning: f64) -> Result<f64> {
        match self {
            LineProfile::Homogeneous => Ok(if detuning == 0.0 { f64::INFINITY } else { 0.0 }),
            LineProfile::Lorentzian { width } => Ok(width / PI / (detuning * detuning + width * width)),
            LineProfile::Gaussian { width } => Ok((-(detuning * detuning) / (2.0 * width * width)).exp()
                / (2.0 * PI * width * width).sqrt()),
            LineProfile::Discrete { .. } => Err(Error::Unsupported { kind: "discrete", op: "density" }),
        }
    }

    /// Resolvent `f(v)`; fails only at a pole of a discrete profile.
    pub fn resolvent(&self, v: C64) -> Result<C64> {
        let near = |den: C64| den.norm() < 1e-300;
        match self {
            LineProfile::Homogeneous if near(v + 1.0) => return Err(Error::Pole(format!("{v}"))),
            LineProfile::Lorentzian { width } if near(v + 1.0 + width) => return Err(Error::Pole(format!("{v}"))),
            _ => {}
        }
        if let LineProfile::Discrete { nodes } = self {
            for &(delta, _) in nodes {
                let den = C64::new(1.0, delta) + v;
                if den.norm() < 1e-300 {
                    return Err(Error::Pole(format!("{v}")));
                }
            }
        }
        Ok(self.f(v))
    }

    /// Resolvent without the pole check.
    #[inline]
    pub fn f(&self, v: C64) -> C64 {
        let one_v = v + 1.0;
        match self {
            LineProfile::Homogeneous => 1.0 / one_v,
            LineProfile::Lorentzian { width } => 1.0 / (one_v + width),
            LineProfile::Gaussian { width } => {
                let s = std::f64::consts::SQRT_2 * width;
                (PI / 2.0).sqrt() / width * scaled_erfc(one_v / s)
            }
            LineProfile::Discrete { nodes } => nodes
                .iter()
                .map(|&(delta, p)| p / (one_v + C64::new(0.0, delta)))
                .sum(),
        }
    }

    /// Resolvent with a configurable homogeneous decay rate: `⟨1/(decay + v + iΔ)⟩`.
    /// `decay = 0` is the decay-free scaled limit.
    #[inline]
    pub fn f_with_decay(&self, v: C64, decay: f64) -> C64 {
        self.f(v + (decay - 1.0))
    }

    /// `df/dv`.
    pub fn f_derivative(&self, v: C64) -> C64 {
        let one_v = v + 1.0;
        match self {
            LineProfile::Homogeneous => -1.0 / (one_v * one_v),
            LineProfile::Lorentzian { width } => {
                let a = one_v + width;
                -1.0 / (a * a)
            }
            LineProfile::Gaussian { width } => {
                let s = std::f64::consts::SQRT_2 * width;
                (PI / 2.0).sqrt() / width * scaled_erfc_derivative(one_v / s) / s
            }
            LineProfile::Discrete { nodes } => nodes
                .iter()
                .map(|&(delta, p)| {
                    let a = one_v + C64::new(0.0, delta);
                    -p / (a * a)
                })
                .sum(),
        }
    }

    /// Divided difference `(f(v) − f(w)) / (w − v) = ⟨1/((1+v+iΔ)(1+w+iΔ))⟩`,
    /// continuous across `v = w`.
    pub fn f_divided(&self, v: C64, w: C64) -> C64 {
        let a = v + 1.0;
        let b = w + 1.0;
        match self {
            LineProfile::Homogeneous => 1.0 / (a * b),
            LineProfile::Lorentzian { width } => 1.0 / ((a + width) * (b + width)),
            LineProfile::Discrete { nodes } => nodes
                .iter()
                .map(|&(delta, p)| p / ((a + C64::new(0.0, delta)) * (b + C64::new(0.0, delta))))
                .sum(),
            LineProfile::Gaussian { width } => {
                let gap = (w - v).norm();
                if gap < 1e-6 * (1.0 + width + a.norm()) {
                    -self.f_derivative(0.5 * (v + w))
                } else {
                    (self.f(v) - self.f(w)) / (w - v)
                }
            }
        }
    }

    /// Discretize into `m` frequency classes.
    pub fn discretize(&self, m: usize) -> Result<FrequencyClasses> {
        if m == 0 {
            return Err(Error::InvalidArgument("class count must be at least 1".into()));
        }
        let nodes = match self {
            LineProfile::Homogeneous => vec![(0.0, 1.0)],
            LineProfile::Gaussian { width } => {
                let (x, w) = gauss_hermite(m);
                let norm = PI.sqrt();
                x.iter()
                    .zip(&w)
                    .map(|(x, w)| (std::f64::consts::SQRT_2 * width * x, w / norm))
                    .collect()
            }
            LineProfile::Lorentzian { width } => {
                let theta_max = LORENTZIAN_TRUNCATION.atan();
                let step = 2.0 * theta_max / m as f64;
                (0..m)
                    .map(|k| {
                        let theta = -theta_max + (k as f64 + 0.5) * step;
                        (width * theta.tan(), 1.0 / m as f64)
                    })
                    .collect()
            }
            LineProfile::Discrete { nodes } => nodes.clone(),
        };
        FrequencyClasses::new(nodes)
    }

    /// Observed resonant depth `d' = d·∫ p(Δ)/(1+Δ²) dΔ = d·Re f(0)`.
    pub fn effective_depth(&self, d: f64) -> f64 {
        d * self.f(C64::new(0.0, 0.0)).re
    }
}

/// Width of the given family that reduces `d` to the observed depth `d_prime`.
pub fn width_for_effective_depth(d: f64, d_prime: f64, family: Family) -> Result<LineProfile> {
    if !(d > 0.0 && d_prime > 0.0) {
        return Err(Error::InvalidArgument("depths must be positive".into()));
    }
    if d_prime > d * (1.0 + 1e-15) {
        return Err(Error::InvalidArgument(format!(
            "observed depth {d_prime} exceeds unbroadened depth {d}"
        )));
    }
    if (d - d_prime).abs() <= 1e-15 * d {
        return Ok(LineProfile::Homogeneous);
    }
    let make = |w: f64| match family {
        Family::Lorentzian => LineProfile::Lorentzian { width: w },
        Family::Gaussian => LineProfile::Gaussian { width: w },
    };
    let ratio = |w: f64| make(w).effective_depth(1.0);
    let target = d_prime / d;
    let mut lo = 1e-12f64;
    let mut hi = 1.0f64;
    while ratio(hi) > target {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(Error::Bracket("width bracket exceeded 1e15".into()));
        }
    }
    // monotone decreasing: bisect in log space
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if ratio(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    Ok(make((lo * hi).sqrt()))
}

/// Quadrature set of frequency classes with `Σ p_j = 1`, sorted by detuning.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyClasses {
    detunings: Vec<f64>,
    weights: Vec<f64>,
    sqrt_weights: Vec<f64>,
    pairing: Option<Vec<usize>>,
}

impl FrequencyClasses {
    pub fn new(mut nodes: Vec<(f64, f64)>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("no frequency classes".into()));
        }
        if nodes.iter().any(|n| !(n.1 >= 0.0) || !n.0.is_finite()) {
            return Err(Error::InvalidArgument("class weights must be nonnegative".into()));
        }
        let sum: f64 = nodes.iter().map(|n| n.1).sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("class weights sum to {sum}")));
        }
        for n in nodes.iter_mut() {
            n.1 /= sum;
        }
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (detunings, weights): (Vec<f64>, Vec<f64>) = nodes.into_iter().unzip();
        let scale = detunings.iter().map(|d| d.abs()).fold(1.0, f64::max);
        let m = detunings.len();
        let symmetric = (0..m).all(|j| {
            let k = m - 1 - j;
            (detunings[j] + detunings[k]).abs() <= 1e-12 * scale
                && (weights[j] - weights[k]).abs() <= 1e-12
        });
        let pairing = symmetric.then(|| (0..m).rev().collect());
        let sqrt_weights = weights.iter().map(|p| p.sqrt()).collect();
        Ok(Self { detunings, weights, sqrt_weights, pairing })
    }

    pub fn len(&self) -> usize {
        self.detunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detunings.is_empty()
    }

    pub fn detunings(&self) -> &[f64] {
        &self.detunings
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_weights
    }

    /// `j ↦ −j` map, present when the classes are symmetric about zero.
    pub fn pairing(&self) -> Option<&[usize]> {
        self.pairing.as_deref()
    }

    pub fn max_abs_detuning(&self) -> f64 {
        self.detunings.iter().map(|d| d.abs()).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.detunings.iter().zip(&self.weights).map(|(d, p)| d * p).sum()
    }

    pub fn moment(&self, k: i32) -> f64 {
        self.detunings.iter().zip(&self.weights).map(|(d, p)| p * d.powi(k)).sum()
    }

    /// Finite-sum resolvent of the classes.
    pub fn resolvent(&self, v: C64) -> C64 {
        self.detunings
            .iter()
            .zip(&self.weights)
            .map(|(&d, &p)| p / (v + C64::new(1.0, d)))
            .sum()
    }

    pub fn to_profile(&self) -> LineProfile {
        LineProfile::Discrete {
            nodes: self.detunings.iter().copied().zip(self.weights.iter().copied()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_gk;

    fn quad_resolvent_gaussian(sigma: f64, v: C64) -> C64 {
        let p = LineProfile::Gaussian { width: sigma };
        let lim = 12.0 * sigma;
        let bp: Vec<f64> = (0..=48).map(|i| -lim + 2.0 * lim * i as f64 / 48.0).collect();
        let re = adaptive_gk(
            |x| p.density(x).unwrap() * (1.0 / (v + C64::new(1.0, x))).re,
            &bp,
            1e-14,
            5000,
        )
        .0;
        let im = adaptive_gk(
            |x| p.density(x).unwrap() * (1.0 / (v + C64::new(1.0, x))).im,
            &bp,
            1e-14,
            5000,
        )
        .0;
        C64::new(re, im)
    }

    #[test]
    fn peak_densities() {
        let l = LineProfile::lorentzian(1.0).unwrap();
        assert!((l.density(0.0).unwrap() - 1.0 / PI).abs() < 1e-15);
        let g = LineProfile::gaussian(1.0).unwrap();
        assert!((g.density(0.0).unwrap() - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!(LineProfile::discrete(vec![(0.0, 1.0)]).unwrap().density(0.0).is_err());
    }

    #[test]
    fn densities_are_normalized() {
        for p in [LineProfile::Lorentzian { width: 0.7 }, LineProfile::Gaussian { width: 2.3 }] {
            let w = p.hwhm().unwrap();
            let lim = 50.0 * w;
            let bp: Vec<f64> = (0..=200).map(|i| -lim + 2.0 * lim * i as f64 / 200.0).collect();
            let (mass, _) = adaptive_gk(|x| p.density(x).unwrap(), &bp, 1e-13, 10000);
            let expected = match p {
                // tails beyond ±50 HWHM
                LineProfile::Lorentzian { .. } => 2.0 / PI * 50f64.atan(),
                _ => 1.0,
            };
            assert!((mass - expected).abs() < 1e-8, "{p:?}: {mass}");
        }
    }

    #[test]
    fn closed_form_resolvents() {
        let v0 = C64::new(0.0, 0.0);
        assert_eq!(LineProfile::Homogeneous.f(v0), C64::new(1.0, 0.0));
        let l = LineProfile::Lorentzian { width: 88.0 };
        assert!((l.f(v0).re - 1.0 / 89.0).abs() < 1e-15);
        let g = LineProfile::Gaussian { width: 1.0 };
        let q = quad_resolvent_gaussian(1.0, v0);
        assert!((g.f(v0) - q).norm() < 1e-10);
        assert!((g.f(v0).re - 0.65568).abs() < 1e-5);
    }

    #[test]
    fn gaussian_resolvent_matches_quadrature_on_grid() {
        let g = LineProfile::Gaussian { width: 1.0 };
        for re in [0.0, 0.5, 2.0, 5.0, 10.0] {
            for im in [-10.0, -3.0, -0.4, 0.0, 1.0, 6.0, 10.0] {
                let v = C64::new(re, im);
                let q = quad_resolvent_gaussian(1.0, v);
                assert!((g.f(v) - q).norm() < 1e-10, "v = {v}");
            }
        }
    }

    #[test]
    fn gaussian_narrow_limit_is_homogeneous() {
        let g = LineProfile::Gaussian { width: 1e-4 };
        for re in [0.0, 1.0, 4.0] {
            for im in [-5.0, 0.0, 2.0] {
                let v = C64::new(re, im);
                assert!((g.f(v) - 1.0 / (1.0 + v)).norm() < 1e-3);
            }
        }
    }

    #[test]
    fn discrete_pole_is_reported() {
        let p = LineProfile::discrete(vec![(2.0, 0.5), (-2.0, 0.5)]).unwrap();
        assert!(p.resolvent(C64::new(-1.0, -2.0)).is_err());
        assert!(p.resolvent(C64::new(0.0, 0.0)).is_ok());
    }

    #[test]
    fn discretize_properties() {
        let h = LineProfile::Homogeneous.discretize(1).unwrap();
        assert_eq!(h.detunings(), &[0.0]);
        assert_eq!(h.weights(), &[1.0]);
        let g = LineProfile::Gaussian { width: 1.0 }.discretize(64).unwrap();
        assert!((g.moment(2) - 1.0).abs() < 1e-10);
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(g.pairing().is_some());
        assert!(g.mean().abs() < 1e-12);
        let l = LineProfile::Lorentzian { width: 2.0 }.discretize(129).unwrap();
        assert!((l.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let outer = l.max_abs_detuning() / 2.0;
        assert!(outer > 10.0 && outer <= LORENTZIAN_TRUNCATION, "{outer}");
        assert!(l.detunings()[64].abs() < 1e-12);
        assert!(LineProfile::Homogeneous.discretize(0).is_err());
    }

    #[test]
    fn discretized_gaussian_resolvent_converges() {
        let g = LineProfile::Gaussian { width: 3.0 };
        let v = C64::new(0.5, 2.0);
        let exact = g.f(v);
        let errs: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&m| (g.discretize(m).unwrap().resolvent(v) - exact).norm())
            .collect();
        assert!(errs[1] < 0.5 * errs[0] && errs[2] < 0.5 * errs[1], "{errs:?}");
    }

    #[test]
    fn effective_depths() {
        assert_eq!(LineProfile::Homogeneous.effective_depth(7.0), 7.0);
        let l = LineProfile::Lorentzian { width: 3.0 };
        assert!((l.effective_depth(100.0) - 25.0).abs() < 1e-12);
        let g = LineProfile::gaussian_from_hwhm(88.0).unwrap();
        let ratio = g.effective_depth(1.0);
        // leading correction to the wide-line limit is −2z/√π, z = 1/(√2σ)
        let z = (LN_2).sqrt() / 88.0;
        let asymptotic = (PI * LN_2).sqrt() / 88.0 * (1.0 - 2.0 * z / PI.sqrt());
        assert!((ratio / asymptotic - 1.0).abs() < 1e-3, "{ratio} vs {asymptotic}");
        // strictly decreasing in width
        let mut last = f64::INFINITY;
        for w in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let e = LineProfile::Gaussian { width: w }.effective_depth(1.0);
            assert!(e < last);
            last = e;
        }
    }

    #[test]
    fn width_inversion() {
        let l = width_for_effective_depth(100.0, 25.0, Family::Lorentzian).unwrap();
        match l {
            LineProfile::Lorentzian { width } => assert!((width - 3.0).abs() < 1e-9),
            _ => panic!(),
        }
        let g = width_for_effective_depth(120.0, 20.0, Family::Gaussian).unwrap();
        assert!((g.effective_depth(120.0) - 20.0).abs() < 1e-9 * 20.0);
        assert_eq!(
            width_for_effective_depth(5.0, 5.0, Family::Gaussian).unwrap(),
            LineProfile::Homogeneous
        );
        assert!(width_for_effective_depth(5.0, 6.0, Family::Gaussian).is_err());
    }

    #[test]
    fn resolvent_bounded_by_real_axis_value() {
        for p in [
            LineProfile::Homogeneous,
            LineProfile::Lorentzian { width: 2.0 },
            LineProfile::Gaussian { width: 5.0 },
        ] {
            for re in [0.0, 0.3, 3.0] {
                for im in [-20.0, -1.0, 0.5, 7.0] {
                    let v = C64::new(re, im);
                    let f = p.f(v);
                    assert!(f.re > 0.0);
                    assert!(f.norm() <= p.f(C64::new(re, 0.0)).re + 1e-14);
                }
            }
        }
    }
}
