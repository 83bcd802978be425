//! Controlled reversible inhomogeneous broadening in the decay-free scaled
//! limit: time in units of the pulse duration `T`, depth `D = Tdγ`, widths
//! in units of `1/T`, and no homogeneous decay.
//!
//! With broadening, the total efficiency of fast storage and reversed
//! backward retrieval is the Plancherel norm of the `A·B` transfer applied
//! to the input. Without broadening every stored excitation is eventually
//! re-emitted, so the total efficiency equals the stored fraction, computed
//! from the transmitted field `E_in − K * E_in` with the exact kernel
//! `K(τ) = √(D/τ) J₁(2√(Dτ))`.

use crate::error::{Error, Result};
use crate::mode::ModeSample;
use crate::profile::{Family, LineProfile};
use crate::spectral::{TransferConfig, TransferMap};
use serde::{Deserialize, Serialize};

/// `J₁(x)` by its power series; accurate to ~1e-12 for `x ≤ 20`.
fn bessel_j1(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 0.5 * x;
    let mut sum = term;
    for k in 1..200 {
        term *= q / (k as f64 * (k + 1) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// `K(τ) = 2D·J₁(x)/x` with `x = 2√(Dτ)`; `K(0) = D`.
fn transmission_kernel(depth: f64, tau: f64) -> f64 {
    let x = 2.0 * (depth * tau).sqrt();
    if x < 1e-8 {
        depth
    } else {
        2.0 * depth * bessel_j1(x) / x
    }
}

/// Stored fraction for an unbroadened decay-free medium of depth `D`, with
/// the storage π pulse at the end of the input window.
pub fn unbroadened_efficiency(depth: f64, input: &ModeSample) -> Result<f64> {
    if !(depth >= 0.0) {
        return Err(Error::InvalidArgument(format!("depth must be non-negative, got {depth}")));
    }
    if depth > 100.0 {
        return Err(Error::InvalidArgument(format!("series kernel limited to D ≤ 100, got {depth}")));
    }
    let norm = input.norm_sq();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("input pulse has zero norm".into()));
    }
    let e = input.samples();
    let h = input.step();
    let n = e.len();
    let kern: Vec<f64> = (0..n).map(|k| transmission_kernel(depth, k as f64 * h)).collect();
    let mut leaked = 0.0;
    for i in 0..n {
        let mut conv = crate::C64::new(0.0, 0.0);
        for j in 0..=i {
            let w = if j == 0 || j == i { 0.5 } else { 1.0 };
            conv += e[i - j] * (kern[j] * w);
        }
        let out = e[i] - conv * h;
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        leaked += out.norm_sqr() * w * h;
    }
    Ok((1.0 - leaked / norm).clamp(0.0, 1.0))
}

/// Total efficiency of decay-free CRIB with the given HWHM (units of `1/T`).
/// `input` must span `[0, 1]`.
pub fn crib_efficiency(depth: f64, family: Family, hwhm: f64, input: &ModeSample) -> Result<f64> {
    if !(hwhm >= 0.0) {
        return Err(Error::InvalidArgument(format!("width must be non-negative, got {hwhm}")));
    }
    if hwhm == 0.0 {
        return unbroadened_efficiency(depth, input);
    }
    let cfg = TransferConfig::new(depth, family.with_hwhm(hwhm))?
        .with_reversal(true)
        .with_decay_free(true);
    TransferMap::for_duration(&cfg, input.end() - input.start())?.efficiency(input)
}

/// Exact finite-decay total efficiency in units of `γ`: depth `d`, pulse of
/// duration `γT`, broadening HWHM `width_t/T`.
pub fn crib_efficiency_with_decay(d: f64, gamma_t: f64, family: Family, width_t: f64, input: &ModeSample) -> Result<f64> {
    if !(gamma_t > 0.0) {
        return Err(Error::InvalidArgument(format!("γT must be positive, got {gamma_t}")));
    }
    let pulse = ModeSample::new(input.domain(), 0.0, input.step() * gamma_t, input.samples().to_vec())?.normalized()?;
    let profile = if width_t > 0.0 { family.with_hwhm(width_t / gamma_t) } else { LineProfile::Homogeneous };
    let cfg = TransferConfig::new(d, profile)?.with_reversal(width_t > 0.0);
    TransferMap::for_duration(&cfg, gamma_t)?.efficiency(&pulse)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CribPoint {
    /// `Tdγ`.
    pub depth: f64,
    /// Optimal `Δ_I·T`.
    pub width: f64,
    pub efficiency: f64,
    pub unbroadened: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CribScanResult {
    pub family: Family,
    pub points: Vec<CribPoint>,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximization of `η(W)` on `[0, hi]`. Stops when the
/// bracket is below `1e-3` of its upper end, or below `floor` when the
/// optimum runs into `W = 0`.
pub fn golden_section_max(
    mut eta: impl FnMut(f64) -> Result<f64>,
    hi: f64,
    floor: f64,
) -> Result<(f64, f64, usize)> {
    let (mut a, mut b) = (0.0, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (eta(x1)?, eta(x2)?);
    let mut evals = 2;
    while b - a > 1e-3 * b && b - a > floor.min(1e-3 * b).max(if a == 0.0 { floor } else { 0.0 }) {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eta(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eta(x2)?;
        }
        evals += 1;
        if evals > 200 {
            break;
        }
    }
    Ok(if f1 >= f2 { (x1, f1, evals) } else { (x2, f2, evals) })
}

/// Optimal width for each depth. The bracket `[0, 50]` doubles once if the
/// optimum sits at its upper edge; width 0 is always compared exactly.
pub fn crib_width_scan(depths: &[f64], family: Family, input: &ModeSample) -> Result<CribScanResult> {
    let mut points = Vec::with_capacity(depths.len());
    for &depth in depths {
        let unbroadened = unbroadened_efficiency(depth, input)?;
        let mut hi = 50.0;
        let mut found = None;
        for _ in 0..2 {
            let (w, e, n) = golden_section_max(|w| crib_efficiency(depth, family, w, input), hi, 0.02)?;
            if w < 0.98 * hi {
                found = Some((w, e, n));
                break;
            }
            hi *= 2.0;
        }
        let (mut width, mut efficiency, evaluations) = found
            .ok_or_else(|| Error::Bracket(format!("efficiency still rising at width {hi} for D = {depth}")))?;
        if unbroadened >= efficiency {
            width = 0.0;
            efficiency = unbroadened;
        }
        points.push(CribPoint { depth, width, efficiency, unbroadened, evaluations });
    }
    Ok(CribScanResult { family, points })
}


#[cfg(test)]
mod scan_tests {
    use super::*;
    use crate::optimizer::gaussian_like_pulse;

    #[test]
    fn gaussian_optimum_at_depth_five() {
        let pulse = gaussian_like_pulse(1.0, 1001).unwrap();
        let scan = crib_width_scan(&[5.0], Family::Gaussian, &pulse).unwrap();
        let p = &scan.points[0];
        assert!((p.width - 5.22).abs() < 0.05 && (p.efficiency - 0.614).abs() < 2e-3);
    }
}
