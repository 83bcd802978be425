//! Complex functions sampled on a uniform grid: input/output field
//! envelopes in time and spin waves along the medium.

use crate::error::{Error, Result};
use crate::quadrature::trapezoid_weights;
use crate::C64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Time,
    Space,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSample {
    domain: Domain,
    start: f64,
    step: f64,
    samples: Vec<C64>,
}

impl ModeSample {
    pub fn new(domain: Domain, start: f64, step: f64, samples: Vec<C64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument("a mode needs at least two samples".into()));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid step must be positive, got {step}")));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("mode samples must be finite".into()));
        }
        Ok(Self { domain, start, step, samples })
    }

    /// Samples `f` at `n` uniformly spaced points on `[start, end]`.
    pub fn from_fn(domain: Domain, start: f64, end: f64, n: usize, f: impl Fn(f64) -> C64) -> Result<Self> {
        if n < 2 || !(end > start) {
            return Err(Error::InvalidArgument("need n ≥ 2 and end > start".into()));
        }
        let step = (end - start) / (n - 1) as f64;
        let samples = (0..n).map(|k| f(start + k as f64 * step)).collect();
        Self::new(domain, start, step, samples)
    }

    /// Spin wave on `z ∈ [0, 1]` with `nz` points.
    pub fn spin_wave(nz: usize, f: impl Fn(f64) -> C64) -> Result<Self> {
        Self::from_fn(Domain::Space, 0.0, 1.0, nz, f)
    }

    /// `√3 z`, the large-depth optimal spin wave for forward retrieval.
    pub fn linear_ramp(nz: usize) -> Self {
        Self::spin_wave(nz, |z| C64::new(3f64.sqrt() * z, 0.0)).expect("valid grid")
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * (self.samples.len() - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [C64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<C64> {
        self.samples
    }

    pub fn x(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.x(k))
    }

    /// `∫|·|²` by the trapezoidal rule.
    pub fn norm_sq(&self) -> f64 {
        self.samples
            .iter()
            .zip(trapezoid_weights(self.len(), self.step))
            .map(|(s, w)| s.norm_sqr() * w)
            .sum()
    }

    /// `∫ conj(self)·other`.
    pub fn inner(&self, other: &ModeSample) -> Result<C64> {
        self.check_same_grid(other)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .zip(trapezoid_weights(self.len(), self.step))
            .map(|((a, b), w)| a.conj() * b * w)
            .sum())
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sq();
        if !(n > 0.0) {
            return Err(Error::InvalidArgument("cannot normalize a zero mode".into()));
        }
        Ok(self.scaled(C64::new(1.0 / n.sqrt(), 0.0)))
    }

    pub fn scaled(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|s| *s *= c);
        out
    }

    /// `‖a − b‖` on a shared grid.
    pub fn l2_distance(&self, other: &ModeSample) -> Result<f64> {
        self.check_same_grid(other)?;
        let diff = ModeSample {
            samples: self.samples.iter().zip(&other.samples).map(|(a, b)| a - b).collect(),
            ..self.clone()
        };
        Ok(diff.norm_sq().sqrt())
    }

    /// Distance between the two normalized modes after removing a global phase.
    pub fn phase_aligned_distance(&self, other: &ModeSample) -> Result<f64> {
        let a = self.normalized()?;
        let b = other.normalized()?;
        let overlap = a.inner(&b)?.norm().min(1.0);
        Ok((2.0 - 2.0 * overlap).max(0.0).sqrt())
    }

    /// `x ↦ conj(f(start + end − x))`.
    pub fn time_reversed(&self) -> Self {
        let mut out = self.clone();
        out.samples = self.samples.iter().rev().map(|s| s.conj()).collect();
        out
    }

    /// `z ↦ f(1 − z)` style mirror without conjugation.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        out.samples.reverse();
        out
    }

    /// Piecewise-linear interpolation; zero outside the grid.
    pub fn at(&self, x: f64) -> C64 {
        let u = (x - self.start) / self.step;
        if u < -1e-12 || u > (self.len() - 1) as f64 + 1e-12 {
            return C64::new(0.0, 0.0);
        }
        let u = u.clamp(0.0, (self.len() - 1) as f64);
        let k = (u.floor() as usize).min(self.len() - 2);
        let frac = u - k as f64;
        self.samples[k] * (1.0 - frac) + self.samples[k + 1] * frac
    }

    /// Resample by linear interpolation onto `n` points over `[start, end]`.
    pub fn resampled(&self, start: f64, end: f64, n: usize) -> Result<Self> {
        Self::from_fn(self.domain, start, end, n, |x| self.at(x))
    }

    fn check_same_grid(&self, other: &ModeSample) -> Result<()> {
        if self.len() != other.len()
            || (self.step - other.step).abs() > 1e-12 * self.step
            || (self.start - other.start).abs() > 1e-12 * (1.0 + self.step)
        {
            return Err(Error::InvalidArgument("modes live on different grids".into()));
        }
        Ok(())
    }

    /// CSV with columns `(t|z, re, im)`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let axis = match self.domain {
            Domain::Time => "t",
            Domain::Space => "z",
        };
        let rows: Vec<Vec<f64>> = self
            .grid()
            .zip(&self.samples)
            .map(|(x, s)| vec![x, s.re, s.im])
            .collect();
        write_csv_atomic(path, &[axis, "re", "im"], &rows)
    }
}

/// Number formatting used in every CSV: scientific, 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

/// Writes a CSV through a temporary file and renames it into place.
pub fn write_csv_atomic(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut body = header.join(",");
    body.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| fmt_num(*x)).collect();
        body.push_str(&line.join(","));
        body.push('\n');
    }
    write_atomic(path, body.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_is_normalized() {
        let m = ModeSample::linear_ramp(2001);
        assert!((m.norm_sq() - 1.0).abs() < 1e-6);
        assert!((m.normalized().unwrap().norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phase_alignment_ignores_global_phase() {
        let m = ModeSample::linear_ramp(101);
        let rotated = m.scaled(C64::from_polar(2.0, 1.1));
        assert!(m.phase_aligned_distance(&rotated).unwrap() < 1e-7);
    }

    #[test]
    fn interpolation_and_reversal() {
        let m = ModeSample::from_fn(Domain::Time, 0.0, 2.0, 3, |t| C64::new(t, 1.0)).unwrap();
        assert_eq!(m.at(0.5), C64::new(0.5, 1.0));
        assert_eq!(m.at(3.0), C64::new(0.0, 0.0));
        let r = m.time_reversed();
        assert_eq!(r.samples()[0], C64::new(2.0, -1.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ModeSample::new(Domain::Time, 0.0, 0.1, vec![C64::new(f64::NAN, 0.0); 3]).is_err());
        assert!(ModeSample::new(Domain::Time, 0.0, 0.1, vec![C64::new(0.0, 0.0); 3])
            .unwrap()
            .normalized()
            .is_err());
    }

    #[test]
    fn csv_format() {
        let dir = std::env::temp_dir().join(format!("pm-mode-{}", std::process::id()));
        let path = dir.join("m.csv");
        ModeSample::linear_ramp(3).write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("z,re,im\n0.00000000000e0,"));
        std::fs::remove_dir_all(dir).ok();
    }
}
