//! Optimal input pulses for storage followed by retrieval.
//!
//! An input that ends at the storage π pulse is represented by its spectrum
//! `Q(iξ)` on imaginary-axis nodes, scaled as `a = √(w/2π)·Q` so that
//! `Σ|a|²` is the input energy. Storage and retrieval then act as the
//! complex-symmetric matrix `N` and the total efficiency is `‖N a‖²`.
//! Time-reversing the output and feeding it back maps `a ↦ conj(N a)`.

use crate::error::{Error, Result};
use crate::mode::{Domain, ModeSample};
use crate::optimizer::{hat_mass, KernelMatrix};
use crate::quadrature::{exp_moment, exp_moment_weights_into};
use crate::spectral::{
    inverse_laplace, transfer_ab_cached, transfer_matrix, SpectralGrid, TransferConfig, TransferMap, XiNodes,
};
use crate::C64;
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

/// Storage-retrieval operator on a node set.
#[derive(Clone, Debug)]
pub struct InputOperator {
    pub cfg: TransferConfig,
    pub nodes: XiNodes,
    scale: Vec<f64>,
    f_nodes: Vec<C64>,
    matrix: DMatrix<C64>,
}

/// Converged (or best) input of the time-reversal iteration.
#[derive(Clone, Debug)]
pub struct OptimalInput {
    /// Scaled input spectrum `√(w/2π)·Q`, unit norm.
    pub amplitudes: Vec<C64>,
    pub efficiency: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

impl InputOperator {
    pub fn new(cfg: &TransferConfig) -> Result<Self> {
        Self::on_nodes(cfg, TransferMap::output_nodes(cfg))
    }

    pub fn on_nodes(cfg: &TransferConfig, nodes: XiNodes) -> Result<Self> {
        cfg.validate()?;
        if cfg.decay_free_scaled {
            return Err(Error::InvalidArgument("input optimization needs a decaying medium".into()));
        }
        let rows = transfer_matrix(cfg, &nodes);
        let n = nodes.len();
        let matrix = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        let scale = nodes.weights.iter().map(|w| (w / (2.0 * PI)).sqrt()).collect();
        let f_nodes = (0..n).map(|k| cfg.f(nodes.v(k))).collect();
        Ok(Self { cfg: cfg.clone(), nodes, scale, f_nodes, matrix })
    }

    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }

    /// Largest possible total efficiency, `σ_max(N)²`, from a dense
    /// Hermitian eigensolve of `N^H N`.
    pub fn dense_optimum(&self) -> f64 {
        let h = self.matrix.adjoint() * &self.matrix;
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Scaled spectrum of a time-domain input whose last sample is the π pulse.
    pub fn amplitudes_of(&self, input: &ModeSample) -> Vec<C64> {
        (0..self.len())
            .map(|k| self.scale[k] * exp_moment(input.samples(), input.step(), -self.nodes.v(k)))
            .collect()
    }

    pub fn efficiency_of(&self, amplitudes: &[C64]) -> f64 {
        let a = DVector::from_column_slice(amplitudes);
        let norm = a.norm_squared();
        if norm == 0.0 {
            return 0.0;
        }
        (&self.matrix * a).norm_squared() / norm
    }

    /// Repeats `a ← conj(N a)/‖N a‖` from `trial` until the efficiency
    /// changes by less than `tol`. The efficiency never decreases.
    pub fn time_reversal_iterate(&self, trial: &[C64], tol: f64, max_iters: usize) -> Result<OptimalInput> {
        if trial.len() != self.len() {
            return Err(Error::InvalidArgument("trial spectrum has the wrong length".into()));
        }
        let mut a = DVector::from_column_slice(trial);
        let norm = a.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument("trial input has zero norm".into()));
        }
        a /= C64::new(norm, 0.0);
        let mut history = Vec::new();
        let mut converged = false;
        for _ in 0..max_iters {
            let out = &self.matrix * &a;
            let eta = out.norm_squared();
            if !eta.is_finite() {
                return Err(Error::Instability("non-finite efficiency in time-reversal iteration".into()));
            }
            if eta == 0.0 {
                return Err(Error::InvalidArgument("trial input is not stored at all".into()));
            }
            let done = history.last().is_some_and(|&prev: &f64| (eta - prev).abs() < tol);
            history.push(eta);
            if done {
                converged = true;
                break;
            }
            a = out.map(|x| x.conj()) / C64::new(eta.sqrt(), 0.0);
        }
        let efficiency = *history.last().unwrap_or(&0.0);
        Ok(OptimalInput { amplitudes: a.as_slice().to_vec(), efficiency, iterations: history.len(), converged, history })
    }

    /// Output spectrum `E_out(v)` of the input with scaled amplitudes `a`,
    /// valid anywhere on the retrieval contour.
    pub fn output_spectrum(&self, amplitudes: &[C64], v: C64) -> C64 {
        let f = self.cfg.f(v);
        (0..self.len())
            .map(|l| {
                let vl = self.nodes.v(l);
                transfer_ab_cached(v, vl, f, self.f_nodes[l], &self.cfg) * (self.scale[l] * amplitudes[l])
            })
            .sum()
    }

    /// Time-domain input on `[0, duration]` that ends at the π pulse and is
    /// the phase-conjugated, time-reversed output of `amplitudes`. At the
    /// fixed point of the iteration this is the input itself. The global
    /// phase makes the largest sample real and positive; the result is
    /// scaled by `1/√η` but not renormalized on the window.
    pub fn input_mode(&self, amplitudes: &[C64], duration: f64, nt: usize) -> Result<ModeSample> {
        if !(duration > 0.0) || nt < 2 {
            return Err(Error::InvalidArgument("need a positive duration and nt ≥ 2".into()));
        }
        let eta = self.efficiency_of(amplitudes);
        if !(eta > 0.0) {
            return Err(Error::InvalidArgument("amplitudes produce no output".into()));
        }
        let base = SpectralGrid::for_medium(self.cfg.d, self.cfg.line_scale(), duration)?;
        let mut grid = base.clone();
        while grid.window() < 4.0 * duration {
            grid = grid.lengthened();
        }
        let out = inverse_laplace(|v| self.output_spectrum(amplitudes, v), &grid, 0.0, duration, nt)?;
        let norm = (eta * amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>()).sqrt();
        let mut samples: Vec<C64> = out.samples().iter().rev().map(|x| x.conj() / norm).collect();
        let peak = samples.iter().cloned().fold(C64::new(0.0, 0.0), |m, x| if x.norm() > m.norm() { x } else { m });
        if peak.norm() > 0.0 {
            let phase = peak.conj() / peak.norm();
            samples.iter_mut().for_each(|x| *x *= phase);
        }
        ModeSample::new(Domain::Time, 0.0, out.step(), samples)
    }
}

impl InputOperator {
    /// Total-efficiency kernel on `nt` time hats over `[0, duration]`, the
    /// π pulse at `duration`: `η[E] = E^H K E` with `K = G^H G`, where `G`
    /// maps hat coefficients to scaled output spectra.
    pub fn total_kernel(&self, duration: f64, nt: usize) -> Result<KernelMatrix> {
        if !(duration > 0.0) || nt < 2 {
            return Err(Error::InvalidArgument("need a positive duration and nt ≥ 2".into()));
        }
        let h = duration / (nt - 1) as f64;
        let n = self.len();
        let mut moments = DMatrix::from_element(n, nt, C64::new(0.0, 0.0));
        let mut w = vec![C64::new(0.0, 0.0); nt];
        for l in 0..n {
            exp_moment_weights_into(h, -self.nodes.v(l), &mut w);
            for k in 0..nt {
                moments[(l, k)] = self.scale[l] * w[k];
            }
        }
        let g = &self.matrix * moments;
        let k = g.adjoint() * g;
        let k = (&k + k.adjoint()) * C64::new(0.5, 0.0);
        KernelMatrix::new(k, hat_mass(nt, h), Domain::Time, 0.0, h)
    }
}

/// [`InputOperator::total_kernel`] on the default node set.
pub fn total_kernel(cfg: &TransferConfig, duration: f64, nt: usize) -> Result<KernelMatrix> {
    InputOperator::new(cfg)?.total_kernel(duration, nt)
}

/// Runs the time-reversal iteration from a time-domain trial input.
pub fn time_reversal_iterate(cfg: &TransferConfig, trial: &ModeSample, max_iters: usize) -> Result<(InputOperator, OptimalInput)> {
    let op = InputOperator::new(cfg)?;
    let start = op.amplitudes_of(trial);
    let best = op.time_reversal_iterate(&start, 1e-9, max_iters)?;
    Ok((op, best))
}

/// Keeps the main lobe and the `keep` full oscillations preceding it,
/// zeroing everything earlier. Lobes are delimited by sign changes of the
/// real part, counted back from the end of the pulse; one oscillation is
/// two lobes.
pub fn truncate_before_wiggles(mode: &ModeSample, keep: usize) -> ModeSample {
    let s = mode.samples();
    let mut crossings = 0;
    let mut cut = 0;
    for k in (1..s.len()).rev() {
        if s[k].re * s[k - 1].re < 0.0 || (s[k - 1].re == 0.0 && s[k].re != 0.0) {
            crossings += 1;
            if crossings == 2 * keep + 1 {
                cut = k;
                break;
            }
        }
    }
    let mut out = mode.clone();
    out.samples_mut()[..cut].iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::LineProfile;
    use crate::spectral::NodeOptions;

    #[test]
    fn homogeneous_optimum_matches_dense_and_is_a_fixed_point() {
        let cfg = TransferConfig::new(10.0, LineProfile::Homogeneous).unwrap();
        // A coarse node set keeps the dense oracle cheap; both methods see
        // the same matrix.
        let mut opts = NodeOptions::for_config(&cfg);
        opts.cutoff = 400.0;
        opts.tol = 16.0;
        opts.growth = 2.0;
        opts.fine_width = 4.0;
        opts.max_panels = 30;
        let op = InputOperator::on_nodes(&cfg, XiNodes::adaptive(&cfg, &opts)).unwrap();
        assert!(op.len() < 600, "{}", op.len());
        let trial = crate::optimizer::gaussian_like_pulse(1.0, 401).unwrap();
        let r = op.time_reversal_iterate(&op.amplitudes_of(&trial), 1e-12, 5000).unwrap();
        assert!(r.converged);
        assert!(r.history.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        let dense = op.dense_optimum();
        assert!((r.efficiency - dense).abs() < 1e-6, "{} {dense}", r.efficiency);
        let again = op.time_reversal_iterate(&r.amplitudes, 1e-12, 2).unwrap();
        assert!((again.history[0] - r.efficiency).abs() < 1e-9);
    }

    #[test]
    fn total_kernel_is_real_and_power_iteration_matches_dense() {
        let prof = crate::profile::width_for_effective_depth(20.0, 8.0, crate::profile::Family::Gaussian).unwrap();
        let cfg = TransferConfig::new(20.0, prof).unwrap();
        let k = total_kernel(&cfg, 1.0, 120).unwrap();
        assert!(k.hermiticity_defect() < 1e-10);
        let imag = k.values.iter().map(|x| x.im.abs()).fold(0.0, f64::max);
        let scale = k.values.iter().map(|x| x.norm()).fold(0.0, f64::max);
        assert!(imag < 1e-8 * scale, "{imag} {scale}");
        let r = crate::optimizer::optimal_spin_wave(&k).unwrap();
        let (values, _) = k.dense_eigen().unwrap();
        assert!((r.efficiency - values[values.len() - 1]).abs() < 1e-6);
    }

    #[test]
    fn truncation_counts_full_oscillations() {
        // cos(2πt) on [0, 4] has eight sign changes.
        let m = ModeSample::from_fn(Domain::Time, 0.0, 4.0, 4001, |t| C64::new((2.0 * PI * t + 0.3).cos(), 0.0)).unwrap();
        let t1 = truncate_before_wiggles(&m, 1);
        let first = t1.samples().iter().position(|x| *x != C64::new(0.0, 0.0)).unwrap();
        let t_first = m.x(first);
        // zeros at 0.2023 + k/2: main lobe after 3.702, one period back to 2.702
        assert!((t_first - 2.703).abs() < 2e-3, "{t_first}");
        assert_eq!(truncate_before_wiggles(&m, 10), m);
    }
}
