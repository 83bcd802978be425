//! Laplace-domain description of fast (π-pulse) storage and retrieval.
//!
//! With the control switched off the propagation equations are linear with
//! constant coefficients in time, so every transfer function is an explicit
//! expression in the resolvent `f(v)`. Retrieval from a spin wave `S(z)`
//! radiates
//!
//! ```text
//! E_out(v) = −√d f(v) ∫₀¹ S(z) e^{−d f(v)(1−z)} dz,
//! ```
//!
//! and storage followed by retrieval maps an input spectrum through the
//! symmetric kernel `A(v,v′)·B(v,v′)`. Efficiencies follow from Plancherel's
//! identity `η = (1/2π)∫|E_out(iξ)|² dξ`.
//!
//! Frequency integrals use Gauss–Legendre panels ([`XiNodes`]) refined
//! until `d·f` is resolved, with geometric panels out to a large cutoff and
//! an analytic `1/ξ²` tail beyond it. Spin waves and input pulses enter
//! through exact exponential moments of their piecewise-linear
//! interpolants, so no spatial or temporal resolution is lost when `d·f` is
//! large.

use crate::error::{Error, Result};
use crate::mode::{Domain, ModeSample};
use crate::profile::LineProfile;
use crate::quadrature::{exp_moment, exprel, panel_rule};
use crate::C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub d: f64,
    pub profile: LineProfile,
    pub direction: Direction,
    #[serde(default)]
    pub reversed_broadening: bool,
    #[serde(default)]
    pub decay_free_scaled: bool,
    /// Full redistribution over the classes between storage and retrieval.
    #[serde(default)]
    pub redistribute: bool,
}

impl TransferConfig {
    /// Backward retrieval, no reversal, unit decay.
    pub fn new(d: f64, profile: LineProfile) -> Result<Self> {
        let cfg = Self {
            d,
            profile,
            direction: Direction::Backward,
            reversed_broadening: false,
            decay_free_scaled: false,
            redistribute: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_reversal(mut self, reversed: bool) -> Self {
        self.reversed_broadening = reversed;
        self
    }

    pub fn with_redistribution(mut self, redistribute: bool) -> Self {
        self.redistribute = redistribute;
        self
    }

    pub fn with_decay_free(mut self, decay_free: bool) -> Self {
        self.decay_free_scaled = decay_free;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::InvalidArgument(format!("d must be positive, got {}", self.d)));
        }
        self.profile.validate()?;
        if self.reversed_broadening && !self.profile.is_symmetric() {
            return Err(Error::InvalidConfig(
                "reversing the broadening requires a symmetric profile".into(),
            ));
        }
        Ok(())
    }

    /// Homogeneous decay rate: 1, or 0 in the decay-free scaled limit.
    pub fn decay(&self) -> f64 {
        if self.decay_free_scaled {
            0.0
        } else {
            1.0
        }
    }

    /// `⟨1/(decay + v + iΔ)⟩`.
    #[inline]
    pub fn f(&self, v: C64) -> C64 {
        self.profile.f_with_decay(v, self.decay())
    }

    /// Pole-checked resolvent.
    pub fn resolvent(&self, v: C64) -> Result<C64> {
        self.profile.resolvent(v + (self.decay() - 1.0))
    }

    /// Characteristic frequency scale of the line.
    pub fn line_scale(&self) -> f64 {
        (self.decay() + self.profile.spread()).max(1e-3)
    }
}

/// `A(v,v′)` for the configured retrieval direction, given `f(v)` and `f(v′)`.
#[inline]
pub fn a_factor(d: f64, direction: Direction, f: C64, fp: C64) -> C64 {
    match direction {
        // (e^{−d(f+f′)} − 1)/(f+f′)
        Direction::Backward => -d * exprel(-d * (f + fp)),
        // (e^{−df} − e^{−df′})/(f − f′), anchored on the less damped exponent
        Direction::Forward => {
            let (lo, hi) = if f.re <= fp.re { (f, fp) } else { (fp, f) };
            -d * (-d * lo).exp() * exprel(-d * (hi - lo))
        }
    }
}

/// `A(v,v′)·B(v,v′)`: storage at `v′`, retrieval at `v`.
pub fn transfer_ab(v: C64, vp: C64, cfg: &TransferConfig) -> C64 {
    let f = cfg.f(v);
    let fp = cfg.f(vp);
    transfer_ab_with(v, vp, f, fp, cfg)
}

/// [`transfer_ab`] with precomputed resolvent values.
#[inline]
pub fn transfer_ab_with(v: C64, vp: C64, f: C64, fp: C64, cfg: &TransferConfig) -> C64 {
    let a = a_factor(cfg.d, cfg.direction, f, fp);
    // A redistributed spin wave is symmetric, so reversal has no effect.
    let b = if cfg.redistribute {
        f * fp
    } else if cfg.reversed_broadening {
        (f + fp) / (2.0 * cfg.decay() + v + vp)
    } else {
        let shift = cfg.decay() - 1.0;
        cfg.profile.f_divided(v + shift, vp + shift)
    };
    a * b
}

/// Output spectrum of fast retrieval from `spin_wave` at Laplace variable `v`.
/// Backward retrieval reads the spin wave mirrored in `z`.
pub fn fast_retrieval_spectrum(spin_wave: &ModeSample, cfg: &TransferConfig, v: C64) -> Result<C64> {
    let f = cfg.resolvent(v)?;
    Ok(retrieval_spectrum_with(spin_wave.samples(), spin_wave.step(), cfg, f))
}

fn retrieval_spectrum_with(samples: &[C64], h: f64, cfg: &TransferConfig, f: C64) -> C64 {
    let moment = match cfg.direction {
        Direction::Forward => exp_moment(samples, h, cfg.d * f),
        Direction::Backward => {
            let flipped: Vec<C64> = samples.iter().rev().copied().collect();
            exp_moment(&flipped, h, cfg.d * f)
        }
    };
    -cfg.d.sqrt() * f * moment
}

/// Polarization of class `(detuning, weight)` at position `z` after fast
/// storage of an input with spectrum `e_in` at `v`.
pub fn fast_storage_polarization(
    e_in: C64,
    cfg: &TransferConfig,
    z: f64,
    v: C64,
    detuning: f64,
    weight: f64,
) -> Result<C64> {
    let den = cfg.decay() + v + I * detuning;
    if den.norm() < 1e-300 {
        return Err(Error::Pole(format!("class detuning {detuning} at v = {v}")));
    }
    let f = cfg.resolvent(v)?;
    Ok(I * cfg.d.sqrt() * weight.sqrt() / den * e_in * (-cfg.d * z * f).exp())
}

/// Gauss–Legendre order used on every frequency panel.
pub const PANEL_ORDER: usize = 16;

/// Frequency quadrature on the line `v = contour + iξ`.
#[derive(Clone, Debug)]
pub struct XiNodes {
    pub contour: f64,
    pub xi: Vec<f64>,
    pub weights: Vec<f64>,
    /// Integration stops at `±cutoff`; tails are handled analytically.
    pub cutoff: f64,
}

/// Controls for [`XiNodes::adaptive`].
#[derive(Clone, Debug)]
pub struct NodeOptions {
    pub contour: f64,
    /// Half width of the uniformly divided central region.
    pub core: f64,
    /// Largest panel allowed while `|ξ| < fine_until`.
    pub fine_width: f64,
    pub fine_until: f64,
    pub cutoff: f64,
    /// Ratio between consecutive outer breakpoints.
    pub growth: f64,
    /// Refinement tolerance on the change of `d·f` across a panel.
    pub tol: f64,
    pub max_panels: usize,
}

impl NodeOptions {
    /// Defaults sized from the line scale and the depth.
    pub fn for_config(cfg: &TransferConfig) -> Self {
        let scale = cfg.line_scale();
        let core = 8.0 * scale;
        Self {
            contour: 0.0,
            core,
            fine_width: core / 8.0,
            fine_until: core,
            cutoff: 1e4 * cfg.d.max(scale).max(1.0),
            growth: 1.4,
            tol: 4.0,
            max_panels: 4000,
        }
    }
}

impl XiNodes {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn v(&self, k: usize) -> C64 {
        C64::new(self.contour, self.xi[k])
    }

    /// Panels refined until `d·f(v)` is resolved in the sense needed by the
    /// exponential moments `∫ φ(s) e^{−d f s} ds`, `s ∈ [0, 1]`.
    pub fn adaptive(cfg: &TransferConfig, opts: &NodeOptions) -> Self {
        let d = cfg.d;
        let c = opts.contour;
        let g = |x: f64| -> (C64, C64) {
            let f = cfg.f(C64::new(c, x));
            (f, d * f)
        };
        let mut right = vec![0.0];
        let n_core = ((opts.core / opts.fine_width).ceil() as usize).max(4);
        for k in 1..=n_core {
            right.push(opts.core * k as f64 / n_core as f64);
        }
        let mut x = opts.core;
        while x < opts.cutoff {
            let mut next = x * opts.growth;
            if x < opts.fine_until {
                next = next.min(x + opts.fine_width);
            }
            x = next.min(opts.cutoff);
            right.push(x);
        }
        let mut coarse: Vec<f64> = right.iter().skip(1).rev().map(|x| -x).collect();
        coarse.extend(right.iter().copied());

        let min_width = 1e-10 * opts.core.max(1e-6);
        let mut breaks = vec![coarse[0]];
        let mut stack: Vec<(f64, f64)> = coarse.windows(2).rev().map(|w| (w[0], w[1])).collect();
        let mut panels = 0usize;
        while let Some((a, b)) = stack.pop() {
            let m = 0.5 * (a + b);
            let (fa, ga) = g(a);
            let (fb, gb) = g(b);
            let (fm, gm) = g(m);
            let re_min = ga.re.min(gb.re).min(gm.re).max(0.0);
            let reach = (30.0 / re_min.max(1e-300)).min(1.0);
            let fscale = fa.norm().max(fb.norm()).max(fm.norm());
            let unresolved = reach * (gb - ga).norm() > opts.tol
                || reach * (gm - 0.5 * (ga + gb)).norm() > 0.25 * opts.tol
                || (fb - fa).norm() > 0.25 * fscale
                || (fm - 0.5 * (fa + fb)).norm() > 0.05 * fscale;
            if unresolved && b - a > min_width && panels + stack.len() < opts.max_panels {
                stack.push((m, b));
                stack.push((a, m));
            } else {
                breaks.push(b);
                panels += 1;
            }
        }
        let (xi, weights) = panel_rule(&breaks, PANEL_ORDER);
        Self { contour: c, xi, weights, cutoff: opts.cutoff }
    }

    /// Plancherel integral `(1/2π)∫|E(iξ)|² dξ` of samples on these nodes,
    /// with the `|c|²/ξ²` tails beyond the cutoff added analytically.
    pub fn plancherel(&self, values: &[C64]) -> f64 {
        let body: f64 = values
            .iter()
            .zip(&self.weights)
            .map(|(e, w)| e.norm_sqr() * w)
            .sum();
        (body + self.tail(values)) / (2.0 * PI)
    }

    fn tail(&self, values: &[C64]) -> f64 {
        let n = values.len();
        if n == 0 {
            return 0.0;
        }
        let left = values[0].norm_sqr() * self.xi[0] * self.xi[0] / self.cutoff;
        let right = values[n - 1].norm_sqr() * self.xi[n - 1] * self.xi[n - 1] / self.cutoff;
        left + right
    }
}

/// Complex samples of a spectrum on [`XiNodes`].
#[derive(Clone, Debug)]
pub struct NodeSpectrum {
    pub nodes: XiNodes,
    pub values: Vec<C64>,
}

impl NodeSpectrum {
    pub fn efficiency(&self) -> f64 {
        self.nodes.plancherel(&self.values)
    }

    /// Coefficient `c` of the large-`ξ` behaviour `E ≈ c/(iξ)`, i.e. the
    /// field just after `t = 0`.
    pub fn jump(&self) -> C64 {
        let n = self.values.len();
        let lo = (self.nodes.v(0) + 1.0) * self.values[0];
        let hi = (self.nodes.v(n - 1) + 1.0) * self.values[n - 1];
        0.5 * (lo + hi)
    }

    /// Time-domain field `(1/2π)∫ E(c+iξ) e^{(c+iξ)t} dξ`. The jump at
    /// `t = 0` is subtracted as `c/(1+v)` and restored analytically.
    pub fn at_time(&self, t: f64) -> C64 {
        let jump = self.jump();
        let c = self.nodes.contour;
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..self.values.len() {
            let v = self.nodes.v(k);
            let smooth = self.values[k] - jump / (v + 1.0);
            acc += self.nodes.weights[k] * smooth * C64::new(0.0, self.nodes.xi[k] * t).exp();
        }
        let restored = if t >= 0.0 { jump * (-t).exp() } else { C64::new(0.0, 0.0) };
        acc * (c * t).exp() / (2.0 * PI) + restored
    }

    /// Samples on `n` uniform times in `[t0, t1]`.
    pub fn sample(&self, t0: f64, t1: f64, n: usize) -> Result<ModeSample> {
        ModeSample::from_fn(Domain::Time, t0, t1, n, |t| self.at_time(t))
    }
}

/// `A·B` with cached resolvents; the non-reversed `B` uses the divided
/// difference of the cached values away from the diagonal.
#[inline]
pub(crate) fn transfer_ab_cached(v: C64, vp: C64, f: C64, fp: C64, cfg: &TransferConfig) -> C64 {
    if cfg.redistribute || cfg.reversed_broadening || !matches!(cfg.profile, LineProfile::Gaussian { .. }) {
        return transfer_ab_with(v, vp, f, fp, cfg);
    }
    let a = a_factor(cfg.d, cfg.direction, f, fp);
    let gap = vp - v;
    let b = if gap.norm() < 1e-6 * (1.0 + cfg.line_scale() + v.norm()) {
        -cfg.profile.f_derivative(0.5 * (v + vp) + (cfg.decay() - 1.0))
    } else {
        (f - fp) / gap
    };
    a * b
}

/// Storage followed by retrieval, discretized on an output and an input
/// frequency contour.
#[derive(Clone, Debug)]
pub struct TransferMap {
    pub cfg: TransferConfig,
    pub out: XiNodes,
    pub inp: XiNodes,
    f_out: Vec<C64>,
    f_in: Vec<C64>,
}

impl TransferMap {
    pub fn new(cfg: &TransferConfig, out: XiNodes, inp: XiNodes) -> Result<Self> {
        cfg.validate()?;
        let f_out = (0..out.len()).map(|k| cfg.f(out.v(k))).collect();
        let f_in = (0..inp.len()).map(|k| cfg.f(inp.v(k))).collect();
        Ok(Self { cfg: cfg.clone(), out, inp, f_out, f_in })
    }

    /// Output nodes on the imaginary axis sized for `cfg`.
    pub fn output_nodes(cfg: &TransferConfig) -> XiNodes {
        XiNodes::adaptive(cfg, &NodeOptions::for_config(cfg))
    }

    /// Input nodes for pulses of duration `duration` ending at the π pulse.
    /// Decay-free media use the contour `Re v′ = 1/duration`.
    pub fn input_nodes(cfg: &TransferConfig, duration: f64) -> XiNodes {
        let mut opts = NodeOptions::for_config(cfg);
        if cfg.decay_free_scaled {
            opts.contour = 1.0 / duration;
        }
        // GL16 panels of width 8/T resolve the e^{iξT} oscillation of the
        // input spectrum; narrower lines are picked up by refinement.
        opts.fine_width = 8.0 / duration;
        opts.fine_until = opts.fine_until.max(100.0 / duration);
        XiNodes::adaptive(cfg, &opts)
    }

    /// Map sized for inputs of the given duration.
    pub fn for_duration(cfg: &TransferConfig, duration: f64) -> Result<Self> {
        Self::new(cfg, Self::output_nodes(cfg), Self::input_nodes(cfg, duration))
    }

    /// Retrieval spectrum of a spin wave on the output nodes.
    pub fn retrieval(&self, spin_wave: &ModeSample) -> NodeSpectrum {
        let samples: Vec<C64> = match self.cfg.direction {
            Direction::Forward => spin_wave.samples().to_vec(),
            Direction::Backward => spin_wave.samples().iter().rev().copied().collect(),
        };
        let h = spin_wave.step();
        let values = self
            .f_out
            .iter()
            .map(|&f| -self.cfg.d.sqrt() * f * exp_moment(&samples, h, self.cfg.d * f))
            .collect();
        NodeSpectrum { nodes: self.out.clone(), values }
    }

    /// `∫ E_in(t) e^{v′(t_π − t)} dt` on the input nodes, with the π pulse
    /// at the end of the input window.
    pub fn input_spectrum(&self, input: &ModeSample) -> Vec<C64> {
        (0..self.inp.len())
            .map(|l| exp_moment(input.samples(), input.step(), -self.inp.v(l)))
            .collect()
    }

    /// `Q(v′_l)·w_l/2π` on the input nodes.
    pub fn weighted_input(&self, input: &ModeSample) -> Vec<C64> {
        self.input_spectrum(input)
            .iter()
            .zip(&self.inp.weights)
            .map(|(q, w)| q * (w / (2.0 * PI)))
            .collect()
    }

    /// Output spectrum at any `v` on the retrieval contour, given
    /// [`TransferMap::weighted_input`].
    pub fn store_retrieve_at(&self, weighted: &[C64], v: C64) -> C64 {
        let f = self.cfg.f(v);
        (0..self.inp.len())
            .map(|l| transfer_ab_cached(v, self.inp.v(l), f, self.f_in[l], &self.cfg) * weighted[l])
            .sum()
    }

    /// Output spectrum after storing `input` and retrieving at once.
    pub fn store_retrieve(&self, input: &ModeSample) -> NodeSpectrum {
        let q: Vec<C64> = self
            .input_spectrum(input)
            .iter()
            .zip(&self.inp.weights)
            .map(|(q, w)| q * (w / (2.0 * PI)))
            .collect();
        let values = (0..self.out.len())
            .map(|k| {
                let v = self.out.v(k);
                let f = self.f_out[k];
                (0..self.inp.len())
                    .map(|l| transfer_ab_cached(v, self.inp.v(l), f, self.f_in[l], &self.cfg) * q[l])
                    .sum()
            })
            .collect();
        NodeSpectrum { nodes: self.out.clone(), values }
    }

    /// Total efficiency of storing `input` (normalized internally).
    pub fn efficiency(&self, input: &ModeSample) -> Result<f64> {
        let norm = input.norm_sq();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("input pulse has zero norm".into()));
        }
        Ok(self.store_retrieve(input).efficiency() / norm)
    }
}

/// Symmetric matrix `N = W^{1/2}·AB·W^{1/2}`, `W = w/2π`, on the
/// imaginary-axis nodes. Its largest singular value squared is the best
/// total efficiency over all inputs that end before the π pulse.
pub fn transfer_matrix(cfg: &TransferConfig, nodes: &XiNodes) -> Vec<Vec<C64>> {
    let n = nodes.len();
    let f: Vec<C64> = (0..n).map(|k| cfg.f(nodes.v(k))).collect();
    let s: Vec<f64> = nodes.weights.iter().map(|w| (w / (2.0 * PI)).sqrt()).collect();
    let mut m = vec![vec![C64::new(0.0, 0.0); n]; n];
    for k in 0..n {
        for l in k..n {
            let x = s[k] * s[l] * transfer_ab_cached(nodes.v(k), nodes.v(l), f[k], f[l], cfg);
            m[k][l] = x;
            m[l][k] = x;
        }
    }
    m
}

/// Uniform frequency grid `ξ_k = −ξ_max + k·2ξ_max/n` on the line
/// `v = contour + iξ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrid {
    pub xi_max: f64,
    pub n: usize,
    pub contour: f64,
}

impl SpectralGrid {
    pub fn new(xi_max: f64, n: usize) -> Result<Self> {
        if !(xi_max.is_finite() && xi_max > 0.0) {
            return Err(Error::InvalidArgument(format!("ξ_max must be positive, got {xi_max}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("grid size must be a power of two ≥ 8, got {n}")));
        }
        Ok(Self { xi_max, n, contour: 0.0 })
    }

    /// `ξ_max = 32·max(d, 4Δ_I, 2π/T)` with `2¹⁴` points.
    pub fn for_medium(d: f64, hwhm: f64, duration: f64) -> Result<Self> {
        let scale = d.max(4.0 * hwhm).max(2.0 * PI / duration).max(1.0);
        Self::new(32.0 * scale, 1 << 14)
    }

    pub fn with_contour(mut self, contour: f64) -> Self {
        self.contour = contour;
        self
    }

    /// Twice the bandwidth at the same resolution.
    pub fn doubled(&self) -> Self {
        Self { xi_max: 2.0 * self.xi_max, n: 2 * self.n, contour: self.contour }
    }

    /// Twice the time window at the same bandwidth.
    pub fn lengthened(&self) -> Self {
        Self { xi_max: self.xi_max, n: 2 * self.n, contour: self.contour }
    }

    pub fn step(&self) -> f64 {
        2.0 * self.xi_max / self.n as f64
    }

    pub fn xi(&self, k: usize) -> f64 {
        -self.xi_max + k as f64 * self.step()
    }

    pub fn v(&self, k: usize) -> C64 {
        C64::new(self.contour, self.xi(k))
    }

    /// Time step of the transformed signal.
    pub fn dt(&self) -> f64 {
        PI / self.xi_max
    }

    /// Length of the periodic time window.
    pub fn window(&self) -> f64 {
        self.n as f64 * self.dt()
    }
}

/// `(1/2π)∫|E(iξ)|² dξ` by the trapezoidal rule, plus the `1/ξ²` tails
/// beyond `±ξ_max`. Fails when the tails exceed 1e-3 of the result.
pub fn efficiency_from_spectrum(spectrum: impl Fn(f64) -> C64, grid: &SpectralGrid) -> Result<f64> {
    let h = grid.step();
    let mut body = 0.0;
    for k in 0..=grid.n {
        let w = if k == 0 || k == grid.n { 0.5 * h } else { h };
        body += spectrum(grid.xi(k)).norm_sqr() * w;
    }
    let x = grid.xi_max;
    let tail = (spectrum(-x).norm_sqr() + spectrum(x).norm_sqr()) * x;
    let eta = (body + tail) / (2.0 * PI);
    if !eta.is_finite() {
        return Err(Error::Bandwidth("spectrum is not finite on the grid".into()));
    }
    if tail / (2.0 * PI) > 1e-3 * eta.max(1e-300) {
        return Err(Error::Bandwidth(format!(
            "tail beyond ξ_max = {x} carries {:.3e} of η = {eta:.6}",
            tail / (2.0 * PI)
        )));
    }
    Ok(eta)
}

/// [`efficiency_from_spectrum`] doubling the grid on bandwidth errors.
pub fn efficiency_from_spectrum_auto(spectrum: impl Fn(f64) -> C64, grid: &SpectralGrid) -> Result<f64> {
    let mut g = grid.clone();
    for _ in 0..10 {
        match efficiency_from_spectrum(&spectrum, &g) {
            Err(Error::Bandwidth(_)) => g = g.doubled(),
            other => return other,
        }
    }
    efficiency_from_spectrum(&spectrum, &g)
}

/// `(1/2π)∫ F(c+iξ) e^{(c+iξ)t} dξ` sampled on `n` times in `[t0, t1]`.
///
/// The `1/v` decay of a spectrum with a jump at `t = 0` is removed as
/// `c₁/(1+v)` before the FFT and restored as `c₁e^{−t}`. Values between
/// FFT samples use cubic interpolation.
pub fn inverse_laplace(
    spectrum: impl Fn(C64) -> C64,
    grid: &SpectralGrid,
    t0: f64,
    t1: f64,
    n: usize,
) -> Result<ModeSample> {
    let m = grid.n;
    let values: Vec<C64> = (0..m).map(|k| spectrum(grid.v(k))).collect();
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::Bandwidth("spectrum is not finite on the grid".into()));
    }
    let lo = grid.v(0);
    let hi = grid.v(m - 1);
    let jump = 0.5 * ((lo + 1.0) * values[0] + (hi + 1.0) * values[m - 1]);

    // e^{iξ_k t_j} with ξ_k = −ξ_max + kΔξ, t_j = jΔt: ΔξΔt = 2π/m.
    let mut buf: Vec<C64> = values
        .iter()
        .enumerate()
        .map(|(k, x)| x - jump / (grid.v(k) + 1.0))
        .collect();
    FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
    let dt = grid.dt();
    let scale = grid.step() / (2.0 * PI);
    let smooth: Vec<C64> = buf
        .iter()
        .enumerate()
        .map(|(j, x)| x * scale * C64::new(0.0, -grid.xi_max * j as f64 * dt).exp())
        .collect();

    // Negative times occupy the upper half of the periodic window.
    let window = grid.window();
    let signal = |j: usize| -> C64 {
        let t = if j < m / 2 { j as f64 * dt } else { j as f64 * dt - window };
        let restored = if t >= 0.0 { jump * (-t).exp() } else { C64::new(0.0, 0.0) };
        (smooth[j] + restored) * (grid.contour * t).exp()
    };
    let total: f64 = (0..m).map(|j| signal(j).norm_sqr()).sum();
    let edge = (m as f64 * 0.05).ceil() as usize;
    let late: f64 = (m / 2 - edge..m / 2).map(|j| signal(j).norm_sqr()).sum();
    if late > 1e-6 * total {
        return Err(Error::Window(format!(
            "{:.2e} of the energy sits at the end of the {window:.3}-long window",
            late / total
        )));
    }
    if t0 < -0.5 * window || t1 >= 0.5 * window - 2.0 * dt {
        return Err(Error::Window(format!("times [{t0}, {t1}] outside the window ±{}", 0.5 * window)));
    }

    let at = |t: f64| -> C64 {
        let u = t / dt;
        let k = u.floor();
        let s = u - k;
        let q = |o: f64| smooth[(k + o).rem_euclid(m as f64) as usize];
        // Cubic Lagrange through k−1..k+2 on the smooth part only.
        let c0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
        let c1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        let c2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
        let c3 = (s + 1.0) * s * (s - 1.0) / 6.0;
        let smooth_t = q(-1.0) * c0 + q(0.0) * c1 + q(1.0) * c2 + q(2.0) * c3;
        let restored = if t >= 0.0 { jump * (-t).exp() } else { C64::new(0.0, 0.0) };
        (smooth_t + restored) * (grid.contour * t).exp()
    };
    ModeSample::from_fn(Domain::Time, t0, t1, n, at)
}

/// Output field and total efficiency for `input` stored at the end of its
/// window and retrieved at once, both by π pulses.
pub fn storage_then_retrieval_output(
    input: &ModeSample,
    cfg: &TransferConfig,
    t_out: f64,
    n_out: usize,
) -> Result<(ModeSample, f64)> {
    let norm = input.norm_sq();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("input pulse has zero norm".into()));
    }
    if !(t_out > 0.0) {
        return Err(Error::InvalidArgument(format!("output window must be positive, got {t_out}")));
    }
    let duration = input.end() - input.start();
    let map = TransferMap::for_duration(cfg, duration)?;
    let eta = map.store_retrieve(input).efficiency() / norm;
    let q = map.weighted_input(input);
    let mut grid = SpectralGrid::for_medium(cfg.d, cfg.line_scale(), duration)?;
    if cfg.decay_free_scaled {
        grid = grid.with_contour(1.0 / t_out);
    }
    while grid.window() < 2.0 * t_out {
        grid = grid.lengthened();
    }
    let field = inverse_laplace(|v| map.store_retrieve_at(&q, v), &grid, 0.0, t_out, n_out)?;
    Ok((field, eta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn homogeneous(d: f64) -> TransferConfig {
        TransferConfig::new(d, LineProfile::Homogeneous).unwrap()
    }

    #[test]
    fn backward_reversed_at_origin() {
        for d in [0.3, 2.0, 10.0] {
            let cfg = homogeneous(d).with_reversal(true);
            let got = transfer_ab(c(0.0, 0.0), c(0.0, 0.0), &cfg);
            let want = ((-2.0 * d).exp() - 1.0) / 2.0;
            assert!((got - want).norm() < 1e-13, "d = {d}: {got} vs {want}");
        }
    }

    #[test]
    fn kernels_are_symmetric() {
        let profiles = [
            LineProfile::Homogeneous,
            LineProfile::Lorentzian { width: 2.0 },
            LineProfile::Gaussian { width: 3.0 },
        ];
        let pairs = [(c(0.1, 2.0), c(0.0, -1.3)), (c(0.0, 7.0), c(0.2, 0.4)), (c(0.5, -9.0), c(0.0, 30.0))];
        for p in &profiles {
            for dir in [Direction::Forward, Direction::Backward] {
                for rev in [false, true] {
                    let cfg = TransferConfig::new(7.0, p.clone()).unwrap().with_direction(dir).with_reversal(rev);
                    for &(v, w) in &pairs {
                        let a = transfer_ab(v, w, &cfg);
                        let b = transfer_ab(w, v, &cfg);
                        assert!((a - b).norm() < 1e-12 * (1.0 + a.norm()));
                    }
                }
            }
        }
    }

    #[test]
    fn diagonal_limits_are_continuous() {
        let v = c(0.0, 1.7);
        for dir in [Direction::Forward, Direction::Backward] {
            let cfg = TransferConfig::new(12.0, LineProfile::Gaussian { width: 2.5 }).unwrap().with_direction(dir);
            let on = transfer_ab(v, v, &cfg);
            // Richardson: the off-diagonal error is linear in ε.
            let e1 = transfer_ab(v, v + c(0.0, 1e-5), &cfg);
            let e2 = transfer_ab(v, v + c(0.0, 2e-5), &cfg);
            let extrapolated = 2.0 * e1 - e2;
            assert!((on - e1).norm() < 1e-6);
            assert!((on - extrapolated).norm() < 1e-8);
            let cached = transfer_ab_cached(v, v, cfg.f(v), cfg.f(v), &cfg);
            assert!((on - cached).norm() < 1e-12);
        }
    }

    #[test]
    fn uniform_spin_wave_closed_form() {
        let cfg = homogeneous(5.0);
        let s = ModeSample::spin_wave(11, |_| c(1.0, 0.0)).unwrap();
        for v in [c(0.0, 0.0), c(0.0, 3.0), c(0.4, -2.0)] {
            let f = 1.0 / (1.0 + v);
            let want = -(1.0 - (-cfg.d * f).exp()) / cfg.d.sqrt();
            let got = fast_retrieval_spectrum(&s, &cfg, v).unwrap();
            assert!((got - want).norm() < 1e-12);
        }
        let faint = homogeneous(1e-12);
        assert!(fast_retrieval_spectrum(&s, &faint, c(0.0, 1.0)).unwrap().norm() < 1e-5);
    }

    #[test]
    fn retrieval_pole_is_reported() {
        let s = ModeSample::linear_ramp(11);
        assert!(matches!(fast_retrieval_spectrum(&s, &homogeneous(1.0), c(-1.0, 0.0)), Err(Error::Pole(_))));
    }

    #[test]
    fn storage_polarization_plug_in() {
        let cfg = homogeneous(4.0);
        let e = c(0.3, -0.2);
        let got = fast_storage_polarization(e, &cfg, 0.0, c(0.0, 0.0), 0.0, 1.0).unwrap();
        assert!((got - C64::new(0.0, 2.0) * e).norm() < 1e-14);
        let zero = fast_storage_polarization(c(0.0, 0.0), &cfg, 0.5, c(0.0, 1.0), 0.0, 1.0).unwrap();
        assert_eq!(zero, c(0.0, 0.0));
    }

    #[test]
    fn lorentzian_matches_rescaled_homogeneous() {
        let s = ModeSample::spin_wave(201, |z| c(z.sin() + 0.3, z * z)).unwrap();
        for (d, w) in [(10.0, 1.0), (100.0, 10.0)] {
            let kappa = 1.0 + w;
            let lor = TransferConfig::new(d, LineProfile::Lorentzian { width: w }).unwrap();
            let hom = homogeneous(d / kappa);
            for xi in [-5.0, 0.0, 0.7, 20.0] {
                let v = c(0.0, xi);
                let a = fast_retrieval_spectrum(&s, &lor, v).unwrap();
                let b = fast_retrieval_spectrum(&s, &hom, v / kappa).unwrap() / kappa.sqrt();
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn exponential_pair_inverts() {
        let grid = SpectralGrid::new(512.0, 1 << 14).unwrap();
        let e = inverse_laplace(|v| 1.0 / (v + 1.0), &grid, 0.0, 10.0, 101).unwrap();
        for (t, x) in e.grid().zip(e.samples()) {
            assert!((x - c((-t).exp(), 0.0)).norm() < 1e-6, "t = {t}: {x}");
        }
    }

    #[test]
    fn inverse_is_linear_and_smooth_parts_converge() {
        let grid = SpectralGrid::new(256.0, 1 << 13).unwrap();
        let f = |v: C64| 1.0 / ((v + 1.0) * (v + 2.0));
        let g = |v: C64| 1.0 / (v + c(0.5, 3.0));
        let a = c(0.7, -1.1);
        // The kink at t = 0 limits the accuracy there to ~1/(πξ_max).
        let lhs = inverse_laplace(|v| f(v) + a * g(v), &grid, 0.2, 8.0, 41).unwrap();
        let rf = inverse_laplace(f, &grid, 0.2, 8.0, 41).unwrap();
        let rg = inverse_laplace(g, &grid, 0.2, 8.0, 41).unwrap();
        for k in 0..41 {
            let t = lhs.x(k);
            assert!((lhs.samples()[k] - rf.samples()[k] - a * rg.samples()[k]).norm() < 1e-9);
            let exact = (-t).exp() - (-2.0 * t).exp();
            assert!((rf.samples()[k] - exact).norm() < 1e-5, "t = {t}: {}", (rf.samples()[k] - exact).norm());
        }
    }

    #[test]
    fn short_window_is_detected() {
        let grid = SpectralGrid::new(64.0, 64).unwrap();
        let r = inverse_laplace(|v| 1.0 / (v + 0.01), &grid, 0.0, 1.0, 5);
        assert!(matches!(r, Err(Error::Window(_))));
    }

    #[test]
    fn plancherel_on_uniform_grid() {
        let grid = SpectralGrid::new(2048.0, 1 << 14).unwrap();
        let eta = efficiency_from_spectrum(|x| 1.0 / c(1.0, x), &grid).unwrap();
        assert!((eta - 0.5).abs() < 1e-6);
        assert_eq!(efficiency_from_spectrum(|_| c(0.0, 0.0), &grid).unwrap(), 0.0);
        let narrow = SpectralGrid::new(8.0, 64).unwrap();
        assert!(matches!(efficiency_from_spectrum(|x| 1.0 / c(1.0, x), &narrow), Err(Error::Bandwidth(_))));
        assert!((efficiency_from_spectrum_auto(|x| 1.0 / c(1.0, x), &narrow).unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn node_spectrum_plancherel_and_time() {
        let cfg = homogeneous(3.0);
        let nodes = TransferMap::output_nodes(&cfg);
        let values: Vec<C64> = (0..nodes.len()).map(|k| 1.0 / (nodes.v(k) + 1.0)).collect();
        let spec = NodeSpectrum { nodes, values };
        assert!((spec.efficiency() - 0.5).abs() < 1e-8);
        for t in [0.1, 1.0, 4.0] {
            assert!((spec.at_time(t) - (-t).exp()).norm() < 1e-8);
        }
    }

    #[test]
    fn homogeneous_ramp_retrieval_efficiency() {
        // ∫|E(iξ)|²/2π equals the spin-wave norm minus what stays behind;
        // for S = √3 z̃ at large depth the loss is small.
        let cfg = homogeneous(50.0);
        let map = TransferMap::new(&cfg, TransferMap::output_nodes(&cfg), TransferMap::output_nodes(&cfg)).unwrap();
        let s = ModeSample::linear_ramp(401);
        let eta = map.retrieval(&s).efficiency();
        let grid = SpectralGrid::for_medium(50.0, 0.0, 1.0).unwrap();
        let uniform = efficiency_from_spectrum_auto(|x| fast_retrieval_spectrum(&s, &cfg, c(0.0, x)).unwrap(), &grid).unwrap();
        assert!((eta - uniform).abs() < 1e-5, "{eta} vs {uniform}");
        // Read backward the ramp peaks at the far end; mirrored it peaks at the exit.
        let exit_first = map.retrieval(&s.mirrored()).efficiency();
        assert!(exit_first > 0.9 && exit_first < 1.0 && eta < exit_first, "{eta} {exit_first}");
    }
}
