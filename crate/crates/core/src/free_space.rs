//! Time-domain Maxwell–Bloch propagation through a free-space ensemble.
//!
//! Each class `j` carries an optical polarization `P_j(z)` and a spin wave
//! `S_j(z)`; the field obeys
//!
//! ```text
//! ∂z E = i√d Σ √p_j P_j,
//! ∂t P_j = −(γ̃ + i(Δ + Δ_j)) P_j + i√d √p_j E + iΩ S_j,
//! ∂t S_j = iΩ* P_j,
//! ```
//!
//! with `E(0, t) = E_in(t)`. The atomic variables are advanced with RK4 on a
//! fixed `z` grid; at every stage `E` is rebuilt from the polarization by a
//! cumulative trapezoid in `z`. π pulses are instantaneous maps.

use crate::error::{Error, Result};
use crate::mode::{write_csv_atomic, Domain, ModeSample};
use crate::profile::{FrequencyClasses, LineProfile};
use crate::quadrature::trapezoid_weights;
use crate::spectral::{Direction, TransferConfig};
use crate::C64;
use serde::{Deserialize, Serialize};
use std::path::Path;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Spatial points and the simulated time window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub nz: usize,
    /// Output time samples over the window.
    pub nt: usize,
    pub t_max: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self { nz: 200, nt: 2001, t_max: 20.0 }
    }
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if self.nz < 2 || self.nt < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid needs nz ≥ 2 and nt ≥ 2, got nz = {}, nt = {}",
                self.nz, self.nt
            )));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::InvalidConfig(format!("grid.t_max must be positive, got {}", self.t_max)));
        }
        Ok(())
    }

    pub fn dz(&self) -> f64 {
        1.0 / (self.nz - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_max / (self.nt - 1) as f64
    }

    pub fn z(&self, k: usize) -> f64 {
        k as f64 * self.dz()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    Smooth,
    IdealPiPulse,
}

/// Control Rabi frequency `Ω(t)` sampled on the output time grid of a
/// stage, or an instantaneous π pulse.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlField {
    kind: ControlKind,
    start: f64,
    step: f64,
    samples: Vec<C64>,
}

impl ControlField {
    pub fn ideal_pi_pulse() -> Self {
        Self { kind: ControlKind::IdealPiPulse, start: 0.0, step: 1.0, samples: Vec::new() }
    }

    pub fn smooth(mode: &ModeSample) -> Result<Self> {
        Ok(Self {
            kind: ControlKind::Smooth,
            start: mode.start(),
            step: mode.step(),
            samples: mode.samples().to_vec(),
        })
    }

    /// `Ω` constant over `[t0, t1]`.
    pub fn constant(value: C64, t0: f64, t1: f64) -> Result<Self> {
        Self::smooth(&ModeSample::from_fn(Domain::Time, t0, t1, 2, |_| value)?)
    }

    /// `Ω(t) = f(t)` sampled at `n` points on `[t0, t1]`.
    pub fn from_fn(t0: f64, t1: f64, n: usize, f: impl Fn(f64) -> C64) -> Result<Self> {
        Self::smooth(&ModeSample::from_fn(Domain::Time, t0, t1, n, f)?)
    }

    pub fn kind(&self) -> ControlKind {
        self.kind
    }

    /// Linear interpolation; the last value is held beyond the samples,
    /// zero before them and for π pulses.
    pub fn at(&self, t: f64) -> C64 {
        if self.samples.is_empty() {
            return ZERO;
        }
        let u = (t - self.start) / self.step;
        if u < 0.0 {
            return ZERO;
        }
        let last = self.samples.len() - 1;
        if u >= last as f64 {
            return self.samples[last];
        }
        let k = u.floor() as usize;
        let s = u - k as f64;
        self.samples[k] * (1.0 - s) + self.samples[k + 1] * s
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

/// Field, polarizations and spin waves on the `z` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleState {
    pub e: Vec<C64>,
    /// `p[j][k]`: class `j` at `z_k`.
    pub p: Vec<Vec<C64>>,
    pub s: Vec<Vec<C64>>,
    pub classes: FrequencyClasses,
    pub detuning: f64,
}

impl EnsembleState {
    pub fn vacuum(classes: &FrequencyClasses, nz: usize, detuning: f64) -> Self {
        let m = classes.len();
        Self {
            e: vec![ZERO; nz],
            p: vec![vec![ZERO; nz]; m],
            s: vec![vec![ZERO; nz]; m],
            classes: classes.clone(),
            detuning,
        }
    }

    /// Spin wave `S_j(z) = √p_j S(z)` in every class, no polarization.
    pub fn from_spin_wave(classes: &FrequencyClasses, spin_wave: &ModeSample, nz: usize) -> Result<Self> {
        if spin_wave.domain() != Domain::Space {
            return Err(Error::InvalidArgument("spin wave must be sampled in space".into()));
        }
        let mut st = Self::vacuum(classes, nz, 0.0);
        let dz = 1.0 / (nz - 1) as f64;
        for (j, sq) in classes.sqrt_weights().iter().enumerate() {
            for k in 0..nz {
                st.s[j][k] = spin_wave.at(k as f64 * dz) * *sq;
            }
        }
        Ok(st)
    }

    pub fn nz(&self) -> usize {
        self.e.len()
    }

    pub fn dz(&self) -> f64 {
        1.0 / (self.nz() - 1) as f64
    }

    /// `Σ_j ∫ (|P_j|² + |S_j|²) dz`.
    pub fn excitation(&self) -> f64 {
        let w = trapezoid_weights(self.nz(), self.dz());
        self.p
            .iter()
            .chain(&self.s)
            .map(|row| row.iter().zip(&w).map(|(x, w)| x.norm_sqr() * w).sum::<f64>())
            .sum()
    }

    fn symmetric(&self, rows: &[Vec<C64>]) -> ModeSample {
        let sq = self.classes.sqrt_weights();
        let values = (0..self.nz())
            .map(|k| rows.iter().zip(sq).map(|(row, q)| row[k] * *q).sum())
            .collect();
        ModeSample::new(Domain::Space, 0.0, self.dz(), values).expect("state grid is valid")
    }

    /// `S(z) = Σ_j √p_j S_j(z)`.
    pub fn symmetric_spin_wave(&self) -> ModeSample {
        self.symmetric(&self.s)
    }

    /// `P(z) = Σ_j √p_j P_j(z)`.
    pub fn symmetric_polarization(&self) -> ModeSample {
        self.symmetric(&self.p)
    }

    /// Snapshot CSV: `z` then `(re, im)` of the symmetric spin wave, or of
    /// every class when `per_class`.
    pub fn write_spin_waves(&self, path: &Path, per_class: bool) -> Result<()> {
        let mut header = vec!["z".to_string()];
        let rows_src: Vec<Vec<C64>> = if per_class {
            for j in 0..self.s.len() {
                header.push(format!("re_{j}"));
                header.push(format!("im_{j}"));
            }
            self.s.clone()
        } else {
            header.push("re".into());
            header.push("im".into());
            vec![self.symmetric_spin_wave().into_samples()]
        };
        let rows: Vec<Vec<f64>> = (0..self.nz())
            .map(|k| {
                let mut r = vec![k as f64 * self.dz()];
                for src in &rows_src {
                    r.push(src[k].re);
                    r.push(src[k].im);
                }
                r
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv_atomic(path, &header, &rows)
    }
}

/// `(P, S) → (iS, iP)` in every class and point.
pub fn pi_pulse(state: &EnsembleState) -> EnsembleState {
    let mut out = state.clone();
    for (pj, sj) in out.p.iter_mut().zip(out.s.iter_mut()) {
        for (p, s) in pj.iter_mut().zip(sj.iter_mut()) {
            let (np, ns) = (I * *s, I * *p);
            *p = np;
            *s = ns;
        }
    }
    out
}

/// What happens to the spin waves between storage and retrieval.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalOptions {
    pub redistribute: bool,
    pub reverse_classes: bool,
    pub flip_space: bool,
}

/// Applies flip, class reversal and redistribution in that order.
pub fn storage_interval_map(
    s: &[Vec<C64>],
    classes: &FrequencyClasses,
    opts: IntervalOptions,
) -> Result<Vec<Vec<C64>>> {
    let mut out: Vec<Vec<C64>> = s.to_vec();
    if opts.flip_space {
        out.iter_mut().for_each(|row| row.reverse());
    }
    if opts.reverse_classes {
        let pairing = classes.pairing().ok_or_else(|| {
            Error::InvalidConfig("reversing the classes needs a symmetric pairing".into())
        })?;
        out = pairing.iter().map(|&partner| out[partner].clone()).collect();
    }
    if opts.redistribute {
        let sq = classes.sqrt_weights();
        let nz = out.first().map_or(0, Vec::len);
        let sum: Vec<C64> = (0..nz).map(|k| out.iter().zip(sq).map(|(row, q)| row[k] * *q).sum()).collect();
        for (row, q) in out.iter_mut().zip(sq) {
            for (x, s) in row.iter_mut().zip(&sum) {
                *x = s * *q;
            }
        }
    }
    Ok(out)
}

/// `∫|Σ_j √p_j S_j|² dz`.
pub fn storage_efficiency(state: &EnsembleState) -> f64 {
    state.symmetric_spin_wave().norm_sq()
}

/// `∫|E_out|² dt` for an output produced by a normalized input.
pub fn total_efficiency(e_out: &ModeSample) -> f64 {
    e_out.norm_sq()
}

/// Envelope of the free-induction decay of the symmetric polarization.
pub fn decay_envelope(profile: &LineProfile, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")));
    }
    Ok(match profile {
        LineProfile::Homogeneous => (-t).exp(),
        LineProfile::Lorentzian { width } => (-(1.0 + width) * t).exp(),
        LineProfile::Gaussian { width } => (-t - 0.5 * width * width * t * t).exp(),
        LineProfile::Discrete { nodes } => {
            let sum: C64 = nodes.iter().map(|&(delta, p)| p * C64::new(0.0, -delta * t).exp()).sum();
            sum.norm() * (-t).exp()
        }
    })
}

fn default_direction() -> Direction {
    Direction::Backward
}

/// Medium, class discretization, interval options and grid for one
/// storage/retrieval experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub d: f64,
    pub profile: LineProfile,
    /// Class count; defaults to 63 for Gaussian and 129 for Lorentzian lines.
    #[serde(default)]
    pub classes: Option<usize>,
    #[serde(default)]
    pub detuning: f64,
    #[serde(default = "default_direction")]
    pub direction: Direction,
    #[serde(default)]
    pub redistribute: bool,
    #[serde(default)]
    pub reverse_broadening: bool,
    #[serde(default)]
    pub decay_free_scaled: bool,
    #[serde(default)]
    pub grid: Grid,
}

impl ProtocolConfig {
    pub fn new(d: f64, profile: LineProfile) -> Self {
        Self {
            d,
            profile,
            classes: None,
            detuning: 0.0,
            direction: Direction::Backward,
            redistribute: false,
            reverse_broadening: false,
            decay_free_scaled: false,
            grid: Grid::default(),
        }
    }

    pub fn class_count(&self) -> usize {
        self.classes.unwrap_or(match self.profile {
            LineProfile::Homogeneous => 1,
            LineProfile::Gaussian { .. } => 63,
            LineProfile::Lorentzian { .. } => 129,
            LineProfile::Discrete { ref nodes } => nodes.len(),
        })
    }

    pub fn frequency_classes(&self) -> Result<FrequencyClasses> {
        self.profile.discretize(self.class_count())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.d >= 0.0) {
            return Err(Error::InvalidConfig(format!("d must be non-negative, got {}", self.d)));
        }
        if !self.detuning.is_finite() {
            return Err(Error::InvalidConfig("detuning must be finite".into()));
        }
        self.profile.validate()?;
        self.grid.validate()?;
        if self.reverse_broadening && self.frequency_classes()?.pairing().is_none() {
            return Err(Error::InvalidConfig(
                "reverse_broadening needs frequency classes symmetric about zero".into(),
            ));
        }
        Ok(())
    }

    pub fn decay(&self) -> f64 {
        if self.decay_free_scaled {
            0.0
        } else {
            1.0
        }
    }

    /// Matching Laplace-domain configuration.
    pub fn transfer(&self) -> Result<TransferConfig> {
        Ok(TransferConfig::new(self.d, self.profile.clone())?
            .with_direction(self.direction)
            .with_reversal(self.reverse_broadening)
            .with_redistribution(self.redistribute)
            .with_decay_free(self.decay_free_scaled))
    }

    fn interval(&self) -> IntervalOptions {
        IntervalOptions {
            redistribute: self.redistribute,
            reverse_classes: self.reverse_broadening,
            flip_space: self.direction == Direction::Backward,
        }
    }

    fn check_control(&self, control: &ControlField) -> Result<()> {
        if self.decay_free_scaled && control.kind() != ControlKind::IdealPiPulse {
            return Err(Error::InvalidConfig(
                "decay_free_scaled is defined for ideal π-pulse control only".into(),
            ));
        }
        Ok(())
    }
}

/// Flat RK4 integrator for `(P, S)` with the field rebuilt at every stage.
struct Integrator<'a> {
    m: usize,
    nz: usize,
    dz: f64,
    sqrt_d: f64,
    sqrt_p: &'a [f64],
    rates: Vec<C64>,
    e: Vec<C64>,
}

impl<'a> Integrator<'a> {
    fn field(&mut self, y: &[C64], e0: C64) {
        let (m, nz) = (self.m, self.nz);
        let psum = |k: usize| -> C64 { (0..m).map(|j| y[j * nz + k] * self.sqrt_p[j]).sum() };
        let c = I * self.sqrt_d * 0.5 * self.dz;
        let mut prev = psum(0);
        let mut e = e0;
        self.e[0] = e;
        for k in 1..nz {
            let cur = psum(k);
            e += c * (prev + cur);
            self.e[k] = e;
            prev = cur;
        }
    }

    fn derivative(&mut self, y: &[C64], e0: C64, omega: C64, out: &mut [C64]) {
        self.field(y, e0);
        let (m, nz) = (self.m, self.nz);
        let (p, s) = y.split_at(m * nz);
        let (dp, ds) = out.split_at_mut(m * nz);
        let io = I * omega;
        let io_conj = I * omega.conj();
        for j in 0..m {
            let drive = I * self.sqrt_d * self.sqrt_p[j];
            let rate = self.rates[j];
            for k in 0..nz {
                let idx = j * nz + k;
                dp[idx] = -rate * p[idx] + drive * self.e[k] + io * s[idx];
                ds[idx] = io_conj * p[idx];
            }
        }
    }
}

/// Result of propagating through one stage.
#[derive(Clone, Debug)]
pub struct StageOutput {
    pub state: EnsembleState,
    /// `E(1, t)` on the stage's output grid.
    pub output: ModeSample,
}

/// Advances `state` from `t0` to `t1` with boundary field `input` (zero
/// outside its samples, or everywhere when `None`) and control `control`.
pub fn propagate(
    state: &EnsembleState,
    cfg: &ProtocolConfig,
    input: Option<&ModeSample>,
    control: &ControlField,
    t0: f64,
    t1: f64,
) -> Result<StageOutput> {
    cfg.validate()?;
    if !(t1 > t0) {
        return Err(Error::InvalidArgument(format!("stage needs t1 > t0, got [{t0}, {t1}]")));
    }
    let classes = &state.classes;
    let (m, nz) = (classes.len(), state.nz());
    let gamma = cfg.decay();
    let bound_rate = (gamma + state.detuning.abs() + classes.max_abs_detuning())
        .max(control.max_abs())
        .max(cfg.d)
        .max(1e-3);
    // A quarter of the RK4 stability limit keeps the output quadrature
    // of |E|² accurate to ~1e-4.
    let max_dt = 0.05 / bound_rate;
    let span = t1 - t0;
    let n_out = ((span / cfg.grid.dt()).ceil().max((span / max_dt).ceil()) as usize).max(1) + 1;
    let h = span / (n_out - 1) as f64;

    let mut integ = Integrator {
        m,
        nz,
        dz: state.dz(),
        sqrt_d: cfg.d.sqrt(),
        sqrt_p: classes.sqrt_weights(),
        rates: classes
            .detunings()
            .iter()
            .map(|dj| C64::new(gamma, state.detuning + dj))
            .collect(),
        e: vec![ZERO; nz],
    };
    let mut y: Vec<C64> = state.p.iter().chain(&state.s).flatten().copied().collect();
    let len = y.len();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]);
    let e_in = |t: f64| input.map_or(ZERO, |m| m.at(t));
    let weights = trapezoid_weights(nz, state.dz());
    let excitation = |y: &[C64]| -> f64 {
        y.chunks(nz)
            .map(|row| row.iter().zip(&weights).map(|(x, w)| x.norm_sqr() * w).sum::<f64>())
            .sum()
    };
    let passive = input.is_none();
    let mut level = excitation(&y);

    let mut out = Vec::with_capacity(n_out);
    integ.field(&y, e_in(t0));
    out.push(integ.e[nz - 1]);
    for step in 1..n_out {
        let t = t0 + (step - 1) as f64 * h;
        integ.derivative(&y, e_in(t), control.at(t), &mut k1);
        axpy(&y, &k1, 0.5 * h, &mut tmp);
        integ.derivative(&tmp, e_in(t + 0.5 * h), control.at(t + 0.5 * h), &mut k2);
        axpy(&y, &k2, 0.5 * h, &mut tmp);
        integ.derivative(&tmp, e_in(t + 0.5 * h), control.at(t + 0.5 * h), &mut k3);
        axpy(&y, &k3, h, &mut tmp);
        integ.derivative(&tmp, e_in(t + h), control.at(t + h), &mut k4);
        for i in 0..len {
            y[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        if passive {
            let next = excitation(&y);
            if !next.is_finite() || next > level * (1.0 + 1e-6) + 1e-14 {
                return Err(Error::Instability(format!(
                    "excitation grew from {level:.6e} to {next:.6e} at t = {:.4}; refine the grid",
                    t + h
                )));
            }
            level = next;
        } else if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::Instability(format!("non-finite state at t = {:.4}; refine the grid", t + h)));
        }
        integ.field(&y, e_in(t + h));
        out.push(integ.e[nz - 1]);
    }

    let mut next = state.clone();
    for j in 0..m {
        next.p[j].copy_from_slice(&y[j * nz..(j + 1) * nz]);
        next.s[j].copy_from_slice(&y[(m + j) * nz..(m + j + 1) * nz]);
    }
    next.e.copy_from_slice(&integ.e);
    Ok(StageOutput { state: next, output: ModeSample::new(Domain::Time, t0, h, out)? })
}

fn axpy(y: &[C64], k: &[C64], a: f64, out: &mut [C64]) {
    for ((o, y), k) in out.iter_mut().zip(y).zip(k) {
        *o = y + k * a;
    }
}

/// Propagation over the input window `[start, end]` of `input`.
pub fn step_storage(
    state: &EnsembleState,
    cfg: &ProtocolConfig,
    input: &ModeSample,
    control: &ControlField,
) -> Result<StageOutput> {
    cfg.check_control(control)?;
    propagate(state, cfg, Some(input), control, input.start(), input.end())
}

/// State after storing `input` with an ideal π pulse at the end of its window.
#[derive(Clone, Debug)]
pub struct Stored {
    pub state: EnsembleState,
    /// Field transmitted during the storage window.
    pub leaked: ModeSample,
    /// Stored fraction `∫|Σ√p_j S_j|²/∫|E_in|²`.
    pub efficiency: f64,
}

/// Fast storage: free absorption of `input`, then a π pulse.
pub fn fast_storage(cfg: &ProtocolConfig, input: &ModeSample) -> Result<Stored> {
    let norm = input.norm_sq();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("input pulse has zero norm".into()));
    }
    let classes = cfg.frequency_classes()?;
    let vacuum = EnsembleState::vacuum(&classes, cfg.grid.nz, cfg.detuning);
    let stage = step_storage(&vacuum, cfg, input, &ControlField::ideal_pi_pulse())?;
    let state = pi_pulse(&stage.state);
    let efficiency = storage_efficiency(&state) / norm;
    Ok(Stored { state, leaked: stage.output, efficiency })
}

/// Interval map for the configured direction and options, a π pulse at
/// `t = 0`, then free emission over `[0, grid.t_max]`.
pub fn fast_retrieval(cfg: &ProtocolConfig, stored: &EnsembleState) -> Result<StageOutput> {
    let mut state = stored.clone();
    state.s = storage_interval_map(&stored.s, &stored.classes, cfg.interval())?;
    let state = pi_pulse(&state);
    propagate(&state, cfg, None, &ControlField::ideal_pi_pulse(), 0.0, cfg.grid.t_max)
}

/// Retrieval of a symmetric spin wave driven by `control` (an ideal π
/// pulse at `t = 0` when `control` is of that kind).
pub fn retrieve_spin_wave(cfg: &ProtocolConfig, spin_wave: &ModeSample, control: &ControlField) -> Result<StageOutput> {
    cfg.check_control(control)?;
    let classes = cfg.frequency_classes()?;
    let mut state = EnsembleState::from_spin_wave(&classes, spin_wave, cfg.grid.nz)?;
    state.detuning = cfg.detuning;
    state.s = storage_interval_map(&state.s, &classes, cfg.interval())?;
    if control.kind() == ControlKind::IdealPiPulse {
        state = pi_pulse(&state);
    }
    propagate(&state, cfg, None, control, 0.0, cfg.grid.t_max)
}

/// Complete fast storage and retrieval of one input pulse.
#[derive(Clone, Debug)]
pub struct Roundtrip {
    pub output: ModeSample,
    pub leaked: ModeSample,
    pub storage_efficiency: f64,
    pub total_efficiency: f64,
    /// Atomic excitation left after the retrieval window.
    pub residual: f64,
}

pub fn store_and_retrieve(cfg: &ProtocolConfig, input: &ModeSample) -> Result<Roundtrip> {
    let stored = fast_storage(cfg, input)?;
    let out = fast_retrieval(cfg, &stored.state)?;
    let norm = input.norm_sq();
    Ok(Roundtrip {
        total_efficiency: total_efficiency(&out.output) / norm,
        residual: out.state.excitation() / norm,
        output: out.output,
        leaked: stored.leaked,
        storage_efficiency: stored.efficiency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::TransferMap;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn single() -> FrequencyClasses {
        LineProfile::Homogeneous.discretize(1).unwrap()
    }

    #[test]
    fn vacuum_stays_empty() {
        let cfg = ProtocolConfig::new(5.0, LineProfile::Homogeneous);
        let st = EnsembleState::vacuum(&single(), 50, 0.0);
        let out = propagate(&st, &cfg, None, &ControlField::ideal_pi_pulse(), 0.0, 2.0).unwrap();
        assert!(out.output.samples().iter().all(|x| *x == ZERO));
        assert_eq!(out.state.excitation(), 0.0);
    }

    #[test]
    fn thin_medium_is_transparent() {
        let mut cfg = ProtocolConfig::new(0.0, LineProfile::Homogeneous);
        cfg.grid = Grid { nz: 20, nt: 201, t_max: 4.0 };
        let input = ModeSample::from_fn(Domain::Time, 0.0, 4.0, 201, |t| c((-(t - 2.0).powi(2)).exp(), 0.0)).unwrap();
        let stored = fast_storage(&cfg, &input).unwrap();
        assert!(stored.efficiency < 1e-15);
        assert!(stored.leaked.l2_distance(&input).unwrap() < 1e-12);
    }

    #[test]
    fn pi_pulse_maps() {
        let mut st = EnsembleState::vacuum(&single(), 3, 0.0);
        st.s[0] = vec![c(1.0, 0.5), c(0.0, -2.0), c(0.3, 0.0)];
        st.p[0][1] = c(0.7, 0.1);
        let once = pi_pulse(&st);
        assert_eq!(once.p[0][0], I * c(1.0, 0.5));
        assert_eq!(once.s[0][1], I * c(0.7, 0.1));
        assert!((once.excitation() - st.excitation()).abs() < 1e-15);
        let twice = pi_pulse(&once);
        for k in 0..3 {
            assert_eq!(twice.s[0][k], -st.s[0][k]);
            assert_eq!(twice.p[0][k], -st.p[0][k]);
        }
    }

    #[test]
    fn interval_maps() {
        let classes = LineProfile::Gaussian { width: 2.0 }.discretize(5).unwrap();
        let s: Vec<Vec<C64>> = (0..5)
            .map(|j| (0..4).map(|k| c((j * k) as f64 * 0.1, j as f64 - k as f64)).collect())
            .collect();
        for opts in [
            IntervalOptions { flip_space: true, ..Default::default() },
            IntervalOptions { reverse_classes: true, ..Default::default() },
        ] {
            let back = storage_interval_map(&storage_interval_map(&s, &classes, opts).unwrap(), &classes, opts).unwrap();
            assert_eq!(back, s);
        }
        let redistributed =
            storage_interval_map(&s, &classes, IntervalOptions { redistribute: true, ..Default::default() }).unwrap();
        for k in 0..4 {
            let proj: C64 = (0..5).map(|j| s[j][k] * classes.sqrt_weights()[j]).sum();
            let norm: f64 = (0..5).map(|j| redistributed[j][k].norm_sqr()).sum();
            assert!((norm - proj.norm_sqr()).abs() < 1e-12);
        }
        let one = vec![vec![c(1.0, 2.0), c(-0.5, 0.0)]];
        let same = storage_interval_map(&one, &single(), IntervalOptions { redistribute: true, ..Default::default() });
        assert_eq!(same.unwrap(), one);
        let skewed = FrequencyClasses::new(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let bad = storage_interval_map(&one, &skewed, IntervalOptions { reverse_classes: true, ..Default::default() });
        assert!(matches!(bad, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn ramp_is_fully_stored() {
        let st = EnsembleState::from_spin_wave(&single(), &ModeSample::linear_ramp(2001), 2001).unwrap();
        assert!((storage_efficiency(&st) - 1.0).abs() < 1e-6);
        assert_eq!(storage_efficiency(&EnsembleState::vacuum(&single(), 5, 0.0)), 0.0);
    }

    #[test]
    fn envelopes() {
        let profiles = [
            LineProfile::Homogeneous,
            LineProfile::Lorentzian { width: 3.0 },
            LineProfile::gaussian_from_hwhm(10.0).unwrap(),
        ];
        for p in &profiles {
            assert_eq!(decay_envelope(p, 0.0).unwrap(), 1.0);
        }
        let g = decay_envelope(&profiles[2], 0.1).unwrap();
        let want = (-0.1 - 100.0 * 0.01 / (4.0 * std::f64::consts::LN_2)).exp();
        assert!((g - want).abs() < 1e-12);
        assert!(decay_envelope(&profiles[0], -1.0).is_err());
    }

    #[test]
    fn free_induction_follows_envelope() {
        let profile = LineProfile::gaussian_from_hwhm(10.0).unwrap();
        let mut cfg = ProtocolConfig::new(1e-10, profile.clone());
        cfg.classes = Some(128);
        cfg.grid = Grid { nz: 3, nt: 51, t_max: 0.5 };
        let s = ModeSample::spin_wave(3, |_| c(1.0, 0.0)).unwrap();
        let classes = cfg.frequency_classes().unwrap();
        let st = pi_pulse(&EnsembleState::from_spin_wave(&classes, &s, 3).unwrap());
        let mut t = 0.0;
        let mut cur = st;
        while t < 0.5 - 1e-12 {
            let next = propagate(&cur, &cfg, None, &ControlField::ideal_pi_pulse(), t, t + 0.05).unwrap();
            cur = next.state;
            t += 0.05;
            let amp = cur.symmetric_polarization().samples()[1].norm();
            assert!((amp - decay_envelope(&profile, t).unwrap()).abs() < 1e-3, "t = {t}");
        }
    }

    #[test]
    fn matches_spectral_retrieval() {
        let mut cfg = ProtocolConfig::new(20.0, LineProfile::Homogeneous);
        cfg.grid = Grid { nz: 400, nt: 801, t_max: 8.0 };
        let s = ModeSample::linear_ramp(401).mirrored();
        let time = retrieve_spin_wave(&cfg, &s, &ControlField::ideal_pi_pulse()).unwrap();
        let eta_time = total_efficiency(&time.output);
        let tc = cfg.transfer().unwrap();
        let map = TransferMap::new(&tc, TransferMap::output_nodes(&tc), TransferMap::output_nodes(&tc)).unwrap();
        let eta_freq = map.retrieval(&s).efficiency();
        assert!((eta_time - eta_freq).abs() < 1e-3, "{eta_time} vs {eta_freq}");
        assert!(time.state.excitation() < 1e-6);
    }
}
