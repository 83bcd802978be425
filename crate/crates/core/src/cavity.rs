//! Ensemble in a single-mode cavity, adiabatically eliminated, in units
//! where the optical decay rate `γ = 1`:
//!
//! ```text
//! Ṗ_j = −(1 + i(Δ + Δ_j)) P_j − C √p_j Σ_k √p_k P_k + iΩ S_j + i√(2C) √p_j E_in,
//! Ṡ_j = iΩ* P_j,
//! E_out = E_in + i√(2C) Σ_j √p_j P_j.
//! ```

use crate::error::{Error, Result};
use crate::free_space::{ControlField, ControlKind};
use crate::mode::{write_csv_atomic, Domain, ModeSample};
use crate::profile::FrequencyClasses;
use crate::C64;
use std::path::Path;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Debug, PartialEq)]
pub struct CavityState {
    pub p: Vec<C64>,
    pub s: Vec<C64>,
    /// Cooperativity.
    pub c: f64,
    pub classes: FrequencyClasses,
    pub detuning: f64,
}

impl CavityState {
    pub fn new(classes: &FrequencyClasses, c: f64, detuning: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidArgument(format!("cooperativity must be non-negative, got {c}")));
        }
        if !detuning.is_finite() {
            return Err(Error::InvalidArgument("detuning must be finite".into()));
        }
        let m = classes.len();
        Ok(Self { p: vec![ZERO; m], s: vec![ZERO; m], c, classes: classes.clone(), detuning })
    }

    /// Symmetric spin wave `S_j = √p_j · amplitude`.
    pub fn with_symmetric_spin_wave(mut self, amplitude: C64) -> Self {
        for (s, q) in self.s.iter_mut().zip(self.classes.sqrt_weights()) {
            *s = amplitude * *q;
        }
        self
    }

    pub fn with_spin_waves(mut self, s: Vec<C64>) -> Result<Self> {
        if s.len() != self.classes.len() {
            return Err(Error::InvalidArgument(format!(
                "{} spin-wave amplitudes for {} classes",
                s.len(),
                self.classes.len()
            )));
        }
        self.s = s;
        Ok(self)
    }

    pub fn excitation(&self) -> f64 {
        self.p.iter().chain(&self.s).map(|x| x.norm_sqr()).sum()
    }

    /// `Σ_j √p_j P_j`.
    pub fn collective(&self) -> C64 {
        self.p.iter().zip(self.classes.sqrt_weights()).map(|(p, q)| p * *q).sum()
    }

    /// `(P, S) → (iS, iP)`.
    pub fn pi_pulse(&self) -> Self {
        let mut out = self.clone();
        out.p = self.s.iter().map(|s| I * s).collect();
        out.s = self.p.iter().map(|p| I * p).collect();
        out
    }

    fn derivative(&self, p: &[C64], s: &[C64], e_in: C64, omega: C64, dp: &mut [C64], ds: &mut [C64]) {
        let sq = self.classes.sqrt_weights();
        let coll: C64 = p.iter().zip(sq).map(|(p, q)| p * *q).sum();
        let feed = I * (2.0 * self.c).sqrt() * e_in - self.c * coll;
        for (j, dj) in self.classes.detunings().iter().enumerate() {
            let rate = C64::new(1.0, self.detuning + dj);
            dp[j] = -rate * p[j] + sq[j] * feed + I * omega * s[j];
            ds[j] = I * omega.conj() * p[j];
        }
    }
}

/// Output of a cavity run.
#[derive(Clone, Debug)]
pub struct CavityTrajectory {
    pub output: ModeSample,
    /// `Σ_j √p_j P_j(t)` on the output grid.
    pub collective: Vec<C64>,
    /// Atomic excitation on the output grid.
    pub excitation: Vec<f64>,
    pub state: CavityState,
    /// `∫|E_out|² dt` and `2C∫|Σ√p_j P_j|² dt` accumulated with the RK4
    /// stage weights.
    pub output_energy: f64,
    pub atomic_emission: f64,
}

impl CavityTrajectory {
    /// Final atomic excitation relative to the initial one.
    pub fn residual(&self) -> f64 {
        let first = self.excitation.first().copied().unwrap_or(0.0);
        let last = self.excitation.last().copied().unwrap_or(0.0);
        if first > 0.0 {
            last / first
        } else {
            last
        }
    }

    /// CSV with columns `(t, re, im, residual)`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .output
            .grid()
            .zip(self.output.samples())
            .zip(&self.excitation)
            .map(|((t, e), r)| vec![t, e.re, e.im, *r])
            .collect();
        write_csv_atomic(path, &["t", "re", "im", "residual"], &rows)
    }
}

/// Integrates over `[0, duration]`, or until the atoms hold less than
/// `stop_below` of their initial excitation when that is given and there
/// is no input. Ideal π-pulse controls act once at `t = 0`.
pub fn cavity_run(
    state: &CavityState,
    control: &ControlField,
    input: Option<&ModeSample>,
    duration: f64,
    stop_below: Option<f64>,
) -> Result<CavityTrajectory> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {duration}")));
    }
    let mut st = if control.kind() == ControlKind::IdealPiPulse { state.pi_pulse() } else { state.clone() };
    let rate = (1.0 + st.detuning.abs() + st.classes.max_abs_detuning())
        .max(control.max_abs())
        .max(1.0 + st.c);
    let n = ((duration * rate / 0.05).ceil() as usize).max(2);
    let h = duration / n as f64;
    let m = st.classes.len();
    let e_in = |t: f64| input.map_or(ZERO, |x| x.at(t));
    let gain = I * (2.0 * st.c).sqrt();
    let initial = st.excitation().max(1e-300);

    let (mut k1p, mut k1s) = (vec![ZERO; m], vec![ZERO; m]);
    let (mut k2p, mut k2s) = (vec![ZERO; m], vec![ZERO; m]);
    let (mut k3p, mut k3s) = (vec![ZERO; m], vec![ZERO; m]);
    let (mut k4p, mut k4s) = (vec![ZERO; m], vec![ZERO; m]);
    let (mut tp, mut ts) = (vec![ZERO; m], vec![ZERO; m]);

    let mut output = vec![e_in(0.0) + gain * st.collective()];
    let mut collective = vec![st.collective()];
    let mut excitation = vec![st.excitation()];
    let mut level = st.excitation();
    let (mut output_energy, mut atomic_emission) = (0.0, 0.0);
    let sq = st.classes.sqrt_weights().to_vec();
    let coll = |p: &[C64]| -> C64 { p.iter().zip(&sq).map(|(p, q)| p * *q).sum() };
    let coop = state.c;
    let rate_at = |e: C64, p: &[C64]| -> (f64, f64) {
        let a = coll(p);
        ((e + gain * a).norm_sqr(), 2.0 * coop * a.norm_sqr())
    };
    let mut rates = [(0.0, 0.0); 4];
    for step in 0..n {
        let t = step as f64 * h;
        let mid = t + 0.5 * h;
        rates[0] = rate_at(e_in(t), &st.p);
        st.derivative(&st.p, &st.s, e_in(t), control.at(t), &mut k1p, &mut k1s);
        for j in 0..m {
            tp[j] = st.p[j] + 0.5 * h * k1p[j];
            ts[j] = st.s[j] + 0.5 * h * k1s[j];
        }
        rates[1] = rate_at(e_in(mid), &tp);
        st.derivative(&tp, &ts, e_in(mid), control.at(mid), &mut k2p, &mut k2s);
        for j in 0..m {
            tp[j] = st.p[j] + 0.5 * h * k2p[j];
            ts[j] = st.s[j] + 0.5 * h * k2s[j];
        }
        rates[2] = rate_at(e_in(mid), &tp);
        st.derivative(&tp, &ts, e_in(mid), control.at(mid), &mut k3p, &mut k3s);
        for j in 0..m {
            tp[j] = st.p[j] + h * k3p[j];
            ts[j] = st.s[j] + h * k3s[j];
        }
        rates[3] = rate_at(e_in(t + h), &tp);
        st.derivative(&tp, &ts, e_in(t + h), control.at(t + h), &mut k4p, &mut k4s);
        output_energy += h / 6.0 * (rates[0].0 + 2.0 * (rates[1].0 + rates[2].0) + rates[3].0);
        atomic_emission += h / 6.0 * (rates[0].1 + 2.0 * (rates[1].1 + rates[2].1) + rates[3].1);
        for j in 0..m {
            st.p[j] += h / 6.0 * (k1p[j] + 2.0 * (k2p[j] + k3p[j]) + k4p[j]);
            st.s[j] += h / 6.0 * (k1s[j] + 2.0 * (k2s[j] + k3s[j]) + k4s[j]);
        }
        let x = st.excitation();
        if !x.is_finite() || (input.is_none() && x > level * (1.0 + 1e-6) + 1e-14) {
            return Err(Error::Instability(format!(
                "cavity excitation grew from {level:.6e} to {x:.6e} at t = {:.4}; reduce the step",
                t + h
            )));
        }
        level = x;
        output.push(e_in(t + h) + gain * st.collective());
        collective.push(st.collective());
        excitation.push(x);
        if input.is_none() && stop_below.is_some_and(|tol| x < tol * initial) {
            break;
        }
    }
    Ok(CavityTrajectory {
        output: ModeSample::new(Domain::Time, 0.0, h, output)?,
        collective,
        excitation,
        state: st,
        output_energy,
        atomic_emission,
    })
}

/// Retrieval until the residual excitation falls below 1e-8 or
/// `t > 50(1 + C)`.
pub fn cavity_retrieve(state: &CavityState, control: &ControlField) -> Result<CavityTrajectory> {
    cavity_run(state, control, None, 50.0 * (1.0 + state.c), Some(1e-8))
}

/// `∫|E_out|² dt`, with a warning when the atoms were not emptied.
pub fn cavity_retrieval_efficiency(traj: &CavityTrajectory) -> (f64, Option<String>) {
    let eta = traj.output_energy;
    let residual = traj.residual();
    let warning = (residual >= 1e-8)
        .then(|| format!("atoms not emptied: residual excitation {residual:.3e} at window end"));
    (eta, warning)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::LineProfile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn eta(st: &CavityState, control: &ControlField) -> f64 {
        let traj = cavity_retrieve(st, control).unwrap();
        let (eta, warning) = cavity_retrieval_efficiency(&traj);
        assert!(warning.is_none(), "{warning:?}");
        eta
    }

    #[test]
    fn uncoupled_cavity_emits_nothing() {
        let classes = LineProfile::Homogeneous.discretize(1).unwrap();
        let st = CavityState::new(&classes, 0.0, 0.0).unwrap().with_symmetric_spin_wave(c(1.0, 0.0));
        let traj = cavity_run(&st, &ControlField::ideal_pi_pulse(), None, 5.0, None).unwrap();
        assert!(traj.output.samples().iter().all(|x| *x == ZERO));
        let empty = CavityState::new(&classes, 3.0, 0.0).unwrap();
        assert_eq!(eta(&empty.clone().with_symmetric_spin_wave(ZERO), &ControlField::ideal_pi_pulse()), 0.0);
    }

    #[test]
    fn homogeneous_cooperativity_limit() {
        let classes = LineProfile::Homogeneous.discretize(1).unwrap();
        for coop in [0.5, 4.0, 20.0] {
            let st = CavityState::new(&classes, coop, 0.0).unwrap().with_symmetric_spin_wave(c(1.0, 0.0));
            let want = coop / (1.0 + coop);
            let fast = cavity_retrieve(&st, &ControlField::ideal_pi_pulse()).unwrap();
            assert!((cavity_retrieval_efficiency(&fast).0 - want).abs() < 1e-6);
            assert!((fast.atomic_emission - fast.output_energy).abs() < 1e-6);
            let slow = eta(&st, &ControlField::constant(c(2.0, 0.0), 0.0, 1.0).unwrap());
            assert!((slow - want).abs() < 1e-5, "C = {coop}: {slow} vs {want}");
        }
    }

    #[test]
    fn retrieval_ignores_detuning_and_control_shape() {
        let classes = LineProfile::Gaussian { width: 2.0 }.discretize(15).unwrap();
        let st = CavityState::new(&classes, 5.0, 0.0).unwrap().with_symmetric_spin_wave(c(1.0, 0.0));
        let resonant = eta(&st, &ControlField::constant(c(3.0, 0.0), 0.0, 1.0).unwrap());
        let mut detuned = st.clone();
        detuned.detuning = 15.0;
        let chirp = ControlField::from_fn(0.0, 40.0, 4001, |t| {
            C64::from_polar(10.0 * (1.0 - (-t).exp()), 0.5 * t * t)
        })
        .unwrap();
        let shaped = eta(&detuned, &chirp);
        assert!((resonant - shaped).abs() < 1e-4, "{resonant} vs {shaped}");
    }

    #[test]
    fn asymmetric_spin_waves_are_a_fixed_quadratic_form() {
        let classes = LineProfile::Gaussian { width: 1.5 }.discretize(9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s: Vec<C64> = (0..9).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let st = CavityState::new(&classes, 3.0, 0.0).unwrap().with_spin_waves(s.clone()).unwrap();
        let a = eta(&st, &ControlField::constant(c(4.0, 0.0), 0.0, 1.0).unwrap());
        let b = eta(&st, &ControlField::from_fn(0.0, 10.0, 1001, |t| c(1.0 + t, 0.0)).unwrap());
        let fast = eta(&st, &ControlField::ideal_pi_pulse());
        assert!((a - b).abs() < 1e-4 && (a - fast).abs() < 1e-4, "{a} {b} {fast}");

        // Δ_j → −Δ_j is a symmetry together with complex conjugation.
        let reversed: Vec<C64> = s.iter().rev().map(|x| x.conj()).collect();
        let mirror = CavityState::new(&classes, 3.0, 0.0).unwrap().with_spin_waves(reversed).unwrap();
        assert!((eta(&mirror, &ControlField::ideal_pi_pulse()) - fast).abs() < 1e-10);
        let real: Vec<C64> = s.iter().map(|x| c(x.re, 0.0)).collect();
        let real_rev: Vec<C64> = real.iter().rev().copied().collect();
        let base = CavityState::new(&classes, 3.0, 0.0).unwrap();
        let a = eta(&base.clone().with_spin_waves(real).unwrap(), &ControlField::ideal_pi_pulse());
        let b = eta(&base.with_spin_waves(real_rev).unwrap(), &ControlField::ideal_pi_pulse());
        assert!((a - b).abs() < 1e-10);
    }
}
