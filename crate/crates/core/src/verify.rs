//! Executable reproduction checks, grouped into named suites.
//!
//! Every check returns an [`Outcome`] with the measured numbers, so a
//! failure reports how far off it was rather than just that it failed.

use crate::cavity::{cavity_retrieval_efficiency, cavity_retrieve, CavityState};
use crate::crib::{crib_width_scan, CribScanResult};
use crate::error::{Error, Result};
use crate::figures::{
    coefficient_assignment, crib_scans, doppler_errors, doppler_optimal_mode, dprime_error, finite_decay_optimum,
    inverse_depth_fit, par_map, truncation_loss, DOPPLER_HWHM, FIG2_DPRIME,
};
use crate::free_space::{
    retrieve_spin_wave, store_and_retrieve, total_efficiency, ControlField, Grid, ProtocolConfig,
};
use crate::mode::ModeSample;
use crate::optimizer::{
    doppler_observed_depth, fit_depth_asymptote, fit_sqrt_law, gaussian_like_pulse, heuristic_error,
    finite_decay_rescale, max_total_efficiency_redistribution, optimal_spin_wave, retrieval_kernel, HeuristicModel,
};
use crate::profile::{Family, LineProfile};
use crate::spectral::{
    efficiency_from_spectrum_auto, fast_retrieval_spectrum, storage_then_retrieval_output, Direction, NodeSpectrum, SpectralGrid,
    TransferConfig, TransferMap,
};
use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::time::Instant;

/// Result of one criterion.
#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub key: &'static str,
    pub passed: bool,
    pub detail: String,
    pub values: BTreeMap<String, f64>,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} {:>2} {:<22} {:>7.1}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.key,
            self.seconds,
            self.detail
        )
    }
}

/// What a check reports before timing is attached.
struct Check {
    passed: bool,
    detail: String,
    values: BTreeMap<String, f64>,
}

impl Check {
    fn new() -> Self {
        Self { passed: true, detail: String::new(), values: BTreeMap::new() }
    }

    fn value(&mut self, name: impl Into<String>, v: f64) {
        self.values.insert(name.into(), v);
    }

    /// Records a sub-condition; failures are listed in the detail.
    fn require(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if !ok {
            self.passed = false;
            self.note(format!("failed: {what}"));
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(&s.into());
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tier {
    Fast,
    Slow,
}

/// One criterion of the suite.
pub struct Criterion {
    pub id: u8,
    pub key: &'static str,
    pub tier: Tier,
    pub summary: &'static str,
    run: fn(&VerifyOptions) -> Result<Check>,
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub threads: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 2024, threads: 1 }
    }
}

pub const CRITERIA: [Criterion; 11] = [
    Criterion { id: 1, key: "invariance", tier: Tier::Fast, summary: "retrieval efficiency is independent of control and detuning", run: invariance },
    Criterion { id: 2, key: "lorentzian-rescaling", tier: Tier::Fast, summary: "Lorentzian lines act as a homogeneous line of depth d/(1+Δ)", run: lorentzian_rescaling },
    Criterion { id: 3, key: "optimal-mode", tier: Tier::Slow, summary: "optimal forward mode approaches the linear ramp", run: optimal_mode },
    Criterion { id: 4, key: "doppler", tier: Tier::Slow, summary: "Doppler error curve against the heuristic and its bounds", run: doppler },
    Criterion { id: 5, key: "asymptote", tier: Tier::Fast, summary: "homogeneous error times d tends to 5.8", run: asymptote },
    Criterion { id: 6, key: "dprime-limited", tier: Tier::Slow, summary: "optimal-input error limited by the effective depth", run: dprime_limited },
    Criterion { id: 7, key: "truncation", tier: Tier::Slow, summary: "optimal input survives truncation past three oscillations", run: truncation },
    Criterion { id: 8, key: "crib", tier: Tier::Slow, summary: "CRIB optimal widths and efficiencies", run: crib },
    Criterion { id: 9, key: "finite-decay", tier: Tier::Slow, summary: "finite decay matches the rescaled decay-free result", run: finite_decay },
    Criterion { id: 10, key: "cross-oracle", tier: Tier::Fast, summary: "spectral and time-domain solvers agree", run: cross_oracle },
    Criterion { id: 11, key: "redistribution", tier: Tier::Fast, summary: "redistribution leaves forward retrieval unchanged", run: redistribution },
];

/// Suite names accepted by [`run_suite`].
pub fn suite_names() -> Vec<&'static str> {
    let mut names = vec!["all", "fast", "slow"];
    names.extend(CRITERIA.iter().map(|c| c.key));
    names
}

/// Criteria selected by `name`: a tier, `all`, a criterion key or its number.
pub fn select(name: &str) -> Result<Vec<&'static Criterion>> {
    let picked: Vec<&Criterion> = match name {
        "all" => CRITERIA.iter().collect(),
        "fast" => CRITERIA.iter().filter(|c| c.tier == Tier::Fast).collect(),
        "slow" => CRITERIA.iter().filter(|c| c.tier == Tier::Slow).collect(),
        _ => CRITERIA.iter().filter(|c| c.key == name || c.id.to_string() == name).collect(),
    };
    if picked.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "unknown suite '{name}'; choose one of {}",
            suite_names().join(", ")
        )));
    }
    Ok(picked)
}

/// Runs one criterion. Numerical errors inside a check count as a failure.
pub fn run_criterion(c: &Criterion, opts: &VerifyOptions) -> Outcome {
    let start = Instant::now();
    let check = (c.run)(opts).unwrap_or_else(|e| {
        let mut k = Check::new();
        k.require(false, format!("error: {e}"));
        k
    });
    Outcome {
        id: c.id,
        key: c.key,
        passed: check.passed,
        detail: check.detail,
        values: check.values,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_suite(name: &str, opts: &VerifyOptions) -> Result<Vec<Outcome>> {
    Ok(select(name)?.into_iter().map(|c| run_criterion(c, opts)).collect())
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Emptying controls of different shapes, all switched on at `t = 0`.
fn emptying_controls() -> Result<Vec<(&'static str, ControlField)>> {
    Ok(vec![
        ("pi", ControlField::ideal_pi_pulse()),
        ("constant", ControlField::constant(c(8.0, 0.0), 0.0, 1.0)?),
        ("ramp", ControlField::from_fn(0.0, 30.0, 3001, |t| c(12.0 * (1.0 - (-t / 0.7).exp()), 0.0))?),
        (
            "modulated",
            ControlField::from_fn(0.0, 60.0, 12001, |t| C64::from_polar(10.0 * (1.0 - (-t).exp()), 3.0 * (2.0 * t).sin()))?,
        ),
    ])
}

fn invariance(_: &VerifyOptions) -> Result<Check> {
    let mut k = Check::new();
    let profile = Family::Gaussian.with_hwhm(2.0);
    let controls = emptying_controls()?;
    let detunings = [0.0, 20.0];

    let mut cfg = ProtocolConfig::new(10.0, profile.clone());
    cfg.classes = Some(15);
    cfg.grid = Grid { nz: 101, nt: 401, t_max: 60.0 };
    let spin_wave = ModeSample::linear_ramp(101);
    let mut free = Vec::new();
    for &delta in &detunings {
        cfg.detuning = delta;
        for (name, control) in &controls {
            let out = retrieve_spin_wave(&cfg, &spin_wave, control)?;
            let eta = total_efficiency(&out.output);
            let residual = out.state.excitation();
            k.require(residual < 1e-4, format!("free space {name} Δ = {delta}: residual {residual:.2e}"));
            k.value(format!("free_{name}_detuning_{delta}"), eta);
            free.push(eta);
        }
    }
    let classes = profile.discretize(15)?;
    let mut cavity = Vec::new();
    for &delta in &detunings {
        let st = CavityState::new(&classes, 5.0, delta)?.with_symmetric_spin_wave(c(1.0, 0.0));
        for (name, control) in &controls {
            let (eta, warning) = cavity_retrieval_efficiency(&cavity_retrieve(&st, control)?);
            k.require(warning.is_none(), format!("cavity {name} Δ = {delta}: {}", warning.unwrap_or_default()));
            k.value(format!("cavity_{name}_detuning_{delta}"), eta);
            cavity.push(eta);
        }
    }
    for (label, etas) in [("free space", &free), ("cavity", &cavity)] {
        let lo = etas.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = etas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        k.value(format!("{}_spread", label.replace(' ', "_")), hi - lo);
        k.note(format!("{label} η ∈ [{lo:.5}, {hi:.5}]"));
        k.require(hi - lo <= 1e-3, format!("{label} spread {:.2e} > 1e-3", hi - lo));
    }
    Ok(k)
}

/// Best backward retrieval efficiency from the optimal spin wave.
fn best_backward(d: f64, profile: LineProfile, nz: usize) -> Result<f64> {
    let cfg = TransferConfig::new(d, profile)?.with_direction(Direction::Backward);
    Ok(optimal_spin_wave(&retrieval_kernel(&cfg, nz)?)?.efficiency)
}

fn lorentzian_rescaling(_: &VerifyOptions) -> Result<Check> {
    let mut k = Check::new();
    let mut worst: f64 = 0.0;
    for d in [2.0, 20.0, 100.0] {
        for width in [0.5, 3.0, 10.0] {
            let broad = best_backward(d, LineProfile::Lorentzian { width }, 101)?;
            let homog = best_backward(d / (1.0 + width), LineProfile::Homogeneous, 101)?;
            worst = worst.max((broad - homog).abs());
        }
    }
    k.value("max_difference", worst);
    k.note(format!("Lorentzian vs rescaled homogeneous: max |Δη| = {worst:.2e}"));
    k.require(worst <= 1e-6, format!("max |Δη| {worst:.2e} > 1e-6"));

    let d = 100.0;
    let dp = doppler_observed_depth(d, DOPPLER_HWHM);
    let gauss = best_backward(d, Family::Gaussian.with_hwhm(DOPPLER_HWHM), 101)?;
    let naive = best_backward(dp, LineProfile::Homogeneous, 101)?;
    k.value("gaussian_counterexample", (gauss - naive).abs());
    k.note(format!("Gaussian d = 100, Δ = 88: η = {gauss:.4} vs {naive:.4} at d' = {dp:.3}"));
    k.require((gauss - naive).abs() > 1e-2, "Gaussian counterexample differs by ≤ 1e-2");
    Ok(k)
}

fn asymptote(opts: &VerifyOptions) -> Result<Check> {
    let mut k = Check::new();
    let ds = [50.0, 100.0, 200.0, 400.0, 800.0];
    let errs = par_map(&ds, opts.threads, |&d| {
        Ok(1.0 - max_total_efficiency_redistribution(&TransferConfig::new(d, LineProfile::Homogeneous)?, 201)?)
    })?;
    let (a, b) = fit_depth_asymptote(&ds, &errs)?;
    for (d, e) in ds.iter().zip(&errs) {
        k.value(format!("error_times_d_{d}"), e * d);
    }
    k.value("a", a);
    k.value("b", b);
    k.note(format!("error·d = {a:.3} + {b:.3}/√d"));
    k.require(rel(a, 5.8) <= 0.1, format!("asymptote {a:.3} not within 10% of 5.8"));
    Ok(k)
}

/// A randomized retrieval setup shared by the time-domain and spectral
/// solvers: both see the same finite set of frequency classes.
struct RandomCase {
    label: String,
    protocol: ProtocolConfig,
    transfer: TransferConfig,
    spin_wave: ModeSample,
    line_scale: f64,
}

fn random_case(rng: &mut ChaCha8Rng, nz: usize) -> Result<RandomCase> {
    let d = rng.gen_range(1.0..15.0);
    let family = if rng.gen_bool(0.5) { Family::Gaussian } else { Family::Lorentzian };
    let hwhm = rng.gen_range(0.3..3.0);
    let m = [9, 11, 15][rng.gen_range(0..3)];
    let direction = if rng.gen_bool(0.5) { Direction::Forward } else { Direction::Backward };
    let classes = family.with_hwhm(hwhm).discretize(m)?;
    let nodes: Vec<(f64, f64)> =
        classes.detunings().iter().copied().zip(classes.weights().iter().copied()).collect();
    let profile = LineProfile::discrete(nodes)?;

    let mut protocol = ProtocolConfig::new(d, profile.clone());
    protocol.direction = direction;
    protocol.grid = Grid { nz: nz - 1, nt: 501, t_max: 25.0 };
    let transfer = TransferConfig::new(d, profile)?.with_direction(direction);

    let coeffs: Vec<C64> = (0..3).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let spin_wave = ModeSample::spin_wave(nz, |z| {
        coeffs[0] + coeffs[1] * (std::f64::consts::PI * z).sin() + coeffs[2] * z * z
    })?
    .normalized()?;
    let label = format!("d = {d:.2} {} Δ = {hwhm:.2} m = {m} {}", family.name(), direction.name());
    Ok(RandomCase { label, protocol, transfer, spin_wave, line_scale: hwhm })
}

fn cross_oracle(opts: &VerifyOptions) -> Result<Check> {
    let mut k = Check::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cases: Vec<RandomCase> = (0..12).map(|_| random_case(&mut rng, 201)).collect::<Result<_>>()?;

    let mut worst_oracle: f64 = 0.0;
    let mut worst_plancherel: f64 = 0.0;
    for (i, case) in cases.iter().enumerate() {
        let time = retrieve_spin_wave(&case.protocol, &case.spin_wave, &ControlField::ideal_pi_pulse())?;
        let eta_time = total_efficiency(&time.output);
        let nodes = TransferMap::output_nodes(&case.transfer);
        let map = TransferMap::new(&case.transfer, nodes.clone(), nodes)?;
        let eta_spec = map.retrieval(&case.spin_wave).efficiency();
        let diff = (eta_time - eta_spec).abs();
        k.value(format!("case_{i}_time"), eta_time);
        k.value(format!("case_{i}_spectral"), eta_spec);
        k.require(diff <= 1e-3, format!("case {i} ({}): |Δη| = {diff:.2e}", case.label));
        worst_oracle = worst_oracle.max(diff);

        // Plancherel: the same spectrum integrated over frequency and,
        // after inversion, over time.
        let spectrum = |v: C64| fast_retrieval_spectrum(&case.spin_wave, &case.transfer, v).unwrap_or(C64::new(f64::NAN, 0.0));
        let mut grid = SpectralGrid::for_medium(case.transfer.d, case.line_scale, 1.0)?;
        while grid.window() < 60.0 {
            grid = grid.lengthened();
        }
        let eta_freq = efficiency_from_spectrum_auto(|x| spectrum(C64::new(0.0, x)), &grid)?;
        let field = crate::spectral::inverse_laplace(spectrum, &grid, 0.0, 25.0, 20001)?;
        let eta_t = total_efficiency(&field);
        let p = (eta_freq - eta_t).abs().max((eta_freq - eta_spec).abs());
        worst_plancherel = worst_plancherel.max(p);
        k.require(p <= 1e-4, format!("case {i}: Plancherel mismatch {p:.2e}"));
    }

    // Plancherel through the full storage and retrieval round trip.
    let pulse = gaussian_like_pulse(1.0, 401)?;
    for case in cases.iter().take(3) {
        let (field, eta) = storage_then_retrieval_output(&pulse, &case.transfer, 30.0, 30001)?;
        let p = (total_efficiency(&field) / pulse.norm_sq() - eta).abs();
        worst_plancherel = worst_plancherel.max(p);
        k.require(p <= 1e-4, format!("round trip ({}): Plancherel mismatch {p:.2e}", case.label));
    }

    // Grid doubling in both solvers.
    let mut worst_grid: f64 = 0.0;
    for case in cases.iter().take(3) {
        let coarse = total_efficiency(
            &retrieve_spin_wave(&case.protocol, &case.spin_wave, &ControlField::ideal_pi_pulse())?.output,
        );
        let mut fine_cfg = case.protocol.clone();
        fine_cfg.grid.nz = 2 * case.protocol.grid.nz;
        let fine_wave = case.spin_wave.resampled(0.0, 1.0, 401)?;
        let fine = total_efficiency(&retrieve_spin_wave(&fine_cfg, &fine_wave, &ControlField::ideal_pi_pulse())?.output);
        let g = (coarse - fine).abs();
        worst_grid = worst_grid.max(g);
        k.require(g < 1e-4, format!("nz doubling ({}): Δη = {g:.2e}", case.label));
    }
    for d in [5.0, 50.0] {
        let cfg = TransferConfig::new(d, Family::Gaussian.with_hwhm(2.0))?;
        let a = optimal_spin_wave(&retrieval_kernel(&cfg, 101)?)?.efficiency;
        let b = optimal_spin_wave(&retrieval_kernel(&cfg, 201)?)?.efficiency;
        worst_grid = worst_grid.max((a - b).abs());
        k.require((a - b).abs() < 1e-4, format!("kernel nz doubling at d = {d}: Δη = {:.2e}", (a - b).abs()));
    }
    k.value("max_oracle_difference", worst_oracle);
    k.value("max_plancherel_mismatch", worst_plancherel);
    k.value("max_grid_change", worst_grid);
    k.note(format!(
        "12 cases: max |Δη| = {worst_oracle:.2e}, Plancherel {worst_plancherel:.2e}, grid doubling {worst_grid:.2e}"
    ));
    Ok(k)
}

fn redistribution(_: &VerifyOptions) -> Result<Check> {
    let mut k = Check::new();

    // Output of a stored pulse with and without redistribution, compared
    // through the norm of the difference spectrum.
    let pulse = gaussian_like_pulse(0.2, 401)?;
    let distance = |profile: LineProfile, direction: Direction| -> Result<(f64, f64, f64)> {
        let cfg = TransferConfig::new(50.0, profile)?.with_direction(direction);
        let plain = TransferMap::for_duration(&cfg, 0.2)?.store_retrieve(&pulse);
        let mixed = TransferMap::for_duration(&cfg.clone().with_redistribution(true), 0.2)?.store_retrieve(&pulse);
        let diff = NodeSpectrum {
            nodes: plain.nodes.clone(),
            values: plain.values.iter().zip(&mixed.values).map(|(a, b)| a - b).collect(),
        };
        Ok((plain.efficiency(), mixed.efficiency(), diff.efficiency().sqrt()))
    };
    let (eta_plain, eta_mixed, dist) = distance(LineProfile::Lorentzian { width: 1.0 }, Direction::Forward)?;
    k.value("forward_l2_distance", dist);
    k.note(format!("Lorentzian forward: η = {eta_plain:.5} vs {eta_mixed:.5}, L² distance {dist:.2e}"));
    k.require(dist < 1e-3, format!("outputs differ by {dist:.2e} in L²"));
    let (_, _, back) = distance(LineProfile::Lorentzian { width: 1.0 }, Direction::Backward)?;
    let (_, _, gauss) = distance(Family::Gaussian.with_hwhm(1.0), Direction::Forward)?;
    k.value("backward_l2_distance", back);
    k.value("gaussian_forward_l2_distance", gauss);
    k.note(format!("Lorentzian backward {back:.2e}, Gaussian forward {gauss:.2e}"));

    // Best round trip with redistribution: store the time-reversed output
    // of the optimal retrieval, then retrieve backward.
    let classes = Family::Gaussian.with_hwhm(2.0).discretize(21)?;
    let nodes: Vec<(f64, f64)> =
        classes.detunings().iter().copied().zip(classes.weights().iter().copied()).collect();
    let profile = LineProfile::discrete(nodes)?;
    let tc = TransferConfig::new(10.0, profile.clone())?;
    let best = optimal_spin_wave(&retrieval_kernel(&tc, 201)?)?;
    let mut cfg = ProtocolConfig::new(10.0, profile);
    cfg.redistribute = true;
    cfg.grid = Grid { nz: 200, nt: 1001, t_max: 20.0 };
    let emitted = retrieve_spin_wave(&cfg, &best.mode, &ControlField::ideal_pi_pulse())?.output;
    let input = emitted.time_reversed().normalized()?;
    let trip = store_and_retrieve(&cfg, &input)?;
    let want = best.efficiency.powi(2);
    let diff = (trip.total_efficiency - want).abs();
    k.value("eta_retrieval_max", best.efficiency);
    k.value("eta_total", trip.total_efficiency);
    k.note(format!("η_tot = {:.5}, η_r² = {want:.5}", trip.total_efficiency));
    k.require(diff <= 1e-3, format!("|η_tot − η_r²| = {diff:.2e}"));
    Ok(k)
}

fn optimal_mode(opts: &VerifyOptions) -> Result<Check> {
    let mut k = Check::new();
    let modes = par_map(&FIG2_DPRIME, opts.threads, |&dp| doppler_optimal_mode(dp, 201))?;
    let ramp = ModeSample::linear_ramp(201).normalized()?;
    let mut dist = Vec::new();
    for (&dp, (_, eta, mode)) in FIG2_DPRIME.iter().zip(&modes) {
        let x = mode.phase_aligned_distance(&ramp)?;
        k.value(format!("distance_dprime_{dp}"), x);
        k.value(format!("efficiency_dprime_{dp}"), *eta);
        dist.push(x);
    }
    k.note(format!(
        "distance to √3 z: {}",
        dist.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
    ));
    k.require(dist.windows(2).all(|w| w[1] < w[0]), "distances are not decreasing");
    let last = *dist.last().expect("four modes");
    k.require(last < 0.1, format!("distance {last:.4} ≥ 0.1 at the largest d'"));
    Ok(k)
}

fn doppler(opts: &VerifyOptions) -> Result<Check> {
    let mut k = Check::new();
    let ds = [1e3, 1e4, 1e5];
    let errs = par_map(&ds, opts.threads, |&d| doppler_errors(d, 101))?;
    for (&d, &(e, h, naive)) in ds.iter().zip(&errs) {
        let dp = doppler_observed_depth(d, DOPPLER_HWHM);
        let heur = heuristic_error(d, dp, HeuristicModel::DopplerFig3)?;
        let ratio = e / heur;
        k.value(format!("error_d_{d}"), e);
        k.value(format!("ratio_d_{d}"), ratio);
        k.note(format!("d = {d:.0}: error {e:.4e}, ratio to heuristic {ratio:.3}"));
        k.require((1.0 / 1.5..=1.5).contains(&ratio), format!("d = {d:.0}: ratio {ratio:.3} outside [1/1.5, 1.5]"));
        k.require(h <= e && e <= naive, format!("d = {d:.0}: ordering {h:.3e} ≤ {e:.3e} ≤ {naive:.3e} broken"));
    }
    Ok(k)
}

fn dprime_limited(opts: &VerifyOptions) -> Result<Check> {
    let mut k = Check::new();
    let dps = [10.0, 14.0, 20.0];
    let errs = par_map(&dps, opts.threads, |&dp| dprime_error(dp, 1000.0))?;
    for (&dp, &e) in dps.iter().zip(&errs) {
        let want = 14.2 / (dp * dp);
        k.value(format!("error_dprime_{dp}"), e);
        k.note(format!("d' = {dp}: error {e:.4} vs {want:.4}"));
        k.require(rel(e, want) <= 0.15, format!("d' = {dp}: {:.1}% off", 100.0 * rel(e, want)));
    }
    for (dp, want, tol) in [(2.0, 0.2, 0.5), (20.0, 4.2, 0.2)] {
        let (c1, c2, resid) = inverse_depth_fit(dp, opts.threads)?;
        k.value(format!("c1_dprime_{dp}"), c1);
        k.value(format!("c2_dprime_{dp}"), c2);
        k.note(format!("d' = {dp}: c1 = {c1:.4}, c2 = {c2:.3}"));
        k.require(rel(c2, want) <= tol, format!("c2({dp}) = {c2:.3} not within {:.0}% of {want}", 100.0 * tol));
        k.require(resid < 0.1 * c1, format!("fit residual {resid:.2e} at d' = {dp}"));
    }
    Ok(k)
}

fn truncation(opts: &VerifyOptions) -> Result<Check> {
    let mut k = Check::new();
    let ds = [20.0, 60.0, 120.0];
    let runs = par_map(&ds, opts.threads, |&d| truncation_loss(d, 20.0, 2.0, 2001, 3))?;
    for (&d, &(eta, loss)) in ds.iter().zip(&runs) {
        k.value(format!("efficiency_d_{d}"), eta);
        k.value(format!("loss_d_{d}"), loss);
        k.note(format!("d = {d}: η = {eta:.5}, loss {loss:.2e}"));
        k.require(loss < 1e-4, format!("d = {d}: truncation loses {loss:.2e}"));
    }
    Ok(k)
}

fn crib(opts: &VerifyOptions) -> Result<Check> {
    let mut k = Check::new();
    let depths = [0.5, 1.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 50.0];
    let (g, l) = crib_scans(&depths, opts.threads)?;
    for s in [&g, &l] {
        for p in s.points.iter().filter(|p| p.depth <= 1.0) {
            k.require(p.width == 0.0, format!("{} D = {}: width {:.3}", s.family.name(), p.depth, p.width));
        }
    }
    let at10 = |s: &CribScanResult| s.points.iter().find(|p| p.depth == 10.0).cloned().expect("D = 10");
    let (pg, pl) = (at10(&g), at10(&l));
    k.value("eta_gaussian_10", pg.efficiency);
    k.value("eta_lorentzian_10", pl.efficiency);
    k.value("eta_unbroadened_10", pg.unbroadened);
    k.note(format!(
        "D = 10: η_G = {:.4}, η_L = {:.4}, η_0 = {:.4}",
        pg.efficiency, pl.efficiency, pg.unbroadened
    ));
    k.require(
        pg.efficiency > pl.efficiency && pl.efficiency > pg.unbroadened,
        "ordering Gaussian > Lorentzian > unbroadened broken at D = 10",
    );
    let fit = |s: &CribScanResult| {
        let (x, w): (Vec<f64>, Vec<f64>) =
            s.points.iter().filter(|p| p.depth >= 5.0).map(|p| (p.depth, p.width)).unzip();
        fit_sqrt_law(&x, &w)
    };
    let (cg, cl) = (fit(&g)?, fit(&l)?);
    let (ag, al) = coefficient_assignment(cg, cl);
    k.value("c_gaussian", cg);
    k.value("c_lorentzian", cl);
    k.note(format!("c_G = {cg:.3} (matched to {ag}), c_L = {cl:.3} (matched to {al})"));
    k.require(rel(cg, ag) <= 0.15, format!("c_G {cg:.3} not within 15% of {ag}"));
    k.require(rel(cl, al) <= 0.15, format!("c_L {cl:.3} not within 15% of {al}"));
    Ok(k)
}

fn finite_decay(opts: &VerifyOptions) -> Result<Check> {
    let mut k = Check::new();
    let pulse = gaussian_like_pulse(1.0, 1001)?;
    let jobs: Vec<(f64, Family)> = [0.05, 0.2]
        .iter()
        .flat_map(|&gt| [Family::Gaussian, Family::Lorentzian].map(|f| (gt, f)))
        .collect();
    let d = 100.0;
    let rows = par_map(&jobs, opts.threads, |&(gt, family)| {
        let (_, exact) = finite_decay_optimum(d, gt, family, &pulse)?;
        let free = crib_width_scan(&[d * gt], family, &pulse)?.points[0].efficiency;
        Ok((exact, finite_decay_rescale(free, gt)))
    })?;
    for (&(gt, family), &(exact, scaled)) in jobs.iter().zip(&rows) {
        let r = rel(exact, scaled);
        k.value(format!("{}_gamma_t_{gt}_exact", family.name()), exact);
        k.value(format!("{}_gamma_t_{gt}_rescaled", family.name()), scaled);
        k.note(format!("{} γT = {gt}: {exact:.4} vs {scaled:.4}", family.name()));
        k.require(r <= 0.1, format!("{} γT = {gt}: {:.1}% apart", family.name(), 100.0 * r));
    }
    Ok(k)
}
