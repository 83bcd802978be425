use photon_memory::free_space::{storage_interval_map, IntervalOptions};
use photon_memory::optimal_input::InputOperator;
use photon_memory::optimizer::gaussian_like_pulse;
use photon_memory::profile::{Family, LineProfile};
use photon_memory::spectral::{Direction, NodeOptions, TransferConfig, TransferMap, XiNodes};
use photon_memory::{Domain, ModeSample, C64};
use proptest::prelude::*;
use std::sync::OnceLock;

fn spin_wave(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> ModeSample {
    let (a, b, c) = (C64::new(a.0, a.1), C64::new(b.0, b.1), C64::new(c.0, c.1));
    ModeSample::spin_wave(121, |z| a + b * z + c * (3.0 * z).cos()).unwrap()
}

fn coefficient() -> impl Strategy<Value = (f64, f64)> {
    (-1.0..1.0f64, -1.0..1.0f64)
}

fn retrieval_efficiency(cfg: &TransferConfig, s: &ModeSample) -> f64 {
    let nodes = TransferMap::output_nodes(cfg);
    TransferMap::new(cfg, nodes.clone(), nodes).unwrap().retrieval(s).efficiency()
}

/// Coarse operator shared by the iteration properties.
fn operator() -> &'static InputOperator {
    static OP: OnceLock<InputOperator> = OnceLock::new();
    OP.get_or_init(|| {
        let cfg = TransferConfig::new(8.0, Family::Gaussian.with_hwhm(1.0)).unwrap();
        let mut opts = NodeOptions::for_config(&cfg);
        opts.cutoff = 400.0;
        opts.tol = 16.0;
        opts.growth = 2.0;
        opts.max_panels = 30;
        InputOperator::on_nodes(&cfg, XiNodes::adaptive(&cfg, &opts)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn retrieval_efficiency_is_a_fraction(
        d in 0.5..40.0f64,
        hwhm in 0.1..5.0f64,
        lorentzian in any::<bool>(),
        forward in any::<bool>(),
        a in coefficient(), b in coefficient(), c in coefficient(),
    ) {
        let s = spin_wave(a, b, c);
        prop_assume!(s.norm_sq() > 1e-3);
        let s = s.normalized().unwrap();
        let family = if lorentzian { Family::Lorentzian } else { Family::Gaussian };
        let dir = if forward { Direction::Forward } else { Direction::Backward };
        let cfg = TransferConfig::new(d, family.with_hwhm(hwhm)).unwrap().with_direction(dir);
        let eta = retrieval_efficiency(&cfg, &s);
        prop_assert!((-1e-9..=1.0 + 1e-6).contains(&eta), "η = {eta}");
    }

    #[test]
    fn lorentzian_line_rescales_depth(
        d in 0.5..50.0f64,
        width in 0.05..10.0f64,
        forward in any::<bool>(),
        a in coefficient(), b in coefficient(), c in coefficient(),
    ) {
        let s = spin_wave(a, b, c);
        prop_assume!(s.norm_sq() > 1e-3);
        let s = s.normalized().unwrap();
        let dir = if forward { Direction::Forward } else { Direction::Backward };
        let broad = TransferConfig::new(d, LineProfile::Lorentzian { width }).unwrap().with_direction(dir);
        let homog = TransferConfig::new(d / (1.0 + width), LineProfile::Homogeneous).unwrap().with_direction(dir);
        let (x, y) = (retrieval_efficiency(&broad, &s), retrieval_efficiency(&homog, &s));
        prop_assert!((x - y).abs() < 1e-6, "{x} vs {y}");
    }

    #[test]
    fn time_reversal_history_is_monotone(duration in 0.2..3.0f64, skew in -0.5..0.5f64) {
        let op = operator();
        let trial = gaussian_like_pulse(duration, 201).unwrap();
        let tilted = ModeSample::from_fn(Domain::Time, trial.start(), trial.end(), trial.len(), |t| {
            trial.at(t) * C64::new(1.0 + skew * t / duration, skew)
        }).unwrap();
        let r = op.time_reversal_iterate(&op.amplitudes_of(&tilted), 1e-10, 400).unwrap();
        prop_assert!(r.history.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{:?}", r.history);
        prop_assert!(r.efficiency <= 1.0);
    }

    #[test]
    fn redistribution_is_a_projection(
        re in proptest::collection::vec(-1.0..1.0f64, 7 * 5),
        im in proptest::collection::vec(-1.0..1.0f64, 7 * 5),
    ) {
        let classes = Family::Gaussian.with_hwhm(1.5).discretize(7).unwrap();
        let s: Vec<Vec<C64>> = (0..7)
            .map(|j| (0..5).map(|k| C64::new(re[5 * j + k], im[5 * j + k])).collect())
            .collect();
        let opts = IntervalOptions { redistribute: true, ..Default::default() };
        let once = storage_interval_map(&s, &classes, opts).unwrap();
        let twice = storage_interval_map(&once, &classes, opts).unwrap();
        let energy = |x: &[Vec<C64>]| x.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>();
        for (a, b) in once.iter().flatten().zip(twice.iter().flatten()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
        prop_assert!(energy(&once) <= energy(&s) + 1e-12);
    }

    #[test]
    fn time_reversal_of_modes_is_an_isometric_involution(
        re in proptest::collection::vec(-1.0..1.0f64, 2..60),
        start in -5.0..5.0f64,
        step in 0.01..1.0f64,
    ) {
        let m = ModeSample::new(
            Domain::Time,
            start,
            step,
            re.iter().enumerate().map(|(k, x)| C64::new(*x, 0.3 * k as f64)).collect(),
        ).unwrap();
        let r = m.time_reversed();
        prop_assert!((r.norm_sq() - m.norm_sq()).abs() < 1e-9 * (1.0 + m.norm_sq()));
        let back = r.time_reversed();
        prop_assert_eq!(back.samples(), m.samples());
    }
}
