use mbbm::extremal::{additive_martingale, dppp_sample, extremal_point_pattern, DecorationBank, Frame, PointPattern};
use mbbm::model::builtin::model_a;
use mbbm::rng::SimRng;
use mbbm::simulator::{SimOptions, Simulator, Start};
use mbbm::spectral::{front, spectral_data};
use mbbm::stats::quantile;
use rand::SeedableRng;

#[test]
fn additive_martingale_median_decays() {
    let spec = model_a();
    let sd = spectral_data(&spec).unwrap();
    // about e^16 particles at s = 16
    let options = SimOptions {
        population_cap: 200_000_000,
        ..SimOptions::default()
    };
    let sim = Simulator::new(&spec, &sd, options).unwrap();
    let median = |s: f64| {
        let w = sim.map_snapshots(Start::origin(0), s, 31, 17, |snap| additive_martingale(snap, &sd)).unwrap();
        quantile(&w, 0.5)
    };
    assert!(median(16.0) < median(4.0));
}

#[test]
fn extremal_pattern_is_centred_by_the_front() {
    let spec = model_a();
    let sd = spectral_data(&spec).unwrap();
    let sim = Simulator::new(&spec, &sd, SimOptions::default()).unwrap();
    let mut rng = SimRng::seed_from_u64(2);
    let s = sim.simulate(Start::origin(0), 5.0, &mut rng).unwrap();
    let p = extremal_point_pattern(&s, &sd).unwrap();
    assert_eq!(p.len(), s.len());
    let m = front(5.0, &sd).unwrap();
    assert!((p.max_location().unwrap() - (s.max_position() - m)).abs() < 1e-12);
    assert!(p.points.windows(2).all(|w| w[0].0 >= w[1].0));
}

#[test]
fn dppp_without_mass_is_empty() {
    let sd = spectral_data(&model_a()).unwrap();
    let bank = DecorationBank {
        patterns: vec![PointPattern::new(Frame::Gap, vec![(0.0, 0), (-0.5, 0)])],
        depth: 8.0,
    };
    let mut rng = SimRng::seed_from_u64(4);
    let p = dppp_sample(0.3, 0.0, &bank, -5.0, &sd, &mut rng).unwrap();
    assert!(p.is_empty());
    let q = dppp_sample(0.3, 50.0, &bank, -5.0, &sd, &mut rng).unwrap();
    assert!(!q.is_empty());
    assert!(q.points.iter().all(|&(x, _)| x >= -5.0));
}
