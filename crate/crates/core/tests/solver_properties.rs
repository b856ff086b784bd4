use mbbm::fkpp::{solve, InitialCondition, SolveOptions};
use mbbm::model::builtin::{model_a, model_b, model_c};
use mbbm::rng::substream;
use mbbm::simulator::{SimOptions, Simulator, Start};
use mbbm::spectral::spectral_data;
use mbbm::stats::MeanAccumulator;
use mbbm::testfn::TestFunction;

fn opts(dx: f64, dt: f64) -> SolveOptions {
    SolveOptions {
        dx,
        dt,
        x_lo: -15.0,
        ..SolveOptions::default()
    }
}

#[test]
fn ordered_data_give_ordered_solutions() {
    let spec = model_c();
    let sd = spectral_data(&spec).unwrap();
    let pairs = [
        (
            InitialCondition::Heaviside,
            InitialCondition::custom("step-at-1", |x, _| if x < 1.0 { 1.0 } else { 0.0 }),
        ),
        (
            InitialCondition::Laplace(TestFunction::tent()),
            InitialCondition::Truncated(TestFunction::tent(), 0.5),
        ),
        (InitialCondition::TypedHeaviside(0), InitialCondition::Heaviside),
    ];
    for (lo, hi) in pairs {
        let a = solve(&spec, &sd, &lo, 4.0, &opts(0.05, 0.01)).unwrap();
        let b = solve(&spec, &sd, &hi, 4.0, &opts(0.05, 0.01)).unwrap();
        for i in 0..2 {
            let (pa, pb) = (a.profile(4.0, i).unwrap(), b.profile(4.0, i).unwrap());
            let worst = pa.iter().zip(pb).map(|(u, w)| u - w).fold(f64::NEG_INFINITY, f64::max);
            assert!(worst <= 1e-9, "{} vs {}: {worst}", lo.name(), hi.name());
        }
    }
}

#[test]
fn refinement_converges() {
    let spec = model_b();
    let sd = spectral_data(&spec).unwrap();
    let ic = InitialCondition::Laplace(TestFunction::plateau());
    let at = |dx: f64, dt: f64| -> Vec<f64> {
        let s = solve(&spec, &sd, &ic, 2.0, &opts(dx, dt)).unwrap();
        [-1.0, 0.0, 1.0, 2.0, 3.0].iter().map(|&x| s.value(2.0, 0, x).unwrap()).collect()
    };
    let reference = at(0.0125, 0.000625);
    let err = |v: Vec<f64>| v.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let coarse = err(at(0.1, 0.04));
    let medium = err(at(0.05, 0.01));
    let fine = err(at(0.025, 0.0025));
    assert!(coarse > 2.5 * medium && medium > 2.5 * fine, "{coarse:e} {medium:e} {fine:e}");
}

#[test]
fn laplace_data_match_particle_functionals() {
    let spec = model_c();
    let sd = spectral_data(&spec).unwrap();
    let phi = TestFunction::marked();
    let t = 1.5;
    let sol = solve(&spec, &sd, &InitialCondition::Laplace(phi.clone()), t, &opts(0.05, 0.01)).unwrap();
    let sim = Simulator::new(&spec, &sd, SimOptions::default()).unwrap();
    for i in 0..2 {
        for x in [-1.0, 0.0, 1.5] {
            let samples = sim
                .map_snapshots(Start::origin(i), t, 20_000, substream(5, &format!("{i}/{x}")), |s| {
                    1.0 - (-s.iter().map(|(p, ty)| phi.eval(p - x, ty)).sum::<f64>()).exp()
                })
                .unwrap();
            let mut acc = MeanAccumulator::default();
            samples.iter().for_each(|v| acc.push(*v));
            let pde = sol.value(t, i, x).unwrap();
            assert!(
                (pde - acc.mean()).abs() <= 3.0 * acc.std_error() + 0.02,
                "type {i} x {x}: pde {pde} mc {} ± {}",
                acc.mean(),
                acc.std_error()
            );
        }
    }
}

#[test]
fn wide_truncation_equals_laplace_data() {
    let spec = model_a();
    let sd = spectral_data(&spec).unwrap();
    let a = solve(&spec, &sd, &InitialCondition::Laplace(TestFunction::tent()), 2.0, &opts(0.05, 0.01)).unwrap();
    let b = solve(&spec, &sd, &InitialCondition::Truncated(TestFunction::tent(), 100.0), 2.0, &opts(0.05, 0.01)).unwrap();
    assert_eq!(a.profile(2.0, 0).unwrap(), b.profile(2.0, 0).unwrap());
}
