use mbbm::model::builtin::{model_a, model_b, model_c};
use mbbm::spectral::{front, mean_semigroup, spectral_data, GeneratingFunction};

#[test]
fn model_b_triple() {
    let sd = spectral_data(&model_b()).unwrap();
    assert!((sd.lambda_star - 1.0).abs() < 1e-10);
    for j in 0..2 {
        assert!((sd.g[j] - 0.5).abs() < 1e-10);
        assert!((sd.h[j] - 1.0).abs() < 1e-10);
    }
}

#[test]
fn model_c_matches_hand_eigensolve() {
    let spec = model_c();
    let sd = spectral_data(&spec).unwrap();
    let a = spec.branching_matrix();
    let (p, b, c, e) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let lambda = 0.5 * (p + e) + (0.25 * (p - e) * (p - e) + b * c).sqrt();
    assert!((lambda - (13f64.sqrt() - 3.0) / 2.0).abs() < 1e-12);
    assert!((sd.lambda_star - lambda).abs() < 1e-10);
    // left: g (A - lambda) = 0, right: (A - lambda) h = 0
    let gs = c + lambda - p;
    let g = [c / gs, (lambda - p) / gs];
    let gh = g[0] * b + g[1] * (lambda - p);
    let h = [b / gh, (lambda - p) / gh];
    for j in 0..2 {
        assert!((sd.g[j] - g[j]).abs() < 1e-8);
        assert!((sd.h[j] - h[j]).abs() < 1e-8);
        assert!((sd.mu[j] - g[j] * h[j]).abs() < 1e-8);
    }
    assert!((sd.sqrt2lam - (2.0 * lambda).sqrt()).abs() < 1e-12);
}

#[test]
fn semigroup_preserves_h() {
    for spec in [model_a(), model_b(), model_c()] {
        let sd = spectral_data(&spec).unwrap();
        let pt = mean_semigroup(&spec, 1.7);
        let ph = pt.mul_vec(&sd.h);
        for j in 0..spec.d() {
            assert!((ph[j] - (1.7 * sd.lambda_star).exp() * sd.h[j]).abs() < 1e-9);
        }
    }
}

#[test]
fn front_and_varphi() {
    let sd = spectral_data(&model_a()).unwrap();
    let c = 2f64.sqrt();
    let t = 9.0f64;
    assert!((front(t, &sd).unwrap() - (c * t - 1.5 / c * t.ln())).abs() < 1e-12);
    // binary branching: phi(v) = 1 - (1 - v)^2 = 2v - v^2
    let gf = GeneratingFunction::new(&model_a());
    for v in [1e-12, 1e-3, 0.3, 1.0] {
        assert!((gf.varphi(0, &[v]) - (2.0 * v - v * v)).abs() <= 1e-15 * v.max(1e-3));
    }
}
