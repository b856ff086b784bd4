//! Spine decomposition under the size-biased measure and the many-to-one
//! identity.
//!
//! Under the `h`-size-biased measure the spine branches at rate
//! `a_i + lambda*`, its offspring vector `A` has law
//! `p_A(i) <A, h> / ((1 + lambda*/a_i) h_i)` and the spine continues in a
//! child of type `j` with probability `A_j h_j / <A, h>`. Its position is a
//! standard Brownian motion independent of the type path.
//!
//! The branch clock and the type chain are kept apart: for a single-type
//! model the spine branches at rate `a + lambda*` but never changes type.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{validate_model, ModelSpec};
use crate::rng::{map_replicates, substream, SimRng};
use crate::simulator::{SimOptions, Simulator, Start};
use crate::spectral::{Matrix, SpectralData};
use crate::stats::{EstimatorReport, MeanAccumulator};

/// Generator of the spine type chain together with its branch-event rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpineGenerator {
    /// `g_ij = a_i m_ij h_j / h_i - (a_i + lambda*) delta_ij`.
    pub matrix: Matrix,
    /// Branch-event rate `a_i + lambda*` of the spine in type `i`.
    pub event_rates: Vec<f64>,
}

impl SpineGenerator {
    /// Largest `|mu^T G|` entry.
    pub fn stationarity_residual(&self, mu: &[f64]) -> f64 {
        self.matrix.vec_mul(mu).iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest absolute row sum of the generator.
    pub fn row_sum_residual(&self) -> f64 {
        (0..self.matrix.dim())
            .map(|i| self.matrix.row(i).iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

fn require_pure_jump(spec: &ModelSpec) -> Result<()> {
    let report = validate_model(spec)?;
    if !report.accepted(true) {
        return Err(Error::Rejected(format!(
            "spine machinery needs a strictly valid model: {}",
            report.messages.join("; ")
        )));
    }
    Ok(())
}

pub fn spine_generator(spec: &ModelSpec, sd: &SpectralData) -> Result<SpineGenerator> {
    require_pure_jump(spec)?;
    let d = spec.d();
    let m = spec.mean_matrix();
    let mut g = Matrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            g[(i, j)] = spec.rates[i] * m[(i, j)] * sd.h[j] / sd.h[i];
        }
        g[(i, i)] -= spec.rates[i] + sd.lambda_star;
    }
    Ok(SpineGenerator {
        matrix: g,
        event_rates: spec.rates.iter().map(|a| a + sd.lambda_star).collect(),
    })
}

#[derive(Debug, Clone)]
struct BiasedLaw {
    cumulative: Vec<f64>,
    outcomes: Vec<Vec<u32>>,
    /// Per outcome: cumulative continuation weights `A_j h_j` over types.
    continuation: Vec<Vec<f64>>,
}

/// Size-biased offspring laws of every type, by exact enumeration of the
/// finite support.
#[derive(Debug, Clone)]
pub struct SizeBiasedOffspring {
    laws: Vec<BiasedLaw>,
    /// `sum_A p_hat_A(i)` per type, one up to rounding.
    pub totals: Vec<f64>,
}

impl SizeBiasedOffspring {
    pub fn new(spec: &ModelSpec, sd: &SpectralData) -> Self {
        let mut totals = Vec::new();
        let laws = spec
            .offspring
            .iter()
            .enumerate()
            .map(|(i, law)| {
                let norm = (1.0 + sd.lambda_star / spec.rates[i]) * sd.h[i];
                let mut acc = 0.0;
                let mut cumulative = Vec::new();
                let mut outcomes = Vec::new();
                let mut continuation = Vec::new();
                for (k, p) in &law.outcomes {
                    let kh: f64 = k.iter().zip(&sd.h).map(|(&kj, hj)| kj as f64 * hj).sum();
                    let w = p * kh / norm;
                    if w <= 0.0 {
                        continue;
                    }
                    acc += w;
                    cumulative.push(acc);
                    outcomes.push(k.clone());
                    let mut c = 0.0;
                    continuation.push(
                        k.iter()
                            .zip(&sd.h)
                            .map(|(&kj, hj)| {
                                c += kj as f64 * hj;
                                c
                            })
                            .collect(),
                    );
                }
                totals.push(acc);
                BiasedLaw {
                    cumulative,
                    outcomes,
                    continuation,
                }
            })
            .collect();
        Self { laws, totals }
    }

    /// Probability `p_hat_A(i)` of each support point of type `i`.
    pub fn probabilities(&self, i: usize) -> Vec<(Vec<u32>, f64)> {
        let law = &self.laws[i];
        let mut prev = 0.0;
        law.outcomes
            .iter()
            .zip(&law.cumulative)
            .map(|(k, &c)| {
                let p = c - prev;
                prev = c;
                (k.clone(), p)
            })
            .collect()
    }

    /// Draws an offspring vector and the type the spine continues in.
    pub fn sample(&self, i: usize, rng: &mut SimRng) -> (&[u32], usize) {
        let law = &self.laws[i];
        let total = *law.cumulative.last().expect("non-empty size-biased law");
        let idx = if law.cumulative.len() == 1 {
            0
        } else {
            let u = rng.random::<f64>() * total;
            law.cumulative.iter().position(|&c| u < c).unwrap_or(law.cumulative.len() - 1)
        };
        let cont = &law.continuation[idx];
        let top = *cont.last().expect("non-empty offspring vector");
        let u = rng.random::<f64>() * top;
        let j = cont.iter().position(|&c| u < c && c > 0.0).unwrap_or(cont.len() - 1);
        (&law.outcomes[idx], j)
    }
}

pub fn size_biased_offspring(spec: &ModelSpec, sd: &SpectralData, i: usize, rng: &mut SimRng) -> (Vec<u32>, usize) {
    let table = SizeBiasedOffspring::new(spec, sd);
    let (k, j) = table.sample(i, rng);
    (k.to_vec(), j)
}

/// One realisation of the spine on `[0, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinePath {
    pub t: f64,
    /// Times of every spine branch event.
    pub branch_times: Vec<f64>,
    /// Times at which the type changed.
    pub jump_times: Vec<f64>,
    /// Initial type followed by the type after each type change.
    pub types: Vec<usize>,
    /// Time spent in each type.
    pub occupation: Vec<f64>,
    pub position: f64,
}

impl SpinePath {
    pub fn terminal_type(&self) -> usize {
        *self.types.last().expect("path has an initial type")
    }
}

/// Compiled spine sampler.
#[derive(Debug, Clone)]
pub struct SpineSampler {
    offspring: SizeBiasedOffspring,
    event_rates: Vec<f64>,
}

impl SpineSampler {
    pub fn new(spec: &ModelSpec, sd: &SpectralData) -> Result<Self> {
        let generator = spine_generator(spec, sd)?;
        Ok(Self {
            offspring: SizeBiasedOffspring::new(spec, sd),
            event_rates: generator.event_rates,
        })
    }

    pub fn simulate(&self, start: Start, t: f64, rng: &mut SimRng) -> Result<SpinePath> {
        let d = self.event_rates.len();
        if start.ty >= d || !(t >= 0.0) {
            return Err(Error::Domain(format!("bad spine start {start:?} or time {t}")));
        }
        let mut ty = start.ty;
        let mut now = 0.0;
        let mut path = SpinePath {
            t,
            branch_times: Vec::new(),
            jump_times: Vec::new(),
            types: vec![ty],
            occupation: vec![0.0; d],
            position: 0.0,
        };
        loop {
            let e: f64 = rng.sample(Exp1);
            let next = now + e / self.event_rates[ty];
            if next >= t {
                path.occupation[ty] += t - now;
                break;
            }
            path.occupation[ty] += next - now;
            now = next;
            path.branch_times.push(now);
            let (_, cont) = self.offspring.sample(ty, rng);
            if cont != ty {
                path.jump_times.push(now);
                path.types.push(cont);
                ty = cont;
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        path.position = start.position + t.sqrt() * z;
        Ok(path)
    }
}

pub fn simulate_spine(spec: &ModelSpec, sd: &SpectralData, start: Start, t: f64, rng: &mut SimRng) -> Result<SpinePath> {
    SpineSampler::new(spec, sd)?.simulate(start, t, rng)
}

/// Named bounded test functionals `H(x, j)` for the many-to-one check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    /// `1`
    One,
    /// `1{j = d}` (last type)
    LastType,
    /// `1{x <= 0}`
    LeftHalf,
    /// `max(0, 1 - |x| / 2)`
    Tent,
    /// `1{j = 1} exp(-x^2)`
    FirstTypeBump,
}

impl Functional {
    pub const ALL: [Functional; 5] = [
        Functional::One,
        Functional::LastType,
        Functional::LeftHalf,
        Functional::Tent,
        Functional::FirstTypeBump,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Functional::One => "one",
            Functional::LastType => "last-type",
            Functional::LeftHalf => "left-half",
            Functional::Tent => "tent",
            Functional::FirstTypeBump => "first-type-bump",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::Unknown {
                kind: "functional",
                name: name.into(),
                valid: Self::ALL.map(|f| f.name()).join(", "),
            })
    }

    pub fn eval(&self, x: f64, ty: usize, d: usize) -> f64 {
        match self {
            Functional::One => 1.0,
            Functional::LastType => f64::from(u8::from(ty + 1 == d)),
            Functional::LeftHalf => f64::from(u8::from(x <= 0.0)),
            Functional::Tent => (1.0 - x.abs() / 2.0).max(0.0),
            Functional::FirstTypeBump => {
                if ty == 0 {
                    (-x * x).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

/// Branching-side and spine-side estimates of the many-to-one identity
/// `E sum_u H(X_u(t), I_u(t)) = e^{lambda* t} E^[H(X_xi(t), I_xi(t)) h_i / h_{I_xi(t)}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManyToOne {
    pub branching: EstimatorReport,
    pub spine: EstimatorReport,
}

impl ManyToOne {
    pub fn z_score(&self) -> f64 {
        self.branching.z_score(&self.spine)
    }
}

/// Runs the many-to-one comparison for several functionals at once; the
/// branching and spine sides use independent sub-streams of `master_seed`.
#[allow(clippy::too_many_arguments)]
pub fn many_to_one_check(
    spec: &ModelSpec,
    sd: &SpectralData,
    functionals: &[Functional],
    start: Start,
    t: f64,
    n: usize,
    master_seed: u64,
) -> Result<Vec<ManyToOne>> {
    let sampler = SpineSampler::new(spec, sd)?;
    let sim = Simulator::new(spec, sd, SimOptions::default())?;
    let d = spec.d();
    let k = functionals.len();
    let branch_seed = substream(master_seed, "many-to-one/branching");
    let spine_seed = substream(master_seed, "many-to-one/spine");

    let branch_rows = sim.map_snapshots(start, t, n, branch_seed, |s| {
        let mut row = vec![0.0; k];
        for (x, ty) in s.iter() {
            for (r, f) in row.iter_mut().zip(functionals) {
                *r += f.eval(x, ty, d);
            }
        }
        row
    })?;

    let growth = (sd.lambda_star * t).exp();
    let hi = sd.h[start.ty];
    let spine_rows = map_replicates(n, spine_seed, |_, rng| {
        let path = sampler.simulate(start, t, rng)?;
        let ty = path.terminal_type();
        let weight = growth * hi / sd.h[ty];
        Ok(functionals
            .iter()
            .map(|f| weight * f.eval(path.position, ty, d))
            .collect::<Vec<f64>>())
    })?;

    Ok((0..k)
        .map(|c| {
            let mut a = MeanAccumulator::default();
            let mut b = MeanAccumulator::default();
            branch_rows.iter().for_each(|r| a.push(r[c]));
            spine_rows.iter().for_each(|r| b.push(r[c]));
            ManyToOne {
                branching: a.report(format!("branching:{}", functionals[c].name()), branch_seed),
                spine: b.report(format!("spine:{}", functionals[c].name()), spine_seed),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin::*;
    use crate::model::OffspringLaw;
    use crate::spectral::spectral_data;
    use rand::SeedableRng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn generator_of_single_type_model_is_zero() {
        let spec = model_a();
        let sd = spectral_data(&spec).unwrap();
        let g = spine_generator(&spec, &sd).unwrap();
        assert_eq!(g.matrix.to_rows(), vec![vec![0.0]]);
        assert_eq!(g.event_rates, vec![2.0]);
    }

    #[test]
    fn generator_of_model_b() {
        let spec = model_b();
        let sd = spectral_data(&spec).unwrap();
        let g = spine_generator(&spec, &sd).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { -2.0 } else { 2.0 };
                assert!(close(g.matrix[(i, j)], want, 1e-12));
            }
        }
        assert!(g.stationarity_residual(&sd.mu) < 1e-12);
    }

    #[test]
    fn generator_of_model_c_matches_event_rates() {
        // with m_ii = 0 the off-diagonal row mass equals a_i + lambda*
        let spec = model_c();
        let sd = spectral_data(&spec).unwrap();
        let g = spine_generator(&spec, &sd).unwrap();
        let g12 = 1.0 * 1.5 * sd.h[1] / sd.h[0];
        let g21 = 2.0 * 1.0 * sd.h[0] / sd.h[1];
        assert!(close(g.matrix[(0, 1)], g12, 1e-14));
        assert!(close(g.matrix[(1, 0)], g21, 1e-14));
        assert!(close(g12, 1.0 + sd.lambda_star, 1e-12));
        assert!(close(g21, 2.0 + sd.lambda_star, 1e-12));
        assert!(close(g12, 1.302_775_6, 1e-7));
        assert!(g.row_sum_residual() < 1e-12);
        assert!(g.stationarity_residual(&sd.mu) < 1e-10);
    }

    #[test]
    fn size_biased_laws_sum_to_one() {
        for spec in [model_a(), model_b(), model_c()] {
            let sd = spectral_data(&spec).unwrap();
            let table = SizeBiasedOffspring::new(&spec, &sd);
            for total in &table.totals {
                assert!(close(*total, 1.0, 1e-12));
            }
        }
        let spec = model_c();
        let sd = spectral_data(&spec).unwrap();
        let probs = SizeBiasedOffspring::new(&spec, &sd).probabilities(0);
        let norm = (1.0 + sd.lambda_star) * sd.h[0];
        assert!(close(probs[0].1, 0.5 * 2.0 * sd.h[1] / norm, 1e-14));
        assert!(close(probs[1].1, 0.5 * sd.h[1] / norm, 1e-14));
    }

    #[test]
    fn deterministic_offspring_stays_deterministic() {
        let mut rng = SimRng::seed_from_u64(1);
        let spec = model_a();
        let sd = spectral_data(&spec).unwrap();
        for _ in 0..10 {
            assert_eq!(size_biased_offspring(&spec, &sd, 0, &mut rng), (vec![2], 0));
        }
        let spec = model_b();
        let sd = spectral_data(&spec).unwrap();
        for _ in 0..10 {
            assert_eq!(size_biased_offspring(&spec, &sd, 0, &mut rng), (vec![0, 2], 1));
        }
    }

    #[test]
    fn spine_path_structure() {
        let spec = model_c();
        let sd = spectral_data(&spec).unwrap();
        let mut rng = SimRng::seed_from_u64(3);
        let p = simulate_spine(&spec, &sd, Start::origin(0), 20.0, &mut rng).unwrap();
        assert!(p.branch_times.windows(2).all(|w| w[0] < w[1]));
        assert!(p.jump_times.windows(2).all(|w| w[0] < w[1]));
        assert!(p.types.windows(2).all(|w| w[0] != w[1]));
        assert_eq!(p.types.len(), p.jump_times.len() + 1);
        assert!(close(p.occupation.iter().sum::<f64>(), 20.0, 1e-9));
    }

    #[test]
    fn permissive_models_are_rejected() {
        let spec = ModelSpec::new(
            "selfish",
            vec![1.0, 1.0],
            vec![
                OffspringLaw::deterministic(vec![1, 1]),
                OffspringLaw::deterministic(vec![2, 0]),
            ],
        )
        .unwrap();
        let sd = spectral_data(&spec).unwrap();
        assert!(matches!(spine_generator(&spec, &sd), Err(Error::Rejected(_))));
        assert!(SpineSampler::new(&spec, &sd).is_err());
    }

    #[test]
    fn functional_names_round_trip() {
        for f in Functional::ALL {
            assert_eq!(Functional::parse(f.name()).unwrap(), f);
        }
        assert!(matches!(Functional::parse("nope"), Err(Error::Unknown { .. })));
    }
}
