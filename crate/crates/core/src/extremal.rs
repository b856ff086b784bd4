//! Martingales, extremal point patterns, conditional exceedances, the limit
//! constant `C_inf` and the decorated Poisson point process.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::error::{Error, Result};
use crate::fkpp::{cv_integral, solve, InitialCondition, SolveOptions};
use crate::model::ModelSpec;
use crate::rng::SimRng;
use crate::simulator::{Simulator, Snapshot, Start};
use crate::spectral::{front, SpectralData};
use crate::stats::{kolmogorov_distance, EstimatorReport};
use crate::testfn::TestFunction;

/// `sum_u h_{I_u} exp(-c (X_u + c s))` with `c = sqrt(2 lambda*)`.
pub fn additive_martingale(s: &Snapshot, sd: &SpectralData) -> f64 {
    let c = sd.sqrt2lam;
    s.iter().map(|(x, ty)| sd.h[ty] * (-c * (x + c * s.t)).exp()).sum()
}

/// `sum_u h_{I_u} (X_u + c s) exp(-c (X_u + c s))`.
pub fn derivative_martingale(s: &Snapshot, sd: &SpectralData) -> f64 {
    let c = sd.sqrt2lam;
    s.iter()
        .map(|(x, ty)| {
            let y = x + c * s.t;
            sd.h[ty] * y * (-c * y).exp()
        })
        .sum()
}

/// `exp(-lambda* s) <N_s, h>`.
pub fn normalized_population(s: &Snapshot, sd: &SpectralData) -> f64 {
    let total: f64 = s.types.iter().map(|&ty| sd.h[ty as usize]).sum();
    (-sd.lambda_star * s.t).exp() * total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingalePair {
    pub s: f64,
    pub w: f64,
    pub m: f64,
}

pub fn martingales(s: &Snapshot, sd: &SpectralData) -> MartingalePair {
    MartingalePair {
        s: s.t,
        w: additive_martingale(s, sd),
        m: derivative_martingale(s, sd),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frame {
    /// `X_u(t) - m(t)`.
    Extremal,
    /// `X_u(t) - M_t`.
    Gap,
    /// `X_u(t) - sqrt(2 lambda*) t - z`.
    Shifted(f64),
    /// Sampled decorated Poisson process, same frame as `Extremal`.
    Dppp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    pub frame: Frame,
    /// `(location, mark)` sorted by decreasing location.
    pub points: Vec<(f64, usize)>,
}

impl PointPattern {
    pub fn new(frame: Frame, mut points: Vec<(f64, usize)>) -> Self {
        points.sort_by(|a, b| b.0.total_cmp(&a.0));
        Self { frame, points }
    }

    fn from_snapshot(s: &Snapshot, frame: Frame, shift: f64) -> Self {
        Self::new(frame, s.iter().map(|(x, ty)| (x - shift, ty)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_location(&self) -> Option<f64> {
        self.points.first().map(|p| p.0)
    }

    /// Location of the `k`-th highest point, `k = 0` being the maximum.
    pub fn nth_location(&self, k: usize) -> Option<f64> {
        self.points.get(k).map(|p| p.0)
    }

    pub fn count_above(&self, x: f64) -> usize {
        self.points.partition_point(|p| p.0 >= x)
    }

    /// Points with location at least `x`.
    pub fn truncated(&self, x: f64) -> Self {
        Self {
            frame: self.frame,
            points: self.points[..self.count_above(x)].to_vec(),
        }
    }

    pub fn with_mark(&self, mark: usize) -> Self {
        Self {
            frame: self.frame,
            points: self.points.iter().copied().filter(|p| p.1 == mark).collect(),
        }
    }
}

fn nonempty(s: &Snapshot) -> Result<()> {
    if s.is_empty() {
        Err(Error::Domain("empty snapshot".into()))
    } else {
        Ok(())
    }
}

pub fn extremal_point_pattern(s: &Snapshot, sd: &SpectralData) -> Result<PointPattern> {
    nonempty(s)?;
    Ok(PointPattern::from_snapshot(s, Frame::Extremal, front(s.t, sd)?))
}

pub fn gap_point_pattern(s: &Snapshot) -> Result<PointPattern> {
    nonempty(s)?;
    Ok(PointPattern::from_snapshot(s, Frame::Gap, s.max_position()))
}

pub fn shifted_pattern(s: &Snapshot, sd: &SpectralData, z: f64) -> Result<PointPattern> {
    nonempty(s)?;
    Ok(PointPattern::from_snapshot(s, Frame::Shifted(z), sd.sqrt2lam * s.t + z))
}

/// Gap-frame patterns harvested on `{M_t > sqrt(2 lambda*) t + z}`, each
/// truncated to locations `>= -depth`.
#[derive(Debug, Clone, Default)]
pub struct DecorationBank {
    pub patterns: Vec<PointPattern>,
    pub depth: f64,
}

impl DecorationBank {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn draw(&self, rng: &mut SimRng) -> &PointPattern {
        &self.patterns[rng.random_range(0..self.patterns.len())]
    }
}

/// Outcome of a conditional exceedance harvest.
#[derive(Debug, Clone)]
pub struct Exceedance {
    pub t: f64,
    pub z: f64,
    pub seed: u64,
    /// `M_t` of every replicate, accepted or not.
    pub maxima: Vec<f64>,
    /// `M_t - sqrt(2 lambda*) t - z` of accepted replicates, in replicate order.
    pub overshoots: Vec<f64>,
    /// Matching gap patterns.
    pub bank: DecorationBank,
}

impl Exceedance {
    pub fn accepted(&self) -> usize {
        self.overshoots.len()
    }

    /// The sub-harvest at a higher level `z' >= z`.
    pub fn restrict(&self, z: f64) -> Result<Exceedance> {
        if z < self.z {
            return Err(Error::Domain(format!("cannot lower the level from {} to {z}", self.z)));
        }
        let dz = z - self.z;
        let (overshoots, patterns) = self
            .overshoots
            .iter()
            .zip(&self.bank.patterns)
            .filter(|(o, _)| **o > dz)
            .map(|(o, p)| (o - dz, p.clone()))
            .unzip();
        Ok(Exceedance {
            t: self.t,
            z,
            seed: self.seed,
            maxima: self.maxima.clone(),
            overshoots,
            bank: DecorationBank {
                patterns,
                depth: self.bank.depth,
            },
        })
    }

    /// Kolmogorov distance of the overshoots to `Exp(sqrt(2 lambda*))`.
    pub fn exponential_distance(&self, rate: f64) -> f64 {
        kolmogorov_distance(&self.overshoots, |x| 1.0 - (-rate * x.max(0.0)).exp())
    }

    /// Overshoots paired with the second-highest gap location, for
    /// replicates where the latter lies within the bank depth.
    pub fn overshoot_vs_second_gap(&self) -> (Vec<f64>, Vec<f64>) {
        self.overshoots
            .iter()
            .zip(&self.bank.patterns)
            .filter_map(|(&o, p)| p.nth_location(1).map(|g| (o, g)))
            .unzip()
    }
}

/// Simulates `n` replicates from `start` up to `t` and keeps those with
/// `M_t > sqrt(2 lambda*) t + z`.
#[allow(clippy::too_many_arguments)]
pub fn conditional_exceedance(
    sim: &Simulator,
    sd: &SpectralData,
    start: Start,
    t: f64,
    z: f64,
    n: usize,
    seed: u64,
    depth: f64,
    min_accepted: usize,
) -> Result<Exceedance> {
    let level = sd.sqrt2lam * t + z;
    let rows = sim.map_snapshots(start, t, n, seed, |s| {
        let max = s.max_position();
        let pattern = (max > level)
            .then(|| PointPattern::from_snapshot(s, Frame::Gap, max).truncated(-depth));
        (max, pattern)
    })?;
    let mut maxima = Vec::with_capacity(n);
    let mut overshoots = Vec::new();
    let mut patterns = Vec::new();
    for (max, pattern) in rows {
        maxima.push(max);
        if let Some(p) = pattern {
            overshoots.push(max - level);
            patterns.push(p);
        }
    }
    if overshoots.len() < min_accepted {
        return Err(Error::InsufficientSamples {
            accepted: overshoots.len(),
            required: min_accepted,
        });
    }
    Ok(Exceedance {
        t,
        z,
        seed,
        maxima,
        overshoots,
        bank: DecorationBank { patterns, depth },
    })
}

/// The `C_v(r)` sequence and its last value as the estimate of `C_inf`.
#[derive(Debug, Clone)]
pub struct CInfinity {
    pub rs: Vec<f64>,
    pub values: Vec<f64>,
    /// Relative change between the last two values.
    pub last_change: f64,
    pub report: EstimatorReport,
}

/// Relative change above which the estimate is flagged as not stabilised.
pub const CINF_FLAG_CHANGE: f64 = 0.5;

pub fn estimate_c_infinity(
    spec: &ModelSpec,
    sd: &SpectralData,
    ic: &InitialCondition,
    rs: &[f64],
    opts: &SolveOptions,
) -> Result<CInfinity> {
    let r_max = rs.iter().copied().fold(f64::NAN, f64::max);
    if rs.is_empty() || !(r_max > 0.0) {
        return Err(Error::Domain("need at least one positive r".into()));
    }
    let opts = SolveOptions {
        save_times: rs.to_vec(),
        ..opts.clone()
    };
    let sol = solve(spec, sd, ic, r_max, &opts)?;
    let values = rs
        .iter()
        .map(|&r| cv_integral(&sol, r, sd).map(|c| c.value))
        .collect::<Result<Vec<f64>>>()?;
    let last = *values.last().expect("nonempty");
    let last_change = match values.len() {
        1 => 0.0,
        k => (last - values[k - 2]).abs() / values[k - 2].abs(),
    };
    let flag = if !(last > 0.0) {
        Some("nonpositive".to_string())
    } else if last_change > CINF_FLAG_CHANGE {
        Some(format!("not-stabilised:{last_change:.3}"))
    } else {
        None
    };
    Ok(CInfinity {
        rs: rs.to_vec(),
        report: EstimatorReport {
            label: format!("C_inf[{}]", ic.name()),
            estimate: last,
            std_error: 0.0,
            n: rs.len(),
            seed: 0,
            flag,
        },
        values,
        last_change,
    })
}

/// Derivative martingale at `s` as a proxy for `M_inf`, negative draws
/// discarded.
#[derive(Debug, Clone)]
pub struct MInfinityProxy {
    pub s: f64,
    pub samples: Vec<f64>,
    pub discarded: usize,
}

impl MInfinityProxy {
    pub fn discard_rate(&self) -> f64 {
        self.discarded as f64 / (self.samples.len() + self.discarded) as f64
    }
}

pub fn m_infinity_proxy(
    sim: &Simulator,
    sd: &SpectralData,
    start: Start,
    s: f64,
    n: usize,
    seed: u64,
) -> Result<MInfinityProxy> {
    let raw = sim.map_snapshots(start, s, n, seed, |snap| derivative_martingale(snap, sd))?;
    let samples: Vec<f64> = raw.iter().copied().filter(|&m| m >= 0.0).collect();
    Ok(MInfinityProxy {
        s,
        discarded: raw.len() - samples.len(),
        samples,
    })
}

/// Empirical CDF of `M_t - m(t)` against `x -> mean_k exp(-C M_k e^{-c x})`.
#[derive(Debug, Clone)]
pub struct LimitLawReport {
    pub grid: Vec<f64>,
    pub empirical: Vec<f64>,
    pub predicted: Vec<f64>,
    pub sup_distance: f64,
}

/// Comparison grid `[-3, 5]` in steps of `0.05`.
pub fn limit_law_grid() -> Vec<f64> {
    (0..=160).map(|k| -3.0 + 0.05 * k as f64).collect()
}

pub fn limit_law_compare(centered_maxima: &[f64], sd: &SpectralData, c_inf: f64, m_inf: &[f64]) -> LimitLawReport {
    let sorted = crate::stats::sorted(centered_maxima);
    let grid = limit_law_grid();
    let empirical: Vec<f64> = grid.iter().map(|&x| crate::stats::ecdf(&sorted, x)).collect();
    let predicted: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let e = (-sd.sqrt2lam * x).exp();
            m_inf.iter().map(|m| (-c_inf * m * e).exp()).sum::<f64>() / m_inf.len() as f64
        })
        .collect();
    let sup_distance = empirical
        .iter()
        .zip(&predicted)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    LimitLawReport {
        grid,
        empirical,
        predicted,
        sup_distance,
    }
}

/// Least-squares slope of `log((1 - F(x)) / x)` over the grid points of
/// `[lo, hi]` with a nonzero tail.
pub fn tail_slope(centered_maxima: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let sorted = crate::stats::sorted(centered_maxima);
    let pts: Vec<(f64, f64)> = limit_law_grid()
        .into_iter()
        .filter(|&x| x >= lo - 1e-9 && x <= hi + 1e-9)
        .filter_map(|x| {
            let tail = 1.0 - crate::stats::ecdf(&sorted, x);
            (tail > 0.0).then(|| (x, (tail / x).ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

/// One decorated Poisson point process sample restricted to `[x_min, inf)`.
pub fn dppp_sample(
    c_inf: f64,
    m_inf: f64,
    bank: &DecorationBank,
    x_min: f64,
    sd: &SpectralData,
    rng: &mut SimRng,
) -> Result<PointPattern> {
    if bank.is_empty() {
        return Err(Error::Domain("empty decoration bank".into()));
    }
    if !x_min.is_finite() || !(c_inf >= 0.0) || !(m_inf >= 0.0) {
        return Err(Error::Domain(format!(
            "need finite x_min and nonnegative C M (got {x_min}, {c_inf}, {m_inf})"
        )));
    }
    let mean = c_inf * m_inf * (-sd.sqrt2lam * x_min).exp();
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::Domain(e.to_string()))?
            .sample(rng) as usize
    } else {
        0
    };
    let exp = Exp::new(sd.sqrt2lam).map_err(|e| Error::Domain(e.to_string()))?;
    let mut points = Vec::new();
    for _ in 0..count {
        let p = x_min + exp.sample(rng);
        let decoration = bank.draw(rng);
        let inside = decoration.count_above(x_min - p);
        points.extend(decoration.points[..inside].iter().map(|&(d, mark)| (p + d, mark)));
    }
    Ok(PointPattern::new(Frame::Dppp, points))
}

/// `exp(-sum_points phi(location + x, mark))`.
pub fn laplace_functional(p: &PointPattern, phi: &TestFunction, x: f64) -> f64 {
    (-p.points.iter().map(|&(y, j)| phi.eval(y + x, j)).sum::<f64>()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin::*;
    use crate::simulator::SimOptions;
    use crate::spectral::spectral_data;
    use rand::SeedableRng;

    fn single(t: f64, x: f64, ty: u32) -> Snapshot {
        Snapshot {
            t,
            positions: vec![x],
            types: vec![ty],
            running_min: None,
            seed: None,
        }
    }

    #[test]
    fn martingales_of_a_single_particle() {
        let spec = model_c();
        let sd = spectral_data(&spec).unwrap();
        let p = martingales(&single(0.0, 0.0, 1), &sd);
        assert_eq!(p.w, sd.h[1]);
        assert_eq!(p.m, 0.0);
        assert_eq!(normalized_population(&single(0.0, 0.0, 1), &sd), sd.h[1]);
    }

    #[test]
    fn frames() {
        let spec = model_a();
        let sd = spectral_data(&spec).unwrap();
        let e = extremal_point_pattern(&single(1.0, 0.0, 0), &sd).unwrap();
        assert!((e.points[0].0 + 2f64.sqrt()).abs() < 1e-15);
        let mut rng = SimRng::seed_from_u64(5);
        let sim = Simulator::new(&spec, &sd, SimOptions::default()).unwrap();
        let s = sim.simulate(Start::origin(0), 4.0, &mut rng).unwrap();
        let g = gap_point_pattern(&s).unwrap();
        assert_eq!(g.max_location(), Some(0.0));
        let e = extremal_point_pattern(&s, &sd).unwrap();
        let b = shifted_pattern(&s, &sd, 0.0).unwrap();
        let shift = -1.5 / 2f64.sqrt() * 4f64.ln();
        for (a, b) in e.points.iter().zip(&b.points) {
            assert!((a.0 - b.0 + shift).abs() < 1e-12);
        }
        assert!(gap_point_pattern(&Snapshot::default()).is_err());
    }

    #[test]
    fn dppp_with_zero_intensity_is_empty() {
        let sd = spectral_data(&model_a()).unwrap();
        let bank = DecorationBank {
            patterns: vec![PointPattern::new(Frame::Gap, vec![(0.0, 0), (-1.0, 0)])],
            depth: 5.0,
        };
        let mut rng = SimRng::seed_from_u64(1);
        assert!(dppp_sample(0.0, 3.0, &bank, -5.0, &sd, &mut rng).unwrap().is_empty());
        assert!(dppp_sample(1.0, 1.0, &DecorationBank::default(), -5.0, &sd, &mut rng).is_err());
        let p = dppp_sample(1.0, 1.0, &bank, -1.0, &sd, &mut rng).unwrap();
        assert!(p.points.iter().all(|q| q.0 >= -1.0));
    }

    #[test]
    fn laplace_functional_examples() {
        let phi = TestFunction::new("box", vec![vec![(-1.0, 1.0), (1.0, 1.0)]]).unwrap();
        let empty = PointPattern::new(Frame::Extremal, vec![]);
        assert_eq!(laplace_functional(&empty, &phi, 0.0), 1.0);
        let one = PointPattern::new(Frame::Extremal, vec![(0.0, 0)]);
        assert_eq!(laplace_functional(&one, &TestFunction::zero(), 0.0), 1.0);
        assert!((laplace_functional(&one, &phi, 0.0) - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn restriction_raises_the_level() {
        let bank = DecorationBank {
            patterns: vec![
                PointPattern::new(Frame::Gap, vec![(0.0, 0)]),
                PointPattern::new(Frame::Gap, vec![(0.0, 0), (-0.5, 0)]),
            ],
            depth: 5.0,
        };
        let ex = Exceedance {
            t: 1.0,
            z: 0.0,
            seed: 0,
            maxima: vec![],
            overshoots: vec![0.5, 1.5],
            bank,
        };
        let r = ex.restrict(1.0).unwrap();
        assert_eq!(r.overshoots, vec![0.5]);
        assert_eq!(r.bank.len(), 1);
        assert!(ex.restrict(-1.0).is_err());
        let (o, g) = ex.overshoot_vs_second_gap();
        assert_eq!((o, g), (vec![1.5], vec![-0.5]));
    }
}
