//! Exact event-driven simulation of multitype branching Brownian motion.
//!
//! Particles are processed depth first. A particle born at `(x, s)` lives an
//! `Exp(a_i)` time `tau`; if `s + tau >= t` it is observed at
//! `x + N(0, t - s)`, otherwise it branches at `x + N(0, tau)`. Positions are
//! only realised at branch and observation times, so there is no
//! discretisation error in any statistic of the snapshot.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::rng::{map_replicates, replicate_seed, RngContract, SimRng};
use crate::spectral::SpectralData;
use crate::stats::{column_reports, EstimatorReport, MeanAccumulator};

pub const DEFAULT_POPULATION_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Hard cap on the number of simultaneously stored particles.
    pub population_cap: usize,
    /// Track `min_{s <= t} (X_u(s) + sqrt(2 lambda*) s)` along each line of
    /// descent.
    pub track_running_min: bool,
    /// Negate every Brownian increment.
    pub mirror: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            population_cap: DEFAULT_POPULATION_CAP,
            track_running_min: false,
            mirror: false,
        }
    }
}

/// Initial particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Start {
    pub position: f64,
    pub ty: usize,
}

impl Start {
    pub fn origin(ty: usize) -> Self {
        Self { position: 0.0, ty }
    }
}

/// Particle configuration `Z(t)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub positions: Vec<f64>,
    pub types: Vec<u32>,
    pub running_min: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.positions
            .iter()
            .zip(&self.types)
            .map(|(&x, &ty)| (x, ty as usize))
    }

    /// `M_t`
    pub fn max_position(&self) -> f64 {
        self.positions.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `M_t^-`
    pub fn min_position(&self) -> f64 {
        self.positions.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `M_t^j`, or `None` when no particle of type `j` is alive.
    pub fn typed_max(&self, ty: usize) -> Option<f64> {
        self.iter()
            .filter(|&(_, t)| t == ty)
            .map(|(x, _)| x)
            .reduce(f64::max)
    }

    pub fn type_counts(&self, d: usize) -> Vec<usize> {
        let mut counts = vec![0; d];
        for &ty in &self.types {
            counts[ty as usize] += 1;
        }
        counts
    }
}

pub fn max_position(s: &Snapshot) -> f64 {
    s.max_position()
}

pub fn typed_max(s: &Snapshot, ty: usize) -> Option<f64> {
    s.typed_max(ty)
}

pub fn min_position(s: &Snapshot) -> f64 {
    s.min_position()
}

#[derive(Debug, Clone)]
struct TypeTable {
    rate: f64,
    cumulative: Vec<f64>,
    /// Children of each outcome, one entry per child.
    children: Vec<Vec<u32>>,
}

/// Compiled model ready for repeated simulation.
#[derive(Debug, Clone)]
pub struct Simulator {
    tables: Vec<TypeTable>,
    drift: f64,
    lambda_star: f64,
    pub options: SimOptions,
}

#[derive(Clone, Copy)]
struct Node {
    x: f64,
    birth: f64,
    ty: u32,
    rmin: f64,
}

impl Simulator {
    pub fn new(spec: &ModelSpec, sd: &SpectralData, options: SimOptions) -> Result<Self> {
        spec.check_structure()?;
        let tables = spec
            .offspring
            .iter()
            .zip(&spec.rates)
            .map(|(law, &rate)| {
                let mut acc = 0.0;
                let mut cumulative = Vec::new();
                let mut children = Vec::new();
                for (k, p) in law.outcomes.iter().filter(|(_, p)| *p > 0.0) {
                    acc += p;
                    cumulative.push(acc);
                    let kids = k
                        .iter()
                        .enumerate()
                        .flat_map(|(j, &kj)| std::iter::repeat_n(j as u32, kj as usize))
                        .collect();
                    children.push(kids);
                }
                TypeTable {
                    rate,
                    cumulative,
                    children,
                }
            })
            .collect();
        Ok(Self {
            tables,
            drift: sd.sqrt2lam,
            lambda_star: sd.lambda_star,
            options,
        })
    }

    pub fn d(&self) -> usize {
        self.tables.len()
    }

    fn increment(&self, rng: &mut SimRng, variance: f64) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let dx = variance.sqrt() * z;
        if self.options.mirror {
            -dx
        } else {
            dx
        }
    }

    /// Minimum of a Brownian bridge from `a` to `b` over duration `tau`.
    fn bridge_min(rng: &mut SimRng, a: f64, b: f64, tau: f64) -> f64 {
        let u: f64 = rng.random::<f64>();
        let e = -(1.0 - u).ln();
        0.5 * (a + b - ((b - a) * (b - a) + 2.0 * tau * e).sqrt())
    }

    pub fn simulate(&self, start: Start, t: f64, rng: &mut SimRng) -> Result<Snapshot> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("observation time must be finite and >= 0, got {t}")));
        }
        if start.ty >= self.d() {
            return Err(Error::Domain(format!("start type {} out of range", start.ty + 1)));
        }
        let track = self.options.track_running_min;
        let cap = self.options.population_cap;
        let mut positions = Vec::new();
        let mut types = Vec::new();
        let mut mins = Vec::new();
        let mut stack = vec![Node {
            x: start.position,
            birth: 0.0,
            ty: start.ty as u32,
            rmin: start.position,
        }];

        while let Some(node) = stack.pop() {
            let table = &self.tables[node.ty as usize];
            let e: f64 = rng.sample(Exp1);
            let tau = e / table.rate;
            let end = node.birth + tau;
            let (dur, branches) = if end >= t {
                (t - node.birth, false)
            } else {
                (tau, true)
            };
            let x = node.x + self.increment(rng, dur);
            let rmin = if track {
                let a = node.x + self.drift * node.birth;
                let b = x + self.drift * (node.birth + dur);
                node.rmin.min(Self::bridge_min(rng, a, b, dur))
            } else {
                node.rmin
            };
            if !branches {
                positions.push(x);
                types.push(node.ty);
                if track {
                    mins.push(rmin);
                }
                continue;
            }
            let outcome = if table.cumulative.len() == 1 {
                0
            } else {
                let u: f64 = rng.random::<f64>();
                table
                    .cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(table.cumulative.len() - 1)
            };
            for &child in &table.children[outcome] {
                stack.push(Node {
                    x,
                    birth: end,
                    ty: child,
                    rmin,
                });
            }
            if positions.len() + stack.len() > cap {
                return Err(Error::PopulationCap {
                    cap,
                    t,
                    lambda_star: self.lambda_star,
                });
            }
        }

        Ok(Snapshot {
            t,
            positions,
            types,
            running_min: track.then_some(mins),
            seed: None,
        })
    }

    /// Simulates replicate `contract.index` of the run seeded by
    /// `contract.master`.
    pub fn simulate_replicate(&self, start: Start, t: f64, contract: RngContract) -> Result<Snapshot> {
        let mut rng = contract.rng();
        let mut s = self.simulate(start, t, &mut rng)?;
        s.seed = Some(contract.seed());
        Ok(s)
    }

    /// Runs `n` replicates and hands each snapshot to `f` exactly once,
    /// returning the results in replicate order.
    pub fn map_snapshots<T, F>(&self, start: Start, t: f64, n: usize, master: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&Snapshot) -> T + Sync,
    {
        map_replicates(n, master, |index, rng| {
            let mut s = self.simulate(start, t, rng)?;
            s.seed = Some(replicate_seed(master, index as u64));
            Ok(f(&s))
        })
    }
}

/// One-shot simulation with default options.
pub fn simulate(spec: &ModelSpec, sd: &SpectralData, start: Start, t: f64, rng: &mut SimRng) -> Result<Snapshot> {
    Simulator::new(spec, sd, SimOptions::default())?.simulate(start, t, rng)
}

/// Mean and standard error of each statistic returned by `collector`.
///
/// The collector sees every snapshot exactly once; results are reduced in
/// replicate order so the reports are reproducible.
pub fn run_replicates<F>(
    sim: &Simulator,
    start: Start,
    t: f64,
    n: usize,
    master_seed: u64,
    labels: &[&str],
    collector: F,
) -> Result<Vec<EstimatorReport>>
where
    F: Fn(&Snapshot) -> Vec<f64> + Sync,
{
    if n == 0 {
        return Err(Error::Domain("need at least one replicate".into()));
    }
    let rows = sim.map_snapshots(start, t, n, master_seed, collector)?;
    let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
    Ok(column_reports(&labels, &rows, master_seed))
}

/// Number of grid steps used by [`bridge_barrier_estimate`] by default.
pub const BRIDGE_STEPS: usize = 2048;

/// Monte-Carlo estimate of
/// `P_0(B_s >= -y + f(s) for all s <= t, B_t + y - f(t) in [z, z + 1])`.
///
/// The path is sampled on `steps` equal steps; between grid points the
/// barrier is frozen at its midpoint value and the survival weight
/// `1 - exp(-2 d_1 d_2 / dt)` of the Brownian bridge is multiplied in, so a
/// constant barrier is handled without bias. The curve `f` is expected to
/// satisfy `|f(s)| <= K s^alpha` and `|f(t) - f(s)| <= K (t - s)^alpha` for
/// some `alpha < 1/2`; this is not checked.
pub fn bridge_barrier_estimate(
    f: &(dyn Fn(f64) -> f64 + Sync),
    y: f64,
    z: f64,
    t: f64,
    n: usize,
    master_seed: u64,
    steps: usize,
) -> Result<EstimatorReport> {
    if !(y >= 1.0 && y.is_finite()) || !(z >= 1.0 && z.is_finite()) || !(t >= 1.0 && t.is_finite()) {
        return Err(Error::Domain(format!(
            "bridge estimate needs finite y, z, t >= 1 (got y = {y}, z = {z}, t = {t})"
        )));
    }
    if n == 0 || steps == 0 {
        return Err(Error::Domain("need at least one replicate and one step".into()));
    }
    let dt = t / steps as f64;
    let sd = dt.sqrt();
    let barrier: Vec<f64> = (0..=steps).map(|k| -y + f(k as f64 * dt)).collect();
    let frozen: Vec<f64> = (0..steps).map(|k| -y + f((k as f64 + 0.5) * dt)).collect();
    let end_shift = y - f(t);

    let weights = map_replicates(n, master_seed, |_, rng| {
        if barrier[0] > 0.0 {
            return Ok(0.0);
        }
        let mut b = 0.0f64;
        let mut w = 1.0f64;
        for k in 0..steps {
            let z0: f64 = rng.sample(StandardNormal);
            let next = b + sd * z0;
            if next < barrier[k + 1] {
                return Ok(0.0);
            }
            let d1 = b - frozen[k];
            let d2 = next - frozen[k];
            if d1 <= 0.0 || d2 <= 0.0 {
                return Ok(0.0);
            }
            w *= -(-2.0 * d1 * d2 / dt).exp_m1();
            b = next;
        }
        let end = b + end_shift;
        Ok(if (z..=z + 1.0).contains(&end) { w } else { 0.0 })
    })?;

    let mut acc = MeanAccumulator::default();
    weights.iter().for_each(|&w| acc.push(w));
    let mut report = acc.report("bridge-barrier", master_seed);
    if report.estimate == 0.0 {
        report.flag = Some("no surviving paths; increase n".into());
    }
    Ok(report)
}
