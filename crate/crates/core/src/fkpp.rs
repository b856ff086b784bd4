//! Coupled F-KPP system `v_t = v_xx / 2 + a_i (phi_i(v) - v_i)`.
//!
//! Strang splitting on a uniform grid: a Crank–Nicolson half-step for the
//! diffusion, an RK4 step for the pointwise reaction, and a second diffusion
//! half-step. The first [`SolveOptions::rannacher_steps`] steps replace each
//! Crank–Nicolson half-step by two backward-Euler quarter steps, which damps
//! the oscillations a discontinuous initial condition would otherwise excite.
//!
//! Boundary values are Dirichlet and equal to the initial far-field values,
//! advanced in time by the reaction ODE alone. For Heaviside data this is
//! `v = 1` on the left and `v = 0` on the right.
//!
//! Grid nodes sit at integer multiples of `dx`, so `x = 0` is always a node.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::spectral::{GeneratingFunction, SpectralData};
use crate::testfn::TestFunction;

/// Pre-limiter range violation above which a solve fails.
pub const VIOLATION_TOL: f64 = 1e-9;
/// Front distance to the right edge, in grid steps, that counts as contamination.
pub const CONTAMINATION_STEPS: usize = 10;
/// Level defining the front for the contamination check. The Dirichlet
/// layer at `x_hi` keeps the 1/2-level well away from the wall, so a low
/// level is watched instead.
pub const CONTAMINATION_LEVEL: f64 = 1e-3;

type IcFn = dyn Fn(f64, usize) -> f64 + Send + Sync;

/// Bounded initial data with values in `[0, 1]`.
#[derive(Clone)]
pub enum InitialCondition {
    /// `1{x < 0}` for every type (value 1/2 at the jump).
    Heaviside,
    /// `1{x < 0}` for the given type, zero for the others.
    TypedHeaviside(usize),
    /// Spatially constant values per type.
    Constant(Vec<f64>),
    /// `1 - exp(-phi(-y, i))`.
    Laplace(TestFunction),
    /// `1 - exp(-phi(-y, i)) 1{-y <= L}`.
    Truncated(TestFunction, f64),
    Custom { name: String, f: Arc<IcFn> },
}

impl fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl InitialCondition {
    pub fn custom(name: impl Into<String>, f: impl Fn(f64, usize) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// Canonical `name:params` form, accepted by [`InitialCondition::parse`]
    /// except for custom data.
    pub fn name(&self) -> String {
        match self {
            Self::Heaviside => "heaviside".into(),
            Self::TypedHeaviside(i) => format!("typed-heaviside:{}", i + 1),
            Self::Constant(c) => format!(
                "constant:{}",
                c.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
            ),
            Self::Laplace(phi) => format!("laplace:{}", phi.name),
            Self::Truncated(phi, l) => format!("truncated:{}:{l}", phi.name),
            Self::Custom { name, .. } => format!("custom:{name}"),
        }
    }

    /// Parses `heaviside`, `typed-heaviside:<type>` (1-based),
    /// `constant:<c1>,<c2>,...`, `laplace:<phi>` and `truncated:<phi>:<L>`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.trim().split(':');
        let head = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let bad = || Error::Config(format!("malformed initial condition '{text}'"));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        let ic = match (head, args.as_slice()) {
            ("heaviside", []) => Self::Heaviside,
            ("typed-heaviside", [i]) => {
                let i: usize = i.trim().parse().map_err(|_| bad())?;
                if i == 0 {
                    return Err(bad());
                }
                Self::TypedHeaviside(i - 1)
            }
            ("constant", [c]) => Self::Constant(c.split(',').map(num).collect::<Result<_>>()?),
            ("laplace", [phi]) => Self::Laplace(TestFunction::by_name(phi)?),
            ("truncated", [phi, l]) => Self::Truncated(TestFunction::by_name(phi)?, num(l)?),
            _ => {
                return Err(Error::Unknown {
                    kind: "initial condition",
                    name: text.into(),
                    valid: "heaviside, typed-heaviside:<i>, constant:<c,...>, laplace:<phi>, truncated:<phi>:<L>".into(),
                })
            }
        };
        Ok(ic)
    }

    pub fn value(&self, x: f64, i: usize) -> f64 {
        let step = |x: f64| {
            if x < 0.0 {
                1.0
            } else if x == 0.0 {
                0.5
            } else {
                0.0
            }
        };
        match self {
            Self::Heaviside => step(x),
            Self::TypedHeaviside(j) => {
                if i == *j {
                    step(x)
                } else {
                    0.0
                }
            }
            Self::Constant(c) => c[i.min(c.len() - 1)],
            Self::Laplace(phi) => -(-phi.eval(-x, i)).exp_m1(),
            Self::Truncated(phi, l) => {
                let inside = (-phi.eval(-x, i)).exp();
                if -x < *l {
                    -(-phi.eval(-x, i)).exp_m1()
                } else if -x == *l {
                    1.0 - 0.5 * inside
                } else {
                    1.0
                }
            }
            Self::Custom { f, .. } => f(x, i),
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        match self {
            Self::TypedHeaviside(j) if *j >= d => Err(Error::Domain(format!("type {} out of range 1..={d}", j + 1))),
            Self::Constant(c) if c.len() != 1 && c.len() != d => {
                Err(Error::Domain(format!("constant data needs 1 or {d} values, got {}", c.len())))
            }
            _ => Ok(()),
        }
    }
}

/// Grid constants witnessing `v_i(0, x) <= 1{x < n2}` for all `i` and
/// `v_{i0}(0, x) >= 1{x < n1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialAssumption {
    pub i0: usize,
    pub n1: f64,
    pub n2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub dx: f64,
    pub dt: f64,
    pub x_lo: f64,
    /// Defaults to `sqrt(2 lambda*) t_end + 30`.
    pub x_hi: Option<f64>,
    /// Times to keep besides `0` and `t_end`, snapped to the step grid.
    pub save_times: Vec<f64>,
    pub rannacher_steps: usize,
    pub check_contamination: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            dx: 0.05,
            dt: 0.01,
            x_lo: -20.0,
            x_hi: None,
            save_times: Vec::new(),
            rannacher_steps: 2,
            check_contamination: true,
        }
    }
}

/// Solution samples on a uniform grid `x_m = (offset + m) dx`.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub dx: f64,
    pub dt: f64,
    offset: i64,
    pub nodes: usize,
    pub times: Vec<f64>,
    /// `values[sample][type][node]`.
    pub values: Vec<Vec<Vec<f64>>>,
    /// Largest distance outside `[0, 1]` seen before clamping.
    pub max_violation: f64,
    pub assumption: Option<InitialAssumption>,
    pub ic: String,
}

impl GridSolution {
    pub fn d(&self) -> usize {
        self.values[0].len()
    }

    pub fn x(&self, m: usize) -> f64 {
        (self.offset + m as i64) as f64 * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nodes).map(|m| self.x(m)).collect()
    }

    pub fn x_lo(&self) -> f64 {
        self.x(0)
    }

    pub fn x_hi(&self) -> f64 {
        self.x(self.nodes - 1)
    }

    pub fn sample_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 0.5 * self.dt)
            .ok_or_else(|| Error::Domain(format!("no stored sample at t = {t}; stored: {:?}", self.times)))
    }

    pub fn profile(&self, t: f64, i: usize) -> Result<&[f64]> {
        Ok(&self.values[self.sample_index(t)?][i])
    }

    /// Linear interpolation of `v_i(t, x)`.
    pub fn value(&self, t: f64, i: usize, x: f64) -> Result<f64> {
        let v = self.profile(t, i)?;
        interpolate(v, self.offset, self.dx, x, false)
    }
}

fn interpolate(v: &[f64], offset: i64, dx: f64, x: f64, log: bool) -> Result<f64> {
    let s = x / dx - offset as f64;
    if !(s >= 0.0 && s <= (v.len() - 1) as f64) {
        return Err(Error::DomainTooSmall(format!("x = {x} lies outside the grid")));
    }
    let m = (s.floor() as usize).min(v.len() - 2);
    let w = s - m as f64;
    let (a, b) = (v[m], v[m + 1]);
    Ok(if log && a > 0.0 && b > 0.0 {
        (a.ln() * (1.0 - w) + b.ln() * w).exp()
    } else {
        a * (1.0 - w) + b * w
    })
}

/// Constant-coefficient tridiagonal system
/// `(1 + 2 beta) u_m - beta (u_{m-1} + u_{m+1}) = r_m` on the interior
/// nodes, with the forward sweep precomputed.
struct Tridiagonal {
    beta: f64,
    c: Vec<f64>,
    inv: Vec<f64>,
}

impl Tridiagonal {
    fn new(beta: f64, n: usize) -> Self {
        let b = 1.0 + 2.0 * beta;
        let mut c = vec![0.0; n];
        let mut inv = vec![0.0; n];
        let mut prev = 0.0;
        for k in 0..n {
            let denom = b + beta * prev;
            inv[k] = 1.0 / denom;
            c[k] = -beta * inv[k];
            prev = c[k];
        }
        Self { beta, c, inv }
    }

    /// Solves in place on `rhs` (interior unknowns only).
    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv[0];
        for k in 1..n {
            rhs[k] = (rhs[k] + self.beta * rhs[k - 1]) * self.inv[k];
        }
        for k in (0..n - 1).rev() {
            rhs[k] -= self.c[k] * rhs[k + 1];
        }
    }
}

/// One diffusion sub-step of length `tau` with weight `theta` on the
/// implicit side (`1/2` Crank–Nicolson, `1` backward Euler).
struct DiffusionStep {
    mu: f64,
    theta: f64,
    system: Tridiagonal,
}

impl DiffusionStep {
    fn new(tau: f64, dx: f64, theta: f64, nodes: usize) -> Self {
        let mu = 0.5 * tau / (dx * dx);
        Self {
            mu,
            theta,
            system: Tridiagonal::new(theta * mu, nodes - 2),
        }
    }

    fn apply(&self, v: &mut [f64], scratch: &mut Vec<f64>) {
        let n = v.len();
        let ex = (1.0 - self.theta) * self.mu;
        let im = self.theta * self.mu;
        scratch.clear();
        scratch.extend((1..n - 1).map(|m| v[m] + ex * (v[m - 1] - 2.0 * v[m] + v[m + 1])));
        scratch[0] += im * v[0];
        scratch[n - 3] += im * v[n - 1];
        self.system.solve(scratch);
        v[1..n - 1].copy_from_slice(scratch);
    }
}

struct Reaction<'a> {
    gf: GeneratingFunction,
    rates: &'a [f64],
}

impl Reaction<'_> {
    fn rhs(&self, v: &[f64], clamped: &mut [f64], out: &mut [f64]) {
        for (c, y) in clamped.iter_mut().zip(v) {
            *c = y.clamp(0.0, 1.0);
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.rates[i] * (self.gf.varphi(i, clamped) - v[i]);
        }
    }

    fn rk4(&self, v: &mut [f64], dt: f64, work: &mut [Vec<f64>; 6]) {
        let [k1, k2, k3, k4, tmp, c] = work;
        let d = v.len();
        self.rhs(v, c, k1);
        for j in 0..d {
            tmp[j] = v[j] + 0.5 * dt * k1[j];
        }
        self.rhs(tmp, c, k2);
        for j in 0..d {
            tmp[j] = v[j] + 0.5 * dt * k2[j];
        }
        self.rhs(tmp, c, k3);
        for j in 0..d {
            tmp[j] = v[j] + dt * k3[j];
        }
        self.rhs(tmp, c, k4);
        for j in 0..d {
            v[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
}

fn assumption_flags(values: &[Vec<f64>], x: impl Fn(usize) -> f64) -> Option<InitialAssumption> {
    let nodes = values[0].len();
    let last_positive = values
        .iter()
        .filter_map(|v| v.iter().rposition(|&y| y > 0.0))
        .max();
    let n2 = match last_positive {
        None => x(0),
        Some(m) if m + 1 < nodes => x(m + 1),
        Some(_) => return None,
    };
    let (i0, first_below) = values
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.iter().position(|&y| y < 1.0).unwrap_or(nodes)))
        .max_by_key(|&(_, m)| m)?;
    if first_below == 0 {
        return None;
    }
    Some(InitialAssumption {
        i0,
        n1: x(first_below.min(nodes - 1)),
        n2,
    })
}

/// Solves the system from `t = 0` to `t_end` and keeps the samples at
/// `0`, `t_end` and `opts.save_times`.
pub fn solve(
    spec: &ModelSpec,
    sd: &SpectralData,
    ic: &InitialCondition,
    t_end: f64,
    opts: &SolveOptions,
) -> Result<GridSolution> {
    let d = spec.d();
    ic.check(d)?;
    if !(t_end >= 0.0) || !(opts.dx > 0.0) || !(opts.dt > 0.0) {
        return Err(Error::Domain(format!(
            "need t_end >= 0, dx > 0, dt > 0 (got {t_end}, {}, {})",
            opts.dx, opts.dt
        )));
    }
    let dx = opts.dx;
    let x_hi = opts.x_hi.unwrap_or(sd.sqrt2lam * t_end + 30.0);
    let offset = (opts.x_lo / dx).floor() as i64;
    let last = (x_hi / dx).ceil() as i64;
    if last - offset < 2 * CONTAMINATION_STEPS as i64 {
        return Err(Error::DomainTooSmall(format!("grid [{}, {x_hi}] has too few nodes", opts.x_lo)));
    }
    let nodes = (last - offset + 1) as usize;
    let x = |m: usize| (offset + m as i64) as f64 * dx;

    let steps = if t_end == 0.0 { 0 } else { (t_end / opts.dt).ceil() as usize };
    let dt = if steps == 0 { opts.dt } else { t_end / steps as f64 };
    let mut keep: Vec<usize> = opts
        .save_times
        .iter()
        .filter(|&&s| s >= 0.0 && s <= t_end)
        .map(|&s| (s / dt).round() as usize)
        .chain([0, steps])
        .collect();
    keep.sort_unstable();
    keep.dedup();

    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..nodes).map(|m| ic.value(x(m), i)).collect())
        .collect();
    if v.iter().flatten().any(|y| !(0.0..=1.0).contains(y)) {
        return Err(Error::Domain(format!("initial condition {} leaves [0, 1]", ic.name())));
    }
    let assumption = assumption_flags(&v, x);

    let cn = DiffusionStep::new(0.5 * dt, dx, 0.5, nodes);
    let be = DiffusionStep::new(0.25 * dt, dx, 1.0, nodes);
    let reaction = Reaction {
        gf: GeneratingFunction::new(spec),
        rates: &spec.rates,
    };

    let mut solution = GridSolution {
        dx,
        dt,
        offset,
        nodes,
        times: Vec::with_capacity(keep.len()),
        values: Vec::with_capacity(keep.len()),
        max_violation: 0.0,
        assumption,
        ic: ic.name(),
    };
    let mut next_keep = 0;
    if keep[0] == 0 {
        solution.times.push(0.0);
        solution.values.push(v.clone());
        next_keep = 1;
    }

    let mut scratch = Vec::with_capacity(nodes);
    let mut point = vec![0.0; d];
    let mut work: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; d]);
    let diffuse = |v: &mut Vec<Vec<f64>>, startup: bool, scratch: &mut Vec<f64>| {
        for row in v.iter_mut() {
            if startup {
                be.apply(row, scratch);
                be.apply(row, scratch);
            } else {
                cn.apply(row, scratch);
            }
        }
    };

    for step in 1..=steps {
        let startup = step <= opts.rannacher_steps;
        diffuse(&mut v, startup, &mut scratch);
        for m in 0..nodes {
            for j in 0..d {
                point[j] = v[j][m];
            }
            reaction.rk4(&mut point, dt, &mut work);
            for j in 0..d {
                v[j][m] = point[j];
            }
        }
        diffuse(&mut v, startup, &mut scratch);

        let t = step as f64 * dt;
        for row in v.iter_mut() {
            for y in row.iter_mut() {
                if y.is_nan() {
                    return Err(Error::Stability {
                        message: format!("NaN at t = {t}"),
                        dt,
                        dx,
                    });
                }
                let violation = (-*y).max(*y - 1.0);
                if violation > 0.0 {
                    solution.max_violation = solution.max_violation.max(violation);
                    *y = y.clamp(0.0, 1.0);
                }
            }
        }
        if solution.max_violation > VIOLATION_TOL {
            return Err(Error::Stability {
                message: format!(
                    "solution left [0, 1] by {:e} at t = {t}",
                    solution.max_violation
                ),
                dt,
                dx,
            });
        }
        if opts.check_contamination {
            for (i, row) in v.iter().enumerate() {
                let edge = row[nodes - 1];
                if edge < CONTAMINATION_LEVEL
                    && row[nodes - 1 - CONTAMINATION_STEPS..].iter().any(|&y| y >= CONTAMINATION_LEVEL)
                {
                    return Err(Error::DomainTooSmall(format!(
                        "front of type {} within {CONTAMINATION_STEPS} steps of x_hi = {} at t = {t}",
                        i + 1,
                        x(nodes - 1)
                    )));
                }
            }
        }
        if next_keep < keep.len() && keep[next_keep] == step {
            solution.times.push(t);
            solution.values.push(v.clone());
            next_keep += 1;
        }
    }
    Ok(solution)
}

/// The linearly interpolated `x` with `v_i(t, x) = level`, taking the last
/// downward crossing.
pub fn front_level_position(sol: &GridSolution, t: f64, i: usize, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level {level} not in (0, 1)")));
    }
    let v = sol.profile(t, i)?;
    let m = v
        .iter()
        .rposition(|&y| y >= level)
        .ok_or_else(|| Error::Domain(format!("v_{} never reaches {level} at t = {t}", i + 1)))?;
    if m + 1 == v.len() {
        return Err(Error::Domain(format!("v_{} does not fall below {level} at t = {t}", i + 1)));
    }
    Ok(sol.x(m) + (v[m] - level) / (v[m] - v[m + 1]) * sol.dx)
}

/// `sqrt(2/pi) int_0^{Y_max} y e^{c y} sum_j g_j v_j(r, y + c r) dy` with
/// `c = sqrt(2 lambda*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvIntegral {
    pub r: f64,
    pub value: f64,
    pub y_max: f64,
}

/// Integrand cut-off relative to its peak.
pub const CV_TAIL_CUTOFF: f64 = 1e-6;

pub fn cv_integral(sol: &GridSolution, r: f64, sd: &SpectralData) -> Result<CvIntegral> {
    let k = sol.sample_index(r)?;
    let c = sd.sqrt2lam;
    let s = c * r;
    let usable = sol.nodes - 1 - CONTAMINATION_STEPS;
    if s >= sol.x(usable) {
        return Err(Error::DomainTooSmall(format!("c r = {s} beyond the usable grid")));
    }
    let weighted = |m: usize| -> f64 { (0..sol.d()).map(|j| sd.g[j] * sol.values[k][j][m]).sum() };
    let mut ys = vec![0.0];
    let mut w0 = 0.0;
    for j in 0..sol.d() {
        w0 += sd.g[j] * interpolate(&sol.values[k][j], sol.offset, sol.dx, s, true)?;
    }
    let mut ws = vec![w0];
    let first = ((s / sol.dx).floor() as i64 - sol.offset + 1) as usize;
    for m in first..=usable {
        ys.push(sol.x(m) - s);
        ws.push(weighted(m));
    }
    let f: Vec<f64> = ys
        .iter()
        .zip(&ws)
        .map(|(&y, &w)| (2.0 / std::f64::consts::PI).sqrt() * y * (c * y).exp() * w)
        .collect();
    let (peak_at, peak) = f
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    if peak == 0.0 {
        return Ok(CvIntegral { r, value: 0.0, y_max: 0.0 });
    }
    let end = f[peak_at..]
        .iter()
        .position(|&v| v < CV_TAIL_CUTOFF * peak)
        .map(|p| p + peak_at)
        .ok_or_else(|| {
            Error::DomainTooSmall(format!(
                "C_v integrand at r = {r} does not decay below {CV_TAIL_CUTOFF:e} of its peak before x_hi"
            ))
        })?;
    let value = (1..=end)
        .map(|i| 0.5 * (f[i] + f[i - 1]) * (ys[i] - ys[i - 1]))
        .sum();
    Ok(CvIntegral { r, value, y_max: ys[end] })
}

/// `v_i(t, x_{1/2}(t) + offset)` on a window around the front.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveProfile {
    pub t: f64,
    pub front: f64,
    pub offsets: Vec<f64>,
    pub values: Vec<f64>,
}

impl WaveProfile {
    pub fn sup_distance(&self, other: &WaveProfile) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }
}

pub fn traveling_wave_profile(
    sol: &GridSolution,
    t: f64,
    i: usize,
    window: (f64, f64),
    step: f64,
) -> Result<WaveProfile> {
    let front = front_level_position(sol, t, i, 0.5)?;
    let count = ((window.1 - window.0) / step).round() as usize + 1;
    let offsets: Vec<f64> = (0..count).map(|k| window.0 + k as f64 * step).collect();
    let values = offsets
        .iter()
        .map(|o| sol.value(t, i, front + o))
        .collect::<Result<Vec<_>>>()?;
    Ok(WaveProfile {
        t,
        front,
        offsets,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin::*;
    use crate::spectral::spectral_data;

    fn small(x_lo: f64, x_hi: f64) -> SolveOptions {
        SolveOptions {
            x_lo,
            x_hi: Some(x_hi),
            ..SolveOptions::default()
        }
    }

    #[test]
    fn constant_data_follows_the_logistic_ode() {
        let spec = model_a();
        let sd = spectral_data(&spec).unwrap();
        let sol = solve(&spec, &sd, &InitialCondition::Constant(vec![0.5]), 1.0, &small(-2.0, 2.0)).unwrap();
        let e = std::f64::consts::E;
        for y in sol.profile(1.0, 0).unwrap() {
            assert!((y - e / (1.0 + e)).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_time_returns_the_initial_condition() {
        let spec = model_b();
        let sd = spectral_data(&spec).unwrap();
        let sol = solve(&spec, &sd, &InitialCondition::Heaviside, 0.0, &small(-3.0, 3.0)).unwrap();
        assert_eq!(sol.times, vec![0.0]);
        for i in 0..2 {
            for (m, y) in sol.profile(0.0, i).unwrap().iter().enumerate() {
                assert_eq!(*y, InitialCondition::Heaviside.value(sol.x(m), i));
            }
            assert_eq!(front_level_position(&sol, 0.0, i, 0.5).unwrap(), 0.0);
        }
        let a = sol.assumption.unwrap();
        assert_eq!((a.n1, a.n2), (0.0, 0.05));
    }

    #[test]
    fn heaviside_stays_monotone_and_in_range() {
        let spec = model_c();
        let sd = spectral_data(&spec).unwrap();
        let opts = SolveOptions {
            save_times: vec![1.0, 2.0],
            ..SolveOptions::default()
        };
        let sol = solve(&spec, &sd, &InitialCondition::Heaviside, 3.0, &opts).unwrap();
        assert_eq!(sol.times.len(), 4);
        assert!(sol.max_violation <= VIOLATION_TOL);
        for sample in &sol.values {
            for row in sample {
                assert!(row.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            }
        }
    }

    #[test]
    fn small_domain_is_detected() {
        let spec = model_a();
        let sd = spectral_data(&spec).unwrap();
        let r = solve(&spec, &sd, &InitialCondition::Heaviside, 5.0, &small(-5.0, 3.0));
        assert!(matches!(r, Err(Error::DomainTooSmall(_))));
    }

    #[test]
    fn cv_of_zero_data_is_zero() {
        let spec = model_a();
        let sd = spectral_data(&spec).unwrap();
        let sol = solve(&spec, &sd, &InitialCondition::Constant(vec![0.0]), 1.0, &small(-5.0, 40.0)).unwrap();
        assert_eq!(cv_integral(&sol, 1.0, &sd).unwrap().value, 0.0);
    }

    #[test]
    fn initial_condition_parsing() {
        for text in ["heaviside", "typed-heaviside:2", "constant:0.5,0.25", "laplace:tent", "truncated:plateau:3"] {
            assert_eq!(InitialCondition::parse(text).unwrap().name(), text);
        }
        assert!(InitialCondition::parse("typed-heaviside:0").is_err());
        assert!(matches!(InitialCondition::parse("wave"), Err(Error::Unknown { .. })));
    }

    #[test]
    fn truncated_data_satisfies_the_assumption() {
        let spec = model_a();
        let sd = spectral_data(&spec).unwrap();
        let ic = InitialCondition::Truncated(TestFunction::tent(), 2.0);
        let sol = solve(&spec, &sd, &ic, 0.0, &small(-5.0, 5.0)).unwrap();
        let a = sol.assumption.unwrap();
        assert_eq!(a.n1, -2.0);
        assert!(a.n2 <= 1.05);
        let laplace = solve(&spec, &sd, &InitialCondition::Laplace(TestFunction::tent()), 0.0, &small(-5.0, 5.0)).unwrap();
        assert!(laplace.assumption.is_none());
    }

    #[test]
    fn thomas_solver_matches_dense_product() {
        let sys = Tridiagonal::new(0.7, 5);
        let u = [0.3, -1.0, 2.0, 0.5, 4.0];
        let mut r: Vec<f64> = (0..5)
            .map(|k| {
                let left = if k > 0 { u[k - 1] } else { 0.0 };
                let right = if k < 4 { u[k + 1] } else { 0.0 };
                2.4 * u[k] - 0.7 * (left + right)
            })
            .collect();
        sys.solve(&mut r);
        for (a, b) in r.iter().zip(u) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
