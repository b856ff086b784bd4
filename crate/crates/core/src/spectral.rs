//! Mean semigroup, Perron–Frobenius data, the centring front and the
//! offspring generating function.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    d: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(d: usize) -> Self {
        Self {
            d,
            data: vec![0.0; d * d],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let d = rows.len();
        let mut m = Self::zeros(d);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), d, "matrix rows must be square");
            m.data[i * d..(i + 1) * d].copy_from_slice(row);
        }
        m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.d).map(<[f64]>::to_vec).collect()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// `M x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `x^T M`
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (i, xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += xi * a;
            }
        }
        out
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let d = self.d;
        let mut out = Matrix::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            d: self.d,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.d)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Matrix exponential by scaling and squaring of a truncated Taylor
    /// series.
    pub fn expm(&self) -> Matrix {
        let norm = self.norm_inf();
        let mut squarings = 0u32;
        if norm > 0.5 {
            squarings = (norm / 0.5).log2().ceil() as u32;
        }
        let scaled = self.scale(0.5f64.powi(squarings as i32));
        let mut result = Matrix::identity(self.d);
        let mut term = Matrix::identity(self.d);
        for n in 1..=30 {
            term = term.mul(&scaled).scale(1.0 / n as f64);
            let small = term.norm_inf() < 1e-18 * result.norm_inf();
            for (r, t) in result.data.iter_mut().zip(&term.data) {
                *r += t;
            }
            if small {
                break;
            }
        }
        for _ in 0..squarings {
            result = result.mul(&result);
        }
        result
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.d + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.d + j]
    }
}

/// Mean matrix `M` of a model.
pub fn mean_matrix(spec: &ModelSpec) -> Matrix {
    spec.mean_matrix()
}

/// Branching matrix `A`; `exp(tA)` is the mean semigroup `M(t)`.
pub fn branching_matrix(spec: &ModelSpec) -> Matrix {
    spec.branching_matrix()
}

/// Expected type counts `E_{(0,i)} N_j(t) = exp(tA)_{ij}`.
pub fn mean_semigroup(spec: &ModelSpec, t: f64) -> Matrix {
    spec.branching_matrix().scale(t).expm()
}

/// Perron–Frobenius data of the branching matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub mean: Matrix,
    pub branching: Matrix,
    pub lambda_star: f64,
    /// Left eigenvector, `<g, 1> = 1`.
    pub g: Vec<f64>,
    /// Right eigenvector, `<g, h> = 1`.
    pub h: Vec<f64>,
    /// Invariant law of the spine type chain, `mu_j = g_j h_j`.
    pub mu: Vec<f64>,
    /// Critical speed `sqrt(2 lambda*)`.
    pub sqrt2lam: f64,
}

impl SpectralData {
    pub fn d(&self) -> usize {
        self.g.len()
    }

    /// Residuals `max |Ah - lambda h|` and `max |g^T A - lambda g^T|`.
    pub fn residuals(&self) -> (f64, f64) {
        let ah = self.branching.mul_vec(&self.h);
        let ga = self.branching.vec_mul(&self.g);
        let r = ah
            .iter()
            .zip(&self.h)
            .map(|(a, h)| (a - self.lambda_star * h).abs())
            .fold(0.0, f64::max);
        let l = ga
            .iter()
            .zip(&self.g)
            .map(|(a, g)| (a - self.lambda_star * g).abs())
            .fold(0.0, f64::max);
        (r, l)
    }
}

/// Iteration cap for the power method.
pub const PF_MAX_ITER: usize = 1_000_000;
/// Relative Collatz–Wielandt gap at which the power method stops.
pub const PF_TOL: f64 = 1e-12;

/// Spectral data of a model: builds `M`, `A` and runs [`perron_frobenius`].
pub fn spectral_data(spec: &ModelSpec) -> Result<SpectralData> {
    let mean = spec.mean_matrix();
    let shift = (0..spec.d())
        .map(|i| spec.rates[i] * mean.row(i).iter().sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    let mut sd = perron_frobenius_shifted(&spec.branching_matrix(), shift)?;
    sd.mean = mean;
    Ok(sd)
}

/// Dominant eigen-triple of an irreducible matrix with non-negative
/// off-diagonal entries.
///
/// Power iteration runs on `A + cI` with `c` large enough to make the
/// shifted matrix non-negative with a positive diagonal, hence primitive.
/// Left and right vectors are iterated separately; `lambda*` is then taken
/// as the two-sided Rayleigh quotient `g^T A h / g^T h`. `g` is scaled to
/// `<g, 1> = 1` first, then `h` to `<g, h> = 1`. The `mean` field is left
/// empty; [`spectral_data`] fills it.
pub fn perron_frobenius(a: &Matrix) -> Result<SpectralData> {
    let d = a.dim();
    let shift = (0..d).map(|i| a[(i, i)].abs()).fold(0.0, f64::max) + a.norm_inf() + 1.0;
    perron_frobenius_shifted(a, shift)
}

fn perron_frobenius_shifted(a: &Matrix, shift: f64) -> Result<SpectralData> {
    let d = a.dim();
    for i in 0..d {
        for j in 0..d {
            if i != j && a[(i, j)] < 0.0 {
                return Err(Error::Domain(format!(
                    "off-diagonal entry A[{i}][{j}] = {} is negative",
                    a[(i, j)]
                )));
            }
        }
        if a[(i, i)] + shift <= 0.0 {
            return Err(Error::Domain("spectral shift does not make the diagonal positive".into()));
        }
    }
    let mut b = a.clone();
    for i in 0..d {
        b[(i, i)] += shift;
    }
    let h = power_iterate(d, |x| b.mul_vec(x))?;
    let g = power_iterate(d, |x| b.vec_mul(x))?;

    let gah: f64 = a.mul_vec(&h).iter().zip(&g).map(|(x, y)| x * y).sum();
    let gh: f64 = g.iter().zip(&h).map(|(x, y)| x * y).sum();
    let lambda_star = gah / gh;

    let gsum: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|x| x / gsum).collect();
    let gh: f64 = g.iter().zip(&h).map(|(x, y)| x * y).sum();
    let h: Vec<f64> = h.iter().map(|x| x / gh).collect();
    let mu: Vec<f64> = g.iter().zip(&h).map(|(x, y)| x * y).collect();

    let sd = SpectralData {
        mean: Matrix::zeros(0),
        branching: a.clone(),
        lambda_star,
        sqrt2lam: (2.0 * lambda_star).sqrt(),
        g,
        h,
        mu,
    };
    let (rr, rl) = sd.residuals();
    let scale = a.norm_inf().max(f64::MIN_POSITIVE);
    let residual = rr.max(rl);
    if !(residual <= 1e-10 * scale) {
        return Err(Error::Numerical {
            message: "eigen-residual above 1e-10 |A|".into(),
            residual,
        });
    }
    if lambda_star <= 0.0 || sd.g.iter().chain(&sd.h).any(|&x| !(x > 0.0)) {
        return Err(Error::Domain(format!(
            "matrix is not supercritical irreducible (lambda* = {lambda_star})"
        )));
    }
    Ok(sd)
}

/// Power iteration for a primitive non-negative operator. Stops when the
/// Collatz–Wielandt bounds `min (Bx)_i/x_i <= rho <= max (Bx)_i/x_i` agree to
/// [`PF_TOL`] relative.
fn power_iterate(d: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> Result<Vec<f64>> {
    let mut x = vec![1.0; d];
    let mut gap = f64::INFINITY;
    for _ in 0..PF_MAX_ITER {
        let y = apply(&x);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (yi, xi) in y.iter().zip(&x) {
            let r = yi / xi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let norm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numerical {
                message: "power iteration degenerated".into(),
                residual: gap,
            });
        }
        x = y.into_iter().map(|v| v / norm).collect();
        gap = (hi - lo) / hi;
        if gap <= PF_TOL {
            return Ok(x);
        }
    }
    Err(Error::Numerical {
        message: format!("power iteration did not converge in {PF_MAX_ITER} iterations"),
        residual: gap,
    })
}

/// Centring front `m(t) = sqrt(2 lambda*) t - 3/(2 sqrt(2 lambda*)) log t`.
pub fn front(t: f64, sd: &SpectralData) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("front needs t > 0, got {t}")));
    }
    let c = sd.sqrt2lam;
    Ok(c * t - 1.5 / c * t.ln())
}

/// `m_+(t) = max(sqrt(2 lambda*) t - 3/(2 sqrt(2 lambda*)) log_+ t, 0)`.
pub fn front_plus(t: f64, sd: &SpectralData) -> f64 {
    let c = sd.sqrt2lam;
    let log_plus = if t > 1.0 { t.ln() } else { 0.0 };
    (c * t - 1.5 / c * log_plus).max(0.0)
}

fn check_cube(spec: &ModelSpec, i: usize, u: &[f64]) -> Result<()> {
    if i >= spec.d() {
        return Err(Error::Domain(format!("type index {i} out of range")));
    }
    if u.len() != spec.d() || u.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Domain(format!("argument {u:?} is not in [0,1]^{}", spec.d())));
    }
    Ok(())
}

/// `psi_i(u) = sum_k p_k(i) prod_j u_j^{k_j}`.
pub fn offspring_gf(spec: &ModelSpec, i: usize, u: &[f64]) -> Result<f64> {
    check_cube(spec, i, u)?;
    Ok(spec.offspring[i]
        .outcomes
        .iter()
        .map(|(k, p)| p * k.iter().zip(u).map(|(&kj, uj)| uj.powi(kj as i32)).product::<f64>())
        .sum())
}

/// `phi_i(v) = 1 - psi_i(1 - v)`, evaluated without cancellation for small
/// `v`.
pub fn varphi(spec: &ModelSpec, i: usize, v: &[f64]) -> Result<f64> {
    check_cube(spec, i, v)?;
    Ok(GeneratingFunction::new(spec).varphi(i, v))
}

/// `1 - phi_i(v) / <m_i., v>` together with the bound
/// `Gamma(i) |v|_inf^alpha0` from the linearisation estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizationGap {
    pub gap: f64,
    pub gamma: f64,
    pub bound: f64,
}

/// Linearisation defect of `phi_i` at `v`.
///
/// `Gamma(i) = max_{l in J(i)} (sum_k k_l p_k(i) sum_j k_j^alpha0) / min_{l in J(i)} m_{il}`
/// with `J(i) = {l : m_{il} > 0}`.
pub fn varphi_linearization_gap(spec: &ModelSpec, i: usize, v: &[f64]) -> Result<LinearizationGap> {
    check_cube(spec, i, v)?;
    let m = spec.mean_matrix();
    let denom: f64 = m.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
    if !(denom > 0.0) {
        return Err(Error::Domain(format!("<m_i., v> = {denom} must be positive")));
    }
    let gap = 1.0 - varphi(spec, i, v)? / denom;
    let gamma = linearization_constant(spec, i);
    let norm = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    Ok(LinearizationGap {
        gap,
        gamma,
        bound: gamma * norm.powf(spec.alpha0),
    })
}

/// The constant `Gamma(i)` of [`varphi_linearization_gap`].
pub fn linearization_constant(spec: &ModelSpec, i: usize) -> f64 {
    let m = spec.mean_matrix();
    let alpha = spec.alpha0;
    let support: Vec<usize> = (0..spec.d()).filter(|&l| m[(i, l)] > 0.0).collect();
    let min_m = support.iter().map(|&l| m[(i, l)]).fold(f64::INFINITY, f64::min);
    let max_c = support
        .iter()
        .map(|&l| {
            spec.offspring[i]
                .outcomes
                .iter()
                .map(|(k, p)| {
                    let kalpha: f64 = k.iter().map(|&kj| (kj as f64).powf(alpha)).sum();
                    k[l] as f64 * p * kalpha
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    max_c / min_m
}

/// Flattened offspring laws for fast evaluation of `psi` and `phi` in inner
/// loops. No domain checks.
#[derive(Debug, Clone)]
pub struct GeneratingFunction {
    d: usize,
    /// Per type: `(p, [(j, k_j) with k_j > 0])`.
    laws: Vec<Vec<(f64, Vec<(usize, f64)>)>>,
}

impl GeneratingFunction {
    pub fn new(spec: &ModelSpec) -> Self {
        let laws = spec
            .offspring
            .iter()
            .map(|law| {
                law.outcomes
                    .iter()
                    .filter(|(_, p)| *p > 0.0)
                    .map(|(k, p)| {
                        let nz = k
                            .iter()
                            .enumerate()
                            .filter(|(_, &kj)| kj > 0)
                            .map(|(j, &kj)| (j, kj as f64))
                            .collect();
                        (*p, nz)
                    })
                    .collect()
            })
            .collect();
        Self { d: spec.d(), laws }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `phi_i(v) = sum_k p_k (1 - prod_j (1 - v_j)^{k_j})`, each term as
    /// `-expm1(sum_j k_j ln(1 - v_j))`.
    pub fn varphi(&self, i: usize, v: &[f64]) -> f64 {
        self.laws[i]
            .iter()
            .map(|(p, nz)| {
                let mut log_survive = 0.0;
                for &(j, kj) in nz {
                    log_survive += kj * (-v[j]).ln_1p();
                }
                p * -log_survive.exp_m1()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn model_b_eigen_triple() {
        let sd = spectral_data(&model_b()).unwrap();
        assert!(close(sd.lambda_star, 1.0, 1e-12));
        for j in 0..2 {
            assert!(close(sd.h[j], 1.0, 1e-12));
            assert!(close(sd.g[j], 0.5, 1e-12));
            assert!(close(sd.mu[j], 0.5, 1e-12));
        }
    }

    #[test]
    fn model_c_eigen_triple() {
        // lambda^2 + 3 lambda - 1 = 0; hand-solved 2x2 eigenvectors
        let lam = (-3.0 + 13f64.sqrt()) / 2.0;
        let g1 = 1.0 / (1.0 + (1.0 + lam) / 2.0);
        let g2 = 1.0 - g1;
        let ratio = (1.0 + lam) / 1.5;
        let h1 = 1.0 / (g1 + g2 * ratio);
        let h2 = ratio * h1;

        let sd = spectral_data(&model_c()).unwrap();
        assert!(close(sd.lambda_star, lam, 1e-12));
        assert!(close(sd.lambda_star, 0.302_775_6, 1e-7));
        assert!(close(sd.g[0], g1, 1e-10) && close(sd.g[1], g2, 1e-10));
        assert!(close(sd.h[0], h1, 1e-10) && close(sd.h[1], h2, 1e-10));
        assert!(close(sd.g[0], 0.605_551_3, 1e-7));
        assert!(close(sd.h[0], 1.054_700_196, 1e-8));
        assert!(close(sd.h[1], 0.916_025_147, 1e-8));
    }

    #[test]
    fn single_type_triple() {
        let sd = spectral_data(&model_a()).unwrap();
        assert_eq!(sd.lambda_star, 1.0);
        assert_eq!(sd.g, vec![1.0]);
        assert_eq!(sd.h, vec![1.0]);
    }

    #[test]
    fn normalisation_and_residuals() {
        for spec in [model_a(), model_b(), model_c()] {
            let sd = spectral_data(&spec).unwrap();
            assert!(close(sd.g.iter().sum::<f64>(), 1.0, 1e-12));
            let gh: f64 = sd.g.iter().zip(&sd.h).map(|(a, b)| a * b).sum();
            assert!(close(gh, 1.0, 1e-12));
            assert!(close(sd.mu.iter().sum::<f64>(), 1.0, 1e-12));
            let (r, l) = sd.residuals();
            assert!(r < 1e-10 * sd.branching.norm_inf());
            assert!(l < 1e-10 * sd.branching.norm_inf());
        }
    }

    #[test]
    fn eigen_identity_for_row_sums() {
        // sum_j m_ij h_j = (a_i + lambda*) h_i / a_i
        let spec = model_c();
        let sd = spectral_data(&spec).unwrap();
        let mh = sd.mean.mul_vec(&sd.h);
        for i in 0..2 {
            let rhs = (spec.rates[i] + sd.lambda_star) / spec.rates[i] * sd.h[i];
            assert!(close(mh[i], rhs, 1e-12));
        }
    }

    #[test]
    fn rejects_negative_off_diagonal() {
        let a = Matrix::from_rows(&[vec![1.0, -1.0], vec![1.0, 1.0]]);
        assert!(matches!(perron_frobenius(&a), Err(Error::Domain(_))));
    }

    #[test]
    fn generic_entry_point_matches_model_route() {
        let sd = spectral_data(&model_c()).unwrap();
        let direct = perron_frobenius(&model_c().branching_matrix()).unwrap();
        assert!(close(sd.lambda_star, direct.lambda_star, 1e-12));
    }

    #[test]
    fn expm_model_b() {
        // symmetric/antisymmetric basis: eigenvalues 1 and -3
        let e = mean_semigroup(&model_b(), 2.0);
        let (e2, em6) = (2f64.exp(), (-6f64).exp());
        assert!(close(e[(0, 0)], 0.5 * (e2 + em6), 1e-12));
        assert!(close(e[(0, 1)], 0.5 * (e2 - em6), 1e-12));
        let e1 = mean_semigroup(&model_a(), 3.0);
        assert!(close(e1[(0, 0)], 3f64.exp(), 1e-11));
    }

    #[test]
    fn front_values() {
        let sd = spectral_data(&model_a()).unwrap();
        assert!(close(front(1.0, &sd).unwrap(), 2f64.sqrt(), 1e-15));
        assert!(close(front(10.0, &sd).unwrap(), 11.699_875_323, 1e-8));
        assert!(close(front(0.5, &sd).unwrap(), 1.442_300_389, 1e-8));
        assert!(close(front_plus(0.5, &sd), std::f64::consts::FRAC_1_SQRT_2, 1e-7));
        assert!(matches!(front(0.0, &sd), Err(Error::Domain(_))));
        assert!(front(-1.0, &sd).is_err());
        for t in [0.1, 1.0, 7.5, 100.0] {
            let c = sd.sqrt2lam;
            assert_eq!(front(t, &sd).unwrap(), c * t - 1.5 / c * t.ln());
        }
    }

    #[test]
    fn generating_function_examples() {
        assert_eq!(offspring_gf(&model_a(), 0, &[0.5]).unwrap(), 0.25);
        assert!(close(offspring_gf(&model_b(), 0, &[0.3, 0.4]).unwrap(), 0.16, 1e-15));
        assert!(close(offspring_gf(&model_c(), 0, &[0.9, 0.5]).unwrap(), 0.375, 1e-15));
        assert!(offspring_gf(&model_a(), 0, &[1.5]).is_err());
        assert!(offspring_gf(&model_b(), 0, &[0.5]).is_err());
    }

    #[test]
    fn varphi_examples() {
        assert!(close(varphi(&model_a(), 0, &[0.5]).unwrap(), 0.75, 1e-15));
        for spec in [model_a(), model_b(), model_c()] {
            for i in 0..spec.d() {
                assert_eq!(varphi(&spec, i, &vec![0.0; spec.d()]).unwrap(), 0.0);
            }
        }
        assert!(close(varphi(&model_c(), 1, &[0.2, 0.9]).unwrap(), 0.2, 1e-15));
        assert!(varphi(&model_a(), 0, &[-0.1]).is_err());
    }

    #[test]
    fn varphi_is_accurate_for_tiny_arguments() {
        let v = 1e-18;
        assert!(close(varphi(&model_a(), 0, &[v]).unwrap() / v, 2.0, 1e-12));
    }

    #[test]
    fn linearization_gap_examples() {
        let a = varphi_linearization_gap(&model_a(), 0, &[0.5]).unwrap();
        assert!(close(a.gap, 0.25, 1e-15));
        assert_eq!(a.gamma, 2.0);
        assert!(a.gap <= a.bound);

        // phi_1(0.1, 0.1) = 0.5 (1 - 0.81) + 0.5 (0.1) = 0.145 against m-row 0.15
        let c = varphi_linearization_gap(&model_c(), 0, &[0.1, 0.1]).unwrap();
        assert!(close(c.gap, 1.0 / 30.0, 1e-14));
        assert!(c.gap <= c.bound);

        let mut prev = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            let b = varphi_linearization_gap(&model_b(), 0, &[0.0, eps]).unwrap();
            // psi = (1 - eps)^2 so the gap is exactly eps / 2
            assert!(close(b.gap, eps / 2.0, 1e-12));
            assert!(b.gap < prev);
            prev = b.gap;
        }
        assert!(varphi_linearization_gap(&model_b(), 0, &[0.3, 0.0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]
            #[test]
            fn bernoulli_bound_and_gap_bound(v1 in 0.0f64..=1.0, v2 in 0.0f64..=1.0, which in 0usize..3) {
                let spec = [model_a(), model_b(), model_c()][which].clone();
                let v: Vec<f64> = [v1, v2][..spec.d()].to_vec();
                let m = spec.mean_matrix();
                for i in 0..spec.d() {
                    let phi = varphi(&spec, i, &v).unwrap();
                    let lin: f64 = m.row(i).iter().zip(&v).map(|(a, b)| a * b).sum();
                    prop_assert!((0.0..=1.0).contains(&phi));
                    prop_assert!(phi <= lin + 1e-15);
                    if lin > 0.0 {
                        let g = varphi_linearization_gap(&spec, i, &v).unwrap();
                        prop_assert!(g.gap >= -1e-12);
                        prop_assert!(g.gap <= g.bound + 1e-12);
                    }
                }
            }
        }
    }
}
