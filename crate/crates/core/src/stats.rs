//! Estimator reports and the small amount of sample statistics the
//! estimators need.

use std::fmt;

/// A Monte-Carlo point estimate with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
    pub seed: u64,
    /// Set when the estimate is degenerate (for example no hits at all).
    pub flag: Option<String>,
}

impl EstimatorReport {
    pub fn from_samples(label: impl Into<String>, samples: &[f64], seed: u64) -> Self {
        let mut acc = MeanAccumulator::default();
        samples.iter().for_each(|&x| acc.push(x));
        acc.report(label, seed)
    }

    /// `|self - other| / sqrt(se_1^2 + se_2^2)` for independent estimates.
    pub fn z_score(&self, other: &EstimatorReport) -> f64 {
        let se = self.std_error.hypot(other.std_error);
        if se == 0.0 {
            if self.estimate == other.estimate {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.estimate - other.estimate).abs() / se
        }
    }

    /// `|estimate - target| / se`.
    pub fn z_against(&self, target: f64) -> f64 {
        let diff = (self.estimate - target).abs();
        if self.std_error == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / self.std_error
        }
    }

    pub const CSV_HEADER: &'static str = "label,estimate,std_error,n,seed,flag";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.18e},{:.18e},{},{},{}",
            self.label,
            self.estimate,
            self.std_error,
            self.n,
            self.seed,
            self.flag.as_deref().unwrap_or("")
        )
    }
}

impl fmt::Display for EstimatorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} = {:.6} ± {:.6} (n = {}, seed = {})",
            self.label, self.estimate, self.std_error, self.n, self.seed
        )
    }
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanAccumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn report(&self, label: impl Into<String>, seed: u64) -> EstimatorReport {
        EstimatorReport {
            label: label.into(),
            estimate: self.mean,
            std_error: self.std_error(),
            n: self.n,
            seed,
            flag: None,
        }
    }
}

/// Mean-and-SE over the columns of per-replicate statistic vectors.
pub fn column_reports(labels: &[String], rows: &[Vec<f64>], seed: u64) -> Vec<EstimatorReport> {
    let mut accs = vec![MeanAccumulator::default(); labels.len()];
    for row in rows {
        for (acc, &x) in accs.iter_mut().zip(row) {
            acc.push(x);
        }
    }
    labels
        .iter()
        .zip(accs)
        .map(|(l, a)| a.report(l.clone(), seed))
        .collect()
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Empirical CDF `#{x_i <= x} / n` on a sorted sample.
pub fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&s| s <= x) as f64 / sorted.len() as f64
}

/// Kolmogorov distance between a sample and a continuous CDF.
pub fn kolmogorov_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted(samples);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (mut i, mut j) = (0usize, 0usize);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at level `alpha`.
pub fn ks_critical(alpha: f64, n1: usize, n2: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n1 + n2) as f64 / (n1 * n2) as f64).sqrt()
}

/// Pearson correlation of paired samples.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
