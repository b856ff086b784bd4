//! Model specification, the model file format, and assumption checks.
//!
//! A model is a number of types `d`, a positive branching rate per type and,
//! for each type, a finitely supported offspring law over `N^d`.
//!
//! # File format
//!
//! ```text
//! # comments start with '#'
//! name = model-c
//! types = 2
//! alpha0 = 1
//! rates = 1 2
//!
//! [offspring 1]
//! # k_1 k_2 probability
//! 0 2 0.5
//! 0 1 0.5
//!
//! [offspring 2]
//! 1 0 1
//! ```
//!
//! Types are numbered from 1 in files and on the command line and from 0 in
//! the library. Keys may appear in any order before the first table; every
//! type needs exactly one `[offspring i]` table. [`ModelSpec::to_text`]
//! writes the canonical form, which parses back to a bit-identical model.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Tolerance on `sum_k p_k(i) = 1`.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Offspring law of a single type: finitely many `(k, p_k)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    pub outcomes: Vec<(Vec<u32>, f64)>,
}

impl OffspringLaw {
    pub fn new(outcomes: Vec<(Vec<u32>, f64)>) -> Self {
        Self { outcomes }
    }

    /// Law putting all mass on a single offspring vector.
    pub fn deterministic(k: Vec<u32>) -> Self {
        Self {
            outcomes: vec![(k, 1.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    /// Branching rate `a_i` of each type.
    pub rates: Vec<f64>,
    pub offspring: Vec<OffspringLaw>,
    /// Moment exponent in `(0, 1]`.
    pub alpha0: f64,
}

impl ModelSpec {
    /// Builds a model and checks that it is structurally well formed.
    pub fn new(name: impl Into<String>, rates: Vec<f64>, offspring: Vec<OffspringLaw>) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            rates,
            offspring,
            alpha0: 1.0,
        };
        spec.check_structure()?;
        Ok(spec)
    }

    pub fn with_alpha0(mut self, alpha0: f64) -> Result<Self> {
        self.alpha0 = alpha0;
        self.check_structure()?;
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.rates.len()
    }

    /// Structural well-formedness: shapes, finite positive rates, and
    /// probability vectors that are non-negative and sum to one.
    pub fn check_structure(&self) -> Result<()> {
        let d = self.d();
        if d == 0 {
            return Err(Error::Structural("a model needs at least one type".into()));
        }
        if self.offspring.len() != d {
            return Err(Error::Structural(format!(
                "{} rates but {} offspring laws",
                d,
                self.offspring.len()
            )));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(Error::Structural(format!(
                "alpha0 must lie in (0, 1], got {}",
                self.alpha0
            )));
        }
        for (i, &a) in self.rates.iter().enumerate() {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Structural(format!(
                    "rate of type {} must be positive and finite, got {a}",
                    i + 1
                )));
            }
        }
        for (i, law) in self.offspring.iter().enumerate() {
            if law.outcomes.is_empty() {
                return Err(Error::Structural(format!(
                    "type {} has an empty offspring law",
                    i + 1
                )));
            }
            let mut total = 0.0;
            for (k, p) in &law.outcomes {
                if k.len() != d {
                    return Err(Error::Structural(format!(
                        "type {}: offspring vector of length {} in a {d}-type model",
                        i + 1,
                        k.len()
                    )));
                }
                if !p.is_finite() || *p < 0.0 {
                    return Err(Error::Structural(format!(
                        "type {}: invalid probability {p}",
                        i + 1
                    )));
                }
                total += p;
            }
            if (total - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::Structural(format!(
                    "type {}: probabilities sum to {total}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// Canonical text form; see the module docs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "types = {}", self.d());
        let _ = writeln!(out, "alpha0 = {}", self.alpha0);
        let rates: Vec<String> = self.rates.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(out, "rates = {}", rates.join(" "));
        for (i, law) in self.offspring.iter().enumerate() {
            let _ = writeln!(out, "\n[offspring {}]", i + 1);
            for (k, p) in &law.outcomes {
                for kj in k {
                    let _ = write!(out, "{kj} ");
                }
                let _ = writeln!(out, "{p}");
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse { line, message };
        let mut name: Option<String> = None;
        let mut types: Option<usize> = None;
        let mut alpha0 = 1.0;
        let mut rates: Option<Vec<f64>> = None;
        let mut tables: Vec<Option<Vec<(Vec<u32>, f64)>>> = Vec::new();
        let mut current: Option<usize> = None;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                let inner = header
                    .strip_suffix(']')
                    .ok_or_else(|| err(lineno, "unterminated table header".into()))?;
                let mut parts = inner.split_whitespace();
                if parts.next() != Some("offspring") {
                    return Err(err(lineno, format!("unknown table '{inner}'")));
                }
                let d = types.ok_or_else(|| err(lineno, "'types' must precede tables".into()))?;
                let i: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(lineno, "expected '[offspring <type>]'".into()))?;
                if parts.next().is_some() || i == 0 || i > d {
                    return Err(err(lineno, format!("offspring table for invalid type '{inner}'")));
                }
                if tables[i - 1].is_some() {
                    return Err(err(lineno, format!("duplicate table for type {i}")));
                }
                tables[i - 1] = Some(Vec::new());
                current = Some(i - 1);
                continue;
            }
            if let Some(t) = current {
                let fields: Vec<&str> = line.split_whitespace().collect();
                let d = types.unwrap_or(0);
                if fields.len() != d + 1 {
                    return Err(err(
                        lineno,
                        format!("expected {d} counts and a probability, found {} fields", fields.len()),
                    ));
                }
                let mut k = Vec::with_capacity(d);
                for f in &fields[..d] {
                    k.push(
                        f.parse::<u32>()
                            .map_err(|_| err(lineno, format!("invalid offspring count '{f}'")))?,
                    );
                }
                let p: f64 = fields[d]
                    .parse()
                    .map_err(|_| err(lineno, format!("invalid probability '{}'", fields[d])))?;
                if let Some(table) = tables[t].as_mut() {
                    table.push((k, p));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(lineno, format!("expected 'key = value', found '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "name" => name = Some(value.to_string()),
                "types" => {
                    let d: usize = value
                        .parse()
                        .map_err(|_| err(lineno, format!("invalid type count '{value}'")))?;
                    if d == 0 {
                        return Err(err(lineno, "types must be at least 1".into()));
                    }
                    types = Some(d);
                    tables = vec![None; d];
                }
                "alpha0" => {
                    alpha0 = value
                        .parse()
                        .map_err(|_| err(lineno, format!("invalid alpha0 '{value}'")))?
                }
                "rates" => {
                    let parsed: std::result::Result<Vec<f64>, _> =
                        value.split_whitespace().map(str::parse).collect();
                    rates = Some(parsed.map_err(|_| err(lineno, format!("invalid rates '{value}'")))?);
                }
                other => return Err(err(lineno, format!("unknown key '{other}'"))),
            }
        }

        let d = types.ok_or_else(|| err(0, "missing 'types'".into()))?;
        let rates = rates.ok_or_else(|| err(0, "missing 'rates'".into()))?;
        if rates.len() != d {
            return Err(err(0, format!("{} rates given for {d} types", rates.len())));
        }
        let mut offspring = Vec::with_capacity(d);
        for (i, table) in tables.into_iter().enumerate() {
            let outcomes = table.ok_or_else(|| err(0, format!("missing table [offspring {}]", i + 1)))?;
            offspring.push(OffspringLaw::new(outcomes));
        }
        let spec = ModelSpec {
            name: name.unwrap_or_else(|| "unnamed".into()),
            rates,
            offspring,
            alpha0,
        };
        spec.check_structure()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Mean offspring matrix, `m_{ij} = sum_k p_k(i) k_j`.
    pub fn mean_matrix(&self) -> crate::spectral::Matrix {
        let d = self.d();
        let mut m = crate::spectral::Matrix::zeros(d);
        for (i, law) in self.offspring.iter().enumerate() {
            for (k, p) in &law.outcomes {
                for (j, &kj) in k.iter().enumerate() {
                    m[(i, j)] += p * kj as f64;
                }
            }
        }
        m
    }

    /// Branching matrix `a_{ij} = a_i (m_{ij} - delta_{ij})`, the generator
    /// of the mean semigroup.
    pub fn branching_matrix(&self) -> crate::spectral::Matrix {
        let mut a = self.mean_matrix();
        for i in 0..self.d() {
            a[(i, i)] -= 1.0;
            for j in 0..self.d() {
                a[(i, j)] *= self.rates[i];
            }
        }
        a
    }
}

/// Outcome of [`validate_model`]. Never an error for a mathematically
/// unsuitable model; structural problems are reported as errors instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub irreducible: bool,
    pub no_death: bool,
    /// `m_{ii} = 0` for every type. Vacuous for single-type models.
    pub no_self_mean: bool,
    pub moments_finite: bool,
    pub messages: Vec<String>,
}

impl ValidationReport {
    /// Strict mode requires every flag; permissive mode tolerates
    /// self-type mean mass.
    pub fn accepted(&self, strict: bool) -> bool {
        self.irreducible && self.no_death && self.moments_finite && (self.no_self_mean || !strict)
    }
}

pub fn validate_model(spec: &ModelSpec) -> Result<ValidationReport> {
    spec.check_structure()?;
    let d = spec.d();
    let m = spec.mean_matrix();
    let mut messages = Vec::new();

    let irreducible = strongly_connected(d, |i, j| m[(i, j)] > 0.0);
    if !irreducible {
        messages.push("mean matrix is reducible: the type graph is not strongly connected".into());
    }

    let mut no_death = true;
    for (i, law) in spec.offspring.iter().enumerate() {
        let p0: f64 = law
            .outcomes
            .iter()
            .filter(|(k, _)| k.iter().all(|&kj| kj == 0))
            .map(|(_, p)| p)
            .sum();
        if p0 > 0.0 {
            no_death = false;
            messages.push(format!("type {} dies without offspring with probability {p0}", i + 1));
        }
    }

    let mut no_self_mean = true;
    if d > 1 {
        for i in 0..d {
            if m[(i, i)] > 0.0 {
                no_self_mean = false;
                messages.push(format!(
                    "type {} has self-type mean offspring m_ii = {}",
                    i + 1,
                    m[(i, i)]
                ));
            }
        }
    }

    // Finite support makes every moment finite.
    let moments_finite = spec
        .offspring
        .iter()
        .all(|law| law.outcomes.iter().all(|(_, p)| p.is_finite()));

    Ok(ValidationReport {
        irreducible,
        no_death,
        no_self_mean,
        moments_finite,
        messages,
    })
}

/// Strong connectivity of the directed graph `{i -> j : edge(i, j)}` by
/// forward and backward reachability from node 0.
pub fn strongly_connected(d: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let reach = |forward: bool| {
        let mut seen = vec![false; d];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..d {
                let e = if forward { edge(u, v) } else { edge(v, u) };
                if e && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    d > 0 && reach(true) && reach(false)
}

/// Built-in models shipped with the crate (also under `models/`).
pub mod builtin {
    use super::ModelSpec;

    pub const MODEL_A: &str = include_str!("../../../models/model_a.model");
    pub const MODEL_B: &str = include_str!("../../../models/model_b.model");
    pub const MODEL_C: &str = include_str!("../../../models/model_c.model");

    /// Single-type binary branching at rate 1.
    pub fn model_a() -> ModelSpec {
        ModelSpec::parse(MODEL_A).expect("shipped model A parses")
    }

    /// Two types, each producing two children of the other type.
    pub fn model_b() -> ModelSpec {
        ModelSpec::parse(MODEL_B).expect("shipped model B parses")
    }

    /// Two types with rates (1, 2) and an asymmetric two-point law.
    pub fn model_c() -> ModelSpec {
        ModelSpec::parse(MODEL_C).expect("shipped model C parses")
    }

    pub fn by_name(name: &str) -> Option<ModelSpec> {
        match name.to_ascii_lowercase().as_str() {
            "a" | "model-a" => Some(model_a()),
            "b" | "model-b" => Some(model_b()),
            "c" | "model-c" => Some(model_c()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::builtin::*;
    use super::*;

    #[test]
    fn mean_matrices_of_shipped_models() {
        assert_eq!(model_a().mean_matrix().to_rows(), vec![vec![2.0]]);
        assert_eq!(model_b().mean_matrix().to_rows(), vec![vec![0.0, 2.0], vec![2.0, 0.0]]);
        assert_eq!(model_c().mean_matrix().to_rows(), vec![vec![0.0, 1.5], vec![1.0, 0.0]]);
    }

    #[test]
    fn branching_matrices_of_shipped_models() {
        assert_eq!(model_a().branching_matrix().to_rows(), vec![vec![1.0]]);
        assert_eq!(
            model_b().branching_matrix().to_rows(),
            vec![vec![-1.0, 2.0], vec![2.0, -1.0]]
        );
        assert_eq!(
            model_c().branching_matrix().to_rows(),
            vec![vec![-1.0, 1.5], vec![2.0, -2.0]]
        );
    }

    #[test]
    fn shipped_models_pass_every_flag() {
        for spec in [model_a(), model_b(), model_c()] {
            let report = validate_model(&spec).unwrap();
            assert!(report.accepted(true), "{}: {:?}", spec.name, report.messages);
        }
    }

    #[test]
    fn death_probability_is_flagged() {
        let spec = ModelSpec::new(
            "dying",
            vec![1.0],
            vec![OffspringLaw::new(vec![(vec![0], 0.1), (vec![2], 0.9)])],
        )
        .unwrap();
        let report = validate_model(&spec).unwrap();
        assert!(!report.no_death);
        assert!(report.irreducible);
        assert!(!report.accepted(false));
    }

    #[test]
    fn unreachable_type_is_reducible() {
        let spec = ModelSpec::new(
            "reducible",
            vec![1.0, 1.0],
            vec![
                OffspringLaw::deterministic(vec![0, 2]),
                OffspringLaw::deterministic(vec![0, 2]),
            ],
        )
        .unwrap();
        let report = validate_model(&spec).unwrap();
        assert!(!report.irreducible);
        // type 2 reproduces itself as well
        assert!(!report.no_self_mean);
    }

    #[test]
    fn self_mean_only_fails_strict_mode() {
        let spec = ModelSpec::new(
            "selfish",
            vec![1.0, 1.0],
            vec![
                OffspringLaw::deterministic(vec![1, 1]),
                OffspringLaw::deterministic(vec![2, 0]),
            ],
        )
        .unwrap();
        let report = validate_model(&spec).unwrap();
        assert!(report.irreducible && !report.no_self_mean);
        assert!(!report.accepted(true));
        assert!(report.accepted(false));
    }

    #[test]
    fn malformed_probabilities_are_structural_errors() {
        let bad = [
            vec![(vec![2], 0.5)],
            vec![(vec![2], -0.5), (vec![1], 1.5)],
            vec![(vec![2], f64::NAN)],
        ];
        for outcomes in bad {
            let r = ModelSpec::new("bad", vec![1.0], vec![OffspringLaw::new(outcomes)]);
            assert!(matches!(r, Err(Error::Structural(_))));
        }
        let r = ModelSpec::new("bad", vec![0.0], vec![OffspringLaw::deterministic(vec![2])]);
        assert!(matches!(r, Err(Error::Structural(_))));
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "types = 1\nrates = 1\n[offspring 1]\n2 x\n";
        match ModelSpec::parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(ModelSpec::parse("types = 2\nrates = 1 1\n[offspring 1]\n0 2 1\n").is_err());
    }

    #[test]
    fn canonical_text_is_a_fixed_point() {
        for text in [MODEL_A, MODEL_B, MODEL_C] {
            let spec = ModelSpec::parse(text).unwrap();
            let canonical = spec.to_text();
            let again = ModelSpec::parse(&canonical).unwrap();
            assert_eq!(again, spec);
            assert_eq!(again.to_text(), canonical);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_model() -> impl Strategy<Value = ModelSpec> {
            (1usize..4).prop_flat_map(|d| {
                let rates = proptest::collection::vec(1e-3f64..50.0, d);
                let law = proptest::collection::vec(
                    (proptest::collection::vec(0u32..5, d), 1e-6f64..1.0),
                    1..5,
                )
                .prop_map(|raw| {
                    let total: f64 = raw.iter().map(|(_, w)| w).sum();
                    let mut outcomes: Vec<(Vec<u32>, f64)> =
                        raw.into_iter().map(|(k, w)| (k, w / total)).collect();
                    // absorb rounding so the law sums to one exactly enough
                    let s: f64 = outcomes.iter().map(|(_, p)| p).sum();
                    outcomes[0].1 += 1.0 - s;
                    OffspringLaw::new(outcomes)
                });
                (rates, proptest::collection::vec(law, d), 0.01f64..=1.0)
            })
            .prop_map(|(rates, offspring, alpha0)| ModelSpec {
                name: "random".into(),
                rates,
                offspring,
                alpha0,
            })
        }

        proptest! {
            #[test]
            fn text_round_trip_is_bit_exact(spec in arb_model()) {
                prop_assume!(spec.check_structure().is_ok());
                let text = spec.to_text();
                let parsed = ModelSpec::parse(&text).unwrap();
                prop_assert_eq!(&parsed, &spec);
                prop_assert_eq!(parsed.to_text(), text);
            }
        }
    }
}
