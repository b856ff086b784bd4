//! Piecewise-linear, compactly supported test functions `phi(y, mark)`
//! used by the Laplace-functional initial data and the point-process
//! comparisons.
//!
//! | name      | mark 1                          | marks >= 2                 |
//! |-----------|---------------------------------|----------------------------|
//! | `tent`    | `max(0, 1 - abs(y))`            | same                       |
//! | `plateau` | 0 at -2, 0.5 on [-1, 2], 0 at 3 | same                       |
//! | `marked`  | 1.5 tent of half-width 1.5 at 0.5 | 0.5 tent of half-width 1 at 0 |

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub name: String,
    /// Knots `(y, phi)` per mark; the last entry is reused for higher marks.
    /// Zero outside the first and last knot.
    knots: Vec<Vec<(f64, f64)>>,
}

impl TestFunction {
    pub fn new(name: impl Into<String>, knots: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        if knots.is_empty() || knots.iter().any(|k| k.len() < 2) {
            return Err(Error::Domain("test function needs at least two knots per mark".into()));
        }
        for k in &knots {
            if k.windows(2).any(|w| !(w[0].0 < w[1].0)) || k.iter().any(|&(y, v)| !y.is_finite() || !(v >= 0.0)) {
                return Err(Error::Domain("knots must be increasing with finite nonnegative values".into()));
            }
        }
        Ok(Self {
            name: name.into(),
            knots,
        })
    }

    pub fn zero() -> Self {
        Self::new("zero", vec![vec![(0.0, 0.0), (1.0, 0.0)]]).expect("valid knots")
    }

    pub fn tent() -> Self {
        Self::new("tent", vec![vec![(-1.0, 0.0), (0.0, 1.0), (1.0, 0.0)]]).expect("valid knots")
    }

    pub fn plateau() -> Self {
        Self::new(
            "plateau",
            vec![vec![(-2.0, 0.0), (-1.0, 0.5), (2.0, 0.5), (3.0, 0.0)]],
        )
        .expect("valid knots")
    }

    pub fn marked() -> Self {
        Self::new(
            "marked",
            vec![
                vec![(-1.0, 0.0), (0.5, 1.5), (2.0, 0.0)],
                vec![(-1.0, 0.0), (0.0, 0.5), (1.0, 0.0)],
            ],
        )
        .expect("valid knots")
    }

    /// The three shipped functions.
    pub fn library() -> Vec<TestFunction> {
        vec![Self::tent(), Self::plateau(), Self::marked()]
    }

    pub fn by_name(name: &str) -> Result<Self> {
        let mut all = Self::library();
        all.push(Self::zero());
        all.iter()
            .find(|f| f.name == name)
            .cloned()
            .ok_or_else(|| Error::Unknown {
                kind: "test function",
                name: name.into(),
                valid: all.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(", "),
            })
    }

    fn knots_for(&self, mark: usize) -> &[(f64, f64)] {
        &self.knots[mark.min(self.knots.len() - 1)]
    }

    pub fn eval(&self, y: f64, mark: usize) -> f64 {
        let k = self.knots_for(mark);
        let (first, last) = (k[0].0, k[k.len() - 1].0);
        if !(y >= first && y <= last) {
            return 0.0;
        }
        let i = k.partition_point(|&(x, _)| x <= y).clamp(1, k.len() - 1);
        let ((x0, v0), (x1, v1)) = (k[i - 1], k[i]);
        v0 + (v1 - v0) * (y - x0) / (x1 - x0)
    }

    /// Smallest interval containing the support for every mark.
    pub fn support(&self) -> (f64, f64) {
        self.knots.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
            (lo.min(k[0].0), hi.max(k[k.len() - 1].0))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation() {
        let t = TestFunction::tent();
        assert_eq!(t.eval(0.0, 0), 1.0);
        assert_eq!(t.eval(0.5, 3), 0.5);
        assert_eq!(t.eval(-1.5, 0), 0.0);
        let p = TestFunction::plateau();
        assert_eq!(p.eval(0.0, 0), 0.5);
        assert_eq!(p.eval(2.5, 0), 0.25);
        let m = TestFunction::marked();
        assert_eq!(m.eval(0.5, 0), 1.5);
        assert_eq!(m.eval(0.5, 1), 0.25);
        assert_eq!(m.support(), (-1.0, 2.0));
        assert_eq!(TestFunction::zero().eval(0.5, 0), 0.0);
    }

    #[test]
    fn lookup() {
        assert_eq!(TestFunction::by_name("plateau").unwrap(), TestFunction::plateau());
        assert!(matches!(TestFunction::by_name("x"), Err(Error::Unknown { .. })));
        assert!(TestFunction::new("bad", vec![vec![(1.0, 0.0), (0.0, 1.0)]]).is_err());
    }
}
