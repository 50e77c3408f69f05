use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box the optimizer searches over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainWire", into = "DomainWire")]
pub struct SearchDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainWire {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<DomainWire> for SearchDomain {
    type Error = Error;
    fn try_from(w: DomainWire) -> Result<Self> {
        SearchDomain::new(w.lower, w.upper)
    }
}

impl From<SearchDomain> for DomainWire {
    fn from(d: SearchDomain) -> Self {
        DomainWire {
            lower: d.lower,
            upper: d.upper,
        }
    }
}

impl SearchDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid("domain bounds must be non-empty and equally long"));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(Error::invalid("domain needs finite lower < upper in every dimension"));
        }
        Ok(SearchDomain { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        SearchDomain {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - 1e-9 && *v <= u + 1e-9)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Maps a point of the unit box into this domain.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, h))| l + v * (h - l))
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, h))| (v - l) / (h - l))
            .collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(rows, d);
        for i in 0..rows {
            for j in 0..d {
                m[(i, j)] = rng.random_range(self.lower[j]..self.upper[j]);
            }
        }
        m
    }

    /// Side length of the largest dimension, used to scale distance thresholds.
    pub fn max_width(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inverted_bounds() {
        assert!(SearchDomain::new(vec![1.0], vec![0.0]).is_err());
        assert!(serde_json::from_str::<SearchDomain>(r#"{"lower":[0],"upper":[0]}"#).is_err());
    }

    #[test]
    fn unit_round_trip() {
        let d = SearchDomain::new(vec![-1.0, 2.0], vec![1.0, 6.0]).unwrap();
        let x = d.from_unit(&[0.25, 0.5]);
        assert_eq!(x, vec![-0.5, 4.0]);
        assert_eq!(d.to_unit(&x), vec![0.25, 0.5]);
        assert!(d.contains(&x));
        assert!(!d.contains(&[2.0, 4.0]));
    }
}
