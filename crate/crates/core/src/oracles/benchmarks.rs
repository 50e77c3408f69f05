//! Synthetic test functions in their native coordinates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    /// `x³ − x` on `[−1, 1]`.
    ToyCubic,
    UrsemWaves,
    Adjiman,
    Deceptive,
    #[serde(rename = "mixture_of_gaussians02")]
    MixtureOfGaussians02,
    Hartmann3,
    Hartmann4,
    /// `f(x) = x` on `[0, 1]`.
    Linear,
}

pub const ALL_BENCHMARKS: [Benchmark; 8] = [
    Benchmark::ToyCubic,
    Benchmark::UrsemWaves,
    Benchmark::Adjiman,
    Benchmark::Deceptive,
    Benchmark::MixtureOfGaussians02,
    Benchmark::Hartmann3,
    Benchmark::Hartmann4,
    Benchmark::Linear,
];

impl Benchmark {
    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::ToyCubic => "toy_cubic",
            Benchmark::UrsemWaves => "ursem_waves",
            Benchmark::Adjiman => "adjiman",
            Benchmark::Deceptive => "deceptive",
            Benchmark::MixtureOfGaussians02 => "mixture_of_gaussians02",
            Benchmark::Hartmann3 => "hartmann3",
            Benchmark::Hartmann4 => "hartmann4",
            Benchmark::Linear => "linear",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        ALL_BENCHMARKS
            .iter()
            .copied()
            .find(|b| b.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown benchmark {name:?}")))
    }

    pub fn dim(&self) -> usize {
        self.bounds().0.len()
    }

    /// Native lower and upper bounds.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Benchmark::ToyCubic => (vec![-1.0], vec![1.0]),
            Benchmark::UrsemWaves => (vec![-0.9, -1.2], vec![1.2, 1.2]),
            Benchmark::Adjiman => (vec![-1.0, -1.0], vec![2.0, 1.0]),
            Benchmark::Deceptive => (vec![0.0, 0.0], vec![1.0, 1.0]),
            Benchmark::MixtureOfGaussians02 => (vec![-1.0, -1.0], vec![1.0, 1.0]),
            Benchmark::Hartmann3 => (vec![0.0; 3], vec![1.0; 3]),
            Benchmark::Hartmann4 => (vec![0.0; 4], vec![1.0; 4]),
            Benchmark::Linear => (vec![0.0], vec![1.0]),
        }
    }

    /// Function value at a native-coordinate point.
    pub fn eval_raw(&self, x: &[f64]) -> f64 {
        match self {
            Benchmark::ToyCubic => x[0].powi(3) - x[0],
            Benchmark::UrsemWaves => ursem_waves(x[0], x[1]),
            Benchmark::Adjiman => x[0].cos() * x[1].sin() - x[0] / (x[1] * x[1] + 1.0),
            Benchmark::Deceptive => deceptive(x),
            Benchmark::MixtureOfGaussians02 => mixture_of_gaussians02(x[0], x[1]),
            Benchmark::Hartmann3 => hartmann(x, &H3_A, &H3_P),
            Benchmark::Hartmann4 => hartmann(x, &H4_A, &H4_P),
            Benchmark::Linear => x[0],
        }
    }

    /// Maps a unit-box point to native coordinates.
    pub fn to_native(&self, u: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.bounds();
        u.iter()
            .zip(lo.iter().zip(&hi))
            .map(|(v, (l, h))| l + v * (h - l))
            .collect()
    }
}

fn ursem_waves(x: f64, y: f64) -> f64 {
    -0.9 * x * x + (y * y - 4.5 * y * y) * x * y
        + 4.7 * (3.0 * x - y * y * (2.0 + x)).cos() * (2.5 * PI * x).sin()
}

const DECEPTIVE_ALPHA: [f64; 2] = [1.0 / 3.0, 2.0 / 3.0];
const DECEPTIVE_BETA: f64 = 2.0;

fn deceptive_g(x: f64, a: f64) -> f64 {
    if x <= 0.8 * a {
        -x / a + 0.8
    } else if x <= a {
        5.0 * x / a - 4.0
    } else if x <= (1.0 + 4.0 * a) / 5.0 {
        5.0 * (x - a) / (a - 1.0) + 1.0
    } else {
        (x - 1.0) / (1.0 - a) + 0.8
    }
}

fn deceptive(x: &[f64]) -> f64 {
    let s: f64 = x
        .iter()
        .zip(DECEPTIVE_ALPHA)
        .map(|(v, a)| deceptive_g(*v, a))
        .sum::<f64>()
        / x.len() as f64;
    -s.powf(DECEPTIVE_BETA)
}

fn mixture_of_gaussians02(x: f64, y: f64) -> f64 {
    let a = 0.7 * (-10.0 * (0.8 * (x + 0.2).powi(2) + 0.7 * (y + 0.5).powi(2))).exp();
    let b = 0.1 * (-8.0 * (0.3 * (x - 0.8).powi(2) + 0.6 * (y - 0.3).powi(2))).exp();
    -(a + b)
}

const HARTMANN_C: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

const H3_A: [[f64; 3]; 4] = [
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
];
const H3_P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];

// first four columns of the six-dimensional Hartmann constants
const H4_A: [[f64; 4]; 4] = [
    [10.0, 3.0, 17.0, 3.5],
    [0.05, 10.0, 17.0, 0.1],
    [3.0, 3.5, 1.7, 10.0],
    [17.0, 8.0, 0.05, 10.0],
];
const H4_P: [[f64; 4]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124],
    [0.2329, 0.4135, 0.8307, 0.3736],
    [0.2348, 0.1451, 0.3522, 0.2883],
    [0.4047, 0.8828, 0.8732, 0.5743],
];

fn hartmann<const D: usize>(x: &[f64], a: &[[f64; D]; 4], p: &[[f64; D]; 4]) -> f64 {
    -(0..4)
        .map(|i| {
            let r: f64 = (0..D).map(|j| a[i][j] * (x[j] - p[i][j]).powi(2)).sum();
            HARTMANN_C[i] * (-r).exp()
        })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_cubic_at_zero() {
        assert_eq!(Benchmark::ToyCubic.eval_raw(&[0.0]), 0.0);
    }

    #[test]
    fn published_minima() {
        let h3 = Benchmark::Hartmann3.eval_raw(&[0.114614, 0.555649, 0.852547]);
        assert!((h3 + 3.86278).abs() < 1e-4, "{h3}");
        let adj = Benchmark::Adjiman.eval_raw(&[2.0, 0.10578]);
        assert!((adj + 2.02181).abs() < 1e-4, "{adj}");
        let urs = Benchmark::UrsemWaves.eval_raw(&[1.2, 1.2]);
        assert!((urs + 8.5536).abs() < 1e-3, "{urs}");
        let dec = Benchmark::Deceptive.eval_raw(&DECEPTIVE_ALPHA);
        assert!((dec + 1.0).abs() < 1e-12);
    }

    #[test]
    fn names_round_trip() {
        for b in ALL_BENCHMARKS {
            assert_eq!(Benchmark::from_name(b.name()).unwrap(), b);
            let s = serde_json::to_string(&b).unwrap();
            assert_eq!(s, format!("\"{}\"", b.name()));
        }
    }
}
