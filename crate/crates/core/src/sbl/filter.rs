use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;

use super::{Result, SblError};

/// Denominator of the shipped default filter.
pub const PRINTED_A: [f64; 5] = [1.0, 0.0, 0.486029, 0.0, 0.017665];
/// Numerator of the shipped default filter.
pub const PRINTED_B: [f64; 5] = [0.093981, -0.375923, 0.563885, -0.375923, 0.093981];

/// Rational transfer function `H(z) = sum b_k z^-k / (1 + sum_{k>=1} a_k z^-k)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IirFilter {
    b: Vec<f64>,
    a: Vec<f64>,
}

impl Default for IirFilter {
    fn default() -> Self {
        Self { b: PRINTED_B.to_vec(), a: PRINTED_A.to_vec() }
    }
}

impl IirFilter {
    /// Validates `a[0] == 1`, finiteness and stability.
    pub fn new(b: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if b.is_empty() || a.is_empty() {
            return Err(SblError::InvalidFilter("coefficient vectors must be non-empty".into()));
        }
        if a[0] != 1.0 {
            return Err(SblError::InvalidFilter(format!("a[0] must be exactly 1, got {}", a[0])));
        }
        if b.iter().chain(&a).any(|c| !c.is_finite()) {
            return Err(SblError::InvalidFilter("coefficients must be finite".into()));
        }
        if !is_stable(&a) {
            return Err(SblError::InvalidFilter("a pole lies on or outside the unit circle".into()));
        }
        Ok(Self { b, a })
    }

    pub fn identity() -> Self {
        Self { b: vec![1.0], a: vec![1.0] }
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    fn order(&self) -> usize {
        self.a.len().max(self.b.len())
    }

    /// `(b, a)` zero-padded to a common length.
    fn padded(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.order();
        let mut b = self.b.clone();
        let mut a = self.a.clone();
        b.resize(n, 0.0);
        a.resize(n, 0.0);
        (b, a)
    }
}

/// Schur-Cohn step-down test: every reflection coefficient of the monic
/// denominator must have magnitude below one.
fn is_stable(a: &[f64]) -> bool {
    let mut p: Vec<f64> = a.to_vec();
    while p.len() > 1 && p[p.len() - 1] == 0.0 {
        p.pop();
    }
    while p.len() > 1 {
        let m = p.len() - 1;
        let k = p[m];
        if k.abs() >= 1.0 {
            return false;
        }
        let scale = 1.0 - k * k;
        p = (0..m).map(|i| (p[i] - k * p[m - i]) / scale).collect();
    }
    true
}

/// Evaluates `H(e^{j omega})`.
pub fn butterworth_response(f: &IirFilter, omega: f64) -> Complex<f64> {
    let eval = |coeffs: &[f64]| -> Complex<f64> {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| Complex::from_polar(c, -omega * k as f64))
            .sum()
    };
    eval(&f.b) / eval(&f.a)
}

/// Direct form II transposed filtering with optional initial state.
pub fn lfilter(f: &IirFilter, x: &[f64], zi: Option<&[f64]>) -> Vec<f64> {
    let (b, a) = f.padded();
    let n = b.len();
    let mut z = vec![0.0; n - 1];
    if let Some(zi) = zi {
        z.copy_from_slice(zi);
    }
    x.iter()
        .map(|&xi| {
            let y = b[0] * xi + z.first().copied().unwrap_or(0.0);
            for j in 0..n.saturating_sub(1) {
                let next = if j + 1 < n - 1 { z[j + 1] } else { 0.0 };
                z[j] = b[j + 1] * xi + next - a[j + 1] * y;
            }
            y
        })
        .collect()
}

/// Steady-state initial conditions for a unit step input.
fn lfilter_zi(f: &IirFilter) -> Vec<f64> {
    let (b, a) = f.padded();
    let n = b.len();
    if n == 1 {
        return Vec::new();
    }
    let m = n - 1;
    // I - companion(a)^T, where companion(a) has first row -a[1..] and ones
    // on the subdiagonal.
    let mut lhs = DMatrix::<f64>::identity(m, m);
    for i in 0..m {
        lhs[(i, 0)] += a[i + 1];
        if i + 1 < m {
            lhs[(i, i + 1)] -= 1.0;
        }
    }
    let rhs = DVector::from_fn(m, |i, _| b[i + 1] - a[i + 1] * b[0]);
    lhs.lu().solve(&rhs).map(|v| v.iter().copied().collect()).unwrap_or_else(|| vec![0.0; m])
}

/// Zero-phase filtering: odd-extends both ends by `3 * order` samples, runs
/// the filter forward from steady state, then backward, and trims the padding.
/// The net response is `|H|^2` with zero phase.
pub fn filtfilt(f: &IirFilter, x: &[f64]) -> Result<Vec<f64>> {
    let edge = 3 * f.order();
    if x.len() <= edge {
        return Err(SblError::SignalTooShort { len: x.len(), needed: edge });
    }
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * edge);
    ext.extend((1..=edge).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=edge).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let zi = lfilter_zi(f);
    let scaled = |v: f64| zi.iter().map(|z| z * v).collect::<Vec<_>>();
    let forward = lfilter(f, &ext, Some(&scaled(ext[0])));
    let mut rev: Vec<f64> = forward.into_iter().rev().collect();
    rev = lfilter(f, &rev, Some(&scaled(rev[0])));
    rev.reverse();
    Ok(rev[edge..edge + n].to_vec())
}
