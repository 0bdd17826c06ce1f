use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{Result, SblError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryKind {
    #[default]
    OvercompleteDct,
    Identity,
    Custom,
}

/// Column-normalized basis matrix `D` (signal_dim × num_atoms).
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    kind: DictionaryKind,
}

impl Dictionary {
    /// Wraps a user-supplied matrix. Columns must already have unit norm.
    pub fn custom(atoms: DMatrix<f64>) -> Result<Self> {
        if atoms.nrows() == 0 || atoms.ncols() < atoms.nrows() {
            return Err(SblError::InvalidDimension(format!(
                "custom dictionary must be overcomplete, got {}x{}",
                atoms.nrows(),
                atoms.ncols()
            )));
        }
        for (j, col) in atoms.column_iter().enumerate() {
            if (col.norm() - 1.0).abs() > 1e-9 {
                return Err(SblError::InvalidDimension(format!("column {j} is not unit norm")));
            }
        }
        Ok(Self { atoms, kind: DictionaryKind::Custom })
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn kind(&self) -> DictionaryKind {
        self.kind
    }

    pub fn signal_dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.ncols()
    }
}

/// Builds an identity or overcomplete DCT-IV dictionary.
///
/// DCT atom `k` of `K = round(oversampling * n)` is
/// `cos(pi * (t + 1/2) * (k + 1/2) / K)`, a cosine at `(k + 1/2) / 2K` cycles
/// per sample, normalized to unit length. `oversampling` is ignored for the
/// identity kind.
pub fn build_dictionary(signal_dim: usize, oversampling: f64, kind: DictionaryKind) -> Result<Dictionary> {
    if signal_dim == 0 {
        return Err(SblError::InvalidDimension("signal_dim must be at least 1".into()));
    }
    if !(oversampling >= 1.0 && oversampling.is_finite()) {
        return Err(SblError::InvalidDimension(format!("oversampling must be >= 1, got {oversampling}")));
    }
    let atoms = match kind {
        DictionaryKind::Identity => DMatrix::identity(signal_dim, signal_dim),
        DictionaryKind::OvercompleteDct => {
            let k = (oversampling * signal_dim as f64).round() as usize;
            let mut d = DMatrix::from_fn(signal_dim, k, |t, j| {
                (PI * (t as f64 + 0.5) * (j as f64 + 0.5) / k as f64).cos()
            });
            for mut col in d.column_iter_mut() {
                let n = col.norm();
                col /= n;
            }
            d
        }
        DictionaryKind::Custom => {
            return Err(SblError::InvalidDimension(
                "custom dictionaries are supplied with Dictionary::custom".into(),
            ))
        }
    };
    Ok(Dictionary { atoms, kind })
}
