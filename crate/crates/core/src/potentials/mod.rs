//! Benchmark energy surfaces with analytic gradients and Hessian-vector products.
//!
//! Every surface implements [`Potential`]. Gradients and Hessian-vector
//! products are hand-derived; finite differences only appear in tests.

mod analytic;
mod pair;

pub use analytic::{Challenge2d, DoubleWellFlat, DoubleWellQuartic, MuellerBrown};
pub use pair::{LatticeSpec, Lj7, MorseParams, MorseVacancy};

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::PotentialError;

/// A smooth energy surface on R^dim.
///
/// Implementations are immutable and shared between worker threads.
pub trait Potential: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes the gradient at `x` into `grad`.
    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    /// Writes the Hessian-vector product at `x` along `y` into `out`.
    fn hvp(&self, x: &[f64], y: &[f64], out: &mut [f64]);

    /// Gradient and Hessian-vector product in one pass. Pair potentials
    /// override this to share the distance computations.
    fn gradient_and_hvp(&self, x: &[f64], y: &[f64], grad: &mut [f64], hy: &mut [f64]) {
        self.gradient(x, grad);
        self.hvp(x, y, hy);
    }

    /// Dense Hessian, assembled column by column from exact Hessian-vector
    /// products and symmetrized.
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            self.hvp(x, &e, &mut col);
            for i in 0..d {
                h[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        let ht = h.transpose();
        (h + ht) * 0.5
    }

    /// Directions that are exact Hessian null vectors at every point, such
    /// as uniform translations of a free cluster.
    fn zero_mode_basis(&self) -> Vec<Vec<f64>> {
        Vec::new()
    }

    /// Position dependent symmetry generators (rigid rotation of a free
    /// cluster). They are null directions only at critical points but must
    /// be removed before classifying the index of a non-critical point.
    fn gauge_modes(&self, _x: &[f64]) -> Vec<Vec<f64>> {
        Vec::new()
    }

    /// Identical particles: configurations that differ by renumbering are
    /// the same state, so critical points are told apart by energy.
    fn interchangeable_atoms(&self) -> bool {
        false
    }

    /// Rejects configurations where the energy is undefined.
    fn validate(&self, x: &[f64]) -> Result<(), PotentialError> {
        if x.len() != self.dim() {
            return Err(PotentialError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient(x, &mut g);
        g
    }

    fn hvp_vec(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.hvp(x, y, &mut out);
        out
    }
}

pub type SharedPotential = Arc<dyn Potential>;

/// Names accepted by [`by_name`].
pub const REGISTRY: &[(&str, &str)] = &[
    (
        "double-well-flat",
        "E(C x1^4 - x1^2) + mu x2^2 with E=2e-4, C=0.045, mu=1e-3",
    ),
    ("double-well-quartic", "(1 - x^2)^2 + 2 y^2"),
    ("mueller-brown", "four-term Mueller-Brown surface"),
    (
        "challenge-2d",
        "V1/Z - V2 with a disconnected index-1 region",
    ),
    (
        "morse-vacancy",
        "Morse pair potential on a triangular lattice with a vacancy",
    ),
    ("lj7", "7-atom Lennard-Jones cluster in 2d"),
];

/// Builds a registered potential. `lattice` is only used by `morse-vacancy`;
/// when absent the default 23-free-atom lattice is used.
pub fn by_name(
    name: &str,
    lattice: Option<&LatticeSpec>,
) -> Result<SharedPotential, PotentialError> {
    Ok(match name {
        "double-well-flat" => Arc::new(DoubleWellFlat::default()),
        "double-well-quartic" => Arc::new(DoubleWellQuartic),
        "mueller-brown" => Arc::new(MuellerBrown::default()),
        "challenge-2d" => Arc::new(Challenge2d::default()),
        "morse-vacancy" => {
            let spec = match lattice {
                Some(s) => s.clone(),
                None => LatticeSpec::triangular_vacancy(23, 3.0, MorseParams::default(), None)?,
            };
            Arc::new(MorseVacancy::new(spec)?)
        }
        "lj7" => Arc::new(Lj7::default()),
        other => return Err(PotentialError::Unknown(other.to_string())),
    })
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
