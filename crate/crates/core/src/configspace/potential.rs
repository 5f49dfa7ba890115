//! Real, time-independent potentials evaluated on a grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grid::Grid;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("custom potential has {got} values but the grid has {expected} points")]
    LengthMismatch { got: usize, expected: usize },
    #[error("potential is not finite at grid point {index}")]
    NonFinite { index: usize },
    #[error("{0}")]
    BadParameter(String),
}

/// Potential shapes for the experiments. Multi-dimensional variants act
/// separably, one copy of the 1D profile per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Free,
    Harmonic {
        omega: f64,
    },
    /// Square well of interior `width` centred on the origin, walls realised
    /// as a large finite barrier of height `wall_height`.
    Box {
        width: f64,
        wall_height: f64,
    },
    /// Quartic double well `h * ((2x/s)^2 - 1)^2` with minima at +-s/2 and a
    /// barrier of height `h` between them.
    DoubleWell {
        barrier_height: f64,
        separation: f64,
    },
    Custom {
        values: Vec<f64>,
    },
}

impl Potential {
    /// Evaluates the potential at every grid point (row-major).
    pub fn values_on(&self, grid: &Grid) -> Result<Vec<f64>, PotentialError> {
        self.check_parameters()?;
        let values: Vec<f64> = match self {
            Potential::Custom { values } => {
                if values.len() != grid.len() {
                    return Err(PotentialError::LengthMismatch {
                        got: values.len(),
                        expected: grid.len(),
                    });
                }
                values.clone()
            }
            _ => (0..grid.len())
                .map(|i| {
                    let p = grid.point(i);
                    (0..grid.dims()).map(|a| self.axis_value(p.coord(a))).sum()
                })
                .collect(),
        };
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(PotentialError::NonFinite { index });
        }
        Ok(values)
    }

    fn axis_value(&self, x: f64) -> f64 {
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => 0.5 * omega * omega * x * x,
            Potential::Box { width, wall_height } => {
                if x.abs() <= 0.5 * width {
                    0.0
                } else {
                    *wall_height
                }
            }
            Potential::DoubleWell {
                barrier_height,
                separation,
            } => {
                let u = 2.0 * x / separation;
                let q = u * u - 1.0;
                barrier_height * q * q
            }
            Potential::Custom { .. } => unreachable!("custom handled in values_on"),
        }
    }

    fn check_parameters(&self) -> Result<(), PotentialError> {
        let bad = |msg: &str| Err(PotentialError::BadParameter(msg.to_string()));
        match self {
            Potential::Harmonic { omega } if !(omega.is_finite() && *omega > 0.0) => {
                bad("harmonic omega must be positive and finite")
            }
            Potential::Box { width, wall_height }
                if !(width.is_finite() && *width > 0.0 && wall_height.is_finite()) =>
            {
                bad("box width must be positive and wall height finite")
            }
            Potential::DoubleWell {
                barrier_height,
                separation,
            } if !(barrier_height.is_finite()
                && separation.is_finite()
                && *separation > 0.0) =>
            {
                bad("double well needs finite barrier height and positive separation")
            }
            _ => Ok(()),
        }
    }
}
