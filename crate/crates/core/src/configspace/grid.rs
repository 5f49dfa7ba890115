//! Uniform periodic grids over one- or two-dimensional configuration space.
//!
//! Grid points along an axis sit at `min + i * dx`, `i = 0..points`, with
//! periodic wrap-around: index arithmetic and interpolation treat the point
//! after `points - 1` as index 0. Fields sampled on the grid are stored
//! row-major (axis 0 outermost).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest supported dimensionality of the configuration space.
pub const MAX_DIMS: usize = 2;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid must have 1 or 2 axes, got {0}")]
    BadDims(usize),
    #[error("axis {axis}: need at least 16 points, got {points}")]
    TooFewPoints { axis: usize, points: usize },
    #[error("axis {axis}: point count {points} is not a power of two")]
    NotPowerOfTwo { axis: usize, points: usize },
    #[error("axis {axis}: extent [{min}, {max}) is empty or not finite")]
    BadExtent { axis: usize, min: f64, max: f64 },
}

/// One coordinate axis: the half-open extent `[min, max)` divided into
/// `points` equal cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn dx(&self) -> f64 {
        (self.max - self.min) / self.points as f64
    }

    pub fn length(&self) -> f64 {
        self.max - self.min
    }

    /// Coordinate of grid point `i` (not wrapped).
    pub fn coord(&self, i: usize) -> f64 {
        self.min + i as f64 * self.dx()
    }

    /// Maps `x` into `[min, max)` by periodicity.
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.length();
        let y = (x - self.min).rem_euclid(l);
        // rem_euclid can return l itself through rounding
        if y >= l {
            self.min
        } else {
            self.min + y
        }
    }

    /// Largest resolvable wavenumber on this axis (the Nyquist limit).
    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI / self.dx()
    }

    /// Signed spectral wavenumber of FFT bin `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        let n = self.points;
        let signed = if j <= n / 2 {
            j as isize
        } else {
            j as isize - n as isize
        };
        2.0 * std::f64::consts::PI * signed as f64 / self.length()
    }

    /// Integrates the piecewise-linear (periodic) interpolant of per-point
    /// `values` over `[a, b]`, accumulating hat-function weights through
    /// `add(index, weight)`. Requires `min <= a <= b <= max`.
    pub fn accumulate_interval_weights(&self, a: f64, b: f64, mut add: impl FnMut(usize, f64)) {
        if b <= a {
            return;
        }
        let dx = self.dx();
        let n = self.points;
        let first = (((a - self.min) / dx).floor() as usize).min(n - 1);
        let last = (((b - self.min) / dx).ceil() as usize).max(first + 1).min(n);
        for k in first..last {
            let left = self.min + k as f64 * dx;
            let u1 = ((a - left) / dx).clamp(0.0, 1.0);
            let u2 = ((b - left) / dx).clamp(0.0, 1.0);
            if u2 <= u1 {
                continue;
            }
            let half_sq = 0.5 * (u2 * u2 - u1 * u1);
            add(k, dx * ((u2 - u1) - half_sq));
            add((k + 1) % n, dx * half_sq);
        }
    }
}

/// A point in configuration space. Only the first `dims` coordinates of the
/// backing array are meaningful; the rest stay zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point([f64; MAX_DIMS]);

impl Point {
    pub fn new_1d(x: f64) -> Self {
        Point([x, 0.0])
    }

    pub fn new_2d(x: f64, y: f64) -> Self {
        Point([x, y])
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        let mut c = [0.0; MAX_DIMS];
        c[..coords.len().min(MAX_DIMS)]
            .copy_from_slice(&coords[..coords.len().min(MAX_DIMS)]);
        Point(c)
    }

    pub fn coord(&self, axis: usize) -> f64 {
        self.0[axis]
    }

    pub fn coords(&self, dims: usize) -> &[f64] {
        &self.0[..dims]
    }

    pub fn norm(&self) -> f64 {
        (self.0[0] * self.0[0] + self.0[1] * self.0[1]).sqrt()
    }

    pub fn scale(&self, s: f64) -> Point {
        Point([self.0[0] * s, self.0[1] * s])
    }

    pub fn add(&self, other: Point) -> Point {
        Point([self.0[0] + other.0[0], self.0[1] + other.0[1]])
    }

    pub fn is_finite(&self) -> bool {
        self.0[0].is_finite() && self.0[1].is_finite()
    }
}

/// Corner indices and multilinear weights for the cell containing a point.
#[derive(Clone, Copy, Debug)]
pub struct CellStencil {
    pub corners: [usize; 4],
    pub weights: [f64; 4],
    pub count: usize,
}

/// A periodic product grid over 1 or 2 axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self, GridError> {
        if axes.is_empty() || axes.len() > MAX_DIMS {
            return Err(GridError::BadDims(axes.len()));
        }
        for (i, ax) in axes.iter().enumerate() {
            if !(ax.min.is_finite() && ax.max.is_finite()) || ax.max <= ax.min {
                return Err(GridError::BadExtent {
                    axis: i,
                    min: ax.min,
                    max: ax.max,
                });
            }
            if ax.points < 16 {
                return Err(GridError::TooFewPoints {
                    axis: i,
                    points: ax.points,
                });
            }
            if !ax.points.is_power_of_two() {
                return Err(GridError::NotPowerOfTwo {
                    axis: i,
                    points: ax.points,
                });
            }
        }
        Ok(Grid { axes })
    }

    pub fn line(min: f64, max: f64, points: usize) -> Result<Self, GridError> {
        Grid::new(vec![Axis { min, max, points }])
    }

    pub fn plane(x: (f64, f64, usize), y: (f64, f64, usize)) -> Result<Self, GridError> {
        Grid::new(vec![
            Axis {
                min: x.0,
                max: x.1,
                points: x.2,
            },
            Axis {
                min: y.0,
                max: y.1,
                points: y.2,
            },
        ])
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume element `dx^dims`.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.dx()).product()
    }

    pub fn domain_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.length()).product()
    }

    /// Row-major flat index of multi-index `idx`.
    pub fn flat(&self, idx: &[usize]) -> usize {
        match self.dims() {
            1 => idx[0],
            _ => idx[0] * self.axes[1].points + idx[1],
        }
    }

    /// Coordinates of the grid point with flat index `i`.
    pub fn point(&self, i: usize) -> Point {
        match self.dims() {
            1 => Point::new_1d(self.axes[0].coord(i)),
            _ => {
                let ny = self.axes[1].points;
                Point::new_2d(self.axes[0].coord(i / ny), self.axes[1].coord(i % ny))
            }
        }
    }

    pub fn wrap_point(&self, p: Point) -> Point {
        let mut c = [0.0; MAX_DIMS];
        for (a, ax) in self.axes.iter().enumerate() {
            c[a] = ax.wrap(p.coord(a));
        }
        Point(c)
    }

    /// True if `p` lies inside the (half-open) extent on every axis.
    pub fn contains(&self, p: Point) -> bool {
        self.axes
            .iter()
            .enumerate()
            .all(|(a, ax)| p.coord(a) >= ax.min && p.coord(a) < ax.max)
    }

    /// Multilinear interpolation stencil at `p` (wrapped periodically).
    pub fn stencil(&self, p: Point) -> CellStencil {
        let mut base = [0usize; MAX_DIMS];
        let mut frac = [0.0f64; MAX_DIMS];
        for (a, ax) in self.axes.iter().enumerate() {
            let u = (ax.wrap(p.coord(a)) - ax.min) / ax.dx();
            let i = (u.floor() as usize).min(ax.points - 1);
            base[a] = i;
            frac[a] = (u - i as f64).clamp(0.0, 1.0);
        }
        match self.dims() {
            1 => {
                let n = self.axes[0].points;
                CellStencil {
                    corners: [base[0], (base[0] + 1) % n, 0, 0],
                    weights: [1.0 - frac[0], frac[0], 0.0, 0.0],
                    count: 2,
                }
            }
            _ => {
                let (nx, ny) = (self.axes[0].points, self.axes[1].points);
                let (i0, i1) = (base[0], (base[0] + 1) % nx);
                let (j0, j1) = (base[1], (base[1] + 1) % ny);
                let (fx, fy) = (frac[0], frac[1]);
                CellStencil {
                    corners: [i0 * ny + j0, i0 * ny + j1, i1 * ny + j0, i1 * ny + j1],
                    weights: [
                        (1.0 - fx) * (1.0 - fy),
                        (1.0 - fx) * fy,
                        fx * (1.0 - fy),
                        fx * fy,
                    ],
                    count: 4,
                }
            }
        }
    }

    /// Multilinear interpolation of a per-point scalar field at `p`.
    pub fn interpolate(&self, values: &[f64], p: Point) -> f64 {
        let st = self.stencil(p);
        (0..st.count)
            .map(|c| st.weights[c] * values[st.corners[c]])
            .sum()
    }
}
