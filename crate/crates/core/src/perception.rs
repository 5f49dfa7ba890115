//! Perceptions — time-stamped configuration-space regions with prior
//! weights — and their measure densities under the candidate theories.
//!
//! A perception `p` carries a time `t(p)`, a region `s(p)` and a prior
//! weight, the density of the prior measure at `p`. The measure density
//! `m(p)` is theory dependent:
//!
//! * SQM — the quantum weight of the region, `integral of |psi(x,t(p))|^2
//!   over s(p)` by grid quadrature;
//! * SBM — an indicator: 1 exactly when the theory's single trajectory
//!   sits inside `s(p)` at `t(p)`, else 0;
//! * SCBM / GCBM — the SBM indicator averaged over an ensemble, with its
//!   binomial standard error.
//!
//! Set measures sum `prior_weight * m(p)` over the (finite) perception set.
//! Regions use half-open boundaries `[a, b)` so partitions are exact and
//! trajectory membership is never double counted.

use thiserror::Error;

use crate::configspace::evolve::{EvolutionContext, EvolveError};
use crate::configspace::grid::{Grid, Point, MAX_DIMS};
use crate::ensemble::{Ensemble, EnsembleError};
use crate::pilotwave::{PilotWaveError, Trajectory};
use crate::stats::binomial_std_error;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("region has no boxes or zero volume")]
    EmptyRegion,
    #[error("region box has an empty or non-finite extent on axis {axis}")]
    BadBox { axis: usize },
    #[error("region boxes {first} and {second} overlap")]
    OverlappingBoxes { first: usize, second: usize },
    #[error("region dimensionality {got} does not match the grid ({expected})")]
    DimsMismatch { got: usize, expected: usize },
    #[error("duplicate perception id {0:?}")]
    DuplicateId(String),
    #[error("perception {id:?} has non-positive prior weight {weight}")]
    BadWeight { id: String, weight: f64 },
    #[error("perception {id:?}: time {t} is outside the evolved range")]
    TimeNotCovered { id: String, t: f64 },
    #[error("perception {id:?}: trajectory does not cover time {t}")]
    TrajectoryNotCovered { id: String, t: f64 },
    #[error("perception family: cells {first:?} and {second:?} overlap at time index {time_index}")]
    OverlappingCells {
        time_index: usize,
        first: String,
        second: String,
    },
    #[error(
        "perception family does not tile the domain at time index {time_index}: \
         covered volume {covered} vs domain volume {domain}"
    )]
    NotATiling {
        time_index: usize,
        covered: f64,
        domain: f64,
    },
    #[error("family spec needs one cell count per axis, all nonzero")]
    BadFamilySpec,
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// A finite union of pairwise-disjoint axis-aligned boxes with half-open
/// `[lo, hi)` boundaries per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    dims: usize,
    /// per box: [axis][0] = lo, [axis][1] = hi
    boxes: Vec<[[f64; 2]; MAX_DIMS]>,
}

impl Region {
    /// 1D region from a list of intervals; overlapping intervals are merged
    /// during canonicalisation.
    pub fn intervals(intervals: &[(f64, f64)]) -> Result<Self, PerceptionError> {
        let mut sorted: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for &(a, b) in intervals {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(PerceptionError::BadBox { axis: 0 });
            }
            sorted.push((a, b));
        }
        if sorted.is_empty() {
            return Err(PerceptionError::EmptyRegion);
        }
        sorted.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
        let mut merged: Vec<(f64, f64)> = vec![sorted[0]];
        for (a, b) in sorted.into_iter().skip(1) {
            let last = merged.last_mut().unwrap();
            if a <= last.1 {
                last.1 = last.1.max(b);
            } else {
                merged.push((a, b));
            }
        }
        Ok(Region {
            dims: 1,
            boxes: merged
                .into_iter()
                .map(|(a, b)| [[a, b], [0.0, 0.0]])
                .collect(),
        })
    }

    /// 2D region from `(x_lo, x_hi, y_lo, y_hi)` rectangles, which must be
    /// pairwise disjoint.
    pub fn rectangles(rects: &[(f64, f64, f64, f64)]) -> Result<Self, PerceptionError> {
        if rects.is_empty() {
            return Err(PerceptionError::EmptyRegion);
        }
        let mut boxes = Vec::with_capacity(rects.len());
        for &(xl, xh, yl, yh) in rects {
            if !(xl.is_finite() && xh.is_finite() && xl < xh) {
                return Err(PerceptionError::BadBox { axis: 0 });
            }
            if !(yl.is_finite() && yh.is_finite() && yl < yh) {
                return Err(PerceptionError::BadBox { axis: 1 });
            }
            boxes.push([[xl, xh], [yl, yh]]);
        }
        for i in 0..boxes.len() {
            for j in (i + 1)..boxes.len() {
                if boxes_overlap(&boxes[i], &boxes[j], 2) {
                    return Err(PerceptionError::OverlappingBoxes { first: i, second: j });
                }
            }
        }
        Ok(Region { dims: 2, boxes })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn boxes(&self) -> &[[[f64; 2]; MAX_DIMS]] {
        &self.boxes
    }

    /// Total length (1D) or area (2D); boxes are disjoint by construction.
    pub fn volume(&self) -> f64 {
        self.boxes
            .iter()
            .map(|b| (0..self.dims).map(|a| b[a][1] - b[a][0]).product::<f64>())
            .sum()
    }

    /// Half-open membership test.
    pub fn contains(&self, p: Point) -> bool {
        self.boxes.iter().any(|b| {
            (0..self.dims).all(|a| p.coord(a) >= b[a][0] && p.coord(a) < b[a][1])
        })
    }

    /// Integral of the multilinear interpolant of `field` over the region,
    /// clipped to the grid extent. Disjoint regions tiling the domain sum
    /// exactly to the full-grid quadrature.
    pub fn quadrature(&self, grid: &Grid, field: &[f64]) -> Result<f64, PerceptionError> {
        if self.dims != grid.dims() {
            return Err(PerceptionError::DimsMismatch {
                got: self.dims,
                expected: grid.dims(),
            });
        }
        let mut total = 0.0;
        for b in &self.boxes {
            match self.dims {
                1 => {
                    let ax = grid.axis(0);
                    let (a, b1) = (b[0][0].max(ax.min), b[0][1].min(ax.max));
                    ax.accumulate_interval_weights(a, b1, |i, w| total += w * field[i]);
                }
                _ => {
                    let (ax, ay) = (grid.axis(0), grid.axis(1));
                    let mut wx: Vec<(usize, f64)> = Vec::new();
                    ax.accumulate_interval_weights(
                        b[0][0].max(ax.min),
                        b[0][1].min(ax.max),
                        |i, w| wx.push((i, w)),
                    );
                    let mut wy: Vec<(usize, f64)> = Vec::new();
                    ay.accumulate_interval_weights(
                        b[1][0].max(ay.min),
                        b[1][1].min(ay.max),
                        |j, w| wy.push((j, w)),
                    );
                    let ny = ay.points;
                    for &(i, wxi) in &wx {
                        for &(j, wyj) in &wy {
                            total += wxi * wyj * field[i * ny + j];
                        }
                    }
                }
            }
        }
        Ok(total)
    }
}

fn boxes_overlap(a: &[[f64; 2]; MAX_DIMS], b: &[[f64; 2]; MAX_DIMS], dims: usize) -> bool {
    (0..dims).all(|ax| a[ax][0].max(b[ax][0]) < a[ax][1].min(b[ax][1]))
}

/// One perception: a label, a time, a region and its prior weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Perception {
    pub id: String,
    pub t: f64,
    pub region: Region,
    pub prior_weight: f64,
}

/// A finite, explicitly enumerated perception set with unique ids.
#[derive(Clone, Debug, PartialEq)]
pub struct PerceptionSet {
    perceptions: Vec<Perception>,
}

impl PerceptionSet {
    pub fn new(perceptions: Vec<Perception>) -> Result<Self, PerceptionError> {
        let mut seen = std::collections::HashSet::new();
        for p in &perceptions {
            if !seen.insert(p.id.clone()) {
                return Err(PerceptionError::DuplicateId(p.id.clone()));
            }
            if !(p.prior_weight.is_finite() && p.prior_weight > 0.0) {
                return Err(PerceptionError::BadWeight {
                    id: p.id.clone(),
                    weight: p.prior_weight,
                });
            }
            if p.region.volume() <= 0.0 {
                return Err(PerceptionError::EmptyRegion);
            }
        }
        Ok(PerceptionSet { perceptions })
    }

    pub fn perceptions(&self) -> &[Perception] {
        &self.perceptions
    }

    pub fn len(&self) -> usize {
        self.perceptions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perceptions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Perception> {
        self.perceptions.iter().find(|p| p.id == id)
    }

    /// All distinct perception times, in first-appearance order.
    pub fn times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = Vec::new();
        for p in &self.perceptions {
            if !times.contains(&p.t) {
                times.push(p.t);
            }
        }
        times
    }
}

/// A theory assigning measure densities to perceptions. SBM carries its
/// single definite trajectory; SCBM and GCBM carry trajectory ensembles
/// (quantum-sampled and custom-density-sampled respectively).
#[derive(Clone, Copy, Debug)]
pub enum TheoryModel<'a> {
    Sqm,
    Sbm(&'a Trajectory),
    Scbm(&'a Ensemble),
    Gcbm(&'a Ensemble),
}

impl TheoryModel<'_> {
    pub fn tag(&self) -> &'static str {
        match self {
            TheoryModel::Sqm => "sqm",
            TheoryModel::Sbm(_) => "sbm",
            TheoryModel::Scbm(_) => "scbm",
            TheoryModel::Gcbm(_) => "gcbm",
        }
    }
}

/// A measure density value with an optional Monte Carlo standard error
/// (present for the ensemble-averaged theories).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureDensity {
    pub mean: f64,
    pub std_error: Option<f64>,
}

fn time_error(p: &Perception, e: EvolveError) -> PerceptionError {
    match e {
        EvolveError::TimeOutOfRange { .. } => PerceptionError::TimeNotCovered {
            id: p.id.clone(),
            t: p.t,
        },
        other => PerceptionError::Ensemble(EnsembleError::Evolve(other)),
    }
}

/// SQM measure density: quantum weight of the region at `t(p)`.
pub fn sqm_measure_density(p: &Perception, ctx: &EvolutionContext) -> Result<f64, PerceptionError> {
    let field = ctx.density_field(p.t).map_err(|e| time_error(p, e))?;
    Ok(p.region.quadrature(ctx.grid(), &field)?.clamp(0.0, 1.0))
}

/// SBM measure density: exactly 1 if the trajectory sits inside the region
/// at `t(p)` (position linearly interpolated between samples), else 0.
pub fn sbm_measure_density(p: &Perception, traj: &Trajectory) -> Result<f64, PerceptionError> {
    let pos = traj.position_at(p.t).map_err(|e| match e {
        PilotWaveError::NotCovered { .. } => PerceptionError::TrajectoryNotCovered {
            id: p.id.clone(),
            t: p.t,
        },
        other => PerceptionError::Ensemble(EnsembleError::Trajectory {
            index: 0,
            source: other,
        }),
    })?;
    Ok(if p.region.contains(pos) { 1.0 } else { 0.0 })
}

/// SCBM measure density: the SBM indicator averaged over ensemble members,
/// with its binomial standard error `sqrt(m(1-m)/N)`.
pub fn scbm_measure_density(
    p: &Perception,
    ens: &Ensemble,
) -> Result<(f64, f64), PerceptionError> {
    let mut hits = 0usize;
    for traj in ens.trajectories() {
        hits += sbm_measure_density(p, traj)? as usize;
    }
    let mean = hits as f64 / ens.len() as f64;
    Ok((mean, binomial_std_error(mean, ens.len())))
}

/// Theory dispatch for `m(p)`.
pub fn measure_density(
    p: &Perception,
    theory: &TheoryModel,
    ctx: &EvolutionContext,
) -> Result<MeasureDensity, PerceptionError> {
    match theory {
        TheoryModel::Sqm => Ok(MeasureDensity {
            mean: sqm_measure_density(p, ctx)?,
            std_error: None,
        }),
        TheoryModel::Sbm(traj) => Ok(MeasureDensity {
            mean: sbm_measure_density(p, traj)?,
            std_error: None,
        }),
        TheoryModel::Scbm(ens) | TheoryModel::Gcbm(ens) => {
            let (mean, se) = scbm_measure_density(p, ens)?;
            Ok(MeasureDensity {
                mean,
                std_error: Some(se),
            })
        }
    }
}

/// Set measure `mu(S) = sum of prior_weight(p) * m(p)` over the set, in
/// listed order.
pub fn set_measure(
    set: &PerceptionSet,
    theory: &TheoryModel,
    ctx: &EvolutionContext,
) -> Result<f64, PerceptionError> {
    let mut total = 0.0;
    for p in set.perceptions() {
        total += p.prior_weight * measure_density(p, theory, ctx)?.mean;
    }
    Ok(total)
}

/// Generator spec for partition families: at each listed time the domain is
/// tiled into `cells[axis]` equal cells per axis, one perception per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilySpec {
    pub times: Vec<f64>,
    pub cells: Vec<usize>,
    /// uniform prior weight given to every generated perception
    pub prior_weight: f64,
}

/// Builds a perception family whose regions partition the domain at each
/// listed time. Ids are `t{time_index}_c{cell}` (row-major cell order).
pub fn build_perception_family(
    grid: &Grid,
    spec: &FamilySpec,
) -> Result<PerceptionSet, PerceptionError> {
    if spec.times.is_empty()
        || spec.cells.len() != grid.dims()
        || spec.cells.contains(&0)
        || !(spec.prior_weight.is_finite() && spec.prior_weight > 0.0)
    {
        return Err(PerceptionError::BadFamilySpec);
    }
    let mut perceptions = Vec::new();
    for (ti, &t) in spec.times.iter().enumerate() {
        match grid.dims() {
            1 => {
                let ax = grid.axis(0);
                let w = ax.length() / spec.cells[0] as f64;
                for k in 0..spec.cells[0] {
                    let lo = ax.min + k as f64 * w;
                    let hi = if k + 1 == spec.cells[0] { ax.max } else { ax.min + (k + 1) as f64 * w };
                    perceptions.push(Perception {
                        id: format!("t{}_c{}", ti, k),
                        t,
                        region: Region::intervals(&[(lo, hi)])?,
                        prior_weight: spec.prior_weight,
                    });
                }
            }
            _ => {
                let (ax, ay) = (grid.axis(0), grid.axis(1));
                let (nx, ny) = (spec.cells[0], spec.cells[1]);
                let (wx, wy) = (ax.length() / nx as f64, ay.length() / ny as f64);
                for kx in 0..nx {
                    for ky in 0..ny {
                        let xlo = ax.min + kx as f64 * wx;
                        let xhi = if kx + 1 == nx { ax.max } else { ax.min + (kx + 1) as f64 * wx };
                        let ylo = ay.min + ky as f64 * wy;
                        let yhi = if ky + 1 == ny { ay.max } else { ay.min + (ky + 1) as f64 * wy };
                        perceptions.push(Perception {
                            id: format!("t{}_c{}_{}", ti, kx, ky),
                            t,
                            region: Region::rectangles(&[(xlo, xhi, ylo, yhi)])?,
                            prior_weight: spec.prior_weight,
                        });
                    }
                }
            }
        }
    }
    let set = PerceptionSet::new(perceptions)?;
    validate_family(&set, grid)?;
    Ok(set)
}

/// Checks that at every time the perception regions are pairwise disjoint
/// and jointly tile the domain.
pub fn validate_family(set: &PerceptionSet, grid: &Grid) -> Result<(), PerceptionError> {
    for (time_index, &t) in set.times().iter().enumerate() {
        let group: Vec<&Perception> = set.perceptions().iter().filter(|p| p.t == t).collect();
        for i in 0..group.len() {
            for j in (i + 1)..group.len() {
                let overlap = group[i].region.boxes().iter().any(|a| {
                    group[j]
                        .region
                        .boxes()
                        .iter()
                        .any(|b| boxes_overlap(a, b, grid.dims()))
                });
                if overlap {
                    return Err(PerceptionError::OverlappingCells {
                        time_index,
                        first: group[i].id.clone(),
                        second: group[j].id.clone(),
                    });
                }
            }
        }
        let covered: f64 = group.iter().map(|p| p.region.volume()).sum();
        let domain = grid.domain_volume();
        if (covered - domain).abs() > 1e-9 * domain {
            return Err(PerceptionError::NotATiling {
                time_index,
                covered,
                domain,
            });
        }
    }
    Ok(())
}
