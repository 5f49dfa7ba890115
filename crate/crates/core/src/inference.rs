//! Typicality of perceptions under a theory, and Bayesian comparison of
//! competing theories.
//!
//! The typicality of `p` is the fraction of the total perception measure
//! carried by perceptions whose measure density does not exceed `m(p)`
//! (ties included): `T(p) = mu({p' : m(p') <= m(p)}) / mu(M)` with
//! `mu` built from `prior_weight * m`. Typicality serves as the likelihood
//! of an observed perception when weighting theory priors into posteriors.
//!
//! The computation enumerates the finite perception set directly, in listed
//! order, so it matches a brute-force evaluation of the definition term for
//! term (bit-for-bit), not merely up to rounding.
//!
//! [`typicality_values`] is the single place the fraction-below kernel
//! lives; variant typicality functionals over the same weighted densities
//! can be swapped in there without touching the report plumbing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::configspace::evolve::EvolutionContext;
use crate::ensemble::Ensemble;
use crate::perception::{
    measure_density, PerceptionError, PerceptionSet, TheoryModel,
};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("theory {theory} assigns zero total measure to the perception set")]
    ZeroTotalMeasure { theory: String },
    #[error("observed perception {0:?} is not in the set")]
    UnknownPerception(String),
    #[error("theory {index} has non-positive prior {prior}")]
    BadPrior { index: usize, prior: f64 },
    #[error("no theories to compare")]
    NoTheories,
    #[error("observation impossible under every candidate theory")]
    AllImpossible,
    #[error("agreement experiment needs sbm trajectory index {index} < ensemble size {len}")]
    BadSbmIndex { index: usize, len: usize },
    #[error(transparent)]
    Perception(#[from] PerceptionError),
}

/// Per-perception typicality under one theory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TypicalityEntry {
    pub id: String,
    pub m: f64,
    pub typicality: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TypicalityReport {
    pub theory: String,
    pub total_measure: f64,
    pub entries: Vec<TypicalityEntry>,
}

impl TypicalityReport {
    pub fn get(&self, id: &str) -> Option<&TypicalityEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Typicality values for explicit weighted measure densities:
/// `T_i = sum over {j : m_j <= m_i} of w_j m_j`, divided by the total.
/// Each value is a plain sum over the input in listed order, so the result
/// is bit-identical to a direct evaluation of the definition.
pub fn typicality_values(weights: &[f64], m: &[f64]) -> Result<Vec<f64>, InferenceError> {
    assert_eq!(weights.len(), m.len());
    let total: f64 = weights.iter().zip(m).map(|(w, mi)| w * mi).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(InferenceError::ZeroTotalMeasure {
            theory: "weighted densities".to_string(),
        });
    }
    Ok((0..m.len())
        .map(|i| {
            let mut below = 0.0;
            for j in 0..m.len() {
                if m[j] <= m[i] {
                    below += weights[j] * m[j];
                }
            }
            below / total
        })
        .collect())
}

fn typicality_from_densities(
    ids: &[String],
    weights: &[f64],
    m: &[f64],
    theory: &str,
) -> Result<TypicalityReport, InferenceError> {
    let values = typicality_values(weights, m).map_err(|e| match e {
        InferenceError::ZeroTotalMeasure { .. } => InferenceError::ZeroTotalMeasure {
            theory: theory.to_string(),
        },
        other => other,
    })?;
    let total: f64 = weights.iter().zip(m).map(|(w, mi)| w * mi).sum();
    let entries = ids
        .iter()
        .enumerate()
        .map(|(i, id)| TypicalityEntry {
            id: id.clone(),
            m: m[i],
            typicality: values[i],
        })
        .collect();
    Ok(TypicalityReport {
        theory: theory.to_string(),
        total_measure: total,
        entries,
    })
}

/// Typicality of every perception in `set` under `theory`.
pub fn typicality(
    set: &PerceptionSet,
    theory: &TheoryModel,
    ctx: &EvolutionContext,
) -> Result<TypicalityReport, InferenceError> {
    let ids: Vec<String> = set.perceptions().iter().map(|p| p.id.clone()).collect();
    let weights: Vec<f64> = set.perceptions().iter().map(|p| p.prior_weight).collect();
    let m: Vec<f64> = set
        .perceptions()
        .iter()
        .map(|p| measure_density(p, theory, ctx).map(|d| d.mean))
        .collect::<Result<_, _>>()?;
    typicality_from_densities(&ids, &weights, &m, theory.tag())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub theory: String,
    pub prior: f64,
    pub likelihood: f64,
    pub posterior: f64,
}

/// Posterior weights for competing theories given one observed perception.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TheoryComparison {
    pub observed: String,
    pub rows: Vec<ComparisonRow>,
}

/// Bayesian comparison: `posterior_i` is proportional to
/// `prior_i * T_i(observed)`. A theory that gives the observation zero
/// measure density (including one whose total set measure vanishes) gets
/// likelihood exactly zero; it is weighted out, never errored out.
pub fn compare_theories(
    observed_id: &str,
    set: &PerceptionSet,
    theories: &[(TheoryModel, f64)],
    ctx: &EvolutionContext,
) -> Result<TheoryComparison, InferenceError> {
    if theories.is_empty() {
        return Err(InferenceError::NoTheories);
    }
    if set.get(observed_id).is_none() {
        return Err(InferenceError::UnknownPerception(observed_id.to_string()));
    }
    for (index, (_, prior)) in theories.iter().enumerate() {
        if !(prior.is_finite() && *prior > 0.0) {
            return Err(InferenceError::BadPrior {
                index,
                prior: *prior,
            });
        }
    }
    let mut rows = Vec::with_capacity(theories.len());
    for (theory, prior) in theories {
        let likelihood = match typicality(set, theory, ctx) {
            Ok(report) => {
                report
                    .get(observed_id)
                    .expect("observed id checked above")
                    .typicality
            }
            Err(InferenceError::ZeroTotalMeasure { .. }) => 0.0,
            Err(other) => return Err(other),
        };
        rows.push(ComparisonRow {
            theory: theory.tag().to_string(),
            prior: *prior,
            likelihood,
            posterior: 0.0,
        });
    }
    let evidence: f64 = rows.iter().map(|r| r.prior * r.likelihood).sum();
    if evidence.is_nan() || evidence <= 0.0 {
        return Err(InferenceError::AllImpossible);
    }
    for r in rows.iter_mut() {
        r.posterior = r.prior * r.likelihood / evidence;
    }
    Ok(TheoryComparison {
        observed: observed_id.to_string(),
        rows,
    })
}

/// One perception's row in the SCBM-vs-SQM typicality comparison.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgreementEntry {
    pub id: String,
    pub m_sqm: f64,
    pub m_scbm: f64,
    pub t_sqm: f64,
    pub t_scbm: f64,
    /// Monte Carlo standard error of `t_scbm` (delta method over members)
    pub t_std_error: f64,
    /// `|t_scbm - t_sqm| <= 3 * t_std_error`
    pub within_band: bool,
}

/// Result of the typicality agreement experiment: SCBM against SQM per
/// perception, plus the typicality profiles of selected single-trajectory
/// SBM theories drawn from the same ensemble.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n: usize,
    pub entries: Vec<AgreementEntry>,
    pub sbm_trajectory_indices: Vec<usize>,
    /// per selected trajectory: typicality per perception (entry order);
    /// `None` when that SBM theory assigns the whole set zero measure
    pub sbm_typicalities: Vec<Option<Vec<f64>>>,
}

impl AgreementReport {
    /// Fraction of perceptions whose SCBM typicality sits within its band.
    pub fn within_band_fraction(&self) -> f64 {
        if self.entries.is_empty() {
            return 1.0;
        }
        self.entries.iter().filter(|e| e.within_band).count() as f64 / self.entries.len() as f64
    }

    /// True if some selected SBM theory's typicality for some perception
    /// differs from SQM's by more than that perception's SCBM band.
    pub fn sbm_diverges_somewhere(&self) -> bool {
        self.sbm_typicalities.iter().any(|values| match values {
            None => true,
            Some(ts) => ts.iter().zip(&self.entries).any(|(t, e)| {
                (t - e.t_sqm).abs() > 3.0 * e.t_std_error + 1e-12
            }),
        })
    }
}

/// Runs the typicality comparison between the SQM theory and the SCBM
/// theory built on `ens` (same wavefunction, same regions, same times), and
/// reports the per-perception SBM typicalities of the ensemble members
/// listed in `sbm_indices`.
///
/// The SCBM typicality error bars come from the delta method applied to
/// the ratio of per-member measure sums, with covariances estimated from
/// the ensemble itself (the ranking of cells is treated as fixed).
pub fn typicality_agreement_experiment(
    set: &PerceptionSet,
    ctx: &EvolutionContext,
    ens: &Ensemble,
    sbm_indices: &[usize],
) -> Result<AgreementReport, InferenceError> {
    for &index in sbm_indices {
        if index >= ens.len() {
            return Err(InferenceError::BadSbmIndex {
                index,
                len: ens.len(),
            });
        }
    }
    let sqm = typicality(set, &TheoryModel::Sqm, ctx)?;

    let perceptions = set.perceptions();
    let n_p = perceptions.len();
    let n = ens.len();
    let weights: Vec<f64> = perceptions.iter().map(|p| p.prior_weight).collect();

    // per-member indicators e_k(p)
    let mut indicator = vec![0.0f64; n * n_p];
    for (k, traj) in ens.trajectories().iter().enumerate() {
        for (i, p) in perceptions.iter().enumerate() {
            indicator[k * n_p + i] = crate::perception::sbm_measure_density(p, traj)?;
        }
    }
    let m_scbm: Vec<f64> = (0..n_p)
        .map(|i| (0..n).map(|k| indicator[k * n_p + i]).sum::<f64>() / n as f64)
        .collect();

    let ids: Vec<String> = perceptions.iter().map(|p| p.id.clone()).collect();
    let scbm = typicality_from_densities(&ids, &weights, &m_scbm, "scbm")?;

    // delta-method error bars: T(p) = mean_k(a_k) / mean_k(b_k) with
    // a_k = sum over the <=-set of w e_k, b_k = sum over all of w e_k
    let b: Vec<f64> = (0..n)
        .map(|k| {
            (0..n_p)
                .map(|i| weights[i] * indicator[k * n_p + i])
                .sum()
        })
        .collect();
    let b_mean: f64 = b.iter().sum::<f64>() / n as f64;

    // one-count resolution floor per cell: a zero-hit cell still carries a
    // ~1/N uncertainty that the empirical residuals cannot see
    let inv_n = 1.0 / n as f64;
    let floor_all: f64 = weights.iter().map(|w| (w * inv_n).powi(2)).sum();
    let se_m: Vec<f64> = m_scbm
        .iter()
        .map(|m| crate::stats::binomial_std_error(*m, n).max(inv_n))
        .collect();

    let mut entries = Vec::with_capacity(n_p);
    for i in 0..n_p {
        let in_set: Vec<bool> = (0..n_p).map(|j| m_scbm[j] <= m_scbm[i]).collect();
        let t = scbm.entries[i].typicality;
        let residuals: Vec<f64> = (0..n)
            .map(|k| {
                let a_k: f64 = (0..n_p)
                    .filter(|j| in_set[*j])
                    .map(|j| weights[j] * indicator[k * n_p + j])
                    .sum();
                a_k - t * b[k]
            })
            .collect();
        let r_mean: f64 = residuals.iter().sum::<f64>() / n as f64;
        let r_var: f64 = if n > 1 {
            residuals.iter().map(|r| (r - r_mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let floor_set: f64 = (0..n_p)
            .filter(|j| in_set[*j])
            .map(|j| (weights[j] * inv_n).powi(2))
            .sum();
        // membership term: a cell whose estimated density is within noise
        // of this one flips in and out of the <=-set across realisations,
        // moving the typicality by its whole measure contribution
        let rank_var: f64 = (0..n_p)
            .filter(|j| *j != i)
            .map(|j| {
                let spread = (se_m[i] * se_m[i] + se_m[j] * se_m[j]).sqrt();
                let q = crate::stats::normal_cdf((m_scbm[i] - m_scbm[j]) / spread);
                (weights[j] * m_scbm[j]).powi(2) * q * (1.0 - q)
            })
            .sum();
        let variance = r_var * inv_n + floor_set + t * t * floor_all + rank_var;
        let t_std_error = variance.sqrt() / b_mean;
        let t_sqm = sqm.entries[i].typicality;
        entries.push(AgreementEntry {
            id: ids[i].clone(),
            m_sqm: sqm.entries[i].m,
            m_scbm: m_scbm[i],
            t_sqm,
            t_scbm: t,
            t_std_error,
            within_band: (t - t_sqm).abs() <= 3.0 * t_std_error + 1e-12,
        });
    }

    let mut sbm_typicalities = Vec::with_capacity(sbm_indices.len());
    for &index in sbm_indices {
        let theory = TheoryModel::Sbm(ens.trajectory(index));
        match typicality(set, &theory, ctx) {
            Ok(report) => sbm_typicalities.push(Some(
                report.entries.iter().map(|e| e.typicality).collect(),
            )),
            Err(InferenceError::ZeroTotalMeasure { .. }) => sbm_typicalities.push(None),
            Err(other) => return Err(other),
        }
    }

    Ok(AgreementReport {
        n,
        entries,
        sbm_trajectory_indices: sbm_indices.to_vec(),
        sbm_typicalities,
    })
}
