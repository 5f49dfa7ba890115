//! Small statistics toolbox: one-sample Kolmogorov-Smirnov machinery
//! against tabulated grid densities, and binomial error bars.

use crate::configspace::grid::Axis;

/// Coefficient of the asymptotic one-sample KS critical value at the 1%
/// level: reject when `D_N >= 1.63 / sqrt(N)`.
pub const KS_COEFF_1_PERCENT: f64 = 1.63;

pub fn ks_threshold(n: usize) -> f64 {
    KS_COEFF_1_PERCENT / (n as f64).sqrt()
}

/// Cumulative distribution of a density tabulated on a periodic axis,
/// treated as piecewise constant per cell (the same convention the
/// inverse-CDF sampler uses), so the CDF is piecewise linear.
#[derive(Clone, Debug)]
pub struct GridCdf {
    min: f64,
    dx: f64,
    /// cumulative mass at cell boundaries, cum[0] = 0, cum[n] = 1
    cum: Vec<f64>,
}

impl GridCdf {
    /// Builds from per-cell masses (any nonnegative scale); normalises.
    pub fn from_masses(axis: &Axis, masses: &[f64]) -> Option<Self> {
        assert_eq!(masses.len(), axis.points);
        let total: f64 = masses.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return None;
        }
        let mut cum = Vec::with_capacity(masses.len() + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for m in masses {
            acc += m / total;
            cum.push(acc);
        }
        cum[masses.len()] = 1.0;
        Some(GridCdf {
            min: axis.min,
            dx: axis.dx(),
            cum,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.cum.len() - 1;
        let u = (x - self.min) / self.dx;
        if u <= 0.0 {
            return 0.0;
        }
        if u >= n as f64 {
            return 1.0;
        }
        let i = u.floor() as usize;
        let frac = u - i as f64;
        self.cum[i] + frac * (self.cum[i + 1] - self.cum[i])
    }

    /// Inverse CDF for a uniform variate in [0, 1).
    pub fn inverse(&self, u: f64) -> f64 {
        let n = self.cum.len() - 1;
        // first cell whose upper boundary exceeds u
        let idx = self.cum[1..n].partition_point(|c| *c <= u);
        let lo = self.cum[idx];
        let hi = self.cum[idx + 1];
        let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.0 };
        self.min + (idx as f64 + frac.clamp(0.0, 1.0)) * self.dx
    }
}

/// One-sample KS statistic `sup |F_emp - F|`; sorts a copy of the samples.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        sup = sup.max((f - i as f64 / n).abs());
        sup = sup.max(((i + 1) as f64 / n - f).abs());
    }
    sup
}

/// Standard error of a Bernoulli mean `m` over `n` trials.
pub fn binomial_std_error(m: f64, n: usize) -> f64 {
    (m.clamp(0.0, 1.0) * (1.0 - m.clamp(0.0, 1.0)) / n as f64).sqrt()
}

/// Error function, Abramowitz-Stegun 7.1.26 rational approximation
/// (absolute error below 1.5e-7).
pub fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("non-finite value"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn axis() -> Axis {
        Axis {
            min: 0.0,
            max: 1.0,
            points: 16,
        }
    }

    #[test]
    fn uniform_cdf_is_linear() {
        let cdf = GridCdf::from_masses(&axis(), &[1.0; 16]).unwrap();
        for x in [0.0, 0.25, 0.5, 0.99] {
            assert_abs_diff_eq!(cdf.eval(x), x, epsilon = 1e-12);
        }
        assert_eq!(cdf.eval(-1.0), 0.0);
        assert_eq!(cdf.eval(2.0), 1.0);
    }

    #[test]
    fn inverse_is_a_right_inverse() {
        let mut masses = vec![0.0; 16];
        for (i, m) in masses.iter_mut().enumerate() {
            *m = (i + 1) as f64;
        }
        let cdf = GridCdf::from_masses(&axis(), &masses).unwrap();
        for u in [0.01, 0.2, 0.5, 0.77, 0.999] {
            assert_abs_diff_eq!(cdf.eval(cdf.inverse(u)), u, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_mass_is_rejected() {
        assert!(GridCdf::from_masses(&axis(), &[0.0; 16]).is_none());
    }

    #[test]
    fn ks_statistic_detects_mismatch() {
        // samples concentrated at 0.1 against a uniform CDF
        let samples = vec![0.1; 100];
        let d = ks_statistic(&samples, |x: f64| x.clamp(0.0, 1.0));
        assert!(d > 0.8);
    }

    #[test]
    fn ks_statistic_of_perfect_grid_is_small() {
        let n = 1000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&samples, |x: f64| x.clamp(0.0, 1.0));
        assert!(d < 1.0 / n as f64 + 1e-12);
    }

    #[test]
    fn threshold_matches_the_one_percent_coefficient() {
        assert_abs_diff_eq!(ks_threshold(10_000), 0.0163, epsilon = 1e-12);
    }

    #[test]
    fn erf_matches_reference_values() {
        // the rational approximation is good to ~1.5e-7 absolute
        assert_abs_diff_eq!(erf(0.0), 0.0, epsilon = 2e-7);
        assert_abs_diff_eq!(erf(1.0), 0.8427007929497149, epsilon = 2e-7);
        assert_abs_diff_eq!(erf(-1.0), -0.8427007929497149, epsilon = 2e-7);
        assert_abs_diff_eq!(erf(3.0), 0.9999779095030014, epsilon = 2e-7);
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 2e-7);
        assert_abs_diff_eq!(normal_cdf(1.96), 0.9750021048517795, epsilon = 2e-7);
    }
}
