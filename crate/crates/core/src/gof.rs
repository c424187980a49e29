//! Goodness-of-fit tests on rescaled durations.
//!
//! Under a correct model the durations are i.i.d. unit exponentials. Three
//! tests probe that: Kolmogorov-Smirnov for the marginal, a Ljung-Box
//! portmanteau that skips lag 1 (which timestamp randomization distorts),
//! and an excess-dispersion test on the sample variance.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{HawkesError, Result};

pub const DEFAULT_LB_LAGS: usize = 15;
const MIN_SAMPLE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum TestDetail {
    Ks { d: f64 },
    LjungBox { q: f64, h: usize, autocorrelations: Vec<f64> },
    Dispersion { s: f64, sample_variance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub detail: TestDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub ks: TestOutcome,
    pub lb: TestOutcome,
    pub ed: TestOutcome,
}

impl GofReport {
    pub fn run(thetas: &[f64], lags: usize) -> Result<Self> {
        Ok(Self {
            ks: ks_test(thetas)?,
            lb: ljung_box_test(thetas, lags)?,
            ed: excess_dispersion_test(thetas)?,
        })
    }
}

fn need(n: usize, needed: usize) -> Result<()> {
    if n < needed {
        Err(HawkesError::InsufficientData { needed, got: n })
    } else {
        Ok(())
    }
}

/// `sup_x |F_emp(x) - (1 - e^{-x})|`; defined for any non-empty sample.
pub fn ks_statistic(thetas: &[f64]) -> Result<f64> {
    need(thetas.len(), 1)?;
    let mut x = thetas.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in x.iter().enumerate() {
        let f = -(-v.max(0.0)).exp_m1();
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // Theta-function form converges fast for small x.
        let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let mut cdf = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            cdf += (-m * m * c).exp();
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / x;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sf = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sf += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * sf).clamp(0.0, 1.0)
}

pub fn ks_test(thetas: &[f64]) -> Result<TestOutcome> {
    need(thetas.len(), MIN_SAMPLE)?;
    let d = ks_statistic(thetas)?;
    let n = thetas.len();
    Ok(TestOutcome {
        statistic: d,
        p_value: kolmogorov_sf((n as f64).sqrt() * d),
        n,
        detail: TestDetail::Ks { d },
    })
}

/// Sample autocorrelations at lags `1..=max_lag`.
pub fn autocorrelations(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    need(n, max_lag + 1)?;
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(HawkesError::ConstantSeries);
    }
    Ok((1..=max_lag)
        .map(|k| centered[..n - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect())
}

/// `Q = N(N+2) sum_{k=2}^{h+1} rho_k^2 / (N-k)`, chi-square with `h` dof.
pub fn ljung_box_test(thetas: &[f64], h: usize) -> Result<TestOutcome> {
    let n = thetas.len();
    if h == 0 {
        return Err(crate::error::domain("Ljung-Box needs at least one lag"));
    }
    need(n, h + 3)?;
    let rho = autocorrelations(thetas, h + 1)?;
    let nf = n as f64;
    let q = nf * (nf + 2.0) * (2..=h + 1).map(|k| rho[k - 1].powi(2) / (nf - k as f64)).sum::<f64>();
    let chi = ChiSquared::new(h as f64).expect("positive dof");
    Ok(TestOutcome {
        statistic: q,
        p_value: chi.sf(q).clamp(0.0, 1.0),
        n,
        detail: TestDetail::LjungBox {
            q,
            h,
            autocorrelations: rho,
        },
    })
}

/// `S = sqrt(N) (var - 1) / sqrt(8)`, two-sided normal p-value.
pub fn excess_dispersion_test(thetas: &[f64]) -> Result<TestOutcome> {
    let n = thetas.len();
    need(n, MIN_SAMPLE)?;
    let nf = n as f64;
    let mean = thetas.iter().sum::<f64>() / nf;
    let var = thetas.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let s = nf.sqrt() * (var - 1.0) / 8f64.sqrt();
    Ok(TestOutcome {
        statistic: s,
        p_value: erfc(s.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0),
        n,
        detail: TestDetail::Dispersion {
            s,
            sample_variance: var,
        },
    })
}

/// `(-ln(1 - (i - 0.5)/N), x_(i))` for `i = 1..N`.
pub fn qq_points(thetas: &[f64]) -> Vec<(f64, f64)> {
    let mut x = thetas.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.into_iter()
        .enumerate()
        .map(|(i, v)| (-(-(i as f64 + 0.5) / n).ln_1p(), v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exp_quantiles(n: usize) -> Vec<f64> {
        (1..=n).map(|i| -(1.0 - (i as f64 - 0.5) / n as f64).ln()).collect()
    }

    #[test]
    fn ks_single_point() {
        assert_relative_eq!(ks_statistic(&[2f64.ln()]).unwrap(), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn ks_quantile_sample_passes() {
        let t = ks_test(&exp_quantiles(1000)).unwrap();
        assert!(t.p_value > 0.99, "{}", t.p_value);
    }

    #[test]
    fn kolmogorov_branches_agree() {
        // both series are valid near the switch point
        let x: f64 = 1.0;
        let mut alt = 0.0;
        for k in 1..=50 {
            let kf = k as f64;
            alt += if k % 2 == 1 { 1.0 } else { -1.0 } * (-2.0 * kf * kf * x * x).exp();
        }
        assert_relative_eq!(kolmogorov_sf(x - 1e-12), 2.0 * alt, max_relative = 1e-9);
        // known value: P(K > 1.3581) = 0.05
        assert_relative_eq!(kolmogorov_sf(1.358_099), 0.05, max_relative = 1e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn ed_constant_sample() {
        let t = excess_dispersion_test(&vec![1.0; 100]).unwrap();
        assert_relative_eq!(t.statistic, -10.0 / 8f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(t.p_value, 4.07e-4, max_relative = 1e-2);
    }

    #[test]
    fn lb_constant_series_rejected() {
        assert!(matches!(ljung_box_test(&vec![1.0; 100], 15), Err(HawkesError::ConstantSeries)));
        assert!(matches!(ljung_box_test(&[1.0, 2.0, 3.0], 15), Err(HawkesError::InsufficientData { .. })));
    }

    #[test]
    fn lb_sum_starts_at_lag_two() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let t = ljung_box_test(&x, 3).unwrap();
        let rho = autocorrelations(&x, 4).unwrap();
        let n = 50.0;
        let q = n * (n + 2.0) * (rho[1].powi(2) / (n - 2.0) + rho[2].powi(2) / (n - 3.0) + rho[3].powi(2) / (n - 4.0));
        assert_relative_eq!(t.statistic, q, max_relative = 1e-12);
    }

    #[test]
    fn qq_shape() {
        let q = qq_points(&[3.0]);
        assert_relative_eq!(q[0].0, 2f64.ln(), max_relative = 1e-14);
        assert_eq!(q[0].1, 3.0);
        let q = qq_points(&[3.0, 1.0, 2.0, 0.5]);
        assert!(q.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn report_json_keys() {
        let r = GofReport::run(&exp_quantiles(200), DEFAULT_LB_LAGS).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for k in ["ks", "lb", "ed"] {
            assert!(v[k]["p_value"].is_number());
        }
    }
}
