//! Log-likelihood, compensator and time-rescaled durations.
//!
//! For `lambda(t) = mu(t) + sum_{t_k < t} sum_j w_j exp(-(t - t_k)/tau_j)` the
//! per-component excitation at event `i` obeys
//! `A_j(i) = exp(-(t_i - t_{i-1})/tau_j) (1 + A_j(i-1))`, `A_j(1) = 0`,
//! which makes the likelihood O(N M) instead of O(N^2 M).

use crate::baseline::Baseline;
use crate::error::{domain, HawkesError, Result};
use crate::events::EventSeries;
use crate::kernels::{ExpComponent, Kernel};

/// Compensator increments `theta_i = int_{t_{i-1}}^{t_i} lambda`, one per
/// event after the first.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledDurations {
    thetas: Vec<f64>,
}

impl RescaledDurations {
    pub fn new(thetas: Vec<f64>) -> Result<Self> {
        if let Some((i, t)) = thetas.iter().enumerate().find(|(_, t)| !(**t > 0.0 && t.is_finite())) {
            return Err(domain(format!("rescaled duration {i} is not positive: {t}")));
        }
        Ok(Self { thetas })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.thetas
    }
}

fn check_baseline_covers(events: &EventSeries, baseline: &Baseline) -> Result<()> {
    match baseline.horizon() {
        Some(h) if h < events.horizon() => Err(domain(format!(
            "baseline ends at {h} but the series runs to {}",
            events.horizon()
        ))),
        _ => Ok(()),
    }
}

/// Log-likelihood via the O(N) recursion and the closed-form compensator.
pub fn log_likelihood(events: &EventSeries, kernel: &Kernel, baseline: &Baseline) -> Result<f64> {
    check_baseline_covers(events, baseline)?;
    log_likelihood_components(events.times(), events.horizon(), kernel.to_exp_components(), baseline)
}

pub(crate) fn log_likelihood_components(
    times: &[f64],
    horizon: f64,
    components: &[ExpComponent],
    baseline: &Baseline,
) -> Result<f64> {
    let mut state = vec![0.0; components.len()];
    let mut sum_log = 0.0;
    let mut prev = f64::NAN;
    for (i, &t) in times.iter().enumerate() {
        let mut excitation = 0.0;
        if i > 0 {
            let dt = t - prev;
            for (a, c) in state.iter_mut().zip(components) {
                *a = (-dt / c.timescale).exp() * (1.0 + *a);
                excitation += c.weight * *a;
            }
        }
        let intensity = baseline.value(t) + excitation;
        if !(intensity > 0.0 && intensity.is_finite()) {
            return Err(HawkesError::NonFiniteLikelihood { index: i, intensity });
        }
        sum_log += intensity.ln();
        prev = t;
    }
    Ok(sum_log - compensator(times, horizon, components, baseline))
}

/// `Lambda(T) = int_0^T lambda`.
fn compensator(times: &[f64], horizon: f64, components: &[ExpComponent], baseline: &Baseline) -> f64 {
    let mut total = baseline.integral(0.0, horizon);
    for &t in times {
        let u = horizon - t;
        for c in components {
            total += c.integral_to(u);
        }
    }
    total
}

/// Log-likelihood by explicit double sum over event pairs, evaluating the
/// kernel from its family formula. O(N^2); used as an oracle.
pub fn log_likelihood_direct(events: &EventSeries, kernel: &Kernel, baseline: &Baseline) -> Result<f64> {
    check_baseline_covers(events, baseline)?;
    let times = events.times();
    let mut sum_log = 0.0;
    for (i, &t) in times.iter().enumerate() {
        let mut intensity = baseline.eval(t)?;
        for &s in &times[..i] {
            intensity += kernel.evaluate(t - s)?;
        }
        if !(intensity > 0.0 && intensity.is_finite()) {
            return Err(HawkesError::NonFiniteLikelihood { index: i, intensity });
        }
        sum_log += intensity.ln();
    }
    let mut comp = baseline.integrate(0.0, events.horizon())?;
    for &t in times {
        comp += kernel.integral_to(events.horizon() - t)?;
    }
    Ok(sum_log - comp)
}

/// Log-likelihood with its gradient with respect to each exponential
/// component's weight and timescale and to each baseline value.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodGradient {
    pub log_lik: f64,
    pub d_weight: Vec<f64>,
    pub d_timescale: Vec<f64>,
    pub d_baseline: Vec<f64>,
}

pub fn log_likelihood_gradient(
    events: &EventSeries,
    components: &[ExpComponent],
    baseline: &Baseline,
) -> Result<LikelihoodGradient> {
    check_baseline_covers(events, baseline)?;
    log_likelihood_gradient_components(events.times(), events.horizon(), components, baseline)
}

pub(crate) fn log_likelihood_gradient_components(
    times: &[f64],
    horizon: f64,
    components: &[ExpComponent],
    baseline: &Baseline,
) -> Result<LikelihoodGradient> {
    let m = components.len();
    // a: sum_k exp(-(t_i - t_k)/tau); b: sum_k (t_i - t_k) exp(-(t_i - t_k)/tau)
    let mut a = vec![0.0; m];
    let mut b = vec![0.0; m];
    let mut sum_a = vec![0.0; m];
    let mut sum_b = vec![0.0; m];
    let mut d_baseline = vec![0.0; baseline.n_values()];
    let mut sum_log = 0.0;
    let mut prev = f64::NAN;
    for (i, &t) in times.iter().enumerate() {
        let mut excitation = 0.0;
        if i > 0 {
            let dt = t - prev;
            for j in 0..m {
                let decay = (-dt / components[j].timescale).exp();
                b[j] = decay * (b[j] + dt * (1.0 + a[j]));
                a[j] = decay * (1.0 + a[j]);
                excitation += components[j].weight * a[j];
            }
        }
        let intensity = baseline.value(t) + excitation;
        if !(intensity > 0.0 && intensity.is_finite()) {
            return Err(HawkesError::NonFiniteLikelihood { index: i, intensity });
        }
        sum_log += intensity.ln();
        let inv = 1.0 / intensity;
        for j in 0..m {
            sum_a[j] += a[j] * inv;
            sum_b[j] += b[j] * inv;
        }
        baseline.accumulate_value_gradient(t, inv, &mut d_baseline);
        prev = t;
    }

    let mut comp = baseline.integral(0.0, horizon);
    baseline.accumulate_integral_gradient(0.0, horizon, -1.0, &mut d_baseline);
    let mut d_weight = vec![0.0; m];
    let mut d_timescale = vec![0.0; m];
    for (j, c) in components.iter().enumerate() {
        let tau = c.timescale;
        // sum_k (1 - e^{-u_k/tau}) and sum_k (u_k/tau) e^{-u_k/tau}
        let mut tail = 0.0;
        let mut tail_u = 0.0;
        for &t in times {
            let x = (horizon - t) / tau;
            let e = (-x).exp();
            tail += -(-x).exp_m1();
            tail_u += x * e;
        }
        comp += c.weight * tau * tail;
        d_weight[j] = sum_a[j] - tau * tail;
        d_timescale[j] = c.weight * sum_b[j] / (tau * tau) - c.weight * (tail - tail_u);
    }
    Ok(LikelihoodGradient {
        log_lik: sum_log - comp,
        d_weight,
        d_timescale,
        d_baseline,
    })
}

/// Time-rescaled durations from the closed-form compensator increments.
pub fn rescaled_durations(events: &EventSeries, kernel: &Kernel, baseline: &Baseline) -> Result<RescaledDurations> {
    check_baseline_covers(events, baseline)?;
    let times = events.times();
    if times.len() < 2 {
        return Err(HawkesError::InsufficientData {
            needed: 2,
            got: times.len(),
        });
    }
    let components = kernel.to_exp_components();
    // Excitation state at the previous event, strict past only.
    let mut state = vec![0.0; components.len()];
    let mut thetas = Vec::with_capacity(times.len() - 1);
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let dt = t1 - t0;
        let mut theta = baseline.integral(t0, t1);
        for (a, c) in state.iter_mut().zip(components) {
            let carried = 1.0 + *a;
            theta += -c.weight * c.timescale * carried * (-dt / c.timescale).exp_m1();
            *a = (-dt / c.timescale).exp() * carried;
        }
        thetas.push(theta);
    }
    RescaledDurations::new(thetas)
}

/// Intensity `lambda(t)` just after accounting for events strictly before `t`.
pub fn intensity_at(events: &EventSeries, kernel: &Kernel, baseline: &Baseline, t: f64) -> Result<f64> {
    let mut value = baseline.eval(t)?;
    let upto = events.times().partition_point(|&s| s < t);
    for &s in &events.times()[..upto] {
        value += kernel.evaluate(t - s)?;
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{ApproxPowerLawKernel, ExpSumKernel};
    use crate::test_support::integrate;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_exp() -> Kernel {
        ExpSumKernel::new(vec![ExpComponent::new(1.0, 1.0).unwrap()]).unwrap().into()
    }

    #[test]
    fn poisson_single_event() {
        let e = EventSeries::new(vec![0.5], 1.0).unwrap();
        let b = Baseline::constant(1.0).unwrap();
        assert_relative_eq!(log_likelihood(&e, &Kernel::zero(), &b).unwrap(), -1.0, max_relative = 1e-15);
        assert_relative_eq!(log_likelihood_direct(&e, &unit_exp(), &b).unwrap(), log_likelihood(&e, &unit_exp(), &b).unwrap(), max_relative = 1e-15);
    }

    #[test]
    fn empty_series_is_pure_compensator() {
        let e = EventSeries::empty(10.0).unwrap();
        let b = Baseline::constant(0.5).unwrap();
        assert_relative_eq!(log_likelihood(&e, &Kernel::zero(), &b).unwrap(), -5.0, max_relative = 1e-15);
        assert_relative_eq!(log_likelihood_direct(&e, &unit_exp(), &b).unwrap(), -5.0, max_relative = 1e-15);
    }

    #[test]
    fn two_event_hand_expansion() {
        // lambda(1) = 1, lambda(2) = 1 + e^{-1}, Lambda(2) = 2 + (1 - e^{-1});
        // the event at t = 2 adds nothing to the compensator.
        let e = EventSeries::new(vec![1.0, 2.0], 2.0).unwrap();
        let b = Baseline::constant(1.0).unwrap();
        let em1 = (-1.0f64).exp();
        let expected = 0.0 + (1.0 + em1).ln() - (2.0 + (1.0 - em1));
        let rec = log_likelihood(&e, &unit_exp(), &b).unwrap();
        let dir = log_likelihood_direct(&e, &unit_exp(), &b).unwrap();
        assert_relative_eq!(rec, expected, max_relative = 1e-12);
        assert_relative_eq!(dir, expected, max_relative = 1e-12);
    }

    #[test]
    fn poisson_rescaling_is_unit() {
        let times: Vec<f64> = (0..20).map(|i| 0.5 * i as f64).collect();
        let e = EventSeries::new(times, 10.0).unwrap();
        let th = rescaled_durations(&e, &Kernel::zero(), &Baseline::constant(2.0).unwrap()).unwrap();
        assert_eq!(th.len(), 19);
        for t in th.as_slice() {
            assert_relative_eq!(*t, 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn two_event_rescaling() {
        let e = EventSeries::new(vec![0.0, 1.0], 1.0).unwrap();
        let b = Baseline::constant(1.0).unwrap();
        let th = rescaled_durations(&e, &unit_exp(), &b).unwrap();
        let expected = 1.0 + (1.0 - (-1.0f64).exp());
        assert_relative_eq!(th.as_slice()[0], expected, max_relative = 1e-14);
        let quad = integrate(|t| intensity_at(&e, &unit_exp(), &b, t).unwrap(), 0.0, 1.0, 1e-13);
        assert_relative_eq!(th.as_slice()[0], quad, max_relative = 1e-10);
        assert_relative_eq!(expected, 1.632_120_558_828_557_7, max_relative = 1e-12);
    }

    #[test]
    fn rescaling_needs_two_events() {
        let e = EventSeries::new(vec![1.0], 2.0).unwrap();
        let err = rescaled_durations(&e, &unit_exp(), &Baseline::constant(1.0).unwrap()).unwrap_err();
        assert!(matches!(err, HawkesError::InsufficientData { needed: 2, got: 1 }));
    }

    #[test]
    fn nonpositive_intensity_signalled() {
        let e = EventSeries::new(vec![1.0, 2.0], 3.0).unwrap();
        let err = log_likelihood(&e, &Kernel::zero(), &Baseline::constant(0.0).unwrap()).unwrap_err();
        assert!(matches!(err, HawkesError::NonFiniteLikelihood { index: 0, .. }));
    }

    #[test]
    fn baseline_must_cover_horizon() {
        let e = EventSeries::new(vec![1.0], 20.0).unwrap();
        let b = Baseline::piecewise_linear(vec![0.0, 10.0], vec![1.0, 1.0]).unwrap();
        assert!(log_likelihood(&e, &unit_exp(), &b).is_err());
    }

    #[test]
    fn theta_sum_equals_compensator_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut times: Vec<f64> = (0..300).map(|_| rng.random::<f64>() * 500.0).collect();
        times.sort_by(f64::total_cmp);
        let e = EventSeries::new(times.clone(), 500.0).unwrap();
        let k: Kernel = ApproxPowerLawKernel::hbb(0.6, 0.3, 0.2, 15, 2.0).unwrap().into();
        let b = Baseline::piecewise_linear(vec![0.0, 200.0, 500.0], vec![0.3, 0.8, 0.2]).unwrap();
        let th = rescaled_durations(&e, &k, &b).unwrap();
        let total: f64 = th.as_slice().iter().sum();
        // Lambda(t_N) - Lambda(t_1) with the direct double sum.
        let lam = |upto: f64| {
            let mut v = b.integrate(0.0, upto).unwrap();
            for &s in times.iter().filter(|&&s| s < upto) {
                v += k.integral_to(upto - s).unwrap();
            }
            v
        };
        let diff = lam(*times.last().unwrap()) - lam(times[0]);
        assert_relative_eq!(total, diff, max_relative = 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut times: Vec<f64> = (0..400).map(|_| rng.random::<f64>() * 300.0).collect();
        times.sort_by(f64::total_cmp);
        let e = EventSeries::new(times, 300.0).unwrap();
        for _ in 0..20 {
            let comps: Vec<ExpComponent> = (0..3)
                .map(|_| ExpComponent::new(rng.random_range(0.05..2.0), rng.random_range(0.1..30.0)).unwrap())
                .collect();
            let base = Baseline::piecewise_linear(
                vec![0.0, 100.0, 300.0],
                vec![rng.random_range(0.2..1.0), rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)],
            )
            .unwrap();
            let g = log_likelihood_gradient(&e, &comps, &base).unwrap();
            let ll = |c: &[ExpComponent], b: &Baseline| log_likelihood_components(e.times(), 300.0, c, b).unwrap();
            assert_relative_eq!(g.log_lik, ll(&comps, &base), max_relative = 1e-12);
            let check = |analytic: f64, numeric: f64| {
                assert!(
                    (analytic - numeric).abs() <= 1e-5 * analytic.abs().max(numeric.abs()).max(1e-2),
                    "{analytic} vs {numeric}"
                );
            };
            for j in 0..3 {
                for which in 0..2 {
                    let h = 1e-6 * if which == 0 { comps[j].weight } else { comps[j].timescale };
                    let bump = |d: f64| {
                        let mut c = comps.clone();
                        if which == 0 { c[j].weight += d } else { c[j].timescale += d }
                        ll(&c, &base)
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    check(if which == 0 { g.d_weight[j] } else { g.d_timescale[j] }, fd);
                }
            }
            for k in 0..3 {
                let v = base.values();
                let h = 1e-6 * v[k];
                let bump = |d: f64| {
                    let mut w = v.clone();
                    w[k] += d;
                    ll(&comps, &base.with_values(&w).unwrap())
                };
                check(g.d_baseline[k], (bump(h) - bump(-h)) / (2.0 * h));
            }
        }
    }
}
