use hawkes_core::estimator::{fit, BaselineKind, FitSpec};
use hawkes_core::{simulate, ApproxPowerLawKernel, Baseline, ExpSumKernel, Kernel, SimConfig};

fn exp2() -> Kernel {
    ExpSumKernel::from_masses(&[(0.37, 0.7), (0.42, 21.0)]).unwrap().into()
}

#[test]
fn stationary_rate_is_mu_over_one_minus_mass() {
    let (mu, horizon) = (0.05, 50_000.0);
    let kernel = exp2();
    let expected = mu / (1.0 - kernel.total_mass());
    let runs = 8;
    let total: usize = (0..runs)
        .map(|seed| simulate(&SimConfig::new(kernel.clone(), Baseline::constant(mu).unwrap(), horizon, seed)).unwrap().len())
        .sum();
    let rate = total as f64 / (runs as f64 * horizon);
    assert!((rate / expected - 1.0).abs() < 0.08, "rate {rate} vs {expected}");
}

#[test]
fn power_law_rate_matches_mass() {
    let kernel: Kernel = ApproxPowerLawKernel::pl(0.6, 0.4, 0.1, 10, 2.0).unwrap().into();
    let horizon = 40_000.0;
    let n = simulate(&SimConfig::new(kernel, Baseline::constant(0.2).unwrap(), horizon, 11)).unwrap().len();
    let expected = 0.2 / 0.4 * horizon;
    assert!((n as f64 / expected - 1.0).abs() < 0.1, "{n} vs {expected}");
}

#[test]
fn poisson_data_gives_negligible_mass() {
    let cfg = SimConfig::new(Kernel::zero(), Baseline::constant(0.3).unwrap(), 20_000.0, 21);
    let events = simulate(&cfg).unwrap();
    let spec = FitSpec::new("exp1".parse().unwrap(), BaselineKind::Constant);
    let f = fit(&events, &spec, 1).unwrap();
    assert!(f.branching_ratio < 0.05, "mass {}", f.branching_ratio);
    let mu = f.baseline.values()[0];
    assert!((mu / 0.3 - 1.0).abs() < 0.1, "mu {mu}");
}

#[test]
fn fitted_parameters_stay_in_bounds() {
    let cfg = SimConfig::new(exp2(), Baseline::constant(0.05).unwrap(), 22.0 * 3600.0, 31);
    let events = simulate(&cfg).unwrap();
    for family in ["exp1", "exp2", "exp3", "pl10", "hbb10", "plx10"] {
        let spec = FitSpec::new(family.parse().unwrap(), BaselineKind::Constant).with_starts(3);
        let f = fit(&events, &spec, 2).unwrap();
        let b = &spec.bounds;
        if family.starts_with("exp") {
            for c in f.kernel.to_exp_components() {
                assert!(c.timescale >= b.timescale.0 * (1.0 - 1e-12) && c.timescale <= b.timescale.1 * (1.0 + 1e-12));
                assert!(c.mass() >= b.component_mass.0 && c.mass() <= b.component_mass.1 + 1e-12);
            }
        } else {
            let eps = f.kernel.epsilon().unwrap();
            assert!(eps >= b.epsilon.0 && eps <= b.epsilon.1, "{family}: eps {eps}");
        }
        assert!(f.baseline.values().iter().all(|&v| v >= b.baseline.0 && v <= b.baseline.1));
        assert!(f.log_lik.is_finite());
    }
}

#[test]
fn nested_fits_do_not_lose_likelihood() {
    let cfg = SimConfig::new(exp2(), Baseline::constant(0.05).unwrap(), 22.0 * 3600.0, 41);
    let events = simulate(&cfg).unwrap();
    let ll = |name: &str| {
        let spec = FitSpec::new(name.parse().unwrap(), BaselineKind::Constant);
        fit(&events, &spec, 3).unwrap().log_lik
    };
    let (l1, l2, l3) = (ll("exp1"), ll("exp2"), ll("exp3"));
    assert!(l2 >= l1 - 1e-3 && l3 >= l2 - 1e-3, "{l1} {l2} {l3}");
}
