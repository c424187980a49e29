//! Maximum-likelihood calibration under box constraints with multi-start.
//!
//! Internal coordinates: log for timescales and baseline values, plain boxes
//! for masses and the tail exponent. Exponential components are
//! parameterized by their mass `n_j = alpha_j tau_j` rather than `alpha_j`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{Baseline, KnotLayout, KnotSharing, MIN_KNOT_VALUE};
use crate::error::{domain, HawkesError, Result};
use crate::events::EventSeries;
use crate::kernels::{ApproxPowerLawKernel, ExpComponent, ExpSumKernel, Kernel, KernelFamily, PowerLawParams, PowerLawVariant};
use crate::likelihood::{log_likelihood, log_likelihood_gradient_components};
use crate::optim::{minimize, Bounds, OptimOptions};
use crate::simulator::rng_from_seed;

pub const DEFAULT_MIN_EVENTS: usize = 200;
pub const DEFAULT_STARTS: usize = 5;

/// Log-likelihood ties closer than this go to the lower start index.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaselineKind {
    #[default]
    Constant,
    /// Piecewise linear with the daily knot pattern.
    Pwl {
        #[serde(default)]
        sharing: KnotSharing,
    },
}

/// Box bounds on natural-scale parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub timescale: (f64, f64),
    pub component_mass: (f64, f64),
    pub power_law_mass: (f64, f64),
    pub epsilon: (f64, f64),
    /// Share of the plx mass carried by the free exponential.
    pub extra_share: (f64, f64),
    pub baseline: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            timescale: (1e-3, 1e5),
            component_mass: (0.0, 10.0),
            power_law_mass: (1e-4, 0.9999),
            epsilon: (0.0, crate::kernels::MAX_EPSILON),
            extra_share: (0.0, 0.999),
            baseline: (MIN_KNOT_VALUE, 1e4),
        }
    }
}

impl FitBounds {
    fn validate(&self) -> Result<()> {
        let pairs = [
            ("timescale", self.timescale),
            ("component_mass", self.component_mass),
            ("power_law_mass", self.power_law_mass),
            ("epsilon", self.epsilon),
            ("extra_share", self.extra_share),
            ("baseline", self.baseline),
        ];
        for (name, (lo, hi)) in pairs {
            if !(lo < hi) {
                return Err(domain(format!("bounds for {name} need lower < upper, got [{lo}, {hi}]")));
            }
        }
        if self.timescale.0 <= 0.0 || self.baseline.0 <= 0.0 {
            return Err(domain("timescale and baseline lower bounds must be positive"));
        }
        if self.power_law_mass.0 <= 0.0 || self.power_law_mass.1 >= 1.0 {
            return Err(domain("power-law mass bounds must lie inside (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    #[serde(with = "family_serde")]
    pub family: KernelFamily,
    #[serde(default)]
    pub baseline: BaselineKind,
    #[serde(default)]
    pub bounds: FitBounds,
    #[serde(default = "default_starts")]
    pub n_starts: usize,
    #[serde(default)]
    pub options: OptimOptions,
    #[serde(default = "default_min_events")]
    pub min_events: usize,
}

fn default_starts() -> usize {
    DEFAULT_STARTS
}

fn default_min_events() -> usize {
    DEFAULT_MIN_EVENTS
}

mod family_serde {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct FamilyJson {
        name: String,
        m: Option<f64>,
    }

    pub fn serialize<S: serde::Serializer>(f: &KernelFamily, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m = match f {
            KernelFamily::Exp { .. } => None,
            KernelFamily::PowerLaw { spacing, .. } => Some(*spacing),
        };
        FamilyJson { name: f.to_string(), m }.serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<KernelFamily, D::Error> {
        let j = FamilyJson::deserialize(d)?;
        let fam: KernelFamily = j.name.parse().map_err(serde::de::Error::custom)?;
        Ok(match j.m {
            Some(m) => fam.with_spacing(m),
            None => fam,
        })
    }
}

impl FitSpec {
    pub fn new(family: KernelFamily, baseline: BaselineKind) -> Self {
        Self {
            family,
            baseline,
            bounds: FitBounds::default(),
            n_starts: DEFAULT_STARTS,
            options: OptimOptions::default(),
            min_events: DEFAULT_MIN_EVENTS,
        }
    }

    pub fn with_starts(mut self, n_starts: usize) -> Self {
        self.n_starts = n_starts;
        self
    }

    pub fn with_min_events(mut self, min_events: usize) -> Self {
        self.min_events = min_events;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(domain("n_starts must be at least 1"));
        }
        self.bounds.validate()
    }

    /// Parameter layout for a window of the given length.
    pub fn layout(&self, horizon: f64) -> Result<ParamLayout> {
        let baseline = match self.baseline {
            BaselineKind::Constant => BaselineLayout::Constant,
            BaselineKind::Pwl { sharing } => BaselineLayout::Pwl(KnotLayout::daily(horizon, sharing)?),
        };
        Ok(ParamLayout {
            family: self.family,
            baseline,
            bounds: self.bounds,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineLayout {
    Constant,
    Pwl(KnotLayout),
}

/// Mapping between the optimizer's coordinate vector and `(kernel, baseline)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    family: KernelFamily,
    baseline: BaselineLayout,
    bounds: FitBounds,
}

impl ParamLayout {
    pub fn n_kernel(&self) -> usize {
        self.family.n_params()
    }

    pub fn n_baseline(&self) -> usize {
        match &self.baseline {
            BaselineLayout::Constant => 1,
            BaselineLayout::Pwl(k) => k.n_free,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_kernel() + self.n_baseline()
    }

    pub fn bounds(&self) -> Bounds {
        let b = &self.bounds;
        let ln = |(lo, hi): (f64, f64)| (lo.ln(), hi.ln());
        let mut pairs = Vec::with_capacity(self.dim());
        match self.family {
            KernelFamily::Exp { terms } => {
                for _ in 0..terms {
                    pairs.push(b.component_mass);
                    pairs.push(ln(b.timescale));
                }
            }
            KernelFamily::PowerLaw { variant, .. } => {
                pairs.push(b.power_law_mass);
                pairs.push(b.epsilon);
                pairs.push(ln(b.timescale));
                if variant == PowerLawVariant::Plx {
                    pairs.push(b.extra_share);
                    pairs.push(ln(b.timescale));
                }
            }
        }
        for _ in 0..self.n_baseline() {
            pairs.push(ln(b.baseline));
        }
        Bounds {
            lower: pairs.iter().map(|p| p.0).collect(),
            upper: pairs.iter().map(|p| p.1).collect(),
        }
    }

    fn power_law_params(&self, x: &[f64]) -> PowerLawParams {
        let KernelFamily::PowerLaw { variant, terms, spacing } = self.family else {
            unreachable!("power-law layout expected")
        };
        let (n, epsilon, tau0) = (x[0], x[1], x[2].exp());
        let extra = (variant == PowerLawVariant::Plx).then(|| {
            let share = x[3];
            let tau_x = x[4].exp();
            let sum_eps: f64 = (0..terms).map(|i| (tau0 * spacing.powi(i as i32)).powf(-epsilon)).sum();
            (share / (1.0 - share) * sum_eps / tau_x, tau_x)
        });
        PowerLawParams {
            variant,
            mass_n: n,
            epsilon,
            tau0,
            terms,
            spacing,
            extra,
        }
    }

    /// Exponential components in parameter order (unsorted).
    fn raw_components(&self, x: &[f64]) -> Vec<ExpComponent> {
        match self.family {
            KernelFamily::Exp { terms } => (0..terms)
                .map(|j| {
                    let tau = x[2 * j + 1].exp();
                    ExpComponent {
                        weight: x[2 * j] / tau,
                        timescale: tau,
                    }
                })
                .collect(),
            KernelFamily::PowerLaw { .. } => self.power_law_params(x).raw_components(),
        }
    }

    fn baseline_values(&self, x: &[f64]) -> Vec<f64> {
        x[self.n_kernel()..].iter().map(|v| v.exp()).collect()
    }

    fn baseline_from(&self, free: &[f64]) -> Result<Baseline> {
        match &self.baseline {
            BaselineLayout::Constant => Baseline::constant(free[0]),
            BaselineLayout::Pwl(k) => k.baseline(free),
        }
    }

    /// Natural-scale kernel and baseline for a coordinate vector, clamped to
    /// the natural bounds.
    pub fn decode(&self, x: &[f64]) -> Result<(Kernel, Baseline)> {
        let b = &self.bounds;
        let clamp_tau = |v: f64| v.clamp(b.timescale.0, b.timescale.1);
        let kernel: Kernel = match self.family {
            KernelFamily::Exp { terms } => {
                let pairs: Vec<(f64, f64)> = (0..terms)
                    .map(|j| (x[2 * j].max(0.0), clamp_tau(x[2 * j + 1].exp())))
                    .collect();
                ExpSumKernel::from_masses(&pairs)?.into()
            }
            KernelFamily::PowerLaw { .. } => {
                let mut p = self.power_law_params(x);
                p.tau0 = clamp_tau(p.tau0);
                if let Some((bw, tau_x)) = p.extra {
                    p.extra = Some((bw, clamp_tau(tau_x)));
                }
                ApproxPowerLawKernel::new(p)?.into()
            }
        };
        let values: Vec<f64> = self
            .baseline_values(x)
            .into_iter()
            .map(|v| v.clamp(b.baseline.0, b.baseline.1))
            .collect();
        Ok((kernel, self.baseline_from(&values)?))
    }

    /// Coordinates of a natural-scale `(kernel, baseline)`.
    pub fn encode(&self, kernel: &Kernel, baseline: &Baseline) -> Result<Vec<f64>> {
        if kernel.family().to_string() != self.family.to_string() {
            return Err(domain(format!("kernel {} does not match layout {}", kernel.family(), self.family)));
        }
        let mut x = Vec::with_capacity(self.dim());
        match kernel {
            Kernel::ExpSum(k) => {
                for c in k.components() {
                    x.push(c.mass());
                    x.push(c.timescale.ln());
                }
            }
            Kernel::PowerLaw(k) => {
                let p = k.params();
                x.push(p.mass_n);
                x.push(p.epsilon);
                x.push(p.tau0.ln());
                if let Some((bw, tau_x)) = p.extra {
                    let sum_eps: f64 = (0..p.terms).map(|i| (p.tau0 * p.spacing.powi(i as i32)).powf(-p.epsilon)).sum();
                    let extra_mass = bw * tau_x;
                    x.push(extra_mass / (sum_eps + extra_mass));
                    x.push(tau_x.ln());
                }
            }
        }
        let values = baseline.values();
        match &self.baseline {
            BaselineLayout::Constant => {
                let Baseline::Constant(c) = baseline else {
                    return Err(domain("layout expects a constant baseline"));
                };
                x.push(c.mu().ln());
            }
            BaselineLayout::Pwl(layout) => {
                if values.len() != layout.knot_times.len() {
                    return Err(domain("baseline knots do not match the layout"));
                }
                let mut free = vec![f64::NAN; layout.n_free];
                for (k, &slot) in layout.tie.iter().enumerate() {
                    if free[slot].is_nan() {
                        free[slot] = values[k];
                    }
                }
                x.extend(free.iter().map(|v| v.ln()));
            }
        }
        Ok(x)
    }

    /// Negative log-likelihood per event and its gradient in coordinates.
    fn objective(&self, events: &EventSeries, x: &[f64], grad: &mut [f64]) -> f64 {
        let scale = 1.0 / events.len().max(1) as f64;
        let comps = self.raw_components(x);
        let free = self.baseline_values(x);
        let Ok(baseline) = self.baseline_from(&free) else {
            return f64::INFINITY;
        };
        if comps.iter().any(|c| !(c.timescale > 0.0 && c.weight.is_finite())) {
            return f64::INFINITY;
        }
        let g = match log_likelihood_gradient_components(events.times(), events.horizon(), &comps, &baseline) {
            Ok(g) if g.log_lik.is_finite() => g,
            _ => return f64::INFINITY,
        };
        let nk = self.n_kernel();
        match self.family {
            KernelFamily::Exp { terms } => {
                for j in 0..terms {
                    let c = comps[j];
                    grad[2 * j] = g.d_weight[j] / c.timescale;
                    grad[2 * j + 1] = c.timescale * g.d_timescale[j] - c.weight * g.d_weight[j];
                }
            }
            KernelFamily::PowerLaw { .. } => {
                // The parameter-to-component map is cheap; differentiate it
                // numerically and chain with the analytic component gradient.
                let mut probe = x.to_vec();
                for p in 0..nk {
                    let h = 1e-6 * x[p].abs().max(1e-3);
                    probe[p] = x[p] + h;
                    let up = self.raw_components(&probe);
                    probe[p] = x[p] - h;
                    let down = self.raw_components(&probe);
                    probe[p] = x[p];
                    grad[p] = (0..comps.len())
                        .map(|j| {
                            g.d_weight[j] * (up[j].weight - down[j].weight)
                                + g.d_timescale[j] * (up[j].timescale - down[j].timescale)
                        })
                        .sum::<f64>()
                        / (2.0 * h);
                }
            }
        }
        match &self.baseline {
            BaselineLayout::Constant => grad[nk] = g.d_baseline[0] * free[0],
            BaselineLayout::Pwl(layout) => {
                for v in grad[nk..].iter_mut() {
                    *v = 0.0;
                }
                for (k, &slot) in layout.tie.iter().enumerate() {
                    grad[nk + slot] += g.d_baseline[k] * free[slot];
                }
            }
        }
        for v in grad.iter_mut() {
            *v *= -scale;
        }
        -g.log_lik * scale
    }
}

/// Outcome of one multi-start run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub initial_log_lik: f64,
    pub final_log_lik: f64,
    pub converged: bool,
    pub n_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kernel: Kernel,
    pub baseline: Baseline,
    pub log_lik: f64,
    pub converged: bool,
    pub n_function_evals: usize,
    pub branching_ratio: f64,
    pub start_index_of_best: usize,
    /// Number of estimated parameters.
    pub n_params: usize,
    pub n_events: usize,
    pub horizon: f64,
    pub starts: Vec<StartSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Starting coordinates: a deterministic heuristic first, then random draws
/// inside a data-scaled start box.
pub fn initial_points(spec: &FitSpec, events: &EventSeries, seed: u64) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let layout = spec.layout(events.horizon())?;
    let bounds = layout.bounds();
    let rate = events.len().max(1) as f64 / events.horizon();
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(spec.n_starts);
    for start in 0..spec.n_starts {
        let mut x = Vec::with_capacity(layout.dim());
        let heuristic = start == 0;
        match spec.family {
            KernelFamily::Exp { terms } => {
                if heuristic {
                    for j in 0..terms {
                        let frac = if terms == 1 { 0.5 } else { j as f64 / (terms - 1) as f64 };
                        x.push(0.5 / terms as f64);
                        x.push((0.1f64.ln()) + frac * (100.0f64 / 0.1).ln());
                    }
                } else {
                    let mut taus: Vec<f64> = (0..terms).map(|_| log_uniform(&mut rng, 1e-2, 1e3)).collect();
                    taus.sort_by(f64::total_cmp);
                    let total = 0.1 + 0.8 * rng.random::<f64>();
                    let shares: Vec<f64> = (0..terms).map(|_| 0.05 + rng.random::<f64>()).collect();
                    let sum: f64 = shares.iter().sum();
                    for (s, tau) in shares.iter().zip(taus) {
                        x.push(total * s / sum);
                        x.push(tau);
                    }
                }
            }
            KernelFamily::PowerLaw { variant, .. } => {
                if heuristic {
                    x.extend([0.5, 0.3, 0.1f64.ln()]);
                    if variant == PowerLawVariant::Plx {
                        x.extend([0.25, 0.0]);
                    }
                } else {
                    let tau0 = log_uniform(&mut rng, 1e-2, 10.0);
                    x.extend([0.1 + 0.85 * rng.random::<f64>(), rng.random::<f64>(), tau0]);
                    if variant == PowerLawVariant::Plx {
                        let share = 0.6 * rng.random::<f64>();
                        x.extend([share, log_uniform(&mut rng, 1e-2, 1e2)]);
                    }
                }
            }
        }
        for _ in 0..layout.n_baseline() {
            if heuristic {
                x.push((0.5 * rate).ln());
            } else {
                x.push(log_uniform(&mut rng, 0.1 * rate, rate));
            }
        }
        bounds.project(&mut x);
        out.push(x);
    }
    Ok(out)
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo.ln() + rng.random::<f64>() * (hi / lo).ln()
}

/// Fits `spec` to `events`; deterministic for a given seed.
pub fn fit(events: &EventSeries, spec: &FitSpec, seed: u64) -> Result<FitResult> {
    spec.validate()?;
    if events.len() < spec.min_events {
        return Err(HawkesError::InsufficientData {
            needed: spec.min_events,
            got: events.len(),
        });
    }
    let starts = initial_points(spec, events, seed)?;
    fit_from_starts(events, spec, &starts)
}

/// Runs the optimizer from each given start and keeps the best converged one.
pub fn fit_from_starts(events: &EventSeries, spec: &FitSpec, starts: &[Vec<f64>]) -> Result<FitResult> {
    spec.validate()?;
    if starts.is_empty() {
        return Err(domain("at least one starting point is required"));
    }
    let layout = spec.layout(events.horizon())?;
    let bounds = layout.bounds();
    let scale = events.len().max(1) as f64;

    let runs: Vec<_> = starts
        .par_iter()
        .map(|x0| {
            let mut g = vec![0.0; layout.dim()];
            let mut x0 = x0.clone();
            bounds.project(&mut x0);
            let initial = -layout.objective(events, &x0, &mut g) * scale;
            let out = minimize(|x, g| layout.objective(events, x, g), &x0, &bounds, &spec.options);
            (initial, out)
        })
        .collect();

    let summaries: Vec<StartSummary> = runs
        .iter()
        .map(|(initial, out)| StartSummary {
            initial_log_lik: *initial,
            final_log_lik: -out.f * scale,
            converged: out.termination.converged(),
            n_evals: out.n_evals,
        })
        .collect();
    let total_evals = summaries.iter().map(|s| s.n_evals).sum();

    let pick = |require_converged: bool| {
        let mut best: Option<usize> = None;
        for (i, s) in summaries.iter().enumerate() {
            if !s.final_log_lik.is_finite() || (require_converged && !s.converged) {
                continue;
            }
            match best {
                Some(b) if s.final_log_lik <= summaries[b].final_log_lik + TIE_TOLERANCE => {}
                _ => best = Some(i),
            }
        }
        best
    };

    let (index, converged) = match pick(true) {
        Some(i) => (i, true),
        None => match pick(false) {
            Some(i) => (i, false),
            None => return Err(domain("every start produced a non-finite likelihood")),
        },
    };

    let (kernel, baseline) = layout.decode(&runs[index].1.x)?;
    let log_lik = log_likelihood(events, &kernel, &baseline)?;
    let branching_ratio = kernel.total_mass();
    let mut warnings = Vec::new();
    if branching_ratio >= 1.0 {
        warnings.push(format!("fitted kernel mass {branching_ratio:.4} >= 1 (not sub-critical)"));
    }
    let result = FitResult {
        kernel,
        baseline,
        log_lik,
        converged,
        n_function_evals: total_evals,
        branching_ratio,
        start_index_of_best: index,
        n_params: layout.dim(),
        n_events: events.len(),
        horizon: events.horizon(),
        starts: summaries,
        warnings,
    };
    if converged {
        Ok(result)
    } else {
        Err(HawkesError::FitFailure(Box::new(result)))
    }
}
