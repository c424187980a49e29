//! Exogenous intensity `mu_t`: constant, or piecewise linear between knots.

use serde::{Deserialize, Serialize};

use crate::error::{domain, HawkesError, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Intraday knot positions (0am, 5am, 9am, 12pm, 4pm) in seconds from midnight;
/// the end of the series adds the last knot.
pub const DAILY_KNOT_OFFSETS: [f64; 5] = [0.0, 5.0 * 3600.0, 9.0 * 3600.0, 12.0 * 3600.0, 16.0 * 3600.0];

/// Lower bound on fitted knot values, keeps `log(lambda)` finite.
pub const MIN_KNOT_VALUE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantBaseline {
    mu: f64,
}

impl ConstantBaseline {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(domain(format!("baseline rate must be non-negative and finite, got {mu}")));
        }
        Ok(Self { mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearBaseline {
    knot_times: Vec<f64>,
    knot_values: Vec<f64>,
}

impl PiecewiseLinearBaseline {
    pub fn new(knot_times: Vec<f64>, knot_values: Vec<f64>) -> Result<Self> {
        if knot_times.len() < 2 {
            return Err(domain("a piecewise-linear baseline needs at least two knots"));
        }
        if knot_times.len() != knot_values.len() {
            return Err(domain(format!(
                "{} knot times but {} knot values",
                knot_times.len(),
                knot_values.len()
            )));
        }
        if knot_times[0] != 0.0 {
            return Err(domain(format!("first knot must sit at 0, got {}", knot_times[0])));
        }
        if !knot_times.windows(2).all(|w| w[0] < w[1]) || !knot_times.iter().all(|t| t.is_finite()) {
            return Err(domain("knot times must be finite and strictly increasing"));
        }
        if let Some(v) = knot_values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(domain(format!("knot values must be non-negative and finite, got {v}")));
        }
        Ok(Self {
            knot_times,
            knot_values,
        })
    }

    pub fn knot_times(&self) -> &[f64] {
        &self.knot_times
    }

    pub fn knot_values(&self) -> &[f64] {
        &self.knot_values
    }

    pub fn horizon(&self) -> f64 {
        *self.knot_times.last().expect("at least two knots")
    }

    /// Index `k` of the segment `[t_k, t_{k+1}]` containing `t`.
    fn segment(&self, t: f64) -> usize {
        let upper = self.knot_times.partition_point(|&k| k <= t);
        upper.saturating_sub(1).min(self.knot_times.len() - 2)
    }

    /// Interpolation weights: `mu(t) = (1 - f) v_k + f v_{k+1}`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let k = self.segment(t);
        let (t0, t1) = (self.knot_times[k], self.knot_times[k + 1]);
        (k, ((t - t0) / (t1 - t0)).clamp(0.0, 1.0))
    }

    fn value(&self, t: f64) -> f64 {
        let (k, f) = self.locate(t);
        (1.0 - f) * self.knot_values[k] + f * self.knot_values[k + 1]
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        let mut lo = a;
        while lo < b {
            let k = self.segment(lo);
            let hi = b.min(self.knot_times[k + 1]);
            total += 0.5 * (hi - lo) * (self.value(lo) + self.value(hi));
            if hi <= lo {
                break;
            }
            lo = hi;
        }
        total
    }
}

/// Exogenous intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BaselineJson", into = "BaselineJson")]
pub enum Baseline {
    Constant(ConstantBaseline),
    Pwl(PiecewiseLinearBaseline),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum BaselineJson {
    Constant { mu: f64 },
    Pwl { knot_times: Vec<f64>, knot_values: Vec<f64> },
}

impl TryFrom<BaselineJson> for Baseline {
    type Error = HawkesError;

    fn try_from(j: BaselineJson) -> Result<Self> {
        match j {
            BaselineJson::Constant { mu } => Baseline::constant(mu),
            BaselineJson::Pwl {
                knot_times,
                knot_values,
            } => Ok(Baseline::Pwl(PiecewiseLinearBaseline::new(knot_times, knot_values)?)),
        }
    }
}

impl From<Baseline> for BaselineJson {
    fn from(b: Baseline) -> Self {
        match b {
            Baseline::Constant(c) => BaselineJson::Constant { mu: c.mu },
            Baseline::Pwl(p) => BaselineJson::Pwl {
                knot_times: p.knot_times,
                knot_values: p.knot_values,
            },
        }
    }
}

impl Baseline {
    pub fn constant(mu: f64) -> Result<Self> {
        Ok(Baseline::Constant(ConstantBaseline::new(mu)?))
    }

    pub fn piecewise_linear(knot_times: Vec<f64>, knot_values: Vec<f64>) -> Result<Self> {
        Ok(Baseline::Pwl(PiecewiseLinearBaseline::new(knot_times, knot_values)?))
    }

    /// End of the domain, if the baseline has one.
    pub fn horizon(&self) -> Option<f64> {
        match self {
            Baseline::Constant(_) => None,
            Baseline::Pwl(p) => Some(p.horizon()),
        }
    }

    fn check_in_domain(&self, t: f64) -> Result<()> {
        let ok = match self {
            Baseline::Constant(_) => t.is_finite(),
            Baseline::Pwl(p) => (0.0..=p.horizon()).contains(&t),
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("baseline evaluated outside its domain at t = {t}")))
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.check_in_domain(t)?;
        Ok(self.value(t))
    }

    /// `int_a^b mu_t dt`, exact for both kinds.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        if a > b || a.is_nan() || b.is_nan() {
            return Err(domain(format!("integration bounds out of order: [{a}, {b}]")));
        }
        self.check_in_domain(a)?;
        self.check_in_domain(b)?;
        Ok(self.integral(a, b))
    }

    #[inline]
    pub(crate) fn value(&self, t: f64) -> f64 {
        match self {
            Baseline::Constant(c) => c.mu,
            Baseline::Pwl(p) => p.value(t),
        }
    }

    pub(crate) fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Baseline::Constant(c) => c.mu * (b - a),
            Baseline::Pwl(p) => p.integral(a, b),
        }
    }

    /// Number of free values (`mu`, or one per knot).
    pub fn n_values(&self) -> usize {
        match self {
            Baseline::Constant(_) => 1,
            Baseline::Pwl(p) => p.knot_values.len(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Baseline::Constant(c) => vec![c.mu],
            Baseline::Pwl(p) => p.knot_values.clone(),
        }
    }

    /// Same shape, new values.
    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        match self {
            Baseline::Constant(_) => Baseline::constant(values[0]),
            Baseline::Pwl(p) => Baseline::piecewise_linear(p.knot_times.clone(), values.to_vec()),
        }
    }

    /// Adds `scale * d mu(t) / d value_k` into `grad`.
    pub(crate) fn accumulate_value_gradient(&self, t: f64, scale: f64, grad: &mut [f64]) {
        match self {
            Baseline::Constant(_) => grad[0] += scale,
            Baseline::Pwl(p) => {
                let (k, f) = p.locate(t);
                grad[k] += scale * (1.0 - f);
                grad[k + 1] += scale * f;
            }
        }
    }

    /// Adds `scale * d/d value_k int_a^b mu` into `grad`.
    pub(crate) fn accumulate_integral_gradient(&self, a: f64, b: f64, scale: f64, grad: &mut [f64]) {
        match self {
            Baseline::Constant(_) => grad[0] += scale * (b - a),
            Baseline::Pwl(p) => {
                let mut lo = a;
                while lo < b {
                    let k = p.segment(lo);
                    let (t0, t1) = (p.knot_times[k], p.knot_times[k + 1]);
                    let hi = b.min(t1);
                    if hi <= lo {
                        break;
                    }
                    let width = t1 - t0;
                    let (f_lo, f_hi) = ((lo - t0) / width, (hi - t0) / width);
                    // int (1-f) and int f over [lo, hi], f linear in t.
                    let int_f = 0.5 * (hi - lo) * (f_lo + f_hi);
                    grad[k] += scale * ((hi - lo) - int_f);
                    grad[k + 1] += scale * int_f;
                    lo = hi;
                }
            }
        }
    }

    /// Upper bound of `mu` on `[s, end)` and that segment end (`inf` for a
    /// constant baseline).
    pub(crate) fn segment_bound(&self, s: f64) -> (f64, f64) {
        match self {
            Baseline::Constant(c) => (c.mu, f64::INFINITY),
            Baseline::Pwl(p) => {
                let k = p.segment(s);
                let end = p.knot_times[k + 1];
                (p.value(s).max(p.knot_values[k + 1]), end)
            }
        }
    }

    /// Time-averaged level over `[0, horizon]`.
    pub fn mean_level(&self, horizon: f64) -> f64 {
        match self {
            Baseline::Constant(c) => c.mu,
            Baseline::Pwl(_) if horizon > 0.0 => self.integral(0.0, horizon) / horizon,
            Baseline::Pwl(p) => p.knot_values[0],
        }
    }
}

/// How knot values are shared across days in a multi-day window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnotSharing {
    /// Every knot is a free value (11 knots for two days).
    #[default]
    PerDay,
    /// Knots at the same time of day share one value; a day boundary takes
    /// the end-of-day value (6 free values however many days).
    Shared,
}

/// Knot times over `[0, horizon]` with the mapping from knots to free values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotLayout {
    pub knot_times: Vec<f64>,
    /// Free-value index of each knot.
    pub tie: Vec<usize>,
    pub n_free: usize,
}

impl KnotLayout {
    /// The daily knot pattern repeated per day, plus a final knot at `horizon`.
    pub fn daily(horizon: f64, sharing: KnotSharing) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(domain(format!("horizon must be positive, got {horizon}")));
        }
        let mut knot_times = Vec::new();
        let mut slot = Vec::new();
        let mut day = 0usize;
        'days: loop {
            for (pos, off) in DAILY_KNOT_OFFSETS.iter().enumerate() {
                let t = day as f64 * SECONDS_PER_DAY + off;
                if t >= horizon {
                    break 'days;
                }
                knot_times.push(t);
                // Day boundaries after the first close the previous day.
                slot.push(if pos == 0 && day > 0 { DAILY_KNOT_OFFSETS.len() } else { pos });
            }
            day += 1;
        }
        knot_times.push(horizon);
        slot.push(DAILY_KNOT_OFFSETS.len());

        let tie: Vec<usize> = match sharing {
            KnotSharing::PerDay => (0..knot_times.len()).collect(),
            KnotSharing::Shared => {
                let mut used: Vec<usize> = slot.clone();
                used.sort_unstable();
                used.dedup();
                slot.iter()
                    .map(|s| used.binary_search(s).expect("slot present"))
                    .collect()
            }
        };
        let n_free = tie.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            knot_times,
            tie,
            n_free,
        })
    }

    pub fn baseline(&self, free_values: &[f64]) -> Result<Baseline> {
        let values = self.tie.iter().map(|&i| free_values[i]).collect();
        Baseline::piecewise_linear(self.knot_times.clone(), values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn constant_eval_and_integral() {
        let b = Baseline::constant(0.08).unwrap();
        assert_eq!(b.eval(0.0).unwrap(), 0.08);
        assert_eq!(b.eval(12345.6).unwrap(), 0.08);
        let c = Baseline::constant(0.05).unwrap();
        assert_relative_eq!(c.integrate(0.0, 100.0).unwrap(), 5.0, max_relative = 1e-15);
        assert!(Baseline::constant(-0.1).is_err());
    }

    #[test]
    fn pwl_interpolation() {
        let ramp = Baseline::piecewise_linear(vec![0.0, 100.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(ramp.eval(50.0).unwrap(), 0.5);
        assert_eq!(ramp.integrate(0.0, 100.0).unwrap(), 50.0);
        let flat = Baseline::piecewise_linear(vec![0.0, 100.0], vec![0.2, 0.2]).unwrap();
        assert_relative_eq!(flat.eval(33.0).unwrap(), 0.2, max_relative = 1e-15);
        assert!(ramp.eval(100.5).is_err());
        assert!(ramp.eval(-0.5).is_err());
    }

    #[test]
    fn degenerate_and_reversed_intervals() {
        let ramp = Baseline::piecewise_linear(vec![0.0, 10.0, 30.0], vec![1.0, 0.0, 2.0]).unwrap();
        assert_eq!(ramp.integrate(7.0, 7.0).unwrap(), 0.0);
        assert_eq!(Baseline::constant(3.0).unwrap().integrate(2.0, 2.0).unwrap(), 0.0);
        assert!(ramp.integrate(8.0, 7.0).is_err());
    }

    #[test]
    fn pwl_validation() {
        assert!(Baseline::piecewise_linear(vec![0.0], vec![1.0]).is_err());
        assert!(Baseline::piecewise_linear(vec![1.0, 2.0], vec![1.0, 1.0]).is_err());
        assert!(Baseline::piecewise_linear(vec![0.0, 2.0, 2.0], vec![1.0, 1.0, 1.0]).is_err());
        assert!(Baseline::piecewise_linear(vec![0.0, 2.0], vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn integral_gradient_matches_difference() {
        let b = Baseline::piecewise_linear(vec![0.0, 3.0, 7.0, 20.0], vec![0.5, 2.0, 1.0, 0.1]).unwrap();
        let mut grad = vec![0.0; 4];
        b.accumulate_integral_gradient(1.0, 15.0, 1.0, &mut grad);
        for k in 0..4 {
            let mut v = b.values();
            v[k] += 1.0;
            let bumped = b.with_values(&v).unwrap();
            let diff = bumped.integrate(1.0, 15.0).unwrap() - b.integrate(1.0, 15.0).unwrap();
            assert_relative_eq!(grad[k], diff, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn daily_layouts() {
        let one = KnotLayout::daily(SECONDS_PER_DAY, KnotSharing::PerDay).unwrap();
        assert_eq!(one.knot_times, vec![0.0, 18_000.0, 32_400.0, 43_200.0, 57_600.0, 86_400.0]);
        assert_eq!(one.n_free, 6);
        let two = KnotLayout::daily(2.0 * SECONDS_PER_DAY, KnotSharing::PerDay).unwrap();
        assert_eq!(two.knot_times.len(), 11);
        assert_eq!(two.n_free, 11);
        let shared = KnotLayout::daily(2.0 * SECONDS_PER_DAY, KnotSharing::Shared).unwrap();
        assert_eq!(shared.n_free, 6);
        assert_eq!(shared.tie, vec![0, 1, 2, 3, 4, 5, 1, 2, 3, 4, 5]);
        let hour = KnotLayout::daily(3600.0, KnotSharing::PerDay).unwrap();
        assert_eq!(hour.knot_times, vec![0.0, 3600.0]);
        let b = shared.baseline(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(b.eval(SECONDS_PER_DAY).unwrap(), 6.0);
        assert_eq!(b.eval(SECONDS_PER_DAY + 5.0 * 3600.0).unwrap(), 2.0);
    }

    #[test]
    fn json_forms() {
        let c: Baseline = serde_json::from_str(r#"{"type": "constant", "mu": 0.08}"#).unwrap();
        assert_eq!(c, Baseline::constant(0.08).unwrap());
        let p: Baseline =
            serde_json::from_str(r#"{"type": "pwl", "knot_times": [0, 10], "knot_values": [1, 2]}"#).unwrap();
        assert_eq!(p.eval(5.0).unwrap(), 1.5);
        let back: Baseline = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Baseline>(r#"{"type": "constant", "mu": -1}"#).is_err());
    }

    fn pwl_strategy() -> impl Strategy<Value = Baseline> {
        (2usize..8)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec(0.1f64..50.0, n - 1),
                    prop::collection::vec(0.0f64..5.0, n),
                )
            })
            .prop_map(|(gaps, values)| {
                let mut times = vec![0.0];
                for g in gaps {
                    times.push(times.last().unwrap() + g);
                }
                Baseline::piecewise_linear(times, values).unwrap()
            })
    }

    proptest! {
        #[test]
        fn integral_is_additive(b in pwl_strategy(), u in 0.0f64..1.0, v in 0.0f64..1.0, w in 0.0f64..1.0) {
            let h = b.horizon().unwrap();
            let mut pts = [u * h, v * h, w * h];
            pts.sort_by(f64::total_cmp);
            let [x, y, z] = pts;
            let whole = b.integrate(x, z).unwrap();
            let split = b.integrate(x, y).unwrap() + b.integrate(y, z).unwrap();
            prop_assert!((whole - split).abs() <= 1e-12 * whole.abs().max(1.0));
        }

        #[test]
        fn eval_nonnegative(b in pwl_strategy(), u in 0.0f64..=1.0) {
            let t = u * b.horizon().unwrap();
            prop_assert!(b.eval(t).unwrap() >= 0.0);
        }
    }
}
