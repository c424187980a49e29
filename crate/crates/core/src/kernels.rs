//! Excitation kernels.
//!
//! Every kernel family reduces to a finite signed sum of exponentials
//! `phi(t) = sum_j w_j exp(-t / tau_j)`, which is what the O(N) likelihood
//! recursion and the thinning simulator consume. The families are:
//!
//! * `exp` — free sum of `M` exponentials, `phi(t) = sum_i alpha_i exp(-t/tau_i)`;
//! * `pl` — approximate power law, `phi(t) = n/Z sum_i a_i^-(1+eps) exp(-t/a_i)`
//!   with `a_i = tau0 m^i`, `i = 0..M-1`;
//! * `hbb` — the power law with a short-lag cutoff
//!   `- S exp(-t/a_{-1})`, `a_{-1} = tau0/m`, and `S` chosen so `phi(0) = 0`;
//! * `plx` — the power law plus one free exponential `b exp(-t/tau_x)`.
//!
//! For the power-law families `Z` is fixed in closed form so that the total
//! mass is exactly `n`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{domain, HawkesError, Result};

/// Largest tail exponent accepted for the power-law families.
pub const MAX_EPSILON: f64 = 5.0;

/// One term `weight * exp(-t / timescale)` of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpComponent {
    pub weight: f64,
    pub timescale: f64,
}

impl ExpComponent {
    pub fn new(weight: f64, timescale: f64) -> Result<Self> {
        if !weight.is_finite() {
            return Err(domain(format!("component weight must be finite, got {weight}")));
        }
        if !(timescale > 0.0 && timescale.is_finite()) {
            return Err(domain(format!(
                "component timescale must be positive and finite, got {timescale}"
            )));
        }
        Ok(Self { weight, timescale })
    }

    /// Integrated mass `weight * timescale`.
    pub fn mass(&self) -> f64 {
        self.weight * self.timescale
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.weight * (-t / self.timescale).exp()
    }

    #[inline]
    pub fn integral_to(&self, t: f64) -> f64 {
        -self.weight * self.timescale * (-t / self.timescale).exp_m1()
    }
}

fn sort_by_timescale(components: &mut [ExpComponent]) {
    components.sort_by(|a, b| a.timescale.total_cmp(&b.timescale));
}

/// Free sum of non-negative exponentials.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSumKernel {
    components: Vec<ExpComponent>,
}

impl ExpSumKernel {
    pub fn new(mut components: Vec<ExpComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(domain("an exponential-sum kernel needs at least one component"));
        }
        for c in &components {
            ExpComponent::new(c.weight, c.timescale)?;
            if c.weight < 0.0 {
                return Err(domain(format!(
                    "exponential-sum weights must be non-negative, got {}",
                    c.weight
                )));
            }
        }
        sort_by_timescale(&mut components);
        Ok(Self { components })
    }

    /// Builds the kernel from `(mass, timescale)` pairs, `alpha = mass / timescale`.
    pub fn from_masses(pairs: &[(f64, f64)]) -> Result<Self> {
        let components = pairs
            .iter()
            .map(|&(mass, tau)| ExpComponent::new(mass / tau, tau))
            .collect::<Result<Vec<_>>>()?;
        Self::new(components)
    }

    /// Single zero-weight component: a pure Poisson process.
    pub fn zero() -> Self {
        Self {
            components: vec![ExpComponent {
                weight: 0.0,
                timescale: 1.0,
            }],
        }
    }

    pub fn components(&self) -> &[ExpComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerLawVariant {
    Pl,
    Hbb,
    Plx,
}

impl PowerLawVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pl => "pl",
            Self::Hbb => "hbb",
            Self::Plx => "plx",
        }
    }
}

/// Parameters of a power-law family kernel before normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawParams {
    pub variant: PowerLawVariant,
    pub mass_n: f64,
    pub epsilon: f64,
    pub tau0: f64,
    pub terms: usize,
    pub spacing: f64,
    /// `(b, tau_x)` of the extra exponential; only read for `Plx`.
    pub extra: Option<(f64, f64)>,
}

/// Closed-form constants of a power-law family kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Normalization {
    z: f64,
    s: f64,
}

impl PowerLawParams {
    fn validate(&self) -> Result<()> {
        if !(self.mass_n > 0.0 && self.mass_n < 1.0) {
            return Err(domain(format!("power-law mass n must lie in (0, 1), got {}", self.mass_n)));
        }
        if !(0.0..=MAX_EPSILON).contains(&self.epsilon) {
            return Err(domain(format!(
                "tail exponent must lie in [0, {MAX_EPSILON}], got {}",
                self.epsilon
            )));
        }
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return Err(domain(format!("tau0 must be positive, got {}", self.tau0)));
        }
        if self.terms == 0 {
            return Err(domain("power-law kernels need M >= 1"));
        }
        if !(self.spacing > 1.0 && self.spacing.is_finite()) {
            return Err(domain(format!("spacing m must exceed 1, got {}", self.spacing)));
        }
        if self.variant == PowerLawVariant::Plx {
            let (b, tau_x) = self
                .extra
                .ok_or_else(|| domain("plx kernel requires b and tau_x"))?;
            if !(b >= 0.0 && b.is_finite()) {
                return Err(domain(format!("plx weight b must be non-negative, got {b}")));
            }
            if !(tau_x > 0.0 && tau_x.is_finite()) {
                return Err(domain(format!("plx timescale must be positive, got {tau_x}")));
            }
        }
        Ok(())
    }

    fn scale(&self, i: usize) -> f64 {
        self.tau0 * self.spacing.powi(i as i32)
    }

    fn cutoff_scale(&self) -> f64 {
        self.tau0 / self.spacing
    }

    fn normalization(&self) -> Normalization {
        let mut sum_eps = 0.0;
        let mut s = 0.0;
        for i in 0..self.terms {
            let a = self.scale(i);
            sum_eps += a.powf(-self.epsilon);
            s += a.powf(-(1.0 + self.epsilon));
        }
        let z = match self.variant {
            PowerLawVariant::Pl => sum_eps,
            PowerLawVariant::Hbb => sum_eps - s * self.cutoff_scale(),
            PowerLawVariant::Plx => {
                let (b, tau_x) = self.extra.unwrap_or((0.0, 1.0));
                sum_eps + b * tau_x
            }
        };
        Normalization { z, s }
    }

    /// Components in construction order: the `M` power-law terms, then the
    /// cutoff (hbb) or the free exponential (plx). Not sorted, so the order
    /// is stable under parameter perturbations.
    pub(crate) fn raw_components(&self) -> Vec<ExpComponent> {
        let norm = self.normalization();
        let scale = self.mass_n / norm.z;
        let mut out: Vec<ExpComponent> = (0..self.terms)
            .map(|i| {
                let a = self.scale(i);
                ExpComponent {
                    weight: scale * a.powf(-(1.0 + self.epsilon)),
                    timescale: a,
                }
            })
            .collect();
        match self.variant {
            PowerLawVariant::Pl => {}
            PowerLawVariant::Hbb => out.push(ExpComponent {
                weight: -scale * norm.s,
                timescale: self.cutoff_scale(),
            }),
            PowerLawVariant::Plx => {
                let (b, tau_x) = self.extra.unwrap_or((0.0, 1.0));
                out.push(ExpComponent {
                    weight: scale * b,
                    timescale: tau_x,
                });
            }
        }
        out
    }
}

/// Approximate power-law kernel (`pl`, `hbb` or `plx`).
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxPowerLawKernel {
    params: PowerLawParams,
    z: f64,
    s: f64,
    /// `(a_i, a_i^-(1+eps))` for `i = 0..M-1`.
    terms: Vec<(f64, f64)>,
    components: Vec<ExpComponent>,
}

impl ApproxPowerLawKernel {
    pub fn new(params: PowerLawParams) -> Result<Self> {
        params.validate()?;
        let norm = params.normalization();
        if !(norm.z > 0.0 && norm.z.is_finite()) {
            return Err(domain(format!("normalization Z must be positive, got {}", norm.z)));
        }
        let mut components = params.raw_components();
        for c in &components {
            ExpComponent::new(c.weight, c.timescale)?;
        }
        sort_by_timescale(&mut components);
        let terms = (0..params.terms)
            .map(|i| {
                let a = params.scale(i);
                (a, a.powf(-(1.0 + params.epsilon)))
            })
            .collect();
        Ok(Self {
            params,
            z: norm.z,
            s: norm.s,
            terms,
            components,
        })
    }

    pub fn pl(mass_n: f64, epsilon: f64, tau0: f64, terms: usize, spacing: f64) -> Result<Self> {
        Self::new(PowerLawParams {
            variant: PowerLawVariant::Pl,
            mass_n,
            epsilon,
            tau0,
            terms,
            spacing,
            extra: None,
        })
    }

    pub fn hbb(mass_n: f64, epsilon: f64, tau0: f64, terms: usize, spacing: f64) -> Result<Self> {
        Self::new(PowerLawParams {
            variant: PowerLawVariant::Hbb,
            mass_n,
            epsilon,
            tau0,
            terms,
            spacing,
            extra: None,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn plx(
        mass_n: f64,
        epsilon: f64,
        tau0: f64,
        b: f64,
        tau_x: f64,
        terms: usize,
        spacing: f64,
    ) -> Result<Self> {
        Self::new(PowerLawParams {
            variant: PowerLawVariant::Plx,
            mass_n,
            epsilon,
            tau0,
            terms,
            spacing,
            extra: Some((b, tau_x)),
        })
    }

    pub fn params(&self) -> &PowerLawParams {
        &self.params
    }

    pub fn variant(&self) -> PowerLawVariant {
        self.params.variant
    }

    /// Normalization constant `Z`.
    pub fn normalization(&self) -> f64 {
        self.z
    }

    /// Cutoff strength `S = sum_i a_i^-(1+eps)`; only meaningful for hbb.
    pub fn cutoff_strength(&self) -> f64 {
        self.s
    }

    pub fn components(&self) -> &[ExpComponent] {
        &self.components
    }

    fn evaluate_family(&self, t: f64) -> f64 {
        let p = &self.params;
        let scale = p.mass_n / self.z;
        let cutoff = (-t / p.cutoff_scale()).exp();
        let mut sum = 0.0;
        for &(a, c) in &self.terms {
            sum += match p.variant {
                // Paired with the cutoff term so phi(0) is exactly zero and
                // phi(t) >= 0 without cancellation.
                PowerLawVariant::Hbb => c * ((-t / a).exp() - cutoff),
                _ => c * (-t / a).exp(),
            };
        }
        if let (PowerLawVariant::Plx, Some((b, tau_x))) = (p.variant, p.extra) {
            sum += b * (-t / tau_x).exp();
        }
        scale * sum
    }
}

/// Any supported kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    ExpSum(ExpSumKernel),
    PowerLaw(ApproxPowerLawKernel),
}

impl From<ExpSumKernel> for Kernel {
    fn from(k: ExpSumKernel) -> Self {
        Kernel::ExpSum(k)
    }
}

impl From<ApproxPowerLawKernel> for Kernel {
    fn from(k: ApproxPowerLawKernel) -> Self {
        Kernel::PowerLaw(k)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && !t.is_nan() {
        Ok(())
    } else {
        Err(domain(format!("kernel lag must be non-negative, got {t}")))
    }
}

impl Kernel {
    pub fn zero() -> Self {
        Kernel::ExpSum(ExpSumKernel::zero())
    }

    /// `phi(t)` from the family's own formula.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(match self {
            Kernel::ExpSum(k) => k.components.iter().map(|c| c.value(t)).sum(),
            Kernel::PowerLaw(k) => k.evaluate_family(t),
        })
    }

    /// Branching ratio `n`, the integral of the kernel over `[0, inf)`.
    pub fn total_mass(&self) -> f64 {
        match self {
            Kernel::ExpSum(k) => k.components.iter().map(ExpComponent::mass).sum(),
            Kernel::PowerLaw(k) => k.params.mass_n,
        }
    }

    /// `int_0^t phi(s) ds`.
    pub fn integral_to(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.to_exp_components().iter().map(|c| c.integral_to(t)).sum())
    }

    /// Canonical exponential decomposition, sorted by timescale.
    pub fn to_exp_components(&self) -> &[ExpComponent] {
        match self {
            Kernel::ExpSum(k) => &k.components,
            Kernel::PowerLaw(k) => &k.components,
        }
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            Kernel::ExpSum(k) => KernelFamily::Exp { terms: k.len() },
            Kernel::PowerLaw(k) => KernelFamily::PowerLaw {
                variant: k.params.variant,
                terms: k.params.terms,
                spacing: k.params.spacing,
            },
        }
    }

    /// Tail exponent, for the power-law families.
    pub fn epsilon(&self) -> Option<f64> {
        match self {
            Kernel::ExpSum(_) => None,
            Kernel::PowerLaw(k) => Some(k.params.epsilon),
        }
    }
}

/// A kernel family with its fixed structural constants (`M`, and `m` for
/// the power-law families). Textual form: `exp2`, `pl15`, `hbb30`, `plx15`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    Exp {
        terms: usize,
    },
    PowerLaw {
        variant: PowerLawVariant,
        terms: usize,
        spacing: f64,
    },
}

impl KernelFamily {
    pub const DEFAULT_SPACING: f64 = 2.0;

    /// Number of fitted kernel parameters (`M` and `m` are fixed).
    pub fn n_params(&self) -> usize {
        match self {
            KernelFamily::Exp { terms } => 2 * terms,
            KernelFamily::PowerLaw { variant, .. } => match variant {
                PowerLawVariant::Pl | PowerLawVariant::Hbb => 3,
                PowerLawVariant::Plx => 5,
            },
        }
    }

    pub fn with_spacing(self, spacing: f64) -> Self {
        match self {
            KernelFamily::PowerLaw { variant, terms, .. } => KernelFamily::PowerLaw {
                variant,
                terms,
                spacing,
            },
            exp => exp,
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::Exp { terms } => write!(f, "exp{terms}"),
            KernelFamily::PowerLaw { variant, terms, .. } => {
                write!(f, "{}{terms}", variant.as_str())
            }
        }
    }
}

impl FromStr for KernelFamily {
    type Err = HawkesError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let split = s
            .find(|c: char| c.is_ascii_digit())
            .ok_or_else(|| domain(format!("kernel family `{s}` lacks a term count")))?;
        let (name, count) = s.split_at(split);
        let terms: usize = count
            .parse()
            .map_err(|_| domain(format!("bad term count in kernel family `{s}`")))?;
        if terms == 0 {
            return Err(domain("kernel family needs at least one term"));
        }
        let variant = match name {
            "exp" => return Ok(KernelFamily::Exp { terms }),
            "pl" => PowerLawVariant::Pl,
            "hbb" => PowerLawVariant::Hbb,
            "plx" => PowerLawVariant::Plx,
            other => return Err(domain(format!("unknown kernel family `{other}`"))),
        };
        Ok(KernelFamily::PowerLaw {
            variant,
            terms,
            spacing: Self::DEFAULT_SPACING,
        })
    }
}

/// JSON form: `{"family": "exp|pl|hbb|plx", "params": {...}, "M": int, "m": float}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct KernelJson {
    family: String,
    params: serde_json::Value,
    #[serde(rename = "M")]
    terms: usize,
    m: Option<f64>,
}

impl From<&Kernel> for KernelJson {
    fn from(k: &Kernel) -> Self {
        match k {
            Kernel::ExpSum(k) => KernelJson {
                family: "exp".into(),
                params: json!({
                    "alpha": k.components.iter().map(|c| c.weight).collect::<Vec<_>>(),
                    "tau": k.components.iter().map(|c| c.timescale).collect::<Vec<_>>(),
                }),
                terms: k.len(),
                m: None,
            },
            Kernel::PowerLaw(k) => {
                let p = &k.params;
                let mut params = json!({
                    "n": p.mass_n,
                    "epsilon": p.epsilon,
                    "tau0": p.tau0,
                });
                if let (PowerLawVariant::Plx, Some((b, tau_x))) = (p.variant, p.extra) {
                    params["b"] = json!(b);
                    params["tau_x"] = json!(tau_x);
                }
                KernelJson {
                    family: p.variant.as_str().into(),
                    params,
                    terms: p.terms,
                    m: Some(p.spacing),
                }
            }
        }
    }
}

#[derive(Deserialize)]
struct ExpParamsJson {
    alpha: Vec<f64>,
    tau: Vec<f64>,
}

#[derive(Deserialize)]
struct PowerLawParamsJson {
    n: f64,
    epsilon: f64,
    tau0: f64,
    b: Option<f64>,
    tau_x: Option<f64>,
}

impl TryFrom<KernelJson> for Kernel {
    type Error = HawkesError;

    fn try_from(j: KernelJson) -> Result<Self> {
        if j.family == "exp" {
            let p: ExpParamsJson = serde_json::from_value(j.params)?;
            if p.alpha.len() != p.tau.len() || p.alpha.len() != j.terms {
                return Err(domain(format!(
                    "exp kernel: M = {} but {} weights and {} timescales",
                    j.terms,
                    p.alpha.len(),
                    p.tau.len()
                )));
            }
            let comps = p
                .alpha
                .iter()
                .zip(&p.tau)
                .map(|(&w, &tau)| ExpComponent::new(w, tau))
                .collect::<Result<Vec<_>>>()?;
            return Ok(ExpSumKernel::new(comps)?.into());
        }
        let variant = match j.family.as_str() {
            "pl" => PowerLawVariant::Pl,
            "hbb" => PowerLawVariant::Hbb,
            "plx" => PowerLawVariant::Plx,
            other => return Err(domain(format!("unknown kernel family `{other}`"))),
        };
        let p: PowerLawParamsJson = serde_json::from_value(j.params)?;
        let extra = match variant {
            PowerLawVariant::Plx => Some((
                p.b.ok_or_else(|| domain("plx kernel requires params.b"))?,
                p.tau_x.ok_or_else(|| domain("plx kernel requires params.tau_x"))?,
            )),
            _ => None,
        };
        Ok(ApproxPowerLawKernel::new(PowerLawParams {
            variant,
            mass_n: p.n,
            epsilon: p.epsilon,
            tau0: p.tau0,
            terms: j.terms,
            spacing: j.m.unwrap_or(KernelFamily::DEFAULT_SPACING),
            extra,
        })?
        .into())
    }
}

impl Serialize for Kernel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        KernelJson::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Kernel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let j = KernelJson::deserialize(deserializer)?;
        Kernel::try_from(j).map_err(serde::de::Error::custom)
    }
}
