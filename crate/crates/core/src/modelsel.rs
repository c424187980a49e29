//! AIC, Akaike weights and cross-window comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{domain, HawkesError, Result};
use crate::estimator::FitResult;
use crate::gof::GofReport;

/// Weight differences below this count as ties for `N_max`.
const WEIGHT_TIE: f64 = 1e-12;

pub fn aic(log_lik: f64, k_params: usize) -> f64 {
    2.0 * k_params as f64 - 2.0 * log_lik
}

/// `w_i = exp(-(AIC_i - AIC_min)/2) / W`.
pub fn akaike_weights(aics: &[f64]) -> Result<Vec<f64>> {
    if aics.is_empty() || aics.iter().any(|a| !a.is_finite()) {
        return Err(domain("Akaike weights need a non-empty list of finite AICs"));
    }
    let min = aics.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = aics.iter().map(|a| (-(a - min) / 2.0).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// One fitted (window, kernel) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub window: String,
    pub kernel: String,
    pub fit: FitResult,
    #[serde(default)]
    pub gof: Option<GofReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub kernel: String,
    pub mu: f64,
    pub n: f64,
    pub epsilon: Option<f64>,
    pub p_ks: Option<f64>,
    pub p_ed: Option<f64>,
    pub p_lb: Option<f64>,
    pub log_lik_p: f64,
    pub aic_p: f64,
    pub weight: f64,
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowWeights {
    pub window: String,
    pub aics: Vec<f64>,
    pub weights: Vec<f64>,
    pub best: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub kernels: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    pub windows: Vec<WindowWeights>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Aggregates a full (window x kernel) grid. `kernels` fixes the row order
/// and the tie-break order for `N_max`.
pub fn compare_windows(cells: &[GridCell], kernels: &[String]) -> Result<ComparisonTable> {
    if kernels.is_empty() {
        return Err(domain("comparison needs at least one kernel"));
    }
    let mut grid: BTreeMap<&str, BTreeMap<&str, &GridCell>> = BTreeMap::new();
    for c in cells {
        if !kernels.contains(&c.kernel) {
            continue;
        }
        grid.entry(c.window.as_str()).or_default().insert(c.kernel.as_str(), c);
    }
    if grid.is_empty() {
        return Err(domain("comparison grid is empty"));
    }
    let mut rows_cells: Vec<Vec<&GridCell>> = vec![Vec::new(); kernels.len()];
    let mut windows = Vec::with_capacity(grid.len());
    let mut n_max = vec![0usize; kernels.len()];
    let mut weight_sums = vec![0.0; kernels.len()];
    for (window, by_kernel) in &grid {
        let mut aics = Vec::with_capacity(kernels.len());
        for (i, k) in kernels.iter().enumerate() {
            let cell = by_kernel.get(k.as_str()).ok_or_else(|| HawkesError::IncompleteGrid {
                window: window.to_string(),
                kernel: k.clone(),
            })?;
            aics.push(aic(cell.fit.log_lik, cell.fit.n_params));
            rows_cells[i].push(cell);
        }
        let weights = akaike_weights(&aics)?;
        let mut best = 0;
        for i in 1..weights.len() {
            if weights[i] > weights[best] + WEIGHT_TIE {
                best = i;
            }
        }
        n_max[best] += 1;
        for (s, w) in weight_sums.iter_mut().zip(&weights) {
            *s += w;
        }
        windows.push(WindowWeights {
            window: window.to_string(),
            aics,
            weights,
            best: kernels[best].clone(),
        });
    }

    let n_windows = grid.len() as f64;
    let rows = kernels
        .iter()
        .zip(rows_cells)
        .enumerate()
        .map(|(i, (kernel, cs))| {
            let mean_n = mean(cs.iter().map(|c| c.fit.n_events as f64)).unwrap_or(0.0);
            let per_point = |f: &dyn Fn(&FitResult) -> f64| {
                mean(cs.iter().map(|c| f(&c.fit) / c.fit.n_events.max(1) as f64)).unwrap_or(f64::NAN) * mean_n
            };
            ComparisonRow {
                kernel: kernel.clone(),
                mu: mean(cs.iter().map(|c| c.fit.baseline.mean_level(c.fit.horizon))).unwrap_or(f64::NAN),
                n: mean(cs.iter().map(|c| c.fit.branching_ratio)).unwrap_or(f64::NAN),
                epsilon: mean(cs.iter().filter_map(|c| c.fit.kernel.epsilon())),
                p_ks: mean(cs.iter().filter_map(|c| c.gof.as_ref().map(|g| g.ks.p_value))),
                p_ed: mean(cs.iter().filter_map(|c| c.gof.as_ref().map(|g| g.ed.p_value))),
                p_lb: mean(cs.iter().filter_map(|c| c.gof.as_ref().map(|g| g.lb.p_value))),
                log_lik_p: per_point(&|f| f.log_lik),
                aic_p: per_point(&|f| aic(f.log_lik, f.n_params)),
                weight: weight_sums[i] / n_windows,
                n_max: n_max[i],
            }
        })
        .collect();
    Ok(ComparisonTable {
        kernels: kernels.to_vec(),
        rows,
        windows,
    })
}

const COLUMNS: [&str; 11] = ["kernel", "mu", "n", "epsilon", "pKS", "pED", "pLB", "logL_p", "AIC_p", "w", "N_max"];

impl ComparisonTable {
    fn cells(&self) -> Vec<[String; 11]> {
        let opt = |v: Option<f64>, digits: usize| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.digits$}"));
        self.rows
            .iter()
            .map(|r| {
                [
                    r.kernel.clone(),
                    format!("{:.6}", r.mu),
                    format!("{:.4}", r.n),
                    opt(r.epsilon, 4),
                    opt(r.p_ks, 3),
                    opt(r.p_ed, 3),
                    opt(r.p_lb, 3),
                    format!("{:.1}", r.log_lik_p),
                    format!("{:.1}", r.aic_p),
                    format!("{:.3}", r.weight),
                    r.n_max.to_string(),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = COLUMNS.join(",");
        out.push('\n');
        for row in self.cells() {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let cells = self.cells();
        let widths: Vec<usize> = (0..COLUMNS.len())
            .map(|i| cells.iter().map(|r| r[i].len()).chain([COLUMNS[i].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, fields: &[&str]| {
            let parts: Vec<String> = fields
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (f, w))| if i == 0 { format!("{f:<w$}") } else { format!("{f:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  "));
        };
        line(&mut out, &COLUMNS);
        for r in &cells {
            line(&mut out, &r.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::Baseline;
    use crate::kernels::ExpSumKernel;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fake_fit(log_lik: f64, n_params: usize) -> FitResult {
        FitResult {
            kernel: ExpSumKernel::from_masses(&[(0.5, 1.0)]).unwrap().into(),
            baseline: Baseline::constant(0.1).unwrap(),
            log_lik,
            converged: true,
            n_function_evals: 1,
            branching_ratio: 0.5,
            start_index_of_best: 0,
            n_params,
            n_events: 100,
            horizon: 1000.0,
            starts: vec![],
            warnings: vec![],
        }
    }

    fn cell(window: &str, kernel: &str, log_lik: f64, k: usize) -> GridCell {
        GridCell {
            window: window.into(),
            kernel: kernel.into(),
            fit: fake_fit(log_lik, k),
            gof: None,
        }
    }

    #[test]
    fn aic_values() {
        assert_eq!(aic(0.0, 2), 4.0);
        assert_eq!(aic(100.0, 5), -190.0);
        assert_eq!(aic(3.0, 4) - aic(3.0, 3), 2.0);
    }

    #[test]
    fn weight_values() {
        assert_eq!(akaike_weights(&[1.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        let w = akaike_weights(&[0.0, 2.0]).unwrap();
        assert_relative_eq!(w[0], 1.0 / (1.0 + (-1.0f64).exp()), max_relative = 1e-14);
        assert_relative_eq!(w[0], 0.731, max_relative = 1e-3);
        assert!(akaike_weights(&[0.0, 50.0]).unwrap()[0] > 1.0 - 1e-10);
        assert!(akaike_weights(&[]).is_err());
    }

    proptest! {
        #[test]
        fn weights_shift_invariant(aics in prop::collection::vec(-1e3f64..1e3, 1..8), shift in -1e4f64..1e4) {
            let a = akaike_weights(&aics).unwrap();
            let shifted: Vec<f64> = aics.iter().map(|x| x + shift).collect();
            let b = akaike_weights(&shifted).unwrap();
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_cell_echoes() {
        let t = compare_windows(&[cell("w1", "exp1", -50.0, 3)], &["exp1".to_string()]).unwrap();
        assert_eq!(t.rows[0].n_max, 1);
        assert_eq!(t.rows[0].weight, 1.0);
        assert_relative_eq!(t.rows[0].log_lik_p, -50.0, max_relative = 1e-14);
        assert_relative_eq!(t.rows[0].aic_p, 106.0, max_relative = 1e-14);
        assert_eq!(t.rows[0].epsilon, None);
    }

    #[test]
    fn missing_cell_named() {
        let cells = vec![cell("w1", "exp1", -50.0, 3), cell("w1", "exp2", -40.0, 5), cell("w2", "exp1", -50.0, 3)];
        let err = compare_windows(&cells, &["exp1".into(), "exp2".into()]).unwrap_err();
        match err {
            HawkesError::IncompleteGrid { window, kernel } => assert_eq!((window.as_str(), kernel.as_str()), ("w2", "exp2")),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn ties_go_to_first_kernel() {
        let cells = vec![cell("w1", "a", -10.0, 3), cell("w1", "b", -10.0, 3), cell("w2", "a", -10.0, 3), cell("w2", "b", -20.0, 3)];
        let t = compare_windows(&cells, &["b".into(), "a".into()]).unwrap();
        assert_eq!(t.rows[0].n_max + t.rows[1].n_max, 2);
        assert_eq!(t.windows[0].best, "b");
        assert_eq!(t.windows[1].best, "a");
        for w in &t.windows {
            assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_header_order() {
        let t = compare_windows(&[cell("w1", "exp1", -50.0, 3)], &["exp1".to_string()]).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("kernel,mu,n,epsilon,pKS,pED,pLB,logL_p,AIC_p,w,N_max\n"));
        assert!(csv.contains("exp1,0.100000,0.5000,NA,NA,NA,NA,-50.0,106.0,1.000,1"));
        assert_eq!(t.to_text().lines().count(), 2);
    }
}
