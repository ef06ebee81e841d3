//! Boundary statistics of trained points: how many samples sit on a kink,
//! and how many of those give flat extreme rays.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sosp_core::first_order::solve_subdiff_parts;
use sosp_core::network::per_sample_derivatives;
use sosp_core::numerics::Vector;
use sosp_core::{Activation, Dataset, Dims, LossModel, NetworkParams, Result, SquaredLoss, TesterConfig, VerdictKind};

use crate::adam::{adam_train, AdamConfig};
use crate::datagen::{generate_dataset, init_params};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// `|(W1 x_i + b1)_k|` below this counts as a boundary entry.
    pub boundary: f64,
    /// Distance (after normalizing the slope box to `[0, 1]`) of `s*` to an end.
    pub edge: f64,
    /// `|W2[:,k]^T grad_i|` below this counts as doubly flat.
    pub orthogonality: f64,
    /// Units whose subdifferential QP objective is at most this are reported
    /// as approximately stationary.
    pub qp_objective: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            boundary: 1e-5,
            edge: 1e-6,
            orthogonality: 1e-4,
            qp_objective: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitStats {
    pub unit: usize,
    pub indices: Vec<usize>,
    pub s_star: Vec<f64>,
    pub qp_objective: f64,
    pub approximately_stationary: bool,
    /// Boundary entries with `s*` at an end of the slope box, excluding doubly-flat ones.
    pub edge_count: usize,
    pub orthogonal_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub final_risk: f64,
    pub m_hat: usize,
    pub l_hat: usize,
    pub k_hat: usize,
    pub units: Vec<UnitStats>,
    pub verdict: Option<VerdictKind>,
    pub train_seconds: f64,
    pub stats_seconds: f64,
}

pub fn boundary_statistics(
    params: &NetworkParams,
    data: &Dataset,
    loss: &dyn LossModel,
    thresholds: &Thresholds,
    qp_tol: f64,
) -> Result<RunReport> {
    let started = Instant::now();
    let dims = params.dims();
    let samples = per_sample_derivatives(params, data, loss)?;
    let act = params.activation;
    let width = act.upper() - act.lower();
    let mut units = Vec::new();
    let mut final_risk = 0.0;
    for (s, y) in samples.iter().zip(data.labels()) {
        final_risk += loss.value(&s.output, y);
    }
    for k in 0..dims.hidden {
        let w2 = params.w2.column(k);
        let boundary: Vec<usize> = (0..data.len())
            .filter(|&i| samples[i].preact[k].abs() < thresholds.boundary)
            .collect();
        if boundary.is_empty() {
            continue;
        }
        let mut smooth = Vector::zeros(dims.augmented());
        for i in (0..data.len()).filter(|i| !boundary.contains(i)) {
            let back = w2.dot(&samples[i].grad) * act.derivative(samples[i].preact[k]);
            smooth.axpy(back, &data.augmented(i), 1.0);
        }
        let weights: Vec<f64> = boundary.iter().map(|&i| w2.dot(&samples[i].grad)).collect();
        let points: Vec<Vector> = boundary.iter().map(|&i| data.augmented(i)).collect();
        let qp = solve_subdiff_parts(&smooth, &weights, &points, act, qp_tol)?;
        let orthogonal: Vec<bool> = weights.iter().map(|w| w.abs() < thresholds.orthogonality).collect();
        let edge_count = qp
            .s_star
            .iter()
            .zip(&orthogonal)
            .filter(|&(&s, &orth)| {
                let t = (s - act.lower()) / width;
                !orth && (t.abs() <= thresholds.edge || (1.0 - t).abs() <= thresholds.edge)
            })
            .count();
        units.push(UnitStats {
            unit: k,
            indices: boundary,
            approximately_stationary: qp.objective <= thresholds.qp_objective,
            qp_objective: qp.objective,
            s_star: qp.s_star,
            edge_count,
            orthogonal_count: orthogonal.iter().filter(|&&o| o).count(),
        });
    }
    let m_hat = units.iter().map(|u| u.indices.len()).sum();
    let k_hat = units.iter().map(|u| u.orthogonal_count).sum::<usize>();
    let l_hat = k_hat + units.iter().map(|u| u.edge_count).sum::<usize>();
    Ok(RunReport {
        seed: 0,
        final_risk,
        m_hat,
        l_hat,
        k_hat,
        units,
        verdict: None,
        train_seconds: 0.0,
        stats_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub output_dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub activation: Activation,
    pub adam: AdamConfig,
    pub thresholds: Thresholds,
    pub tester: TesterConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input_dim: 10,
            hidden: 1,
            output_dim: 1,
            samples: 1000,
            seed: 0,
            activation: Activation::relu(),
            adam: AdamConfig::default(),
            thresholds: Thresholds::default(),
            tester: TesterConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn dims(&self) -> Dims {
        Dims::new(self.input_dim, self.hidden, self.output_dim)
    }

    /// Data and initialization seeds derived from `seed`.
    fn seeds(&self) -> (u64, u64) {
        (self.seed.wrapping_mul(2), self.seed.wrapping_mul(2).wrapping_add(1))
    }
}

/// Generates data, trains from a random start and measures the boundary.
pub fn run_experiment(cfg: &RunConfig) -> Result<(NetworkParams, Dataset, RunReport)> {
    let dims = cfg.dims();
    dims.validate()?;
    let (data_seed, init_seed) = cfg.seeds();
    let data = generate_dataset(cfg.input_dim, cfg.output_dim, cfg.samples, data_seed)?;
    let start = init_params(dims, cfg.activation, init_seed)?;
    let started = Instant::now();
    let trained = adam_train(&start, &data, &SquaredLoss, &cfg.adam)?;
    let train_seconds = started.elapsed().as_secs_f64();
    let mut report = boundary_statistics(&trained.params, &data, &SquaredLoss, &cfg.thresholds, cfg.tester.qp_tol)?;
    report.seed = cfg.seed;
    report.train_seconds = train_seconds;
    Ok((trained.params, data, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub input_dim: usize,
    pub hidden: usize,
    pub samples: usize,
    pub runs: usize,
    pub sum_m: usize,
    pub sum_l: usize,
    pub sum_k: usize,
    /// Fraction of runs with `L > 0`.
    pub fraction_l_positive: f64,
    pub reports: Vec<RunReport>,
}

impl Aggregate {
    pub fn from_reports(cfg: &RunConfig, reports: Vec<RunReport>) -> Self {
        let runs = reports.len();
        let positive = reports.iter().filter(|r| r.l_hat > 0).count();
        Self {
            input_dim: cfg.input_dim,
            hidden: cfg.hidden,
            samples: cfg.samples,
            runs,
            sum_m: reports.iter().map(|r| r.m_hat).sum(),
            sum_l: reports.iter().map(|r| r.l_hat).sum(),
            sum_k: reports.iter().map(|r| r.k_hat).sum(),
            fraction_l_positive: if runs == 0 { 0.0 } else { positive as f64 / runs as f64 },
            reports,
        }
    }

    fn average(&self, sum: usize) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            sum as f64 / self.runs as f64
        }
    }

    pub fn header() -> &'static str {
        "(d_x, d_h, m)        | # Runs | Sum M (Avg.)       | Sum L (Avg.)     | Sum K (Avg.)     | P{L>0}"
    }

    pub fn row(&self) -> String {
        format!(
            "{:<20} | {:>6} | {:<18} | {:<16} | {:<16} | {}",
            format!("({}, {}, {})", self.input_dim, self.hidden, self.samples),
            self.runs,
            format!("{} ({})", self.sum_m, self.average(self.sum_m)),
            format!("{} ({})", self.sum_l, self.average(self.sum_l)),
            format!("{} ({})", self.sum_k, self.average(self.sum_k)),
            self.fraction_l_positive
        )
    }
}

/// Runs seeds `first_seed .. first_seed + runs` in parallel; reports come
/// back in seed order.
pub fn run_many(cfg: &RunConfig, first_seed: u64, runs: usize) -> Result<Aggregate> {
    let reports: Result<Vec<RunReport>> = (0..runs as u64)
        .into_par_iter()
        .map(|j| {
            let cfg = RunConfig {
                seed: first_seed + j,
                ..cfg.clone()
            };
            run_experiment(&cfg).map(|(_, _, r)| r)
        })
        .collect();
    Ok(Aggregate::from_reports(cfg, reports?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_dataset;

    #[test]
    fn generic_point_has_no_boundary() {
        let data = generate_dataset(3, 1, 20, 4).unwrap();
        let params = init_params(Dims::new(3, 2, 1), Activation::relu(), 9).unwrap();
        let mut params = params;
        params.b1 = Vector::from_element(2, 0.123);
        let r = boundary_statistics(&params, &data, &SquaredLoss, &Thresholds::default(), 1e-10).unwrap();
        assert_eq!((r.m_hat, r.l_hat, r.k_hat), (0, 0, 0));
        assert!(r.units.is_empty());
    }

    #[test]
    fn short_runs_are_deterministic() {
        let cfg = RunConfig {
            input_dim: 3,
            samples: 30,
            adam: AdamConfig {
                iterations: 200,
                decay_period: 50,
                ..AdamConfig::default()
            },
            ..RunConfig::default()
        };
        let a = run_many(&cfg, 0, 3).unwrap();
        let b = run_many(&cfg, 0, 3).unwrap();
        let strip = |agg: &Aggregate| {
            agg.reports
                .iter()
                .map(|r| (r.seed, r.final_risk.to_bits(), r.m_hat, r.l_hat, r.k_hat))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert!(a.reports.iter().all(|r| r.k_hat <= r.l_hat && r.l_hat <= r.m_hat));
    }
}
