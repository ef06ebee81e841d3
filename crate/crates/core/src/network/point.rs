use super::boundary::{boundary_analysis, BoundaryAnalysis};
use super::data::Dataset;
use super::derivatives::{per_sample_derivatives, SampleDerivatives};
use super::loss::LossModel;
use super::params::{Dims, NetworkParams};
use crate::error::Result;
use crate::numerics::Vector;

/// Everything the tests need to know about one point `z`: per-sample
/// derivatives plus the boundary structure.
///
/// Boundary entries are snapped: for `i` in `B_k` the stored preactivation
/// and hidden output are exactly zero, so a point detected with a positive
/// `boundary_tol` is analysed as if it sat on the kink.
pub struct PointContext<'a> {
    pub params: &'a NetworkParams,
    pub data: &'a Dataset,
    pub loss: &'a dyn LossModel,
    pub samples: Vec<SampleDerivatives>,
    pub boundary: BoundaryAnalysis,
    pub augmented: Vec<Vector>,
}

impl<'a> PointContext<'a> {
    pub fn new(
        params: &'a NetworkParams,
        data: &'a Dataset,
        loss: &'a dyn LossModel,
        boundary_tol: f64,
        rank_tol: f64,
    ) -> Result<Self> {
        params.validate()?;
        let mut samples = per_sample_derivatives(params, data, loss)?;
        let boundary = boundary_analysis(params, data, &samples, boundary_tol, rank_tol)?;
        for (k, unit) in boundary.units.iter().enumerate() {
            for &i in &unit.indices {
                samples[i].preact[k] = 0.0;
                samples[i].hidden[k] = 0.0;
            }
        }
        let augmented = (0..data.len()).map(|i| data.augmented(i)).collect();
        Ok(Self {
            params,
            data,
            loss,
            samples,
            boundary,
            augmented,
        })
    }

    pub fn dims(&self) -> Dims {
        self.params.dims()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `W2[:,k]^T grad_i`.
    pub fn unit_gradient(&self, k: usize, i: usize) -> f64 {
        self.params.w2.column(k).dot(&self.samples[i].grad)
    }

    /// `max(1, sum_i |grad_i|)`, the reference size for zero tests.
    pub fn gradient_scale(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.grad.norm())
            .sum::<f64>()
            .max(1.0)
    }
}
