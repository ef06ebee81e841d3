use super::data::Dataset;
use super::loss::LossModel;
use super::params::NetworkParams;
use crate::error::{Error, Result};
use crate::numerics::{sym_eig, Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    pub output: Vector,
    pub preact: Vector,
    pub hidden: Vector,
}

fn check_input(params: &NetworkParams, x: &Vector) -> Result<()> {
    if x.len() != params.w1.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "input has dimension {}, network expects {}",
            x.len(),
            params.w1.ncols()
        )));
    }
    Ok(())
}

pub fn forward(params: &NetworkParams, x: &Vector) -> Result<Forward> {
    check_input(params, x)?;
    let preact = &params.w1 * x + &params.b1;
    let hidden = preact.map(|t| params.activation.apply(t));
    let output = &params.w2 * &hidden + &params.b2;
    Ok(Forward {
        output,
        preact,
        hidden,
    })
}

fn check_data(params: &NetworkParams, data: &Dataset) -> Result<()> {
    let dims = params.dims();
    if data.input_dim() != dims.input || data.output_dim() != dims.output {
        return Err(Error::ShapeMismatch(format!(
            "dataset is ({}, {}), network is ({}, {})",
            data.input_dim(),
            data.output_dim(),
            dims.input,
            dims.output
        )));
    }
    Ok(())
}

pub fn empirical_risk(params: &NetworkParams, data: &Dataset, loss: &dyn LossModel) -> Result<f64> {
    check_data(params, data)?;
    let mut total = 0.0;
    for (x, y) in data.inputs().iter().zip(data.labels()) {
        let f = forward(params, x)?;
        total += loss.value(&f.output, y);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: "empirical risk",
        });
    }
    Ok(total)
}

/// Per-sample quantities at the point under test.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDerivatives {
    pub output: Vector,
    pub preact: Vector,
    pub hidden: Vector,
    /// Gradient of the loss with respect to the prediction.
    pub grad: Vector,
    /// Hessian of the loss with respect to the prediction.
    pub hessian: Matrix,
}

/// Relative slack allowed below zero when checking loss Hessians for PSD-ness.
const PSD_SLACK: f64 = 1e-12;

pub fn per_sample_derivatives(
    params: &NetworkParams,
    data: &Dataset,
    loss: &dyn LossModel,
) -> Result<Vec<SampleDerivatives>> {
    check_data(params, data)?;
    let mut out = Vec::with_capacity(data.len());
    for (i, (x, y)) in data.inputs().iter().zip(data.labels()).enumerate() {
        let f = forward(params, x)?;
        let grad = loss.gradient(&f.output, y);
        let hessian = loss.hessian(&f.output, y);
        if !grad.iter().chain(hessian.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "loss derivatives",
            });
        }
        let eig = sym_eig(&hessian)?;
        let lowest = eig.min().unwrap_or(0.0);
        if lowest < -PSD_SLACK * eig.spectral_radius().max(1.0) {
            return Err(Error::NonPsdHessian {
                sample: i,
                min_eigenvalue: lowest,
            });
        }
        out.push(SampleDerivatives {
            output: f.output,
            preact: f.preact,
            hidden: f.hidden,
            grad,
            hessian,
        });
    }
    Ok(out)
}

/// Risk and its (sub)gradient in the flat parameter layout, using `h'(0) = s_plus`.
pub fn risk_and_gradient(
    params: &NetworkParams,
    data: &Dataset,
    loss: &dyn LossModel,
) -> Result<(f64, Vector)> {
    check_data(params, data)?;
    let dims = params.dims();
    let (dx, dh) = (dims.input, dims.hidden);
    let mut grad = Vector::zeros(dims.param_count());
    let mut risk = 0.0;
    for (x, y) in data.inputs().iter().zip(data.labels()) {
        let f = forward(params, x)?;
        risk += loss.value(&f.output, y);
        let g = loss.gradient(&f.output, y);
        for (j, idx) in dims.delta2_range().enumerate() {
            grad[idx] += g[j];
        }
        for k in 0..dh {
            let o = f.hidden[k];
            for (j, idx) in dims.u_range(k).enumerate() {
                grad[idx] += g[j] * o;
            }
            let back = params.w2.column(k).dot(&g) * params.activation.derivative(f.preact[k]);
            if back != 0.0 {
                let r = dims.v_range(k);
                for j in 0..dx {
                    grad[r.start + j] += back * x[j];
                }
                grad[r.start + dx] += back;
            }
        }
    }
    if !risk.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "risk gradient",
        });
    }
    Ok((risk, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::activation::Activation;
    use crate::network::loss::SquaredLoss;
    use crate::network::params::{Dims, Perturbation};

    fn scalar_net(activation: Activation) -> NetworkParams {
        NetworkParams::new(
            Matrix::from_element(1, 1, 1.0),
            Vector::zeros(1),
            Matrix::from_element(1, 1, 1.0),
            Vector::zeros(1),
            activation,
        )
        .unwrap()
    }

    #[test]
    fn forward_examples() {
        let relu = scalar_net(Activation::relu());
        let y = |p: &NetworkParams, x: f64| forward(p, &Vector::from_element(1, x)).unwrap().output[0];
        assert_eq!(y(&relu, 2.0), 2.0);
        assert_eq!(y(&relu, -1.0), 0.0);
        let leaky = scalar_net(Activation::leaky(0.1).unwrap());
        assert_eq!(y(&leaky, -1.0), -0.1);
        assert!(forward(&relu, &Vector::zeros(2)).is_err());
    }

    #[test]
    fn single_sample_risk() {
        let p = scalar_net(Activation::relu());
        let data = Dataset::new(vec![Vector::from_element(1, 2.0)], vec![Vector::from_element(1, 1.0)]).unwrap();
        assert_eq!(empirical_risk(&p, &data, &SquaredLoss).unwrap(), 0.5);
        let d = per_sample_derivatives(&p, &data, &SquaredLoss).unwrap();
        assert_eq!(d[0].grad[0], 1.0);
        assert_eq!(d[0].hessian, Matrix::identity(1, 1));
    }

    #[test]
    fn gradient_matches_directional_difference_at_smooth_point() {
        let dims = Dims::new(2, 3, 2);
        let p = NetworkParams::new(
            Matrix::from_row_slice(3, 2, &[0.3, -0.7, 1.1, 0.4, -0.2, 0.9]),
            Vector::from_vec(vec![0.1, -0.3, 0.25]),
            Matrix::from_row_slice(2, 3, &[0.5, -1.0, 0.7, 0.2, 0.3, -0.6]),
            Vector::from_vec(vec![0.05, -0.1]),
            Activation::leaky(0.2).unwrap(),
        )
        .unwrap();
        let data = Dataset::new(
            vec![
                Vector::from_vec(vec![1.0, 0.5]),
                Vector::from_vec(vec![-0.8, 0.3]),
                Vector::from_vec(vec![0.2, -1.4]),
            ],
            vec![
                Vector::from_vec(vec![0.3, 0.1]),
                Vector::from_vec(vec![-0.2, 0.4]),
                Vector::from_vec(vec![0.9, -0.5]),
            ],
        )
        .unwrap();
        let (risk, grad) = risk_and_gradient(&p, &data, &SquaredLoss).unwrap();
        assert!((risk - empirical_risk(&p, &data, &SquaredLoss).unwrap()).abs() < 1e-14);
        let h = 1e-6;
        for j in 0..dims.param_count() {
            let mut e = Vector::zeros(dims.param_count());
            e[j] = 1.0;
            let eta = Perturbation::from_flat(dims, &e).unwrap();
            let plus = empirical_risk(&p.perturbed(&eta, h), &data, &SquaredLoss).unwrap();
            let minus = empirical_risk(&p.perturbed(&eta, -h), &data, &SquaredLoss).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            assert!((fd - grad[j]).abs() < 1e-7, "coordinate {j}: {fd} vs {}", grad[j]);
        }
    }
}
