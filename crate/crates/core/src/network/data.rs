use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{rank, Matrix, Vector};

/// Training set `(x_i, y_i)`, `i = 1..m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vector>,
    labels: Vec<Vector>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vector>, labels: Vec<Vector>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyInput("dataset needs at least one sample"));
        }
        if inputs.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let dx = inputs[0].len();
        let dy = labels[0].len();
        if dx == 0 || dy == 0 {
            return Err(Error::ShapeMismatch("zero-dimensional samples".into()));
        }
        if inputs.iter().any(|x| x.len() != dx) || labels.iter().any(|y| y.len() != dy) {
            return Err(Error::ShapeMismatch("samples differ in dimension".into()));
        }
        let finite = inputs
            .iter()
            .chain(labels.iter())
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::NonFinite { context: "dataset" });
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.labels[0].len()
    }

    pub fn inputs(&self) -> &[Vector] {
        &self.inputs
    }

    pub fn labels(&self) -> &[Vector] {
        &self.labels
    }

    pub fn input(&self, i: usize) -> &Vector {
        &self.inputs[i]
    }

    pub fn label(&self, i: usize) -> &Vector {
        &self.labels[i]
    }

    /// `(x_i, 1)`.
    pub fn augmented(&self, i: usize) -> Vector {
        augment(&self.inputs[i])
    }

    pub fn with_labels(&self, labels: Vec<Vector>) -> Result<Self> {
        Self::new(self.inputs.clone(), labels)
    }
}

pub fn augment(x: &Vector) -> Vector {
    let n = x.len();
    Vector::from_fn(n + 1, |j, _| if j < n { x[j] } else { 1.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneralPositionMode {
    /// Check every `(d_x+1)`-subset when their number is at most the budget,
    /// otherwise fall back to sampling.
    Exhaustive { max_subsets: usize },
    Sampled { subsets: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralPositionReport {
    pub passed: bool,
    pub exhaustive: bool,
    pub subsets_checked: usize,
    /// First offending subset, if any.
    pub violation: Option<Vec<usize>>,
}

/// Checks that no `d_x+1` inputs lie on a common affine hyperplane, i.e.
/// that the augmented inputs of every `(d_x+1)`-subset are independent.
pub fn validate_general_position(
    data: &Dataset,
    mode: GeneralPositionMode,
    rank_tol: f64,
) -> GeneralPositionReport {
    let m = data.len();
    let size = data.input_dim() + 1;
    if m < size {
        return GeneralPositionReport {
            passed: true,
            exhaustive: true,
            subsets_checked: 0,
            violation: None,
        };
    }
    let augmented: Vec<Vector> = (0..m).map(|i| data.augmented(i)).collect();
    let dependent = |subset: &[usize]| -> bool {
        let cols: Vec<Vector> = subset.iter().map(|&i| augmented[i].clone()).collect();
        rank(&Matrix::from_columns(&cols), rank_tol).map_or(true, |r| r < size)
    };

    let (exhaustive, budget, seed) = match mode {
        GeneralPositionMode::Exhaustive { max_subsets } => {
            (binomial_at_most(m, size, max_subsets), max_subsets, 0)
        }
        GeneralPositionMode::Sampled { subsets, seed } => (false, subsets, seed),
    };

    let mut checked = 0;
    if exhaustive {
        let mut subset: Vec<usize> = (0..size).collect();
        loop {
            checked += 1;
            if dependent(&subset) {
                return GeneralPositionReport {
                    passed: false,
                    exhaustive: true,
                    subsets_checked: checked,
                    violation: Some(subset),
                };
            }
            if !next_combination(&mut subset, m) {
                break;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..budget {
            let mut subset = sample(&mut rng, m, size).into_vec();
            subset.sort_unstable();
            checked += 1;
            if dependent(&subset) {
                return GeneralPositionReport {
                    passed: false,
                    exhaustive: false,
                    subsets_checked: checked,
                    violation: Some(subset),
                };
            }
        }
    }
    GeneralPositionReport {
        passed: true,
        exhaustive,
        subsets_checked: checked,
        violation: None,
    }
}

fn binomial_at_most(n: usize, k: usize, limit: usize) -> bool {
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u128 / (j + 1) as u128;
        if acc > limit as u128 {
            return false;
        }
    }
    true
}

fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < n - k + i {
            subset[i] += 1;
            for j in (i + 1)..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RANK_TOL;

    fn points(xs: &[[f64; 2]]) -> Dataset {
        Dataset::new(
            xs.iter().map(|p| Vector::from_row_slice(p)).collect(),
            xs.iter().map(|_| Vector::from_element(1, 0.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn collinear_points_fail() {
        let data = points(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [0.0, 1.0]]);
        let report = validate_general_position(
            &data,
            GeneralPositionMode::Exhaustive { max_subsets: 100 },
            RANK_TOL,
        );
        assert!(!report.passed);
        assert_eq!(report.violation, Some(vec![0, 1, 2]));
    }

    #[test]
    fn small_sets_pass_vacuously() {
        let data = points(&[[0.0, 0.0], [1.0, 1.0]]);
        let report = validate_general_position(
            &data,
            GeneralPositionMode::Exhaustive { max_subsets: 100 },
            RANK_TOL,
        );
        assert!(report.passed && report.subsets_checked == 0);
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut subset = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut subset, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
        assert!(binomial_at_most(5, 2, 10));
        assert!(!binomial_at_most(5, 2, 9));
    }

    #[test]
    fn rejects_inconsistent_samples() {
        let r = Dataset::new(
            vec![Vector::zeros(2), Vector::zeros(3)],
            vec![Vector::zeros(1), Vector::zeros(1)],
        );
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            Dataset::new(vec![], vec![]),
            Err(Error::EmptyInput(_))
        ));
    }
}
