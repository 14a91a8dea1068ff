//! Central finite-difference verification of reverse-mode gradients.
//!
//! Run this in `f64`: with the 1e-5 step, truncation and roundoff error
//! land around 1e-10 for unit-scale functions, far below the 1e-4
//! acceptance bound. `f32` evaluation is too noisy for that bound and is
//! not supported here.

use super::Tensor;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Relative error floor: elements where both gradients are below this are
/// compared on an absolute scale, which keeps finite-difference noise on
/// near-zero gradients from producing spurious failures.
const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradCheckFailure {
    /// Which input tensor the element belongs to.
    pub input: usize,
    /// Flat element index within that input.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub elements_checked: usize,
    pub failures: Vec<GradCheckFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares reverse-accumulation gradients of `op` (a scalar-valued
/// function of the given inputs) against central finite differences,
/// element by element. Every element whose relative error exceeds
/// `tolerance` is reported with its location.
pub fn grad_check<Op>(op: Op, inputs: &[(Vec<usize>, Vec<f64>)], tolerance: f64) -> GradCheckReport
where
    Op: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    let leaves: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|(shape, values)| Tensor::leaf(shape, values.clone()))
        .collect();
    let out = op(&leaves);
    assert_eq!(out.numel(), 1, "grad_check target must be scalar");
    out.backward();
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|leaf| leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()]))
        .collect();

    let eval = |perturbed: &[Vec<f64>]| -> f64 {
        let tensors: Vec<Tensor<f64>> = inputs
            .iter()
            .zip(perturbed)
            .map(|((shape, _), values)| Tensor::from_vec(shape, values.clone()))
            .collect();
        op(&tensors).item()
    };

    let mut work: Vec<Vec<f64>> = inputs.iter().map(|(_, v)| v.clone()).collect();
    let mut failures = Vec::new();
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for (i, (_, values)) in inputs.iter().enumerate() {
        for j in 0..values.len() {
            let orig = work[i][j];
            work[i][j] = orig + FD_STEP;
            let up = eval(&work);
            work[i][j] = orig - FD_STEP;
            let down = eval(&work);
            work[i][j] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[i][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if rel > max_rel {
                max_rel = rel;
            }
            if rel > tolerance {
                failures.push(GradCheckFailure {
                    input: i,
                    index: j,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
            checked += 1;
        }
    }
    GradCheckReport {
        max_rel_error: max_rel,
        elements_checked: checked,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_layer_gradients_match_finite_differences() {
        let mut rng = crate::rng::Rng::new(17);
        let x: Vec<f64> = (0..8 * 4).map(|_| rng.range(-1.0, 1.0)).collect();
        let w: Vec<f64> = (0..4 * 3).map(|_| rng.range(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.range(-1.0, 1.0)).collect();
        let report = grad_check(
            |t| t[0].matmul(&t[1]).add_row(&t[2]).relu().mul(&t[0].matmul(&t[1]).add_row(&t[2])).sum_all(),
            &[(vec![8, 4], x), (vec![4, 3], w), (vec![3], b)],
            1e-4,
        );
        assert!(report.passed(), "max rel error {}", report.max_rel_error);
        assert!(report.max_rel_error < 1e-4);
    }

    #[test]
    fn softmax_cross_entropy_gradients_match() {
        let mut rng = crate::rng::Rng::new(23);
        let logits: Vec<f64> = (0..5 * 7).map(|_| rng.range(-2.0, 2.0)).collect();
        let report = grad_check(
            |t| t[0].cross_entropy_sum_rows(&[Some(3), Some(0), None, Some(6), Some(2)]),
            &[(vec![5, 7], logits)],
            1e-4,
        );
        assert!(report.passed(), "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let report = grad_check(
            |t| t[0].mul(&Tensor::zeros(t[0].shape())).sum_all().add_scalar(5.0),
            &[(vec![4], vec![1.0, -2.0, 0.5, 3.0])],
            1e-4,
        );
        assert!(report.passed());
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu is evaluated at a kink: x = 0 makes analytic (0) and central
        // difference (0.5) disagree, which the checker must flag.
        let report = grad_check(
            |t| t[0].relu().sum_all(),
            &[(vec![3], vec![1.0, 0.0, -1.0])],
            1e-4,
        );
        assert!(!report.passed());
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].index, 1);
    }
}
