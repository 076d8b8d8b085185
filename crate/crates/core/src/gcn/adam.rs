use ndarray::{Array2, Zip};

use super::{GcnParams, TrainHyper};

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    step: u64,
    first: GcnParams,
    second: GcnParams,
}

impl AdamState {
    pub fn new(params: &GcnParams) -> Self {
        Self {
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

fn update(
    param: &mut Array2<f64>,
    grad: &Array2<f64>,
    first: &mut Array2<f64>,
    second: &mut Array2<f64>,
    hyper: &TrainHyper,
    step: u64,
) {
    let bias1 = 1.0 - hyper.beta1.powf(step as f64);
    let bias2 = 1.0 - hyper.beta2.powf(step as f64);
    Zip::from(param)
        .and(grad)
        .and(first)
        .and(second)
        .for_each(|p, &g, m, v| {
            *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
            *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        });
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut GcnParams, grads: &GcnParams, hyper: &TrainHyper, state: &mut AdamState) {
    state.step += 1;
    let step = state.step;
    update(
        &mut params.w0,
        &grads.w0,
        &mut state.first.w0,
        &mut state.second.w0,
        hyper,
        step,
    );
    update(
        &mut params.w1,
        &grads.w1,
        &mut state.first.w1,
        &mut state.second.w1,
        hyper,
        step,
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_params(a: f64, b: f64) -> GcnParams {
        GcnParams {
            w0: array![[a]],
            w1: array![[b]],
        }
    }

    #[test]
    fn zero_gradient_first_step_is_noop() {
        let mut params = scalar_params(0.3, -1.2);
        let before = params.clone();
        let mut state = AdamState::new(&params);
        adam_step(
            &mut params,
            &scalar_params(0.0, 0.0),
            &TrainHyper::default(),
            &mut state,
        );
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        // Scalar oracle: with g constant, m_hat = g and v_hat = g^2 exactly,
        // so each step moves by lr * |g| / (|g| + eps).
        let hyper = TrainHyper::default();
        let mut params = scalar_params(0.0, 0.0);
        let mut state = AdamState::new(&params);
        let g = scalar_params(0.37, -2.0);
        let mut last = params.clone();
        for _ in 0..2000 {
            adam_step(&mut params, &g, &hyper, &mut state);
            let d0 = (params.w0[[0, 0]] - last.w0[[0, 0]]).abs();
            let d1 = (params.w1[[0, 0]] - last.w1[[0, 0]]).abs();
            assert!((d0 - hyper.lr * 0.37 / (0.37 + hyper.eps)).abs() < 1e-12);
            assert!((d1 - hyper.lr).abs() < 1e-9);
            last = params.clone();
        }
        assert!(params.w0[[0, 0]] < 0.0 && params.w1[[0, 0]] > 0.0);
    }

    #[test]
    fn identical_runs_are_bitwise_equal() {
        let run = || {
            let mut params = scalar_params(0.5, 0.5);
            let mut state = AdamState::new(&params);
            for k in 0..50 {
                let g = scalar_params((k as f64).sin(), (k as f64 * 0.3).cos());
                adam_step(&mut params, &g, &TrainHyper::default(), &mut state);
            }
            params
        };
        let (a, b) = (run(), run());
        assert_eq!(a.w0[[0, 0]].to_bits(), b.w0[[0, 0]].to_bits());
        assert_eq!(a.w1[[0, 0]].to_bits(), b.w1[[0, 0]].to_bits());
    }
}
