use super::params::{GradientStore, ParameterStore};
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Adam optimizer with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Non-finite gradients leave parameters and
    /// optimizer state untouched and return [`Error::NonFinite`].
    pub fn step(&mut self, params: &mut ParameterStore<T>, grads: &GradientStore<T>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Dimension {
                context: "optimizer gradients",
                expected: params.len(),
                actual: grads.len(),
            });
        }
        if !grads.all_finite() {
            return Err(Error::NonFinite("gradient; optimizer step skipped".into()));
        }
        if self.m.len() != params.len() {
            self.m = vec![T::ZERO; params.len()];
            self.v = vec![T::ZERO; params.len()];
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_b1 = T::from_f64(1.0 - self.beta1);
        let one_b2 = T::from_f64(1.0 - self.beta2);
        let step_size = T::from_f64(self.learning_rate / (1.0 - self.beta1.powi(t)));
        let v_corr = T::from_f64(1.0 / (1.0 - self.beta2.powi(t)));
        let eps = T::from_f64(self.eps);
        for (((p, &g), m), v) in params
            .as_mut_slice()
            .iter_mut()
            .zip(grads.as_slice())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *p -= step_size * *m / ((*v * v_corr).sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: Vec<f64>) -> ParameterStore<f64> {
        ParameterStore { values }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = store(vec![0.3, -1.2]);
        let before = p.clone();
        let mut adam = Adam::new(1e-3);
        for _ in 0..5 {
            adam.step(&mut p, &GradientStore::zeros(2)).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [0.01, 3.0, -250.0] {
            let mut p = store(vec![1.0]);
            let mut adam = Adam::new(1e-4);
            adam.step(&mut p, &GradientStore { values: vec![g] }).unwrap();
            let delta = p.values[0] - 1.0;
            assert!((delta + 1e-4 * g.signum()).abs() < 1e-9, "g={g} delta={delta}");
        }
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut p = store(vec![1.0, 2.0]);
        let mut adam = Adam::new(1e-2);
        let err = adam.step(
            &mut p,
            &GradientStore {
                values: vec![f64::NAN, 1.0],
            },
        );
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(p.values, vec![1.0, 2.0]);
        assert_eq!(adam.steps_taken(), 0);
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut p = store(vec![0.5, -0.5, 2.0]);
            let mut adam = Adam::new(1e-2);
            for i in 0..50 {
                let g: Vec<f64> = p.values.iter().map(|x| 2.0 * x + i as f64 * 0.01).collect();
                adam.step(&mut p, &GradientStore { values: g }).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
