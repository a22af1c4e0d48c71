//! Adam with bias correction and the reduce-on-plateau learning-rate
//! scheduler.

use super::params::ParamSet;
use super::tape::Tensor;

pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params
                .tensors()
                .map(|(_, t)| Tensor::zeros(t.dim()))
                .collect(),
            v: params
                .tensors()
                .map(|(_, t)| Tensor::zeros(t.dim()))
                .collect(),
        }
    }

    /// One Adam update over all parameters; `grads` aligned with the
    /// parameter order.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) {
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, (_, p)) in params.tensors_mut().enumerate() {
            let g = &grads[idx];
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            m.zip_mut_with(g, |mi, &gi| {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi
            });
            v.zip_mut_with(g, |vi, &gi| {
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi
            });
            ndarray::Zip::from(p)
                .and(&*m)
                .and(&*v)
                .for_each(|pi, &mi, &vi| {
                    let mhat = mi / bc1;
                    let vhat = vi / bc2;
                    *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }
}

/// Multiplies the learning rate by `factor` when the monitored metric fails
/// to improve by `min_delta` for `patience` consecutive epochs, down to
/// `floor`.
pub struct ReduceOnPlateau {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub floor: f64,
    best: f64,
    stale: usize,
}

impl ReduceOnPlateau {
    pub fn new(lr: f64, floor: f64) -> Self {
        ReduceOnPlateau {
            lr,
            factor: 0.1,
            patience: 10,
            min_delta: 1e-4,
            floor,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Feed one epoch's metric; returns the (possibly reduced) learning rate.
    pub fn observe(&mut self, metric: f64) -> f64 {
        if metric < self.best - self.min_delta {
            self.best = metric;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.lr = (self.lr * self.factor).max(self.floor);
                self.stale = 0;
            }
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single_param(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", array![[v]]);
        p
    }

    #[test]
    fn first_step_is_signed_lr() {
        let mut params = single_param(0.0);
        let mut adam = AdamState::new(&params, 0.1);
        adam.step(&mut params, &[array![[3.7]]]);
        let w = params.get("w").unwrap()[[0, 0]];
        assert!((w + 0.1).abs() < 1e-6, "{w}");
    }

    #[test]
    fn zero_grad_no_change() {
        let mut params = single_param(1.25);
        let mut adam = AdamState::new(&params, 0.1);
        adam.step(&mut params, &[array![[0.0]]]);
        assert_eq!(params.get("w").unwrap()[[0, 0]], 1.25);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut params = single_param(1.0);
        let mut adam = AdamState::new(&params, 0.1);
        for _ in 0..200 {
            let w = params.get("w").unwrap()[[0, 0]];
            adam.step(&mut params, &[array![[2.0 * w]]]);
        }
        assert!(params.get("w").unwrap()[[0, 0]].abs() < 0.05);
    }

    #[test]
    fn adam_sign_symmetry() {
        let run = |sign: f64| {
            let mut params = single_param(0.0);
            let mut adam = AdamState::new(&params, 0.01);
            for i in 0..20 {
                adam.step(&mut params, &[array![[sign * (1.0 + i as f64)]]]);
            }
            params.get("w").unwrap()[[0, 0]]
        };
        assert!((run(1.0) + run(-1.0)).abs() < 1e-9);
    }

    #[test]
    fn plateau_rule_trace() {
        let mut sched = ReduceOnPlateau::new(1e-3, 1e-6);
        sched.patience = 3;
        // strictly decreasing metric: unchanged
        for m in [1.0, 0.9, 0.8, 0.7] {
            assert_eq!(sched.observe(m), 1e-3);
        }
        // constant metric: drop at the 3rd stale epoch
        let mut sched = ReduceOnPlateau::new(1e-3, 1e-6);
        sched.patience = 3;
        sched.observe(0.5);
        assert_eq!(sched.observe(0.5), 1e-3);
        assert_eq!(sched.observe(0.5), 1e-3);
        assert!((sched.observe(0.5) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn plateau_floor() {
        let mut sched = ReduceOnPlateau::new(1e-6, 1e-6);
        sched.patience = 1;
        for _ in 0..5 {
            sched.observe(1.0);
        }
        assert_eq!(sched.lr, 1e-6);
    }
}
