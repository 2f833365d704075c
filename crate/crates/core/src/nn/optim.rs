use super::tensor::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&self, p: &mut ParamSet) {
        optimizer_step(p, self.lr, self.beta1, self.beta2, self.eps);
    }
}

/// One bias-corrected adaptive-moment update from the accumulated grads.
/// Missing grads count as zero. Grads are zeroed afterwards.
pub fn optimizer_step(p: &mut ParamSet, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    p.adam.step += 1;
    let t = p.adam.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for id in 0..p.len() {
        let grad = p.tensor_mut(id).grad.take();
        let n = p.tensor(id).len();
        let zeros;
        let g = match &grad {
            Some(g) => g.as_slice(),
            None => {
                zeros = vec![0.0; n];
                &zeros
            }
        };
        let mut m = std::mem::take(&mut p.adam.m[id]);
        let mut v = std::mem::take(&mut p.adam.v[id]);
        let data = &mut p.tensor_mut(id).data;
        for i in 0..n {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            data[i] -= lr * mh / (vh.sqrt() + eps);
        }
        p.adam.m[id] = m;
        p.adam.v[id] = v;
        p.tensor_mut(id).grad = grad;
    }
    p.zero_grads();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::{Gradients, Tensor};

    fn one_param(v: f64, g: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.add("w", Tensor::new(&[2], vec![v, -v]).unwrap());
        p.accumulate(&Gradients(vec![vec![g, -g]]));
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = one_param(1.0, 0.37);
        Adam::new(0.01).step(&mut p);
        let w = &p.get("w").unwrap().data;
        assert!((w[0] - (1.0 - 0.01)).abs() < 1e-6);
        assert!((w[1] - (-1.0 + 0.01)).abs() < 1e-6);
        assert_eq!(p.step_count(), 1);
        assert_eq!(p.get("w").unwrap().grad.as_deref(), Some(&[0.0, 0.0][..]));
    }

    #[test]
    fn zero_grad_is_a_no_op() {
        let mut p = one_param(2.5, 0.0);
        Adam::new(0.1).step(&mut p);
        assert_eq!(p.get("w").unwrap().data, vec![2.5, -2.5]);
        let mut q = ParamSet::new();
        q.add("w", Tensor::filled(&[3], 1.0));
        Adam::new(0.1).step(&mut q);
        assert_eq!(q.get("w").unwrap().data, vec![1.0; 3]);
    }

    #[test]
    fn trajectories_are_reproducible() {
        let run = || {
            let mut p = one_param(0.3, 0.0);
            for k in 0..5 {
                p.accumulate(&Gradients(vec![vec![k as f64 * 0.1 - 0.2, 0.05]]));
                Adam::new(0.05).step(&mut p);
            }
            p.get("w").unwrap().data.clone()
        };
        assert_eq!(run(), run());
    }
}
