use crate::encoder::Real;

/// Adam with decoupled weight decay. Moments are kept in `f32` so a
/// checkpointed optimizer resumes bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamW {
    pub fn new(n: usize, weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn update<F: Real>(&mut self, params: &mut [F], grads: &[F], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let g = g.f64();
            let m1 = self.beta1 * *m as f64 + (1.0 - self.beta1) * g;
            let v1 = self.beta2 * *v as f64 + (1.0 - self.beta2) * g * g;
            *m = m1 as f32;
            *v = v1 as f32;
            let mhat = m1 / bc1;
            let vhat = v1 / bc2;
            let x = p.f64();
            *p = F::of(x - lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * x));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut opt = AdamW::new(3, 0.0);
        let mut p = vec![1.0f64, 1.0, 1.0];
        opt.update(&mut p, &[0.5, -2.0, 0.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - 1.1).abs() < 1e-6);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn decay_is_decoupled_from_the_gradient() {
        let mut opt = AdamW::new(1, 0.5);
        let mut p = vec![2.0f64];
        opt.update(&mut p, &[0.0], 0.1);
        assert!((p[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = AdamW::new(2, 0.0);
        let mut p = vec![3.0f64, -4.0];
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.update(&mut p, &g, 0.05);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }
}
