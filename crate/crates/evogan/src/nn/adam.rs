//! Adaptive-moment gradient descent.

/// Adam over a fixed, ordered set of parameter tensors.
///
/// Moment buffers are allocated on the first step from the visit order,
/// which therefore has to be stable across the optimizer's lifetime.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    slots: Vec<Slot>,
}

#[derive(Debug, Clone)]
struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            slots: Vec::new(),
        }
    }

    /// Applies one update. `visit` must call the provided closure once per
    /// parameter tensor, in the same order every step.
    pub fn step(&mut self, visit: impl FnOnce(&mut dyn FnMut(&str, &mut [f64], &mut [f64]))) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let slots = &mut self.slots;
        let mut index = 0usize;
        visit(&mut |name: &str, param: &mut [f64], grad: &mut [f64]| {
            if index == slots.len() {
                slots.push(Slot {
                    m: vec![0.0; param.len()],
                    v: vec![0.0; param.len()],
                });
            }
            let slot = &mut slots[index];
            assert_eq!(
                slot.m.len(),
                param.len(),
                "parameter {name} changed size between optimizer steps"
            );
            for i in 0..param.len() {
                let g = grad[i];
                slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * g;
                slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * g * g;
                let mhat = slot.m[i] / bc1;
                let vhat = slot.v[i] / bc2;
                param[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
            index += 1;
        });
    }

    /// Serialises step count and moment buffers.
    pub fn export_state(&self) -> (u64, Vec<(Vec<f64>, Vec<f64>)>) {
        (
            self.t,
            self.slots.iter().map(|s| (s.m.clone(), s.v.clone())).collect(),
        )
    }

    pub fn import_state(&mut self, t: u64, slots: Vec<(Vec<f64>, Vec<f64>)>) {
        self.t = t;
        self.slots = slots.into_iter().map(|(m, v)| Slot { m, v }).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// One Adam step on a single scalar, checked against the update rule
    /// evaluated by hand.
    #[test]
    fn single_step_matches_formula() {
        let mut opt = Adam::new(0.1, 0.5, 0.999);
        let mut p = vec![1.0];
        let mut g = vec![0.4];
        opt.step(|f| f("p", &mut p, &mut g));
        // m = 0.5*0 + 0.5*0.4 = 0.2 ; v = 0.001*0.16 = 0.00016
        // mhat = 0.2/0.5 = 0.4 ; vhat = 0.00016/0.001 = 0.16
        // p = 1 - 0.1 * 0.4 / (0.4 + 1e-8)
        let expected = 1.0 - 0.1 * 0.4 / (0.16f64.sqrt() + 1e-8);
        assert_abs_diff_eq!(p[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn state_round_trip_preserves_trajectory() {
        let mut a = Adam::new(0.05, 0.9, 0.999);
        let mut b = Adam::new(0.05, 0.9, 0.999);
        let mut pa = vec![0.3, -0.7];
        let mut pb = vec![0.3, -0.7];
        for i in 0..5 {
            let mut g = vec![0.1 * (i as f64 + 1.0), -0.2];
            a.step(|f| f("p", &mut pa, &mut g));
        }
        let (t, slots) = a.export_state();
        b.import_state(t, slots);
        pb.copy_from_slice(&pa);
        for i in 5..10 {
            let mut ga = vec![0.1 * (i as f64 + 1.0), -0.2];
            let mut gb = ga.clone();
            a.step(|f| f("p", &mut pa, &mut ga));
            b.step(|f| f("p", &mut pb, &mut gb));
        }
        assert_eq!(pa, pb);
    }
}
