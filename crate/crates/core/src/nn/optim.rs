use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Per-slot momentum buffers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SgdState {
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn velocity<'a>(&'a self, store: &ParamStore, name: &str) -> Result<Option<&'a [f64]>> {
        let slot = store.slot(name)?;
        Ok(self.velocity.get(slot).map(Vec::as_slice))
    }
}

/// One momentum-SGD update over every slot a backward pass touched:
///
/// `v <- momentum * v + grad + weight_decay * param` (decay on weights only),
/// `param <- param - lr * v`.
///
/// Each physical slot is visited once, so shared blocks are updated exactly
/// once per step with the summed gradient of all their paths.
pub fn sgd_step(params: &mut ParamStore, grads: &Gradients, cfg: &SgdConfig, state: &mut SgdState) -> Result<()> {
    if !grads.is_congruent(params) {
        return Err(Error::StaleCache("gradients do not match the parameter store".into()));
    }
    for (slot, g) in grads.slots.iter().enumerate() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(params.slots()[slot].name.clone()));
        }
    }
    if state.velocity.len() != params.len() {
        state.velocity = params.slots().iter().map(|p| vec![0.0; p.data.len()]).collect();
    }
    for (slot, g) in grads.slots.iter().enumerate() {
        if !grads.touched[slot] {
            continue;
        }
        let decay = if params.slots()[slot].decay { cfg.weight_decay } else { 0.0 };
        let v = &mut state.velocity[slot];
        let p = params.slot_data_mut(slot);
        for ((pv, vv), gv) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *vv = cfg.momentum * *vv + gv + decay * *pv;
            *pv -= cfg.lr * *vv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", vec![2], vec![1.0, -2.0], true).unwrap();
        s.add("b", vec![1], vec![0.5], false).unwrap();
        s
    }

    fn grads(s: &ParamStore, w: [f64; 2], b: f64) -> Gradients {
        let mut g = Gradients::for_store(s);
        g.get_mut(s, "w").unwrap().copy_from_slice(&w);
        g.get_mut(s, "b").unwrap()[0] = b;
        g
    }

    #[test]
    fn plain_gradient_descent() {
        let mut s = store();
        let g = grads(&s, [0.25, -1.0], 2.0);
        let cfg = SgdConfig { lr: 1.0, momentum: 0.0, weight_decay: 0.0 };
        sgd_step(&mut s, &g, &cfg, &mut SgdState::new()).unwrap();
        assert_eq!(s.get("w").unwrap(), &[0.75, -1.0]);
        assert_eq!(s.get("b").unwrap(), &[-1.5]);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = store();
        let g = grads(&s, [0.0, 0.0], 0.0);
        let cfg = SgdConfig { lr: 0.1, momentum: 0.9, weight_decay: 0.0 };
        sgd_step(&mut s, &g, &cfg, &mut SgdState::new()).unwrap();
        assert_eq!(s, store());
    }

    #[test]
    fn two_momentum_steps_match_unrolled_recurrence() {
        let (lr, mu, wd) = (0.1, 0.9, 0.01);
        let cfg = SgdConfig { lr, momentum: mu, weight_decay: wd };
        let mut s = store();
        let mut st = SgdState::new();
        let (g1, g2) = (0.3, -0.7);
        let first = grads(&s, [g1, 0.0], 0.2);
        sgd_step(&mut s, &first, &cfg, &mut st).unwrap();
        let second = grads(&s, [g2, 0.0], 0.2);
        sgd_step(&mut s, &second, &cfg, &mut st).unwrap();
        // Unrolled for w[0] (decayed) and b (not decayed).
        let p0 = 1.0;
        let v1 = g1 + wd * p0;
        let p1 = p0 - lr * v1;
        let v2 = mu * v1 + g2 + wd * p1;
        let p2 = p1 - lr * v2;
        assert!((s.get("w").unwrap()[0] - p2).abs() < 1e-15);
        let bv1 = 0.2;
        let bp1 = 0.5 - lr * bv1;
        let bv2 = mu * bv1 + 0.2;
        assert!((s.get("b").unwrap()[0] - (bp1 - lr * bv2)).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_is_rejected_by_name() {
        let mut s = store();
        let g = grads(&s, [f64::NAN, 0.0], 0.0);
        let cfg = SgdConfig { lr: 0.1, momentum: 0.9, weight_decay: 0.0 };
        let err = sgd_step(&mut s, &g, &cfg, &mut SgdState::new()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "w"));
        assert_eq!(s, store());
    }

    #[test]
    fn shared_slot_updated_once() {
        let mut s = ParamStore::new();
        s.add("a", vec![1], vec![1.0], true).unwrap();
        s.share("b", "a").unwrap();
        let mut g = Gradients::for_store(&s);
        g.get_mut(&s, "a").unwrap()[0] += 1.0;
        g.get_mut(&s, "b").unwrap()[0] += 1.0;
        let cfg = SgdConfig { lr: 0.5, momentum: 0.0, weight_decay: 0.0 };
        sgd_step(&mut s, &g, &cfg, &mut SgdState::new()).unwrap();
        assert_eq!(s.get("b").unwrap(), &[0.0]);
    }

    #[test]
    fn untouched_slots_are_not_decayed() {
        let mut s = store();
        let mut g = Gradients::for_store(&s);
        g.get_mut(&s, "b").unwrap()[0] = 1.0;
        let cfg = SgdConfig { lr: 0.1, momentum: 0.9, weight_decay: 0.5 };
        sgd_step(&mut s, &g, &cfg, &mut SgdState::new()).unwrap();
        assert_eq!(s.get("w").unwrap(), &[1.0, -2.0]);
    }
}
