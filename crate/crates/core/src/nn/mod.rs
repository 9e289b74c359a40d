//! Small differentiable-layer kit: dense, conv, pooling, residual blocks,
//! manual backpropagation, momentum SGD and a finite-difference checker.
//! All arithmetic is `f64`.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_sequential, GradCheckOptions, GradCheckReport};
pub use layers::{concat, split, Cache, LayerSpec, Sequential};
pub use optim::{sgd_step, SgdConfig, SgdState};
pub use params::{Gradients, Param, ParamStore};
pub use tensor::{sigmoid, Tensor};

/// Add uniform noise in `[-scale, scale]` to every parameter. Gradient checks
/// use this to move zero-initialised biases off ReLU kinks.
pub fn jitter(params: &mut ParamStore, scale: f64, seed: u64) {
    use rand::Rng as _;
    let mut r = crate::rng::substream(seed, "jitter");
    for slot in 0..params.len() {
        for v in params.slot_data_mut(slot) {
            *v += r.random_range(-scale..scale);
        }
    }
}
