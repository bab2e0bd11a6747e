//! Two-dimensional convolutional NMF: templates convolved with activations in
//! time (lags) and frequency (shifts), a joint factorization of two songs
//! that share activations, activation fitting against fixed templates, and
//! soft-mask track separation.

mod factorize;
mod mask;
mod model;
mod shift;

pub use factorize::{
    convergence_log, fit_activations, joint_factorize, joint_factorize_pretrained, ActivationFit, JointFactorization,
};
pub use mask::{soft_mask_filter, soft_masks};
pub use model::{
    component_reconstruct, component_reconstructions, kl_divergence, reconstruct, ActivationTensor, Nmf2dConfig,
    TemplateTensor, EPSILON,
};
pub use shift::{shift_down, shift_left, shift_right, shift_up};
