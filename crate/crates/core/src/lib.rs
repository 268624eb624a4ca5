//! Supervised contrastive learning for text classification at desk scale.
//!
//! A reverse-mode autodiff core drives a small transformer encoder trained
//! with one of six objectives: cross-entropy, supervised contrastive
//! learning with dropout views, contrastive adversarial training on the
//! embedding matrix or on token representations, and label-aware
//! contrastive learning with dropout or token-adversarial views.

pub mod adversarial;
pub mod autodiff;
pub mod encoder;
pub mod objectives;
pub mod trainer;
pub mod workbench;

use rand::RngCore;

/// Reborrows an optional dropout RNG for a nested call.
pub(crate) fn reborrow<'b>(rng: &'b mut Option<&mut dyn RngCore>) -> Option<&'b mut dyn RngCore> {
    match rng {
        Some(r) => Some(&mut **r),
        None => None,
    }
}
