//! Copy-paste augmentation of endoscopy training sets with artificial
//! specular-light patches.
//!
//! The pipeline has three stages, mirrored by the `wlsr` CLI:
//!
//! 1. [`pipeline::cmd_build_bank`] segments real specular reflections out of
//!    a training corpus and expands the crops into a bank of grayscale light
//!    patches ([`lightbank`]).
//! 2. [`pipeline::cmd_augment`] pastes one random patch per selected image
//!    at a sliding-window position that avoids existing lights, polyp boxes,
//!    and black borders ([`prohibit`], [`placement`]), emitting images, YOLO
//!    labels ([`annot`]), and a run manifest.
//! 3. [`pipeline::cmd_validate`] re-checks an emitted dataset against those
//!    placement rules.
//!
//! Everything is deterministic for a fixed seed, independent of worker
//! count ([`rng`]).

pub mod annot;
pub mod lightbank;
pub mod pipeline;
pub mod placement;
pub mod prohibit;
pub mod raster;
pub mod rng;
