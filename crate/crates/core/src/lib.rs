//! Hybrid physics/data-driven bearing prognostics.
//!
//! A conditional GAN predicts remaining useful life; its generator output is
//! passed through differentiable fuzzy implications and, in the physics-infused
//! variant, weighted into a spall-growth model whose missing parameter is
//! extracted from raw vibration by a signal-processing chain.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ndcore;
pub mod fuzzy;
pub mod physics;
pub mod sigproc;
pub mod data;
pub mod gan;
pub mod metrics;
pub mod config;
pub mod pipeline;
