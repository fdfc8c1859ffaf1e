//! Physics-informed neural and graph network training engine.
//!
//! The crate has three layers:
//!
//! * an autodiff core ([`jet`], [`tape`], [`tensor`]) providing exact input
//!   derivatives up to third order and reverse-mode parameter gradients of
//!   losses built from those derivatives;
//! * PINN machinery ([`network`], [`problems`], [`pinn`], [`xpinn`]) with
//!   vanilla, self-adaptive, gradient-enhanced, domain-decomposed and
//!   data-parallel training over built-in benchmark problems with closed-form
//!   solutions;
//! * a graph toolkit ([`graph`], [`gnn`], [`linalg`]) implementing the
//!   combinatorial exterior calculus (grad/curl/adjoint divergence, Hodge
//!   Laplacians), learnable stencils, GMLS polynomial lifts, and reference
//!   spectral / message-passing / attention layers.
//!
//! The `piml` binary drives experiments from JSON configs; see [`config`]
//! and [`runner`].

pub mod config;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod jet;
pub mod linalg;
pub mod network;
pub mod pinn;
pub mod problems;
pub mod runner;
pub mod tape;
pub mod tensor;
pub mod xpinn;

pub use error::{Error, Result};
