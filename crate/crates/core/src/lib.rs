//! Benchmark suite for dual-formulation estimators of the 1-Wasserstein
//! distance: weight clipping, gradient penalty, minibatch c-transform and
//! minibatch (c,ε)-transform discriminators, scored against exact linear
//! programming and entropic ground-truth solvers.

pub mod data;
pub mod entropic_ot;
pub mod estimators;
pub mod exact_ot;
pub mod harness;
pub mod nn;
pub mod tensor;
