//! Minimal dense network substrate: matrices, layers, two-token attention,
//! losses, optimizers and a finite-difference gradient checker.
//!
//! Forward passes return explicit caches instead of mutating the layers, so
//! inference only needs `&self` and can run concurrently over disjoint batches.

mod attention;
mod gradcheck;
mod layers;
mod loss;
mod matrix;
mod optim;
mod rng;

pub use attention::{
    AttentionCache, AttentionUnit, GateCache, ScalarGate, Transfer, TransferCache, TransferKind,
};
pub use gradcheck::grad_check;
pub use layers::{
    dropout, log_odds, relu, sigmoid, sigmoid_grad, sigmoid_scalar, tower_margin, Block,
    BlockCache, Dense, Dropped, Init, Params, Tower, TowerCache, PROB_EPS,
};
pub use loss::{bce_grad, bce_loss};
pub use matrix::{axpy, dot, Matrix};
pub use optim::{OptimizerKind, OptimizerState};
pub use rng::RngState;
