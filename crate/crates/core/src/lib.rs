//! Turnpike steady states and long-horizon optimal control.

// `!(a > b)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod direct;
pub mod exec;
pub mod expr;
pub mod linalg;
pub mod lq;
pub mod ocp;
pub mod ode;
pub mod problem_file;
pub mod registry;
pub mod shooting;
pub mod trajectory;
