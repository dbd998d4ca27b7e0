// `!(x < tol)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod quad;
pub mod su2;
pub mod cubic;
pub mod dynamics;
pub mod reduction;
pub mod tip_curve;
pub mod cli_io;
pub mod elliptic;
pub mod degenerate;
