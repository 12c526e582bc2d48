// `!(a < b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod constraints;
pub mod exact;
pub mod harness;
pub mod mcsim;
pub mod model;
pub mod paths;
pub mod rcg;
pub mod reliability;

#[cfg(test)]
mod testkit;
