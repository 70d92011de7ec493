// negated float comparisons are how invalid inputs, NaN included, get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod network;
pub mod operators;
pub mod problems;
pub mod quadrature;
pub mod sampling;
pub mod special;
pub mod training;
