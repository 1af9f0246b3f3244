#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clocks;
pub mod coupling;
pub mod diagnostics;
pub mod experiments;
pub mod lattice;
pub mod process;
pub mod quadrature;
pub mod stats;
pub mod weights;
