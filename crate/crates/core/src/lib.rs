#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod bootstrap;
pub mod diagnostics;
pub mod distributions;
pub mod forecast;
pub mod market_data;
pub mod mcmc;
pub mod mcs;
pub mod measures;
pub mod ml_fit;
pub mod model;
pub mod optim;
pub mod seed;
