//! Desk-scale competitive-racing reinforcement learning stack: a
//! deterministic 2D multi-car simulator with an ego-view raster, a
//! recurrent quantile-regression soft actor-critic learner with sequence
//! replay, a distributed trainer/worker harness, evaluation metrics, and
//! integrated-gradients attribution tooling.

pub mod config;
pub mod geom;
pub mod reward;
pub mod track;
pub mod vehicle;

pub mod nn;

pub mod env;

pub mod qrsac;

pub mod dist;

pub mod attrib;
pub mod eval;
