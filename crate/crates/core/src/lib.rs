#![cfg_attr(not(feature = "std"), no_std)]

//! Performance modeling, simulation, and provisioning algorithms for
//! heterogeneous recommendation-inference serving.
//!
//! The library reproduces a two-stage scheduling pipeline: offline profiling
//! searches the per-server parallelism space for the latency-bounded
//! throughput optimum of every (model, server) pair, and online serving
//! provisions a heterogeneous cluster against diurnal load by solving a
//! power-minimization linear program, with random/greedy/priority baselines
//! for comparison.
//!
//! The crate is `no_std`-compatible (with `alloc`); file formats and the
//! command-line front end live in the companion CLI crate.

extern crate alloc;

pub mod catalog;
pub mod fmath;
pub mod loadgen;
pub mod partitioner;
pub mod schedsearch;
pub mod serversim;
pub mod perfmodel;
pub mod provisioner;
