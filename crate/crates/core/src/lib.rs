//! Phase-locking analysis of discrete events against rhythms extracted from
//! irregularly sampled wearable signals.
//!
//! The pipeline runs raw samples through an hourly grid ([`timeseries`]),
//! spectral screening ([`spectral`]), zero-phase Butterworth band filtering
//! ([`filtering`]) and the analytic signal ([`analytic`]), then maps event
//! onsets to instantaneous phase ([`events`]) and tests for concentration
//! with the Rayleigh test ([`circstats`]). [`baselines`] fits the
//! single-predictor logistic comparisons, [`synth`] generates ground-truth
//! data for every stage, and [`report`] ties it together for the CLI.

// `!(x > 0.0)` is used deliberately so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod baselines;
pub mod circstats;
pub mod error;
pub mod events;
pub mod filtering;
pub mod io;
pub mod report;
pub mod spectral;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
