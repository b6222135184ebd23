//! Nowcasting migrant stocks by combining an annual survey panel with
//! bias-adjusted social-media advertising counts.
//!
//! The pipeline runs [`ingest`] → [`biasadjust`] → [`components`] →
//! [`model`] → [`forecast`], with [`validate`] for holdout comparisons and
//! [`simulate`] for synthetic data with known truth.

pub mod biasadjust;
pub mod components;
pub mod forecast;
pub mod ingest;
pub mod model;
pub mod simulate;
pub mod validate;
