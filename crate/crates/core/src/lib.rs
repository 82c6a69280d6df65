//! Missing-data simulation, imputation benchmarking and feature
//! imputability prediction.
//!
//! The workflow:
//!
//! 1. rank features by information gain against a class variable ([`select`]);
//! 2. inject severity-driven MAR missingness into replicates ([`missingness`]);
//! 3. impute with mean, median, PMM, missForest, PPCA and NIPALS ([`impute`]);
//! 4. score imputation R² per feature and pooled ([`evaluate`]);
//! 5. regress per-feature R² on |PC1| loadings and predict imputability
//!    from NIPALS loadings of the incomplete data ([`imputability`]).
//!
//! [`pipeline`] runs the whole thing from one config. [`synth`] generates
//! latent-factor data with known ground truth.

pub mod config;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod impute;
pub mod imputability;
pub mod missingness;
pub mod pca;
pub mod pipeline;
pub mod seed;
pub mod select;
pub mod special;
pub mod stats;
pub mod synth;

pub use data::{Column, ColumnStats, CsvOptions, DataMatrix, Role, Schema};
pub use error::{Error, Result};
pub use pca::{NipalsConfig, PcaModel};
