//! Eigendecomposition PCA on complete data next to NIPALS on the same data
//! after masking. PC1 loadings survive heavy missingness.
//!
//! cargo run --release --example pca_nipals

use imputability::data::standardize;
use imputability::impute::{analysis_names, ImputeOptions};
use imputability::missingness::{self, MissingnessSpec};
use imputability::pca::{self, NipalsConfig};
use imputability::synth::{self, ANALOG_DRIVER};

fn main() -> imputability::Result<()> {
    let data = synth::generate(&synth::default_cohort_analog())?;
    let names = analysis_names(&data, &ImputeOptions::default());
    let complete = pca::pca_correlation(&data.select(&names)?)?;

    let masked = missingness::inject(&data, &MissingnessSpec::new(ANALOG_DRIVER, 11))?.data;
    let z = standardize(&masked.select(&names)?)?;
    let nip = pca::nipals(&z, &NipalsConfig::with_k(3))?;

    println!("{:<14} {:>9} {:>9}", "variable", "eigen", "nipals");
    for (j, v) in names.iter().enumerate() {
        println!("{v:<14} {:>9.3} {:>9.3}", complete.loadings[(j, 0)], nip.loadings[(j, 0)]);
    }
    println!("explained (eigen):  {:.3?}", &complete.explained[..3]);
    println!("explained (nipals): {:.3?}", nip.explained);
    let est = pca::estimate_k(&z, 5, 5, 3)?;
    println!("cross-validated k = {} (errors {:.3?})", est.k, est.cv_error);
    Ok(())
}
