//! Rank features by |PC1| from NIPALS on masked data, attach predicted R²
//! from the published calibration line, then check the ranking against the
//! R² a real imputation achieved.
//!
//! cargo run --release --example predict_imputability

use imputability::data::standardize;
use imputability::evaluate::evaluate;
use imputability::imputability::{predict_imputability, validate_prediction, Calibration};
use imputability::impute::{self, analysis_names, ImputeOptions};
use imputability::missingness::{self, MissingnessSpec};
use imputability::pca::{self, NipalsConfig};
use imputability::synth::{self, ANALOG_DRIVER};
use imputability::Role;

fn main() -> imputability::Result<()> {
    let truth = synth::generate(&synth::default_cohort_analog())?;
    let masked = missingness::inject(&truth, &MissingnessSpec::new(ANALOG_DRIVER, 3))?.data;
    let opts = ImputeOptions::default();

    let z = standardize(&masked.select(&analysis_names(&masked, &opts))?)?;
    let nip = pca::nipals(&z, &NipalsConfig::with_k(1))?;
    let features = masked.names_with_role(Role::Feature);
    let prediction = predict_imputability(&nip, &features, Some(Calibration::PUBLISHED))?;
    for f in &prediction.features {
        println!("{:>2}. {:<14} |PC1| {:.3}  predicted R² {:.3}", f.rank, f.feature, f.abs_pc1, f.predicted_r2.unwrap_or(f64::NAN));
    }

    let done = impute::impute(&masked, &"pmm".parse()?, &opts, 8)?;
    let report = evaluate(&done.completed, &truth, &masked, "pmm", 0)?;
    let observed: Vec<(String, f64)> = report.per_feature.iter().map(|f| (f.feature.clone(), f.r2)).collect();
    let v = validate_prediction(&prediction, &observed)?;
    println!(
        "observed R² on |PC1|: slope {:.3}, fit R² {:.3}, p {:.2e}; Spearman {:.3}",
        v.fit.slope, v.fit.fit_r2, v.fit.p_value, v.spearman
    );
    Ok(())
}
