//! Per-feature imputation R² over a few replicates, aggregated the way the
//! benchmark reports it.
//!
//! cargo run --release --example evaluate_r2

use imputability::evaluate::{aggregate, evaluate};
use imputability::impute::{self, ImputeOptions, MethodSpec};
use imputability::missingness::{self, MissingnessSpec};
use imputability::synth::{self, ANALOG_DRIVER};

fn main() -> imputability::Result<()> {
    let mut spec = synth::default_cohort_analog();
    spec.n_rows = 1000;
    let truth = synth::generate(&spec)?;
    let reps = missingness::replicate(&truth, &MissingnessSpec::new(ANALOG_DRIVER, 21), 3)?;
    let pmm: MethodSpec = "pmm".parse()?;

    let mut reports = Vec::new();
    for (r, rep) in reps.iter().enumerate() {
        for method in [&MethodSpec::Mean, &pmm] {
            let done = impute::impute(&rep.data, method, &ImputeOptions::default(), r as u64)?;
            reports.push(evaluate(&done.completed, &truth, &rep.data, method.name(), r)?);
        }
    }
    for m in aggregate(&reports).methods {
        println!("{} overall {:.3} [{:.3}, {:.3}]", m.method, m.mean, m.min, m.max);
        for f in &m.per_feature_mean {
            println!("    {:<14} {:.3}", f.feature, f.r2);
        }
    }
    Ok(())
}
