//! Every imputation method on one masked replicate, scored against the
//! ground truth. missForest dominates the runtime.
//!
//! cargo run --release --example impute_methods

use std::time::Instant;

use imputability::evaluate::evaluate;
use imputability::impute::{self, ImputeOptions, MethodSpec};
use imputability::missingness::{self, MissingnessSpec};
use imputability::synth::{self, ANALOG_DRIVER};

fn main() -> imputability::Result<()> {
    let mut spec = synth::default_cohort_analog();
    spec.n_rows = 800;
    let truth = synth::generate(&spec)?;
    let masked = missingness::inject(&truth, &MissingnessSpec::new(ANALOG_DRIVER, 5))?.data;
    let opts = ImputeOptions::default();

    for name in ["mean", "median", "pmm", "missforest", "ppca", "nipals"] {
        let method: MethodSpec = name.parse()?;
        let start = Instant::now();
        let result = impute::impute(&masked, &method, &opts, 99)?;
        let report = evaluate(&result.completed, &truth, &masked, name, 0)?;
        println!(
            "{name:<10} overall R² {:.3}  iterations {:>3}  {:.1}s",
            report.overall,
            result.diagnostics.iterations,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
