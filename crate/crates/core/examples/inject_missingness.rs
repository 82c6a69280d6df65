//! Severity-driven MAR masking: rows with low MMSE (more impaired) lose
//! more cells. Prints the realized rate per driver quintile.
//!
//! cargo run --release --example inject_missingness

use imputability::missingness::{self, MissingnessSpec};
use imputability::synth::{self, ANALOG_DRIVER};
use imputability::Role;

fn main() -> imputability::Result<()> {
    let mut spec = synth::default_cohort_analog();
    spec.n_rows = 5000;
    let data = synth::generate(&spec)?;
    let out = missingness::inject(&data, &MissingnessSpec::new(ANALOG_DRIVER, 7))?;
    println!("realized missingness {:.4}", out.realized_rate);

    let driver = data.column(ANALOG_DRIVER)?.values().to_vec();
    let mut order: Vec<usize> = (0..driver.len()).collect();
    order.sort_by(|&a, &b| driver[a].total_cmp(&driver[b]));
    let targets: Vec<_> = out.data.columns().iter().filter(|c| c.role == Role::Feature).collect();
    for (q, rows) in order.chunks(order.len() / 5).enumerate() {
        let missing: usize = rows
            .iter()
            .map(|&i| targets.iter().filter(|c| !c.observed()[i]).count())
            .sum();
        let rate = missing as f64 / (rows.len() * targets.len()) as f64;
        println!("MMSE quintile {}: {:.3}", q + 1, rate);
    }
    Ok(())
}
