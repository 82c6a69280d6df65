//! Generate the built-in cohort analog and rank its features by
//! information gain about the class column.
//!
//! cargo run --release --example synth_and_select

use imputability::pipeline::select_base;
use imputability::synth::{self, ANALOG_CLASS};

fn main() -> imputability::Result<()> {
    let spec = synth::default_cohort_analog();
    let data = synth::generate(&spec)?;
    println!("{} rows, columns: {:?}", data.n_rows(), data.names());

    let (reduced, ranked) = select_base(&data, ANALOG_CLASS, 8, 5)?;
    for (i, s) in ranked.iter().enumerate() {
        println!("{:>2}. {:<14} {:.4} bits", i + 1, s.feature, s.gain);
    }
    println!("kept {} columns", reduced.n_cols());
    Ok(())
}
