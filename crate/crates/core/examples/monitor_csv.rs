//! End-to-end monitoring of a multi-channel CSV: load, detrend, sliding
//! AC1, per-channel medians and a pooled histogram.

use std::io::Write;

use csdwatch::indicators::{run_pipeline, Ac1Config, DetrendConfig};
use csdwatch::preprocess::PreprocessConfig;
use csdwatch::series::{ac1_histogram, load_csv};
use csdwatch::synthetic::ar1_series;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // two rotor-like channels sampled at 500 Hz around 1000 rad/s
    let a = ar1_series(0.5, 6000, 1)?;
    let b = ar1_series(0.8, 6000, 2)?;
    let mut csv = Vec::new();
    writeln!(csv, "t,rotor_a,rotor_b")?;
    for i in 0..a.len() {
        writeln!(
            csv,
            "{},{},{}",
            i as f64 * 0.002,
            1000.0 + a[i],
            1000.0 + b[i]
        )?;
    }

    let record = load_csv(csv.as_slice(), &[])?;
    println!(
        "loaded {} channels at {:.1} Hz",
        record.len(),
        record.sample_rate_hz().unwrap()
    );
    let results = run_pipeline(
        &record,
        &PreprocessConfig::none(),
        &DetrendConfig::trailing(3),
        &Ac1Config::new(300),
    )?;
    let mut pooled = Vec::new();
    for (name, ind) in &results {
        println!(
            "{name}: median AC1 {:.3} ({} defined, {} undefined)",
            ind.median_ac1,
            ind.ac1.defined_count(),
            ind.ac1.undefined_count()
        );
        pooled.extend(ind.ac1.defined());
    }
    let h = ac1_histogram(&pooled)?;
    println!(
        "pooled histogram: {} bins, area {:.6}, mode {:.3}",
        h.bin_count(),
        h.area(),
        h.mode()
    );
    Ok(())
}
