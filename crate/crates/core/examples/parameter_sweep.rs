//! Sensitivity of the damaged-vs-nominal comparison to the detrending and
//! AC1 window sizes.

use csdwatch::cli::{sweep_grid, write_sweep_csv, PipelineArgs};
use csdwatch::indicators::DetrendMode;
use csdwatch::synthetic::{sweep_study, SweepStudyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = sweep_study(&SweepStudyConfig::reference(7))?;
    let pipeline = PipelineArgs {
        lowpass_hz: None,
        filter_order: 4,
        decimate: 1,
        detrend_mode: DetrendMode::Trailing,
        stride: 1,
    };
    let cells = sweep_grid(
        &data,
        "damaged",
        "nominal",
        &[3, 9, 15, 25],
        &[50, 150, 300, 600, 1000, 1500],
        &pipeline,
    );
    write_sweep_csv(&mut std::io::stdout().lock(), &cells)?;
    Ok(())
}
