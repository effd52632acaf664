//! Synthetic rotor-damage study analysed with the fourteen grouped
//! comparisons (Brunner-Munzel, probability of superiority, HL shift).

use csdwatch::cli::run_comparisons;
use csdwatch::series::read_table;
use csdwatch::stats::render_table;
use csdwatch::synthetic::{damage_comparisons, damage_study, write_study_csv, DamageStudyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rows = damage_study(&DamageStudyConfig::reference(2024))?;
    let mut csv = Vec::new();
    write_study_csv(&mut csv, &rows)?;
    let table = read_table(csv.as_slice())?;
    let manifest = read_table(damage_comparisons().as_bytes())?;
    let report = run_comparisons(&table, &manifest, "median_ac1")?;
    print!("{}", render_table(&report));
    Ok(())
}
