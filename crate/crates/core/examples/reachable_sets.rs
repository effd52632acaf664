//! Backward reachable sets shrinking as each system nears its tipping point.

use csdwatch::dynamics::{GrazingParams, MsdParams};
use csdwatch::resilience::{grazing_brs, msd_brs};

fn main() -> csdwatch::Result<()> {
    println!("MSD, T = 12 s, (x, xdot) in [-5, 5]^2");
    for k in [0.5, 1.0, 1.5, 3.0, 5.0] {
        let g = msd_brs(&MsdParams::reference(k), 12.0)?;
        println!(
            "  K = {k:<4} {:>5} of {} cells",
            g.member_count(),
            g.cell_count()
        );
    }
    println!("grazing, V in [0, 12]");
    let horizons = [10.0, 25.0, 50.0];
    for c in [1.0, 1.5, 1.75, 2.0, 2.7] {
        let sets = grazing_brs(&GrazingParams::reference(c), &horizons)?;
        let counts: Vec<String> = sets
            .iter()
            .map(|s| format!("T={}: {}", s.horizon, s.member_count()))
            .collect();
        let flag = if sets[0].past_fold {
            " (past the fold)"
        } else {
            ""
        };
        println!("  c = {c:<4} {}{flag}", counts.join("  "));
    }
    Ok(())
}
