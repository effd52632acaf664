//! Disk margin of the MSD loop along a gain sweep.

use csdwatch::dynamics::MsdParams;
use csdwatch::resilience::{disk_margin, msd_sensitivity};

fn main() -> csdwatch::Result<()> {
    let mut k = 0.25;
    while k <= 5.0 {
        let r = disk_margin(&msd_sensitivity(&MsdParams::reference(k))?)?;
        if r.unstable {
            println!("K = {k:<5} unstable (dm = 0)");
        } else {
            println!(
                "K = {k:<5} dm = {:.4}  peak |S - 1/2| = {:.4} at {:.3} rad/s",
                r.dm, r.peak_magnitude, r.peak_frequency
            );
        }
        k += 0.25;
    }
    Ok(())
}
