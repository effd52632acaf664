//! Rising lag-1 autocorrelation of the noisy mass-spring-damper as the
//! feedback gain approaches the stability boundary.

use csdwatch::dynamics::{msd_scenario, run_batch, MsdParams};
use csdwatch::indicators::{detrend_moving_average, sliding_ac1, Ac1Config, DetrendConfig};
use csdwatch::resilience::critical_gain;
use csdwatch::stats::median;

fn main() -> csdwatch::Result<()> {
    println!(
        "critical gain K* = {:.2}",
        critical_gain(&MsdParams::reference(0.0))?
    );
    let runs = 40;
    for k in [0.5, 1.0, 1.5, 3.0] {
        let s = msd_scenario(&MsdParams::reference(k), 0.25, 0.1, 50.0, 0)?;
        let batch = run_batch(&s, runs, 1000)?;
        let mut medians = Vec::new();
        for ch in 0..2 {
            let mut pooled = Vec::new();
            for tr in &batch {
                let r = detrend_moving_average(&tr.channel(ch)?, &DetrendConfig::trailing(5))?;
                pooled.extend(sliding_ac1(&r, &Ac1Config::new(157))?.defined());
            }
            medians.push(median(&pooled).unwrap());
        }
        println!(
            "K = {k:<4} median AC1  x: {:.3}  xdot: {:.3}",
            medians[0], medians[1]
        );
    }
    Ok(())
}
