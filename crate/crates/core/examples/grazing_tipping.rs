//! Vegetation under grazing pressure: equilibria, fold points and the rise
//! of AC1 as the consumption rate approaches the upper fold.

use csdwatch::dynamics::{grazing_scenario, run_batch, GrazingParams};
use csdwatch::indicators::{detrend_moving_average, sliding_ac1, Ac1Config, DetrendConfig};
use csdwatch::stats::median;

fn main() -> csdwatch::Result<()> {
    let p = GrazingParams::reference(1.0);
    for (c, v) in p.folds() {
        println!("fold at c = {c:.4}, V = {v:.4}");
    }
    for c in [1.0, 1.5, 1.75, 2.0] {
        let p = GrazingParams::reference(c);
        let eq: Vec<String> = p
            .equilibria()
            .iter()
            .map(|e| format!("{:.3}{}", e.value, if e.stable { "" } else { "(u)" }))
            .collect();
        let s = grazing_scenario(&p, 1.0, 1500.0, 0)?;
        let mut pooled = Vec::new();
        for tr in run_batch(&s, 20, 500)? {
            let r = detrend_moving_average(&tr.channel(0)?, &DetrendConfig::trailing(40))?;
            pooled.extend(sliding_ac1(&r, &Ac1Config::new(500))?.defined());
        }
        println!(
            "c = {c:<4} equilibria [{}]  median AC1 {:.3}",
            eq.join(", "),
            median(&pooled).unwrap()
        );
    }
    Ok(())
}
