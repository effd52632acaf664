//! Actuator lag and sensor resonance destabilizing a well-tuned PI loop.

use csdwatch::cli::box_step_response;
use csdwatch::dynamics::{box_system, BoxSystem};
use csdwatch::resilience::{eigenvalues, is_stable};

fn main() -> csdwatch::Result<()> {
    for which in BoxSystem::ALL {
        let ss = box_system(which)?;
        let worst = eigenvalues(&ss.a)?
            .into_iter()
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .unwrap();
        let step = box_step_response(which, 0.01, 40.0)?;
        let peak = step.component(0).iter().fold(0.0f64, |m, y| m.max(y.abs()));
        println!(
            "{:<18} stable={:<5} dominant pole {:+.3}{:+.3}i  step peak {:.3e}",
            which.name(),
            is_stable(&ss),
            worst.re,
            worst.im,
            peak
        );
    }
    Ok(())
}
