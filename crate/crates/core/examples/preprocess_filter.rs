//! Design the 4th-order 100 Hz low-pass used for 1 kHz rotor telemetry,
//! inspect its response, then filter and decimate white noise.

use csdwatch::dynamics::NormalStream;
use csdwatch::preprocess::{decimate, design_butterworth_lowpass, filter_series};
use csdwatch::series::UniformSeries;

fn main() -> csdwatch::Result<()> {
    let f = design_butterworth_lowpass(4, 100.0, 1000.0)?;
    println!("sections: {}, stable: {}", f.sections.len(), f.is_stable());
    for hz in [0.0, 50.0, 100.0, 200.0, 400.0] {
        println!("{hz:>6.0} Hz  {:>8.2} dB", f.magnitude_db(hz));
    }

    let mut rng = NormalStream::new(1);
    let noise: Vec<f64> = (0..10_000).map(|_| rng.next_normal()).collect();
    let raw = UniformSeries::new(1000.0, 0.0, noise)?;
    let smooth = filter_series(&f, &raw)?;
    let down = decimate(&smooth, 2)?;
    let power = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    println!(
        "power raw {:.3}, filtered {:.3} (expected ~0.2), decimated to {} Hz with {} samples",
        power(raw.values()),
        power(smooth.values()),
        down.sample_rate_hz(),
        down.len()
    );
    Ok(())
}
