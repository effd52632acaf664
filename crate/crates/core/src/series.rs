//! Uniformly sampled channels, multi-channel records, CSV ingestion and
//! density histograms.
//!
//! The on-disk format is plain CSV: a mandatory header row, a time column
//! named `t` in seconds and one numeric column per channel. The sample rate
//! is inferred from the median inter-sample gap; spacing that deviates from
//! it by more than 1% is rejected.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Name of the mandatory time column.
pub const TIME_COLUMN: &str = "t";

const MAX_JITTER: f64 = 0.01;

/// A uniformly sampled scalar channel.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries {
    sample_rate_hz: f64,
    start_time: f64,
    values: Vec<f64>,
}

impl UniformSeries {
    pub fn new(sample_rate_hz: f64, start_time: f64, values: Vec<f64>) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::Config(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        if !start_time.is_finite() {
            return Err(Error::Config("start time must be finite".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            sample_rate_hz,
            start_time,
            values,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Timestamp of sample `i`, computed multiplicatively so there is no
    /// accumulated drift.
    pub fn time_at(&self, i: usize) -> f64 {
        self.start_time + i as f64 / self.sample_rate_hz
    }

    /// Same rate and start time, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.sample_rate_hz, self.start_time, values)
    }
}

/// A set of equally sampled channels recorded together, plus free-form
/// labels (damage level, location, task, ...).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MultiChannelRecord {
    channels: BTreeMap<String, UniformSeries>,
    pub metadata: BTreeMap<String, String>,
}

impl MultiChannelRecord {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a channel. All channels must share rate, start time and length.
    pub fn insert(&mut self, name: impl Into<String>, series: UniformSeries) -> Result<()> {
        if let Some(first) = self.channels.values().next() {
            if first.sample_rate_hz != series.sample_rate_hz
                || first.len() != series.len()
                || first.start_time != series.start_time
            {
                return Err(Error::Config(
                    "all channels must share sample rate, start time and length".into(),
                ));
            }
        }
        self.channels.insert(name.into(), series);
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Option<&UniformSeries> {
        self.channels.get(name)
    }

    pub fn channels(&self) -> impl Iterator<Item = (&str, &UniformSeries)> {
        self.channels.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn sample_rate_hz(&self) -> Option<f64> {
        self.channels.values().next().map(|s| s.sample_rate_hz)
    }
}

/// Loads a record from CSV. `channels` selects the channel columns to keep;
/// an empty slice keeps every column except `t`.
pub fn load_csv<R: Read>(source: R, channels: &[&str]) -> Result<MultiChannelRecord> {
    let table = read_table(source)?;
    let t_idx = table.column_index(TIME_COLUMN)?;
    let selected: Vec<(String, usize)> = if channels.is_empty() {
        table
            .headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != t_idx)
            .map(|(i, h)| (h.clone(), i))
            .collect()
    } else {
        channels
            .iter()
            .map(|c| Ok((c.to_string(), table.column_index(c)?)))
            .collect::<Result<_>>()?
    };

    let times = table.numeric_column(t_idx)?;
    let (rate, start) = infer_rate(&times)?;

    let mut record = MultiChannelRecord::new();
    for (name, idx) in selected {
        let values = table.numeric_column(idx)?;
        record.insert(name, UniformSeries::new(rate, start, values)?)?;
    }
    Ok(record)
}

fn infer_rate(times: &[f64]) -> Result<(f64, f64)> {
    if times.len() < 2 {
        return Err(Error::TooFewSamples(times.len()));
    }
    let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(i) = gaps.iter().position(|g| *g <= 0.0) {
        return Err(Error::NonIncreasingTime(i + 1));
    }
    let median = crate::stats::median(&gaps).expect("at least one gap");
    for (i, g) in gaps.iter().enumerate() {
        let jitter = (g - median).abs() / median;
        if jitter > MAX_JITTER {
            return Err(Error::NonUniformSampling { jitter, row: i + 1 });
        }
    }
    // mean spacing averages out the rounding of printed timestamps
    let span = times[times.len() - 1] - times[0];
    Ok(((times.len() - 1) as f64 / span, times[0]))
}

/// Shortest round-trip decimal, switching to exponent notation for very
/// small or very large magnitudes.
pub fn fmt_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// Writes a record as CSV with a `t` column followed by channels in name
/// order. Floats use the shortest round-trip representation.
pub fn write_csv<W: Write>(record: &MultiChannelRecord, mut out: W) -> Result<()> {
    let names = record.channel_names();
    let Some(first) = record.channels.values().next() else {
        return Err(Error::Config("record has no channels".into()));
    };
    write!(out, "{TIME_COLUMN}")?;
    for n in &names {
        write!(out, ",{n}")?;
    }
    writeln!(out)?;
    for i in 0..first.len() {
        write!(out, "{}", first.time_at(i))?;
        for n in &names {
            write!(out, ",{}", record.channels[n].values[i])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// A header + rows CSV table, cells kept as text.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Parses column `idx` as floats; errors carry the 1-based data row.
    pub fn numeric_column(&self, idx: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let cell = row.get(idx).map(String::as_str).unwrap_or("");
                cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                    row: r + 1,
                    column: self.headers[idx].clone(),
                    cell: cell.to_string(),
                })
            })
            .collect()
    }

    pub fn text_column(&self, idx: usize) -> Vec<&str> {
        self.rows
            .iter()
            .map(|r| r.get(idx).map(String::as_str).unwrap_or(""))
            .collect()
    }
}

/// Reads any header-led CSV into a [`Table`].
pub fn read_table<R: Read>(source: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok(Table { headers, rows })
}

/// Normalized histogram: densities integrate to one over the bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityHistogram {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
    /// Values that fell outside the domain and were not counted.
    pub dropped: usize,
}

impl DensityHistogram {
    pub fn area(&self) -> f64 {
        self.densities
            .iter()
            .zip(self.bin_edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }

    pub fn bin_count(&self) -> usize {
        self.densities.len()
    }

    /// Center of the tallest bin.
    pub fn mode(&self) -> f64 {
        let (i, _) = self
            .densities
            .iter()
            .enumerate()
            .fold(
                (0, f64::MIN),
                |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc },
            );
        0.5 * (self.bin_edges[i] + self.bin_edges[i + 1])
    }
}

/// Default AC1 histogram: bin width 0.01 over [-1, 1].
pub fn ac1_histogram(values: &[f64]) -> Result<DensityHistogram> {
    histogram(values, 0.01, (-1.0, 1.0))
}

/// Builds a density histogram over `[lo, hi]` with bins of `bin_width`; the
/// last bin is truncated at `hi` when the width does not divide the domain.
pub fn histogram(values: &[f64], bin_width: f64, domain: (f64, f64)) -> Result<DensityHistogram> {
    let (lo, hi) = domain;
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::Config(format!(
            "bin width must be > 0, got {bin_width}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::Config(format!("invalid domain [{lo}, {hi}]")));
    }
    let span = (hi - lo) / bin_width;
    // absorb representation error, e.g. 2.0 / 0.01 = 200.00000000000003
    let n_bins = ((span - 1e-9 * span.max(1.0)).ceil() as usize).max(1);
    let mut edges: Vec<f64> = (0..n_bins).map(|i| lo + i as f64 * bin_width).collect();
    edges.push(hi);

    let mut counts = vec![0usize; n_bins];
    let mut dropped = 0;
    for &v in values {
        if !(v >= lo && v <= hi) {
            dropped += 1;
            continue;
        }
        let mut idx = (((v - lo) / bin_width).floor() as usize).min(n_bins - 1);
        // floor can land one bin off near an edge
        if v < edges[idx] {
            idx -= 1;
        } else if idx + 1 < n_bins && v >= edges[idx + 1] {
            idx += 1;
        }
        counts[idx] += 1;
    }
    let total = values.len() - dropped;
    if total == 0 {
        return Err(Error::EmptyHistogram(values.len()));
    }
    let densities = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, e)| c as f64 / (total as f64 * (e[1] - e[0])))
        .collect();
    Ok(DensityHistogram {
        bin_edges: edges,
        densities,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infers_500hz() {
        let csv = "t,w1\n0,1\n0.002,2\n0.004,3\n";
        let rec = load_csv(csv.as_bytes(), &[]).unwrap();
        let w1 = rec.channel("w1").unwrap();
        assert!((w1.sample_rate_hz() - 500.0).abs() < 1e-9);
        assert_eq!(w1.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn single_row_is_rejected() {
        let csv = "t,w1\n0,1\n";
        assert!(matches!(
            load_csv(csv.as_bytes(), &[]),
            Err(Error::TooFewSamples(1))
        ));
    }

    #[test]
    fn jitter_is_rejected() {
        let csv = "t,w1\n0,1\n0.002,2\n0.005,3\n";
        assert!(matches!(
            load_csv(csv.as_bytes(), &[]),
            Err(Error::NonUniformSampling { .. })
        ));
    }

    #[test]
    fn missing_column_and_bad_cell() {
        let csv = "t,w1\n0,1\n0.002,x\n";
        assert!(matches!(
            load_csv(csv.as_bytes(), &["w2"]),
            Err(Error::MissingColumn(c)) if c == "w2"
        ));
        assert!(matches!(
            load_csv(csv.as_bytes(), &["w1"]),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn rejects_non_finite_values() {
        assert!(UniformSeries::new(10.0, 0.0, vec![1.0, f64::NAN]).is_err());
        assert!(UniformSeries::new(0.0, 0.0, vec![1.0]).is_err());
    }

    #[test]
    fn timestamps_do_not_drift() {
        let s = UniformSeries::new(1000.0, 2.5, vec![0.0; 1_000_001]).unwrap();
        assert_eq!(s.time_at(1_000_000), 2.5 + 1000.0);
        assert_eq!(s.time_at(0), 2.5);
    }

    #[test]
    fn histogram_single_bin() {
        let h = histogram(&[0.5, 0.5], 1.0, (0.0, 1.0)).unwrap();
        assert_eq!(h.densities, vec![1.0]);
        assert_eq!(h.bin_edges, vec![0.0, 1.0]);
    }

    #[test]
    fn histogram_drops_and_truncates() {
        let h = histogram(&[0.1, 0.95, 2.0], 0.4, (0.0, 1.0)).unwrap();
        assert_eq!(h.bin_count(), 3);
        assert!((h.bin_edges[3] - 1.0).abs() < 1e-15);
        assert_eq!(h.dropped, 1);
        assert!((h.area() - 1.0).abs() < 1e-12);
        assert!(matches!(
            histogram(&[5.0], 0.1, (0.0, 1.0)),
            Err(Error::EmptyHistogram(1))
        ));
    }

    #[test]
    fn ac1_histogram_has_200_bins() {
        let h = ac1_histogram(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(h.bin_count(), 200);
        assert!((h.area() - 1.0).abs() < 1e-9);
    }
}
