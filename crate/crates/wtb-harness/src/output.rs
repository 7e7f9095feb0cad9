//! CSV writers. Floats use the shortest round-trip representation, so the
//! files are byte-stable across reruns and exactly recomputable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use wtb_core::{Result, RunTrace};

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &RunTrace) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    writeln!(writer, "t,action,observed_loss,expected_loss")?;
    for t in 0..trace.len() {
        writeln!(
            writer,
            "{},{},{},{}",
            t + 1,
            trace.actions[t],
            trace.observed_losses[t],
            trace.expected_losses[t]
        )?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_aggregate_csv(
    path: impl AsRef<Path>,
    checkpoints: &[usize],
    mean: &[f64],
    std_error: &[f64],
) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    writeln!(writer, "t,mean,std_error")?;
    for ((t, m), se) in checkpoints.iter().zip(mean).zip(std_error) {
        writeln!(writer, "{t},{m},{se}")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_sweep_csv(
    path: impl AsRef<Path>,
    m_values: &[usize],
    mean: &[f64],
    std_error: &[f64],
) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    writeln!(writer, "M,mean,std_error")?;
    for ((m, mu), se) in m_values.iter().zip(mean).zip(std_error) {
        writeln!(writer, "{m},{mu},{se}")?;
    }
    writer.flush()?;
    Ok(())
}

/// Sample mean and standard error (sample std over sqrt(n); zero for a
/// single sample).
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (variance / n as f64).sqrt())
}
