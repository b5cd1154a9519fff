//! Byte-stable number formatting and table writers.

use std::path::Path;

use anyhow::{Context, Result};
use resplace_core::sim::{MetricsRecord, ScenarioSummary};

/// `%.9g`: nine significant digits, trailing zeros trimmed, scientific
/// notation outside 1e-4..1e9.
pub fn fmt_g(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const ROUND_COLUMNS: [&str; 8] = [
    "round",
    "avg_accuracy",
    "total_latency_s",
    "shared_data_bits",
    "total_computation_mults",
    "total_energy_j",
    "objective",
    "feasible",
];

pub const SUMMARY_COLUMNS: [&str; 14] = [
    "rounds",
    "solved_rounds",
    "feasible_rounds",
    "total_requests",
    "mean_accuracy",
    "mean_latency_s",
    "mean_shared_data_bits",
    "mean_computation_mults",
    "mean_energy_j",
    "mean_objective",
    "total_latency_s",
    "total_shared_data_bits",
    "total_computation_mults",
    "total_energy_j",
];

pub fn round_row(r: &MetricsRecord) -> Vec<String> {
    vec![
        r.round.to_string(),
        fmt_g(r.avg_accuracy),
        fmt_g(r.total_latency),
        fmt_g(r.shared_data),
        fmt_g(r.total_computation),
        fmt_g(r.total_energy),
        fmt_g(r.objective),
        r.feasible.to_string(),
    ]
}

pub fn summary_row(s: &ScenarioSummary) -> Vec<String> {
    vec![
        s.rounds.to_string(),
        s.solved_rounds.to_string(),
        s.feasible_rounds.to_string(),
        s.total_requests.to_string(),
        fmt_g(s.mean_accuracy),
        fmt_g(s.mean_latency),
        fmt_g(s.mean_shared_data),
        fmt_g(s.mean_computation),
        fmt_g(s.mean_energy),
        fmt_g(s.mean_objective),
        fmt_g(s.total_latency),
        fmt_g(s.total_shared_data),
        fmt_g(s.total_computation),
        fmt_g(s.total_energy),
    ]
}

pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)
        .with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::fmt_g;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_g(0.9473), "0.9473");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(123456789.0), "123456789");
        assert_eq!(fmt_g(1234567890.0), "1.23456789e+09");
        assert_eq!(fmt_g(0.1559756800), "0.15597568");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_g(0.00012345), "0.00012345");
        assert_eq!(fmt_g(0.000012345), "1.2345e-05");
        assert_eq!(fmt_g(-2.5), "-2.5");
        assert_eq!(fmt_g(999999999.6), "1e+09");
        assert_eq!(fmt_g(f64::NAN), "nan");
        assert_eq!(fmt_g(0.0), "0");
    }
}
