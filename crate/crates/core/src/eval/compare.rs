//! Output comparison and the harness stdout protocol.

use crate::error::{Error, Result};

/// Relative deviation of one element, floored near zero. Matching NaNs and
/// same-signed infinities count as exact.
pub fn relative_deviation(candidate: f64, reference: f64, abs_floor: f64) -> f64 {
    if candidate.is_nan() || reference.is_nan() {
        return if candidate.is_nan() && reference.is_nan() { 0.0 } else { f64::INFINITY };
    }
    if candidate.is_infinite() || reference.is_infinite() {
        return if candidate == reference { 0.0 } else { f64::INFINITY };
    }
    (candidate - reference).abs() / reference.abs().max(abs_floor)
}

/// Element-wise check `|c - r| / max(|r|, floor) <= epsilon`. Returns the
/// verdict and the largest deviation seen.
pub fn check_correctness(
    candidate: &[f64],
    reference: &[f64],
    epsilon: f64,
    abs_floor: f64,
) -> Result<(bool, f64)> {
    if candidate.len() != reference.len() {
        return Err(Error::Invariant(format!(
            "output length {} differs from reference length {}",
            candidate.len(),
            reference.len()
        )));
    }
    let max_dev = candidate
        .iter()
        .zip(reference)
        .map(|(c, r)| relative_deviation(*c, *r, abs_floor))
        .fold(0.0, f64::max);
    Ok((max_dev <= epsilon, max_dev))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessOutput {
    pub values: Vec<f64>,
    pub latency_ns: Option<u64>,
}

/// Parses `N`, then `N` whitespace-separated floats, then an optional
/// `LAT_NS <integer>` line.
pub fn parse_output(stdout: &str) -> Result<HarnessOutput> {
    let mut tokens = stdout.split_whitespace().peekable();
    let count_tok = tokens.next().ok_or_else(|| Error::Parse {
        offset: 0,
        detail: "empty harness output".into(),
    })?;
    let offset_of = |tok: &str| tok.as_ptr() as usize - stdout.as_ptr() as usize;
    let count: usize = count_tok.parse().map_err(|_| Error::Parse {
        offset: offset_of(count_tok),
        detail: format!("expected element count, found `{count_tok}`"),
    })?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let tok = tokens.next().ok_or_else(|| Error::Parse {
            offset: stdout.len(),
            detail: format!("expected {count} values, found {}", values.len()),
        })?;
        values.push(tok.parse::<f64>().map_err(|_| Error::Parse {
            offset: offset_of(tok),
            detail: format!("`{tok}` is not a number"),
        })?);
    }
    let mut latency_ns = None;
    while let Some(tok) = tokens.next() {
        if tok != "LAT_NS" {
            return Err(Error::Parse {
                offset: offset_of(tok),
                detail: format!("unexpected trailing token `{tok}`"),
            });
        }
        let v = tokens.next().ok_or_else(|| Error::Parse {
            offset: stdout.len(),
            detail: "LAT_NS without a value".into(),
        })?;
        latency_ns = Some(v.parse::<u64>().map_err(|_| Error::Parse {
            offset: offset_of(v),
            detail: format!("`{v}` is not an integer latency"),
        })?);
    }
    Ok(HarnessOutput { values, latency_ns })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_outputs() {
        assert_eq!(check_correctness(&[1.0, -2.0], &[1.0, -2.0], 0.01, 1e-6).unwrap(), (true, 0.0));
    }

    #[test]
    fn one_and_a_half_percent_fails() {
        let (ok, dev) = check_correctness(&[101.5], &[100.0], 0.01, 1e-6).unwrap();
        assert!(!ok);
        assert!((dev - 0.015).abs() < 1e-12);
    }

    #[test]
    fn floor_applies_near_zero() {
        let (ok, dev) = check_correctness(&[1e-9], &[0.0], 0.01, 1e-6).unwrap();
        assert!(ok);
        assert!((dev - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn special_values() {
        assert_eq!(relative_deviation(f64::NAN, f64::NAN, 1e-6), 0.0);
        assert_eq!(relative_deviation(1.0, f64::NAN, 1e-6), f64::INFINITY);
        assert_eq!(relative_deviation(f64::INFINITY, f64::INFINITY, 1e-6), 0.0);
        assert_eq!(relative_deviation(f64::NEG_INFINITY, f64::INFINITY, 1e-6), f64::INFINITY);
    }

    #[test]
    fn length_mismatch() {
        assert!(check_correctness(&[1.0], &[1.0, 2.0], 0.01, 1e-6).is_err());
    }

    #[test]
    fn protocol() {
        let out = parse_output("3\n1.5 -2 3e2\nLAT_NS 1234\n").unwrap();
        assert_eq!(out.values, vec![1.5, -2.0, 300.0]);
        assert_eq!(out.latency_ns, Some(1234));
        assert_eq!(parse_output("0\n").unwrap().values, Vec::<f64>::new());
        assert!(parse_output("").is_err());
        assert!(parse_output("2\n1.0\n").is_err());
        let err = parse_output("1\n1.0\nhello\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 6, .. }), "{err}");
        assert!(parse_output("1\nnan\n").unwrap().values[0].is_nan());
    }
}
