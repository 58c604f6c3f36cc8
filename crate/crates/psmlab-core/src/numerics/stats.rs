use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> Option<f64> {
    if x.is_empty() {
        None
    } else {
        Some(x.iter().sum::<f64>() / x.len() as f64)
    }
}

/// Unbiased sample variance (divisor `n − 1`).
pub fn sample_variance(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::InsufficientRows {
            needed: 2,
            got: x.len(),
        });
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    Ok(ss / (x.len() - 1) as f64)
}

pub fn sample_sd(x: &[f64]) -> Result<f64> {
    sample_variance(x).map(libm::sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sd_examples() {
        assert_eq!(sample_sd(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_relative_eq!(sample_sd(&[0.0, 2.0]).unwrap(), libm::sqrt(2.0), epsilon = 1e-15);
        assert_relative_eq!(
            sample_sd(&[1.0, 2.0, 3.0, 4.0]).unwrap(),
            libm::sqrt(5.0 / 3.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn sd_needs_two_values() {
        assert_eq!(
            sample_sd(&[3.0]),
            Err(Error::InsufficientRows { needed: 2, got: 1 })
        );
        assert!(sample_sd(&[]).is_err());
    }

    #[test]
    fn mean_of_empty_is_none() {
        assert_eq!(mean(&[]), None);
        assert_eq!(mean(&[1.0, 3.0]), Some(2.0));
    }
}
