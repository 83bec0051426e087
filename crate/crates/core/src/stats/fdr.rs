use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BhOutcome {
    /// Adjusted p-values in input order.
    pub adjusted: Vec<f64>,
    pub significant: Vec<bool>,
}

/// Benjamini-Hochberg step-up adjustment; a test is significant when its
/// adjusted p-value is at most `q`.
pub fn bh_correct(p_values: &[f64], q: f64) -> Result<BhOutcome> {
    if let Some(bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("p-value {bad} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));

    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank0, &i) in order.iter().enumerate().rev() {
        let scaled = p_values[i] * (m as f64 / (rank0 + 1) as f64);
        running = running.min(scaled);
        adjusted[i] = running.min(1.0);
    }
    let significant = adjusted.iter().map(|&a| a <= q).collect();
    Ok(BhOutcome {
        adjusted,
        significant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn examples() {
        let out = bh_correct(&[0.01, 0.02, 0.03], 0.05).unwrap();
        for a in &out.adjusted {
            assert_abs_diff_eq!(*a, 0.03, epsilon = 1e-15);
        }
        assert_eq!(out.significant, vec![true; 3]);

        let out = bh_correct(&[1.0; 4], 0.05).unwrap();
        assert_eq!(out.adjusted, vec![1.0; 4]);
        assert_eq!(out.significant, vec![false; 4]);

        let out = bh_correct(&[0.04], 0.05).unwrap();
        assert_eq!(out.adjusted, vec![0.04]);
        assert_eq!(out.significant, vec![true]);
    }

    #[test]
    fn restores_input_order() {
        let out = bh_correct(&[0.04, 0.001, 0.5], 0.05).unwrap();
        assert_abs_diff_eq!(out.adjusted[1], 0.003, epsilon = 1e-15);
        assert_abs_diff_eq!(out.adjusted[0], 0.06, epsilon = 1e-15);
        assert_abs_diff_eq!(out.adjusted[2], 0.5, epsilon = 1e-15);
        assert_eq!(out.significant, vec![false, true, false]);
    }

    #[test]
    fn rejects_invalid() {
        assert!(bh_correct(&[0.1, 1.5], 0.05).is_err());
        assert!(bh_correct(&[f64::NAN], 0.05).is_err());
        assert_eq!(bh_correct(&[], 0.05).unwrap().adjusted, Vec::<f64>::new());
    }
}
