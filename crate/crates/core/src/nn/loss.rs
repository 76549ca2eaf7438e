use crate::error::{check_dim, Result};

/// Mean of squared componentwise differences.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_dim(target.len(), pred.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Gradient of [`mse`] with respect to `pred`, written into `out`.
pub fn mse_grad(pred: &[f64], target: &[f64], out: &mut Vec<f64>) -> Result<()> {
    check_dim(target.len(), pred.len())?;
    let n = pred.len() as f64;
    out.clear();
    out.extend(pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_formula() {
        assert_eq!(mse(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(mse(&[3.0], &[1.0]).unwrap(), 4.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let pred = [0.4, -0.2, 1.1];
        let target = [0.0, 0.5, 1.0];
        let mut g = Vec::new();
        mse_grad(&pred, &target, &mut g).unwrap();
        for i in 0..3 {
            let h = 1e-6;
            let mut up = pred;
            let mut down = pred;
            up[i] += h;
            down[i] -= h;
            let fd = (mse(&up, &target).unwrap() - mse(&down, &target).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
