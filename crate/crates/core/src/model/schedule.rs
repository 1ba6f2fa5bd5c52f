/// Balancer decay: `exp(-0.01 t)` up to and including epoch `cutoff`, zero
/// afterwards.
pub fn lambda_schedule(epoch: usize, cutoff: usize) -> f64 {
    if epoch <= cutoff {
        (-0.01 * epoch as f64).exp()
    } else {
        0.0
    }
}

/// Affine remap of an active schedule value into `(1, 2]`. Zero stays zero
/// so the Balancer is still removed after the cutoff.
pub fn remap_lambda(lambda: f64) -> f64 {
    if lambda > 0.0 {
        1.0 + lambda
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        assert_eq!(lambda_schedule(0, 10), 1.0);
        assert_eq!(lambda_schedule(11, 10), 0.0);
        assert!((lambda_schedule(100, 100) - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(lambda_schedule(100, 99), 0.0);
    }

    #[test]
    fn non_increasing() {
        let k = 150;
        let vals: Vec<f64> = (0..400).map(|t| lambda_schedule(t, k)).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
        assert!(vals[k + 1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn remap_range() {
        assert_eq!(remap_lambda(0.0), 0.0);
        assert_eq!(remap_lambda(1.0), 2.0);
        assert!(remap_lambda(0.05) > 1.0);
    }
}
