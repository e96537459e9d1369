use super::GnnError;

/// Binary cross-entropy of a logit against a 0/1 label, computed stably.
pub fn bce_with_logits(logit: f64, label: bool) -> f64 {
    let y = if label { 1.0 } else { 0.0 };
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check(logits: &[f64], labels: &[bool]) -> Result<(), GnnError> {
    if logits.len() != labels.len() {
        return Err(GnnError::LengthMismatch {
            logits: logits.len(),
            labels: labels.len(),
        });
    }
    Ok(())
}

fn mean_bce(logits: &[f64], labels: &[bool]) -> f64 {
    if logits.is_empty() {
        return 0.0;
    }
    logits
        .iter()
        .zip(labels)
        .map(|(&x, &y)| bce_with_logits(x, y))
        .sum::<f64>()
        / logits.len() as f64
}

/// Mean BCE over row headers plus mean BCE over column headers.
pub fn selection_loss(
    row_logits: &[f64],
    col_logits: &[f64],
    row_labels: &[bool],
    col_labels: &[bool],
) -> Result<f64, GnnError> {
    check(row_logits, row_labels)?;
    check(col_logits, col_labels)?;
    Ok(mean_bce(row_logits, row_labels) + mean_bce(col_logits, col_labels))
}

/// Gradient of [`selection_loss`] with respect to the row and column logits.
pub fn selection_loss_grad(
    row_logits: &[f64],
    col_logits: &[f64],
    row_labels: &[bool],
    col_labels: &[bool],
) -> Result<(Vec<f64>, Vec<f64>), GnnError> {
    check(row_logits, row_labels)?;
    check(col_logits, col_labels)?;
    let grad = |logits: &[f64], labels: &[bool]| {
        let n = logits.len() as f64;
        logits
            .iter()
            .zip(labels)
            .map(|(&x, &y)| (sigmoid(x) - if y { 1.0 } else { 0.0 }) / n)
            .collect::<Vec<_>>()
    };
    Ok((grad(row_logits, row_labels), grad(col_logits, col_labels)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(logits: &[f64], labels: &[bool]) -> f64 {
        let mut total = 0.0;
        for (&x, &y) in logits.iter().zip(labels) {
            let s = 1.0 / (1.0 + (-x).exp());
            let y = if y { 1.0 } else { 0.0 };
            total += -(y * s.ln() + (1.0 - y) * (1.0 - s).ln());
        }
        total / logits.len() as f64
    }

    #[test]
    fn zero_logits_give_two_ln_two() {
        let loss = selection_loss(&[0.0; 3], &[0.0; 2], &[true, false, false], &[false, true]).unwrap();
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn saturated_logits_give_zero_loss() {
        let loss = selection_loss(&[40.0, -40.0], &[-40.0, 40.0], &[true, false], &[false, true]).unwrap();
        assert!(loss < 1e-15);
    }

    #[test]
    fn matches_direct_formula() {
        let rows = [0.3, -1.2, 2.5, 0.01];
        let cols = [-0.7, 1.1, 0.0];
        let rl = [true, false, true, false];
        let cl = [false, true, false];
        let expected = direct(&rows, &rl) + direct(&cols, &cl);
        let got = selection_loss(&rows, &cols, &rl, &cl).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let rows = vec![0.3, -1.2, 2.5];
        let cols = vec![-0.7, 1.1];
        let rl = [true, false, true];
        let cl = [false, true];
        let (gr, gc) = selection_loss_grad(&rows, &cols, &rl, &cl).unwrap();
        let eps = 1e-6;
        for i in 0..rows.len() {
            let mut up = rows.clone();
            up[i] += eps;
            let mut dn = rows.clone();
            dn[i] -= eps;
            let fd = (selection_loss(&up, &cols, &rl, &cl).unwrap() - selection_loss(&dn, &cols, &rl, &cl).unwrap())
                / (2.0 * eps);
            assert!((fd - gr[i]).abs() < 1e-8);
        }
        assert_eq!(gc.len(), 2);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            selection_loss(&[0.0], &[0.0], &[true, false], &[true]),
            Err(GnnError::LengthMismatch { .. })
        ));
    }
}
