use larm_nnkit::{log_sum_exp, Matrix};

use crate::{Result, RetrievalError};

#[derive(Debug, Clone)]
pub struct InBatchLoss {
    pub loss: f64,
    pub grad_users: Matrix,
    pub grad_items: Matrix,
}

/// In-batch softmax over L2-normalized rows: row `i` of `users` is paired
/// with row `i` of `items`, every other item in the batch is a negative.
///
/// `loss = mean_i [ logsumexp_j(s_ij) - s_ii ]` with `s = Û Âᵀ / τ`.
pub fn inbatch_softmax_loss(users: &Matrix, items: &Matrix, tau: f64) -> Result<InBatchLoss> {
    inbatch_softmax_loss_with(users, items, tau, true)
}

/// As [`inbatch_softmax_loss`], optionally on raw (unnormalized) rows.
pub fn inbatch_softmax_loss_with(users: &Matrix, items: &Matrix, tau: f64, normalize: bool) -> Result<InBatchLoss> {
    if users.shape() != items.shape() {
        return Err(larm_nnkit::NnError::ShapeMismatch {
            op: "inbatch_softmax_loss",
            detail: format!("{:?} vs {:?}", users.shape(), items.shape()),
        }
        .into());
    }
    let b = users.rows();
    let (u_hat, u_norms) = if normalize { normalize_rows(users)? } else { (users.clone(), vec![1.0; b]) };
    let (a_hat, a_norms) = if normalize { normalize_rows(items)? } else { (items.clone(), vec![1.0; b]) };

    let mut logits = u_hat.matmul_t(&a_hat)?;
    logits.scale(1.0 / tau);
    let mut loss = 0.0;
    // d loss / d logits = (softmax - I) / B
    let mut dlogits = logits.clone();
    for i in 0..b {
        let row = logits.row(i);
        let lse = log_sum_exp(row);
        loss += lse - row[i];
        let drow = dlogits.row_mut(i);
        for (j, v) in drow.iter_mut().enumerate() {
            let p = (*v - lse).exp();
            *v = (p - if i == j { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    loss /= b as f64;

    let mut grad_u_hat = dlogits.matmul(&a_hat)?;
    grad_u_hat.scale(1.0 / tau);
    let mut grad_a_hat = dlogits.t_matmul(&u_hat)?;
    grad_a_hat.scale(1.0 / tau);

    let (grad_users, grad_items) = if normalize {
        (
            normalize_backward(&u_hat, &u_norms, &grad_u_hat),
            normalize_backward(&a_hat, &a_norms, &grad_a_hat),
        )
    } else {
        (grad_u_hat, grad_a_hat)
    };
    Ok(InBatchLoss {
        loss,
        grad_users,
        grad_items,
    })
}

pub(crate) fn normalize_rows(m: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let row = out.row_mut(i);
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 1e-12) {
            return Err(RetrievalError::ZeroNormRow(i));
        }
        row.iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Ok((out, norms))
}

/// Gradient through `y = x / |x|`: `dx = (dy - y (y·dy)) / |x|`.
pub(crate) fn normalize_backward(y: &Matrix, norms: &[f64], dy: &Matrix) -> Matrix {
    let mut dx = dy.clone();
    for i in 0..y.rows() {
        let yr = y.row(i);
        let proj: f64 = yr.iter().zip(dy.row(i)).map(|(a, b)| a * b).sum();
        for (d, &yv) in dx.row_mut(i).iter_mut().zip(yr) {
            *d = (*d - yv * proj) / norms[i];
        }
    }
    dx
}
