use std::cmp::Ordering;

use larm_nnkit::{dot, Matrix};
use larm_simgen::WindowStore;

use crate::loss::normalize_rows;
use crate::{Result, RetrievalError, TwoTowerModel};

/// Cached item representations, one row per author in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthorIndex {
    pub rows: Matrix,
    pub normalized: bool,
    pub author_ids: Vec<u32>,
}

impl AuthorIndex {
    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }
}

/// Encodes every author from its most recent window and that window's
/// running pooled embedding.
pub fn build_index(model: &TwoTowerModel, windows: &WindowStore) -> Result<AuthorIndex> {
    let n = model.params.n_authors();
    let d = model.dim();
    let mut input = Matrix::zeros(n, 2 * d);
    for a in 0..n as u32 {
        let w = windows.latest(a).ok_or(RetrievalError::MissingWindow(a))?;
        if w.mm_embedding.dim() != d {
            return Err(RetrievalError::DimensionMismatch { expected: d, found: w.mm_embedding.dim() });
        }
        let row = input.row_mut(a as usize);
        row[..d].copy_from_slice(&w.mm_embedding);
        row[d..].copy_from_slice(&w.pooled);
    }
    let authors: Vec<usize> = (0..n).collect();
    let (reps, _) = model.item_reps(&authors, &input)?;
    let rows = if model.normalize { normalize_rows(&reps)?.0 } else { reps };
    Ok(AuthorIndex {
        rows,
        normalized: model.normalize,
        author_ids: (0..n as u32).collect(),
    })
}

/// Exact top-K by inner product, highest score first, ties by ascending id.
pub fn retrieve_topk(index: &AuthorIndex, query: &[f64], k: usize) -> Result<Vec<u32>> {
    let n = index.len();
    if k == 0 || k > n {
        return Err(RetrievalError::KTooLarge { k, n });
    }
    if query.len() != index.rows.cols() {
        return Err(RetrievalError::DimensionMismatch { expected: index.rows.cols(), found: query.len() });
    }
    let scale = if index.normalized {
        let norm = dot(query, query).sqrt();
        if !(norm > 1e-12) {
            return Err(RetrievalError::ZeroNormRow(0));
        }
        1.0 / norm
    } else {
        1.0
    };
    let mut scored: Vec<(f64, u32)> = index
        .rows
        .row_iter()
        .zip(&index.author_ids)
        .map(|(row, &id)| (scale * dot(row, query), id))
        .collect();
    let order = |a: &(f64, u32), b: &(f64, u32)| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
    if k < n {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_by(order);
    Ok(scored.into_iter().map(|(_, id)| id).collect())
}
