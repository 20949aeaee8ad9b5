use larm_core::{EmbeddingVector, Rng, SemanticCode, Task};
use larm_nnkit::params::{visit_mut_prefixed, visit_prefixed};
use larm_nnkit::{clamped_ln, dot, sigmoid, softmax_in_place, Activation, Layer, Matrix, Mlp, MlpTape, Parameters};

use crate::{RankingError, Result};

/// A user's most recent valid views as `(author, code)` tuples, oldest first.
pub type HistorySequence = Vec<(u32, SemanticCode)>;

#[derive(Debug, Clone, PartialEq)]
pub struct RankingParams {
    pub author_id_table: Matrix,
    pub user_id_table: Matrix,
    /// One `K_l x d_c` table per code level.
    pub code_tables: [Matrix; 3],
    /// Attention projections, `(d + 3 d_c) x d_a` each.
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub experts: Vec<Mlp>,
    /// Per-task linear gate over experts.
    pub gates: Vec<Layer>,
    /// Per-task towers ending in one logit.
    pub towers: Vec<Mlp>,
}

impl RankingParams {
    pub fn init(
        n_users: usize,
        n_authors: usize,
        code_sizes: [usize; 3],
        dim: usize,
        code_dim: usize,
        n_experts: usize,
        n_tasks: usize,
        rng: &mut Rng,
    ) -> Self {
        assert!(n_experts >= 1, "need at least one expert");
        let tuple = dim + 3 * code_dim;
        let input = 5 * dim;
        let proj = |rng: &mut Rng| Matrix::uniform(tuple, dim, (6.0 / (tuple + dim) as f64).sqrt(), rng);
        Self {
            author_id_table: Matrix::normal(n_authors, dim, 0.1, rng),
            user_id_table: Matrix::normal(n_users, dim, 0.1, rng),
            code_tables: code_sizes.map(|k| Matrix::normal(k, code_dim, 0.1, rng)),
            w_q: proj(rng),
            w_k: proj(rng),
            w_v: proj(rng),
            experts: (0..n_experts)
                .map(|_| Mlp::new(&[input, dim, dim], Activation::Relu, Activation::Relu, rng))
                .collect(),
            gates: (0..n_tasks).map(|_| Layer::init(input, n_experts, Activation::Identity, rng)).collect(),
            towers: (0..n_tasks)
                .map(|_| Mlp::new(&[dim, dim, 1], Activation::Relu, Activation::Identity, rng))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.author_id_table.cols()
    }

    pub fn code_dim(&self) -> usize {
        self.code_tables[0].cols()
    }

    pub fn attn_dim(&self) -> usize {
        self.w_q.cols()
    }

    pub fn code_sizes(&self) -> [usize; 3] {
        [0, 1, 2].map(|l| self.code_tables[l].rows())
    }

    fn check_author(&self, a: u32) -> Result<()> {
        let n = self.author_id_table.rows();
        if a as usize >= n {
            return Err(RankingError::IdOutOfRange { kind: "author", id: a as usize, n });
        }
        Ok(())
    }

    fn check_user(&self, u: u32) -> Result<()> {
        let n = self.user_id_table.rows();
        if u as usize >= n {
            return Err(RankingError::IdOutOfRange { kind: "user", id: u as usize, n });
        }
        Ok(())
    }

    fn check_code(&self, code: SemanticCode) -> Result<()> {
        for (level, (&value, table)) in code.as_array().iter().zip(&self.code_tables).enumerate() {
            if value as usize >= table.rows() {
                return Err(RankingError::CodeOutOfRange { level, value, size: table.rows() });
            }
        }
        Ok(())
    }
}

impl Parameters for RankingParams {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Matrix)) {
        f("author_id_table", &self.author_id_table);
        f("user_id_table", &self.user_id_table);
        for (l, t) in self.code_tables.iter().enumerate() {
            f(&format!("code_table{}", l + 1), t);
        }
        f("w_q", &self.w_q);
        f("w_k", &self.w_k);
        f("w_v", &self.w_v);
        visit_prefixed("experts", &self.experts, f);
        visit_prefixed("gates", &self.gates, f);
        visit_prefixed("towers", &self.towers, f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix)) {
        f("author_id_table", &mut self.author_id_table);
        f("user_id_table", &mut self.user_id_table);
        for (l, t) in self.code_tables.iter_mut().enumerate() {
            f(&format!("code_table{}", l + 1), t);
        }
        f("w_q", &mut self.w_q);
        f("w_k", &mut self.w_k);
        f("w_v", &mut self.w_v);
        visit_mut_prefixed("experts", &mut self.experts, f);
        visit_mut_prefixed("gates", &mut self.gates, f);
        visit_mut_prefixed("towers", &mut self.towers, f);
    }
}

/// `aID ⊕ c¹ ⊕ c² ⊕ c³` for one tuple.
pub fn tuple_embed(params: &RankingParams, author_id: u32, code: SemanticCode) -> Result<EmbeddingVector> {
    params.check_author(author_id)?;
    params.check_code(code)?;
    let mut out = params.author_id_table.row(author_id as usize).to_vec();
    for (&c, table) in code.as_array().iter().zip(&params.code_tables) {
        out.extend_from_slice(table.row(c as usize));
    }
    Ok(EmbeddingVector::from_vec_unchecked(out))
}

/// Target attention of one candidate tuple over a history. An empty
/// history yields the zero vector.
pub fn code_attention(params: &RankingParams, target: (u32, SemanticCode), history: &[(u32, SemanticCode)]) -> Result<Vec<f64>> {
    let da = params.attn_dim();
    if history.is_empty() {
        return Ok(vec![0.0; da]);
    }
    let project = |w: &Matrix, e: &EmbeddingVector| -> Result<Vec<f64>> {
        Ok(Matrix::row_vector(e.as_slice().to_vec()).matmul(w)?.into_vec())
    };
    let q = project(&params.w_q, &tuple_embed(params, target.0, target.1)?)?;
    let mut scores = Vec::with_capacity(history.len());
    let mut values = Vec::with_capacity(history.len());
    for &(a, c) in history {
        let e = tuple_embed(params, a, c)?;
        scores.push(dot(&q, &project(&params.w_k, &e)?) / (da as f64).sqrt());
        values.push(project(&params.w_v, &e)?);
    }
    softmax_in_place(&mut scores);
    let mut out = vec![0.0; da];
    for (w, v) in scores.iter().zip(&values) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// `(u ⊙ a) ⊕ |u − a|`.
pub fn cross_feature(u: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    if u.len() != a.len() {
        return Err(RankingError::DimensionMismatch { expected: u.len(), found: a.len() });
    }
    let mut out: Vec<f64> = u.iter().zip(a).map(|(x, y)| x * y).collect();
    out.extend(u.iter().zip(a).map(|(x, y)| (x - y).abs()));
    Ok(out)
}

/// Mean binary cross-entropy summed over tasks, and its gradient with
/// respect to the pre-sigmoid logits. `probs` and `labels` are
/// `batch x tasks`.
pub fn ranking_loss(probs: &Matrix, labels: &Matrix) -> Result<(f64, Matrix)> {
    if probs.shape() != labels.shape() {
        return Err(RankingError::ShapeMismatch(format!("preds {:?} vs labels {:?}", probs.shape(), labels.shape())));
    }
    let b = probs.rows().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(probs.rows(), probs.cols());
    for ((g, &p), &y) in grad.as_mut_slice().iter_mut().zip(probs.as_slice()).zip(labels.as_slice()) {
        loss -= y * clamped_ln(p) + (1.0 - y) * clamped_ln(1.0 - p);
        *g = (p - y) / b;
    }
    Ok((loss / b, grad))
}

/// One minibatch of exposures.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingBatch {
    pub users: Vec<u32>,
    pub authors: Vec<u32>,
    /// Code of the exposed window for each row.
    pub codes: Vec<SemanticCode>,
    pub histories: Vec<HistorySequence>,
    /// `batch x tasks` 0/1 labels.
    pub labels: Matrix,
}

impl RankingBatch {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingModel {
    pub params: RankingParams,
    pub tasks: Vec<Task>,
    /// With `false` the code-attention feature is fixed at zero.
    pub with_codes: bool,
}

/// Every table projected by one row block of an attention matrix, so a
/// tuple's key or value is a sum of four rows.
struct Projected {
    author: Matrix,
    codes: [Matrix; 3],
}

impl Projected {
    fn new(params: &RankingParams, w: &Matrix) -> Result<Self> {
        let (d, dc) = (params.dim(), params.code_dim());
        let author = params.author_id_table.matmul(&row_block(w, 0, d))?;
        let mut codes = [Matrix::zeros(0, 0), Matrix::zeros(0, 0), Matrix::zeros(0, 0)];
        for (l, c) in codes.iter_mut().enumerate() {
            *c = params.code_tables[l].matmul(&row_block(w, d + l * dc, dc))?;
        }
        Ok(Self { author, codes })
    }

    fn zeros_like(&self) -> Self {
        Self {
            author: Matrix::zeros(self.author.rows(), self.author.cols()),
            codes: [0, 1, 2].map(|l| Matrix::zeros(self.codes[l].rows(), self.codes[l].cols())),
        }
    }

    fn row(&self, a: u32, c: SemanticCode, out: &mut [f64]) {
        out.copy_from_slice(self.author.row(a as usize));
        for (l, &v) in c.as_array().iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.codes[l].row(v as usize)) {
                *o += x;
            }
        }
    }

    fn add_row(&mut self, a: u32, c: SemanticCode, g: &[f64], scale: f64) {
        for (o, x) in self.author.row_mut(a as usize).iter_mut().zip(g) {
            *o += scale * x;
        }
        for (l, &v) in c.as_array().iter().enumerate() {
            for (o, x) in self.codes[l].row_mut(v as usize).iter_mut().zip(g) {
                *o += scale * x;
            }
        }
    }

    /// Pushes gradients on the projected tables back to the embedding
    /// tables and returns the gradient of the projection matrix.
    fn backward(&self, params: &RankingParams, w: &Matrix, author_grad: &mut Matrix, code_grads: &mut [Matrix; 3]) -> Result<Matrix> {
        let (d, dc) = (params.dim(), params.code_dim());
        let mut gw = Matrix::zeros(w.rows(), w.cols());
        author_grad.add_assign(&self.author.matmul_t(&row_block(w, 0, d))?)?;
        set_row_block(&mut gw, 0, &params.author_id_table.t_matmul(&self.author)?);
        for l in 0..3 {
            let start = d + l * dc;
            code_grads[l].add_assign(&self.codes[l].matmul_t(&row_block(w, start, dc))?)?;
            set_row_block(&mut gw, start, &params.code_tables[l].t_matmul(&self.codes[l])?);
        }
        Ok(gw)
    }
}

/// Subgradient of `|x|`, zero at the kink.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn row_block(m: &Matrix, start: usize, n: usize) -> Matrix {
    let c = m.cols();
    Matrix::new(n, c, m.as_slice()[start * c..(start + n) * c].to_vec()).expect("row block in bounds")
}

fn set_row_block(m: &mut Matrix, start: usize, block: &Matrix) {
    let c = m.cols();
    m.as_mut_slice()[start * c..(start + block.rows()) * c].copy_from_slice(block.as_slice());
}

struct AttentionTape {
    targets: Matrix,
    q: Matrix,
    keys: Projected,
    values: Projected,
    weights: Vec<Vec<f64>>,
}

struct ForwardTape {
    a: Matrix,
    u: Matrix,
    x: Matrix,
    attention: Option<AttentionTape>,
    expert_out: Vec<Matrix>,
    expert_tapes: Vec<MlpTape>,
    gate_probs: Vec<Matrix>,
    tower_tapes: Vec<MlpTape>,
}

impl RankingModel {
    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    fn validate(&self, batch: &RankingBatch) -> Result<()> {
        let n = batch.len();
        if batch.authors.len() != n || batch.codes.len() != n || batch.histories.len() != n {
            return Err(RankingError::ShapeMismatch("batch columns differ in length".into()));
        }
        if batch.labels.rows() != n || batch.labels.cols() != self.tasks.len() {
            return Err(RankingError::ShapeMismatch(format!(
                "labels {:?}, expected ({n}, {})",
                batch.labels.shape(),
                self.tasks.len()
            )));
        }
        if self.params.towers.len() != self.tasks.len() || self.params.gates.len() != self.tasks.len() {
            return Err(RankingError::ShapeMismatch("task heads differ from task list".into()));
        }
        for (&u, &a) in batch.users.iter().zip(&batch.authors) {
            self.params.check_user(u)?;
            self.params.check_author(a)?;
        }
        if self.with_codes {
            for &c in &batch.codes {
                self.params.check_code(c)?;
            }
            for &(a, c) in batch.histories.iter().flatten() {
                self.params.check_author(a)?;
                self.params.check_code(c)?;
            }
        }
        Ok(())
    }

    fn attention_forward(&self, batch: &RankingBatch, a: &Matrix) -> Result<(Matrix, AttentionTape)> {
        let p = &self.params;
        let (d, dc, da) = (p.dim(), p.code_dim(), p.attn_dim());
        let n = batch.len();
        let mut targets = Matrix::zeros(n, d + 3 * dc);
        for (i, &c) in batch.codes.iter().enumerate() {
            let row = targets.row_mut(i);
            row[..d].copy_from_slice(a.row(i));
            for (l, &v) in c.as_array().iter().enumerate() {
                row[d + l * dc..d + (l + 1) * dc].copy_from_slice(p.code_tables[l].row(v as usize));
            }
        }
        let q = targets.matmul(&p.w_q)?;
        let keys = Projected::new(p, &p.w_k)?;
        let values = Projected::new(p, &p.w_v)?;
        let scale = 1.0 / (da as f64).sqrt();
        let mut feature = Matrix::zeros(n, da);
        let mut weights = Vec::with_capacity(n);
        let (mut k, mut v) = (vec![0.0; da], vec![0.0; da]);
        for (i, h) in batch.histories.iter().enumerate() {
            let mut w: Vec<f64> = h
                .iter()
                .map(|&(ha, hc)| {
                    keys.row(ha, hc, &mut k);
                    scale * dot(q.row(i), &k)
                })
                .collect();
            softmax_in_place(&mut w);
            let out = feature.row_mut(i);
            for (&(ha, hc), &wi) in h.iter().zip(&w) {
                values.row(ha, hc, &mut v);
                for (o, x) in out.iter_mut().zip(&v) {
                    *o += wi * x;
                }
            }
            weights.push(w);
        }
        Ok((feature, AttentionTape { targets, q, keys, values, weights }))
    }

    fn forward(&self, batch: &RankingBatch) -> Result<(Matrix, ForwardTape)> {
        self.validate(batch)?;
        let p = &self.params;
        let d = p.dim();
        let n = batch.len();
        let authors: Vec<usize> = batch.authors.iter().map(|&a| a as usize).collect();
        let users: Vec<usize> = batch.users.iter().map(|&u| u as usize).collect();
        let a = p.author_id_table.gather_rows(&authors);
        let u = p.user_id_table.gather_rows(&users);
        let mut cross = Matrix::zeros(n, 2 * d);
        for i in 0..n {
            let row = cross_feature(u.row(i), a.row(i))?;
            cross.row_mut(i).copy_from_slice(&row);
        }
        let (feature, attention) = if self.with_codes {
            let (f, tape) = self.attention_forward(batch, &a)?;
            (f, Some(tape))
        } else {
            (Matrix::zeros(n, p.attn_dim()), None)
        };
        let x = Matrix::hstack(&[&a, &u, &cross, &feature])?;

        let mut expert_out = Vec::with_capacity(p.experts.len());
        let mut expert_tapes = Vec::with_capacity(p.experts.len());
        for e in &p.experts {
            let (h, tape) = e.forward(&x)?;
            expert_out.push(h);
            expert_tapes.push(tape);
        }
        let mut probs = Matrix::zeros(n, self.tasks.len());
        let mut gate_probs = Vec::with_capacity(self.tasks.len());
        let mut tower_tapes = Vec::with_capacity(self.tasks.len());
        for t in 0..self.tasks.len() {
            let mut g = x.matmul(&p.gates[t].weight)?;
            g.add_row_broadcast(&p.gates[t].bias)?;
            let mut mix = Matrix::zeros(n, d);
            for i in 0..n {
                softmax_in_place(g.row_mut(i));
                for (e, h) in expert_out.iter().enumerate() {
                    let ge = g.get(i, e);
                    for (m, hv) in mix.row_mut(i).iter_mut().zip(h.row(i)) {
                        *m += ge * hv;
                    }
                }
            }
            let (logit, tape) = p.towers[t].forward(&mix)?;
            for i in 0..n {
                probs.set(i, t, sigmoid(logit.get(i, 0)));
            }
            gate_probs.push(g);
            tower_tapes.push(tape);
        }
        Ok((
            probs,
            ForwardTape { a, u, x, attention, expert_out, expert_tapes, gate_probs, tower_tapes },
        ))
    }

    /// Per-task probabilities, `batch x tasks`.
    pub fn predict(&self, batch: &RankingBatch) -> Result<Matrix> {
        self.forward(batch).map(|(p, _)| p)
    }

    /// Loss and parameter gradients for one batch.
    pub fn batch_loss(&self, batch: &RankingBatch) -> Result<(f64, RankingParams)> {
        let (probs, tape) = self.forward(batch)?;
        let (loss, glogit) = ranking_loss(&probs, &batch.labels)?;
        let p = &self.params;
        let (n, d) = (batch.len(), p.dim());
        let mut grads = p.clone();
        grads.zero();

        let mut dx = Matrix::zeros(n, tape.x.cols());
        let mut dh: Vec<Matrix> = tape.expert_out.iter().map(|h| Matrix::zeros(h.rows(), h.cols())).collect();
        for t in 0..self.tasks.len() {
            let col = Matrix::new(n, 1, (0..n).map(|i| glogit.get(i, t)).collect())?;
            let (gtower, dmix) = p.towers[t].backward(&tape.tower_tapes[t], &col)?;
            grads.towers[t] = gtower;
            let g = &tape.gate_probs[t];
            let mut dz = Matrix::zeros(n, p.experts.len());
            for i in 0..n {
                let dg: Vec<f64> = tape.expert_out.iter().map(|h| dot(dmix.row(i), h.row(i))).collect();
                let avg: f64 = dg.iter().zip(g.row(i)).map(|(a, b)| a * b).sum();
                for e in 0..dg.len() {
                    let ge = g.get(i, e);
                    dz.set(i, e, ge * (dg[e] - avg));
                    for (o, m) in dh[e].row_mut(i).iter_mut().zip(dmix.row(i)) {
                        *o += ge * m;
                    }
                }
            }
            grads.gates[t].weight = tape.x.t_matmul(&dz)?;
            grads.gates[t].bias = dz.sum_rows();
            dx.add_assign(&dz.matmul_t(&p.gates[t].weight)?)?;
        }
        for (e, expert) in p.experts.iter().enumerate() {
            let (gexp, dxe) = expert.backward(&tape.expert_tapes[e], &dh[e])?;
            grads.experts[e] = gexp;
            dx.add_assign(&dxe)?;
        }

        // Split dx back into [a, u, cross, feature].
        let mut da = dx.columns(0, d);
        let mut du = dx.columns(d, d);
        for i in 0..n {
            let (ar, ur) = (tape.a.row(i), tape.u.row(i));
            let gx = dx.row(i);
            for j in 0..d {
                let gp = gx[2 * d + j];
                let gabs = gx[3 * d + j];
                let s = sign(ur[j] - ar[j]);
                da.set(i, j, da.get(i, j) + gp * ur[j] - s * gabs);
                du.set(i, j, du.get(i, j) + gp * ar[j] + s * gabs);
            }
        }
        if let Some(att) = &tape.attention {
            let gf = dx.columns(4 * d, p.attn_dim());
            self.attention_backward(batch, att, &gf, &mut da, &mut grads)?;
        }
        let authors: Vec<usize> = batch.authors.iter().map(|&a| a as usize).collect();
        let users: Vec<usize> = batch.users.iter().map(|&u| u as usize).collect();
        grads.author_id_table.scatter_add_rows(&authors, &da);
        grads.user_id_table.scatter_add_rows(&users, &du);
        Ok((loss, grads))
    }

    fn attention_backward(
        &self,
        batch: &RankingBatch,
        att: &AttentionTape,
        gf: &Matrix,
        da: &mut Matrix,
        grads: &mut RankingParams,
    ) -> Result<()> {
        let p = &self.params;
        let (d, dc, dattn) = (p.dim(), p.code_dim(), p.attn_dim());
        let scale = 1.0 / (dattn as f64).sqrt();
        let mut gq = Matrix::zeros(batch.len(), dattn);
        let mut gkeys = att.keys.zeros_like();
        let mut gvalues = att.values.zeros_like();
        let (mut k, mut v) = (vec![0.0; dattn], vec![0.0; dattn]);
        for (i, h) in batch.histories.iter().enumerate() {
            if h.is_empty() {
                continue;
            }
            let w = &att.weights[i];
            let g = gf.row(i);
            let gw: Vec<f64> = h
                .iter()
                .map(|&(ha, hc)| {
                    att.values.row(ha, hc, &mut v);
                    dot(g, &v)
                })
                .collect();
            let avg: f64 = gw.iter().zip(w).map(|(a, b)| a * b).sum();
            let q = att.q.row(i);
            for (j, &(ha, hc)) in h.iter().enumerate() {
                gvalues.add_row(ha, hc, g, w[j]);
                let gs = w[j] * (gw[j] - avg) * scale;
                att.keys.row(ha, hc, &mut k);
                for (o, x) in gq.row_mut(i).iter_mut().zip(&k) {
                    *o += gs * x;
                }
                gkeys.add_row(ha, hc, q, gs);
            }
        }
        grads.w_k = gkeys.backward(p, &p.w_k, &mut grads.author_id_table, &mut grads.code_tables)?;
        grads.w_v = gvalues.backward(p, &p.w_v, &mut grads.author_id_table, &mut grads.code_tables)?;

        // The query is the target tuple: its author part joins `da`, its
        // code parts go straight to the code tables.
        grads.w_q = att.targets.t_matmul(&gq)?;
        let gt = gq.matmul_t(&p.w_q)?;
        for (i, &c) in batch.codes.iter().enumerate() {
            let row = gt.row(i);
            for (o, x) in da.row_mut(i).iter_mut().zip(&row[..d]) {
                *o += x;
            }
            for (l, &v) in c.as_array().iter().enumerate() {
                for (o, x) in grads.code_tables[l].row_mut(v as usize).iter_mut().zip(&row[d + l * dc..d + (l + 1) * dc]) {
                    *o += x;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use larm_nnkit::grad_check_params;

    fn toy(seed: u64, experts: usize, tasks: usize) -> RankingModel {
        let mut rng = Rng::new(seed);
        RankingModel {
            params: RankingParams::init(5, 6, [4, 3, 2], 4, 2, experts, tasks, &mut rng),
            tasks: Task::ALL[..tasks].to_vec(),
            with_codes: true,
        }
    }

    fn toy_batch(seed: u64, n: usize, tasks: usize) -> RankingBatch {
        let mut rng = Rng::new(seed);
        let code = |rng: &mut Rng| SemanticCode::new(rng.below(4) as u32, rng.below(3) as u32, rng.below(2) as u32);
        let mut labels = Matrix::zeros(n, tasks);
        labels.as_mut_slice().iter_mut().for_each(|y| *y = if rng.bernoulli(0.4) { 1.0 } else { 0.0 });
        RankingBatch {
            users: (0..n).map(|_| rng.below(5) as u32).collect(),
            authors: (0..n).map(|_| rng.below(6) as u32).collect(),
            codes: (0..n).map(|_| code(&mut rng)).collect(),
            histories: (0..n)
                .map(|i| (0..if i == 0 { 0 } else { 2 + i % 4 }).map(|_| (rng.below(6) as u32, code(&mut rng))).collect())
                .collect(),
            labels,
        }
    }

    fn matvec(e: &[f64], w: &Matrix) -> Vec<f64> {
        (0..w.cols()).map(|j| (0..w.rows()).map(|i| e[i] * w.get(i, j)).sum()).collect()
    }

    #[test]
    fn tuple_embed_concatenates_rows() {
        let mut p = toy(1, 1, 1).params;
        p.author_id_table = Matrix::zeros(6, 4);
        p.code_tables = [Matrix::zeros(4, 2), Matrix::zeros(3, 2), Matrix::zeros(2, 2)];
        let e = tuple_embed(&p, 2, SemanticCode::new(1, 1, 1)).unwrap();
        assert_eq!(e.as_slice(), &[0.0; 10]);

        let mut p = RankingParams::init(1, 2, [2, 2, 2], 2, 1, 1, 1, &mut Rng::new(0));
        p.author_id_table = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        p.code_tables = [
            Matrix::from_rows(&[vec![5.0], vec![6.0]]),
            Matrix::from_rows(&[vec![7.0], vec![8.0]]),
            Matrix::from_rows(&[vec![9.0], vec![10.0]]),
        ];
        let e = tuple_embed(&p, 1, SemanticCode::new(0, 1, 0)).unwrap();
        assert_eq!(e.as_slice(), &[3.0, 4.0, 5.0, 8.0, 9.0]);
        assert_eq!(e, tuple_embed(&p, 1, SemanticCode::new(0, 1, 0)).unwrap());
        assert!(matches!(tuple_embed(&p, 2, SemanticCode::new(0, 0, 0)), Err(RankingError::IdOutOfRange { .. })));
        assert!(matches!(
            tuple_embed(&p, 0, SemanticCode::new(0, 0, 2)),
            Err(RankingError::CodeOutOfRange { level: 2, value: 2, size: 2 })
        ));
    }

    #[test]
    fn attention_special_cases() {
        let p = toy(2, 1, 1).params;
        let target = (1, SemanticCode::new(0, 0, 0));
        assert_eq!(code_attention(&p, target, &[]).unwrap(), vec![0.0; 4]);

        let h = (3, SemanticCode::new(2, 1, 1));
        let v = matvec(tuple_embed(&p, h.0, h.1).unwrap().as_slice(), &p.w_v);
        let single = code_attention(&p, target, &[h]).unwrap();
        let repeated = code_attention(&p, target, &[h, h, h]).unwrap();
        for j in 0..4 {
            assert!((single[j] - v[j]).abs() < 1e-12);
            assert!((repeated[j] - v[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_matches_scalar_oracle() {
        let p = toy(3, 1, 1).params;
        let target = (4, SemanticCode::new(3, 2, 0));
        let hist = [(0, SemanticCode::new(0, 0, 0)), (5, SemanticCode::new(1, 2, 1)), (2, SemanticCode::new(3, 0, 1))];
        let q = matvec(tuple_embed(&p, target.0, target.1).unwrap().as_slice(), &p.w_q);
        let mut s = Vec::new();
        let mut vs = Vec::new();
        for &(a, c) in &hist {
            let e = tuple_embed(&p, a, c).unwrap();
            let k = matvec(e.as_slice(), &p.w_k);
            s.push(q.iter().zip(&k).map(|(x, y)| x * y).sum::<f64>() / 2.0);
            vs.push(matvec(e.as_slice(), &p.w_v));
        }
        let z: f64 = s.iter().map(|x| x.exp()).sum();
        let w: Vec<f64> = s.iter().map(|x| x.exp() / z).collect();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let got = code_attention(&p, target, &hist).unwrap();
        for j in 0..4 {
            let want: f64 = (0..3).map(|i| w[i] * vs[i][j]).sum();
            assert!((got[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_attention_matches_single_tuple_path() {
        let model = toy(4, 2, 2);
        let batch = toy_batch(5, 8, 2);
        let a = model.params.author_id_table.gather_rows(&batch.authors.iter().map(|&a| a as usize).collect::<Vec<_>>());
        let (feature, _) = model.attention_forward(&batch, &a).unwrap();
        for i in 0..batch.len() {
            let want = code_attention(&model.params, (batch.authors[i], batch.codes[i]), &batch.histories[i]).unwrap();
            for (x, y) in feature.row(i).iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_feature_cases() {
        let u = [1.0, -2.0, 0.5];
        assert_eq!(cross_feature(&u, &u).unwrap(), vec![1.0, 4.0, 0.25, 0.0, 0.0, 0.0]);
        assert_eq!(cross_feature(&u, &[0.0; 3]).unwrap(), vec![0.0, -0.0, 0.0, 1.0, 2.0, 0.5]);
        let (u, a) = ([0.3, -1.1, 2.0, 0.0], [-0.7, 0.4, 1.5, 2.5]);
        let got = cross_feature(&u, &a).unwrap();
        for j in 0..4 {
            assert_eq!(got[j], u[j] * a[j]);
            assert_eq!(got[4 + j], (u[j] - a[j]).abs());
        }
        assert!(matches!(cross_feature(&u, &a[..3]), Err(RankingError::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_parameters_predict_one_half() {
        let mut model = toy(6, 3, 6);
        model.params.zero();
        let batch = toy_batch(7, 5, 6);
        assert!(model.predict(&batch).unwrap().as_slice().iter().all(|&p| p == 0.5));
    }

    /// Forward pass of one row written out by hand.
    fn oracle(model: &RankingModel, batch: &RankingBatch, i: usize, t: usize) -> f64 {
        let p = &model.params;
        let a = p.author_id_table.row(batch.authors[i] as usize);
        let u = p.user_id_table.row(batch.users[i] as usize);
        let mut x = a.to_vec();
        x.extend_from_slice(u);
        x.extend(cross_feature(u, a).unwrap());
        let f = if model.with_codes {
            code_attention(p, (batch.authors[i], batch.codes[i]), &batch.histories[i]).unwrap()
        } else {
            vec![0.0; p.attn_dim()]
        };
        x.extend(f);
        let experts: Vec<Vec<f64>> = p.experts.iter().map(|e| e.apply_vec(&x).unwrap()).collect();
        let mut g: Vec<f64> = (0..p.experts.len())
            .map(|e| p.gates[t].bias.get(0, e) + (0..x.len()).map(|k| x[k] * p.gates[t].weight.get(k, e)).sum::<f64>())
            .collect();
        let m = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = g.iter().map(|v| (v - m).exp()).sum();
        g.iter_mut().for_each(|v| *v = (*v - m).exp() / z);
        let mix: Vec<f64> = (0..p.dim()).map(|j| (0..experts.len()).map(|e| g[e] * experts[e][j]).sum()).collect();
        let logit = p.towers[t].apply_vec(&mix).unwrap()[0];
        1.0 / (1.0 + (-logit).exp())
    }

    #[test]
    fn two_expert_forward_matches_blend() {
        let mut model = toy(8, 2, 2);
        for g in &mut model.params.gates {
            g.weight.fill(0.0);
            g.bias = Matrix::row_vector(vec![0.0, (0.7f64 / 0.3).ln()]);
        }
        let batch = toy_batch(9, 6, 2);
        let probs = model.predict(&batch).unwrap();
        for i in 0..6 {
            for t in 0..2 {
                assert!((probs.get(i, t) - oracle(&model, &batch, i, t)).abs() < 1e-12);
            }
        }
        let (_, tape) = model.forward(&batch).unwrap();
        for g in &tape.gate_probs {
            for i in 0..6 {
                assert!((g.get(i, 0) - 0.3).abs() < 1e-12 && (g.get(i, 1) - 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_expert_gate_is_one() {
        let model = toy(10, 1, 3);
        let batch = toy_batch(11, 4, 3);
        let (probs, tape) = model.forward(&batch).unwrap();
        assert!(tape.gate_probs.iter().all(|g| g.as_slice().iter().all(|&v| v == 1.0)));
        for i in 0..4 {
            assert!((probs.get(i, 2) - oracle(&model, &batch, i, 2)).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_values() {
        let (l, g) = ranking_loss(&Matrix::row_vector(vec![0.5]), &Matrix::row_vector(vec![1.0])).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g.as_slice(), &[-0.5]);
        let (l, _) = ranking_loss(&Matrix::row_vector(vec![1.0, 0.0]), &Matrix::row_vector(vec![1.0, 0.0])).unwrap();
        assert!(l.abs() < 1e-9);
        assert!(ranking_loss(&Matrix::zeros(2, 1), &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            for with_codes in [true, false] {
                let mut model = toy(20 + seed, 3, 2);
                model.with_codes = with_codes;
                // Unit-scale tables keep every gradient well above
                // finite-difference noise; nonzero biases keep dead relu
                // rows off the kink.
                let mut rng = Rng::new(60 + seed);
                let p = &mut model.params;
                for t in [&mut p.author_id_table, &mut p.user_id_table].into_iter().chain(p.code_tables.iter_mut()) {
                    *t = Matrix::normal(t.rows(), t.cols(), 1.0, &mut rng);
                }
                for l in p.experts.iter_mut().chain(p.towers.iter_mut()).flat_map(|m| m.layers.iter_mut()) {
                    l.bias = Matrix::normal(1, l.bias.cols(), 0.1, &mut rng);
                }
                let batch = toy_batch(40 + seed, 6, 2);
                let err = grad_check_params(
                    &model.params,
                    |p| {
                        let m = RankingModel { params: p.clone(), ..model.clone() };
                        m.batch_loss(&batch).unwrap()
                    },
                    1e-5,
                );
                assert!(err < 1e-5, "seed {seed} codes {with_codes}: {err}");
            }
        }
    }

    #[test]
    fn without_codes_ignores_code_columns() {
        let mut model = toy(12, 2, 2);
        model.with_codes = false;
        let batch = toy_batch(13, 8, 2);
        let mut permuted = batch.clone();
        permuted.codes.reverse();
        permuted.histories.rotate_left(3);
        assert_eq!(model.predict(&batch).unwrap(), model.predict(&permuted).unwrap());
    }

    #[test]
    fn malformed_batches_are_rejected() {
        let model = toy(14, 2, 2);
        let mut batch = toy_batch(15, 3, 2);
        batch.labels = Matrix::zeros(3, 3);
        assert!(matches!(model.predict(&batch), Err(RankingError::ShapeMismatch(_))));
        let mut batch = toy_batch(15, 3, 2);
        batch.users[0] = 99;
        assert!(matches!(model.predict(&batch), Err(RankingError::IdOutOfRange { kind: "user", .. })));
    }
}
