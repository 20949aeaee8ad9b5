use larm_core::{EmbeddingVector, Rng, SemanticCode};
use larm_nnkit::params::{visit_mut_prefixed, visit_prefixed};
use larm_nnkit::{sigmoid, Activation, Matrix, Mlp, MlpTape, Parameters};

use crate::loss::{inbatch_softmax_loss_with, normalize_backward, normalize_rows};
use crate::{Result, RetrievalError, Variant};

/// Code embedding tables and the projection into the user space.
#[derive(Debug, Clone, PartialEq)]
pub struct UserCodeParams {
    /// One `K_l x code_dim` table per level.
    pub tables: [Matrix; 3],
    /// `3·code_dim x d`.
    pub projection: Matrix,
}

impl UserCodeParams {
    pub fn code_dim(&self) -> usize {
        self.tables[0].cols()
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.tables[0].rows(), self.tables[1].rows(), self.tables[2].rows()]
    }

    /// Sum over the history of the concatenated level embeddings.
    fn pool(&self, history: &[SemanticCode], out: &mut [f64]) -> Result<()> {
        let dc = self.code_dim();
        let sizes = self.sizes();
        for code in history {
            if code.check_bounds(sizes).is_err() {
                return Err(RetrievalError::CodeOutOfRange(*code));
            }
            for (level, &c) in code.as_array().iter().enumerate() {
                let row = self.tables[level].row(c as usize);
                for (o, v) in out[level * dc..(level + 1) * dc].iter_mut().zip(row) {
                    *o += v;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoTowerParams {
    pub author_id_table: Matrix,
    pub user_id_table: Matrix,
    /// `2d -> d`, applied to `llm_30s ⊕ llm_pooling`.
    pub mlp_llm: Mlp,
    pub mlp_item: Mlp,
    pub mlp_user: Mlp,
    /// `d x 1` gate weight applied to the author ID embedding.
    pub gate_weight: Matrix,
    pub gate_bias: Matrix,
    pub user_codes: Option<UserCodeParams>,
}

impl TwoTowerParams {
    /// Towers are `in -> 2d -> d` with a relu hidden layer; ID tables start
    /// at N(0, 0.1²) and the gate at λ ≈ 0.5.
    pub fn init(n_users: usize, n_authors: usize, dim: usize, codes: Option<([usize; 3], usize)>, rng: &mut Rng) -> Self {
        let tower = |input: usize, rng: &mut Rng| Mlp::new(&[input, 2 * dim, dim], Activation::Relu, Activation::Identity, rng);
        let author_id_table = Matrix::normal(n_authors, dim, 0.1, rng);
        let user_id_table = Matrix::normal(n_users, dim, 0.1, rng);
        let mlp_llm = tower(2 * dim, rng);
        let mlp_item = tower(dim, rng);
        let mlp_user = tower(dim, rng);
        let gate_weight = Matrix::uniform(dim, 1, (6.0 / (dim + 1) as f64).sqrt(), rng);
        let gate_bias = Matrix::zeros(1, 1);
        let user_codes = codes.map(|(sizes, dc)| UserCodeParams {
            tables: sizes.map(|k| Matrix::normal(k, dc, 0.1, rng)),
            projection: Matrix::uniform(3 * dc, dim, (6.0 / (3 * dc + dim) as f64).sqrt(), rng),
        });
        Self {
            author_id_table,
            user_id_table,
            mlp_llm,
            mlp_item,
            mlp_user,
            gate_weight,
            gate_bias,
            user_codes,
        }
    }

    pub fn dim(&self) -> usize {
        self.author_id_table.cols()
    }

    pub fn n_authors(&self) -> usize {
        self.author_id_table.rows()
    }

    pub fn n_users(&self) -> usize {
        self.user_id_table.rows()
    }

    fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.zero();
        g
    }
}

impl Parameters for TwoTowerParams {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Matrix)) {
        f("author_id_table", &self.author_id_table);
        f("user_id_table", &self.user_id_table);
        visit_prefixed("mlp_llm", &self.mlp_llm, f);
        visit_prefixed("mlp_item", &self.mlp_item, f);
        visit_prefixed("mlp_user", &self.mlp_user, f);
        f("gate.weight", &self.gate_weight);
        f("gate.bias", &self.gate_bias);
        if let Some(c) = &self.user_codes {
            for (i, t) in c.tables.iter().enumerate() {
                f(&format!("user_codes.table{}", i + 1), t);
            }
            f("user_codes.projection", &c.projection);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix)) {
        f("author_id_table", &mut self.author_id_table);
        f("user_id_table", &mut self.user_id_table);
        visit_mut_prefixed("mlp_llm", &mut self.mlp_llm, f);
        visit_mut_prefixed("mlp_item", &mut self.mlp_item, f);
        visit_mut_prefixed("mlp_user", &mut self.mlp_user, f);
        f("gate.weight", &mut self.gate_weight);
        f("gate.bias", &mut self.gate_bias);
        if let Some(c) = &mut self.user_codes {
            for (i, t) in c.tables.iter_mut().enumerate() {
                f(&format!("user_codes.table{}", i + 1), t);
            }
            f("user_codes.projection", &mut c.projection);
        }
    }
}

/// A batch of positive `(user, author-window)` pairs.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub users: Vec<usize>,
    pub authors: Vec<usize>,
    /// `B x 2d`: each row is `llm_30s ⊕ llm_pooling` of the exposed window.
    pub llm_input: Matrix,
    /// Semantic codes of each user's recent views; empty when codes are off.
    pub histories: Vec<Vec<SemanticCode>>,
}

/// Branch output (unit rows when `branch_norm`), its MLP tape, and the
/// pre-normalization row norms.
type BranchTape = (Matrix, MlpTape, Option<Vec<f64>>);

struct ItemTape {
    aid: Matrix,
    llm: Option<BranchTape>,
    item: Option<BranchTape>,
    lambda: Vec<f64>,
}

struct UserTape {
    tower: MlpTape,
    pooled: Option<Matrix>,
}

/// Summary of the per-author gate values λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateStats {
    pub mean: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoTowerModel {
    pub params: TwoTowerParams,
    pub variant: Variant,
    pub tau: f64,
    pub normalize: bool,
    /// Scale both item branches to unit rows before the gated mix, so λ
    /// alone sets each branch's share.
    pub branch_norm: bool,
}

impl TwoTowerModel {
    fn branch(&self, mlp: &Mlp, x: &Matrix) -> Result<BranchTape> {
        let (out, tape) = mlp.forward(x)?;
        if self.branch_norm {
            let (unit, norms) = normalize_rows(&out)?;
            Ok((unit, tape, Some(norms)))
        } else {
            Ok((out, tape, None))
        }
    }

    fn branch_backward(mlp: &Mlp, tape: &BranchTape, grad: &Matrix) -> Result<(Mlp, Matrix)> {
        let (out, t, norms) = tape;
        let grad = match norms {
            Some(n) => normalize_backward(out, n, grad),
            None => grad.clone(),
        };
        Ok(mlp.backward(t, &grad)?)
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    fn check_author(&self, a: usize) -> Result<()> {
        if a >= self.params.n_authors() {
            return Err(RetrievalError::UnknownAuthor(a as u32));
        }
        Ok(())
    }

    fn check_user(&self, u: usize) -> Result<()> {
        if u >= self.params.n_users() {
            return Err(RetrievalError::UnknownUser(u as u32));
        }
        Ok(())
    }

    fn item_forward(&self, authors: &[usize], llm_input: &Matrix) -> Result<(Matrix, ItemTape)> {
        for &a in authors {
            self.check_author(a)?;
        }
        let d = self.dim();
        if llm_input.cols() != 2 * d {
            return Err(RetrievalError::DimensionMismatch {
                expected: 2 * d,
                found: llm_input.cols(),
            });
        }
        let p = &self.params;
        let aid = p.author_id_table.gather_rows(authors);
        let (out, llm, item, lambda) = match self.variant {
            Variant::IdOnly => {
                let r = self.branch(&p.mlp_item, &aid)?;
                (r.0.clone(), None, Some(r), vec![0.0; authors.len()])
            }
            Variant::LlmOnly => {
                let l = self.branch(&p.mlp_llm, llm_input)?;
                (l.0.clone(), Some(l), None, vec![1.0; authors.len()])
            }
            Variant::GatedFusion => {
                let l = self.branch(&p.mlp_llm, llm_input)?;
                let r = self.branch(&p.mlp_item, &aid)?;
                let gate = aid.matmul(&p.gate_weight)?;
                let b = p.gate_bias.get(0, 0);
                let lambda: Vec<f64> = gate.as_slice().iter().map(|g| sigmoid(g + b)).collect();
                let mut fused = l.0.clone();
                for (i, &lam) in lambda.iter().enumerate() {
                    for (f, &rv) in fused.row_mut(i).iter_mut().zip(r.0.row(i)) {
                        *f = lam * *f + (1.0 - lam) * rv;
                    }
                }
                (fused, Some(l), Some(r), lambda)
            }
        };
        Ok((out, ItemTape { aid, llm, item, lambda }))
    }

    fn item_backward(&self, authors: &[usize], tape: &ItemTape, grad: &Matrix, grads: &mut TwoTowerParams) -> Result<()> {
        let p = &self.params;
        let mut grad_aid = Matrix::zeros(tape.aid.rows(), tape.aid.cols());
        match self.variant {
            Variant::IdOnly => {
                let t = tape.item.as_ref().expect("item tape");
                let (g, gx) = Self::branch_backward(&p.mlp_item, t, grad)?;
                grads.mlp_item = g;
                grad_aid = gx;
            }
            Variant::LlmOnly => {
                let t = tape.llm.as_ref().expect("llm tape");
                grads.mlp_llm = Self::branch_backward(&p.mlp_llm, t, grad)?.0;
            }
            Variant::GatedFusion => {
                let tl = tape.llm.as_ref().expect("llm tape");
                let tr = tape.item.as_ref().expect("item tape");
                let (l, r) = (&tl.0, &tr.0);
                let mut grad_l = grad.clone();
                let mut grad_r = grad.clone();
                let mut grad_gate = Matrix::zeros(grad.rows(), 1);
                for (i, &lam) in tape.lambda.iter().enumerate() {
                    grad_l.row_mut(i).iter_mut().for_each(|v| *v *= lam);
                    grad_r.row_mut(i).iter_mut().for_each(|v| *v *= 1.0 - lam);
                    let dlam: f64 = grad.row(i).iter().zip(l.row(i)).zip(r.row(i)).map(|((g, a), b)| g * (a - b)).sum();
                    grad_gate.set(i, 0, dlam * lam * (1.0 - lam));
                }
                grads.mlp_llm = Self::branch_backward(&p.mlp_llm, tl, &grad_l)?.0;
                let (g, gx) = Self::branch_backward(&p.mlp_item, tr, &grad_r)?;
                grads.mlp_item = g;
                grad_aid = gx;
                grads.gate_weight = tape.aid.t_matmul(&grad_gate)?;
                grads.gate_bias.set(0, 0, grad_gate.as_slice().iter().sum());
                grad_aid.add_assign(&grad_gate.matmul_t(&p.gate_weight)?)?;
            }
        }
        grads.author_id_table.scatter_add_rows(authors, &grad_aid);
        Ok(())
    }

    fn user_forward(&self, users: &[usize], histories: &[Vec<SemanticCode>]) -> Result<(Matrix, UserTape)> {
        for &u in users {
            self.check_user(u)?;
        }
        let p = &self.params;
        let uid = p.user_id_table.gather_rows(users);
        let (mut out, tower) = p.mlp_user.forward(&uid)?;
        let has_history = histories.iter().any(|h| !h.is_empty());
        let pooled = match &p.user_codes {
            Some(codes) => {
                let width = 3 * codes.code_dim();
                let mut pooled = Matrix::zeros(users.len(), width);
                for (i, h) in histories.iter().enumerate().take(users.len()) {
                    codes.pool(h, pooled.row_mut(i))?;
                }
                out.add_assign(&pooled.matmul(&codes.projection)?)?;
                Some(pooled)
            }
            None if has_history => return Err(RetrievalError::NoCodeTables),
            None => None,
        };
        Ok((out, UserTape { tower, pooled }))
    }

    fn user_backward(
        &self,
        users: &[usize],
        histories: &[Vec<SemanticCode>],
        tape: &UserTape,
        grad: &Matrix,
        grads: &mut TwoTowerParams,
    ) -> Result<()> {
        let p = &self.params;
        let (g, gx) = p.mlp_user.backward(&tape.tower, grad)?;
        grads.mlp_user = g;
        grads.user_id_table.scatter_add_rows(users, &gx);
        if let (Some(codes), Some(pooled), Some(gcodes)) = (&p.user_codes, &tape.pooled, &mut grads.user_codes) {
            gcodes.projection = pooled.t_matmul(grad)?;
            let grad_pooled = grad.matmul_t(&codes.projection)?;
            let dc = codes.code_dim();
            for (i, h) in histories.iter().enumerate().take(users.len()) {
                let gp = grad_pooled.row(i);
                for code in h {
                    for (level, &c) in code.as_array().iter().enumerate() {
                        let row = gcodes.tables[level].row_mut(c as usize);
                        for (r, v) in row.iter_mut().zip(&gp[level * dc..(level + 1) * dc]) {
                            *r += v;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// In-batch softmax loss of a batch and its gradient for every parameter.
    pub fn batch_loss(&self, batch: &PairBatch) -> Result<(f64, TwoTowerParams)> {
        let (items, item_tape) = self.item_forward(&batch.authors, &batch.llm_input)?;
        let (users, user_tape) = self.user_forward(&batch.users, &batch.histories)?;
        let loss = inbatch_softmax_loss_with(&users, &items, self.tau, self.normalize)?;
        let mut grads = self.params.zeros_like();
        self.item_backward(&batch.authors, &item_tape, &loss.grad_items, &mut grads)?;
        self.user_backward(&batch.users, &batch.histories, &user_tape, &loss.grad_users, &mut grads)?;
        Ok((loss.loss, grads))
    }

    /// Item representations for many authors at once; also returns λ per row.
    pub fn item_reps(&self, authors: &[usize], llm_input: &Matrix) -> Result<(Matrix, Vec<f64>)> {
        let (out, tape) = self.item_forward(authors, llm_input)?;
        Ok((out, tape.lambda))
    }

    pub fn user_reps(&self, users: &[usize], histories: &[Vec<SemanticCode>]) -> Result<Matrix> {
        self.user_forward(users, histories).map(|(m, _)| m)
    }

    /// `aFusionRep` (or the variant's item representation) of one author window.
    pub fn item_tower(&self, author_id: u32, llm_30s: &[f64], llm_pooling: &[f64]) -> Result<(EmbeddingVector, f64)> {
        let d = self.dim();
        for v in [llm_30s, llm_pooling] {
            if v.len() != d {
                return Err(RetrievalError::DimensionMismatch { expected: d, found: v.len() });
            }
        }
        let mut input = llm_30s.to_vec();
        input.extend_from_slice(llm_pooling);
        let (out, lambda) = self.item_reps(&[author_id as usize], &Matrix::row_vector(input))?;
        Ok((EmbeddingVector::from_vec_unchecked(out.into_vec()), lambda[0]))
    }

    /// `uRecRep`, optionally shifted by the projected sum of history codes.
    pub fn user_tower(&self, user_id: u32, history: &[SemanticCode]) -> Result<EmbeddingVector> {
        let out = self.user_reps(&[user_id as usize], &[history.to_vec()])?;
        Ok(EmbeddingVector::from_vec_unchecked(out.into_vec()))
    }

    /// Per-author gate value: `σ(Gate(aID))` for the fused variant, 0 for
    /// ID-only and 1 for LLM-only.
    pub fn author_lambdas(&self) -> Vec<f64> {
        let n = self.params.n_authors();
        match self.variant {
            Variant::IdOnly => vec![0.0; n],
            Variant::LlmOnly => vec![1.0; n],
            Variant::GatedFusion => {
                let b = self.params.gate_bias.get(0, 0);
                (0..n)
                    .map(|a| {
                        let g: f64 = self.params.author_id_table.row(a).iter().zip(self.params.gate_weight.as_slice()).map(|(x, w)| x * w).sum();
                        sigmoid(g + b)
                    })
                    .collect()
            }
        }
    }

    pub fn gate_stats(&self) -> GateStats {
        let mut l = self.author_lambdas();
        let mean = l.iter().sum::<f64>() / l.len().max(1) as f64;
        l.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| {
            if l.is_empty() {
                return f64::NAN;
            }
            l[((l.len() - 1) as f64 * p).round() as usize]
        };
        GateStats {
            mean,
            p10: q(0.1),
            p50: q(0.5),
            p90: q(0.9),
        }
    }
}
