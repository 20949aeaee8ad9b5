use std::io::{Read, Write};

use larm_core::embedding::squared_distance;
use larm_core::{EmbeddingVector, SemanticCode};
use larm_nnkit::Matrix;

use crate::kmeans::{kmeans, nearest};
use crate::{QuantError, Result};

const MAGIC: &[u8; 4] = b"LARQ";

/// Desk-scale level sizes.
pub const DEFAULT_SIZES: [usize; 3] = [64, 32, 16];
/// Production-scale level sizes.
pub const PRODUCTION_SIZES: [usize; 3] = [512, 256, 128];
pub const DEFAULT_MAX_ITERS: usize = 100;

/// Three residual codebooks `C¹, C², C³`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub levels: [Matrix; 3],
    /// Final K-means inertia of each level.
    pub inertia: [f64; 3],
    /// Mean squared reconstruction error of the training corpus using the
    /// first 1, 2 and 3 levels.
    pub level_mse: [f64; 3],
}

impl Codebook {
    pub fn dim(&self) -> usize {
        self.levels[0].cols()
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.levels[0].rows(), self.levels[1].rows(), self.levels[2].rows()]
    }

    /// Bytes per stored code at each level: one when the level has at most
    /// 256 centroids, two otherwise.
    pub fn code_widths(&self) -> [usize; 3] {
        self.sizes().map(|k| if k <= 256 { 1 } else { 2 })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(3);
        out.extend_from_slice(&(self.dim() as u16).to_le_bytes());
        for k in self.sizes() {
            out.extend_from_slice(&(k as u32).to_le_bytes());
        }
        for level in &self.levels {
            for &v in level.as_slice() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    /// Reads a codebook written by [`Codebook::encode`]. Inertia and level
    /// errors are not stored and come back as NaN.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(QuantError::Format("bad magic".into()));
        }
        let mut b1 = [0u8; 1];
        read_exact(&mut r, &mut b1)?;
        if b1[0] != 3 {
            return Err(QuantError::Format(format!("expected 3 levels, found {}", b1[0])));
        }
        let mut b2 = [0u8; 2];
        read_exact(&mut r, &mut b2)?;
        let dim = u16::from_le_bytes(b2) as usize;
        let mut sizes = [0usize; 3];
        for s in &mut sizes {
            let mut b4 = [0u8; 4];
            read_exact(&mut r, &mut b4)?;
            *s = u32::from_le_bytes(b4) as usize;
        }
        let mut levels = Vec::with_capacity(3);
        for k in sizes {
            let mut data = Vec::with_capacity(k * dim);
            for _ in 0..k * dim {
                let mut b4 = [0u8; 4];
                read_exact(&mut r, &mut b4)?;
                data.push(f32::from_le_bytes(b4) as f64);
            }
            levels.push(Matrix::new(k, dim, data).map_err(|e| QuantError::Format(e.to_string()))?);
        }
        if !r.is_empty() {
            return Err(QuantError::Format(format!("{} trailing bytes", r.len())));
        }
        let levels: [Matrix; 3] = levels.try_into().expect("three levels");
        if levels.iter().any(|l| !l.is_finite()) {
            return Err(QuantError::Format("non-finite centroid".into()));
        }
        Ok(Codebook {
            levels,
            inertia: [f64::NAN; 3],
            level_mse: [f64::NAN; 3],
        })
    }

    pub fn save(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.encode())?;
        Ok(())
    }

    pub fn load(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    if r.len() < buf.len() {
        return Err(QuantError::Format("truncated codebook".into()));
    }
    let (head, tail) = r.split_at(buf.len());
    buf.copy_from_slice(head);
    *r = tail;
    Ok(())
}

/// Fits `C¹` on the corpus, then each further level on the residuals left
/// by the previous one.
pub fn build_codebooks(corpus: &Matrix, sizes: [usize; 3], max_iters: usize, seed: u64) -> Result<Codebook> {
    if corpus.rows() < sizes[0] || corpus.rows() == 0 {
        return Err(QuantError::CorpusTooSmall {
            rows: corpus.rows(),
            k1: sizes[0],
        });
    }
    let n = corpus.rows() as f64;
    let mut residual = corpus.clone();
    let mut levels = Vec::with_capacity(3);
    let mut inertia = [0.0; 3];
    let mut level_mse = [0.0; 3];
    for (l, &k) in sizes.iter().enumerate() {
        let km = kmeans(&residual, k, max_iters, seed.wrapping_add(l as u64))?;
        for (i, &j) in km.assignments.iter().enumerate() {
            for (r, c) in residual.row_mut(i).iter_mut().zip(km.centroids.row(j)) {
                *r -= c;
            }
        }
        inertia[l] = km.inertia();
        level_mse[l] = residual.row_iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n;
        levels.push(km.centroids);
    }
    Ok(Codebook {
        levels: levels.try_into().expect("three levels"),
        inertia,
        level_mse,
    })
}

/// Nearest-centroid code at every level, each on the residual left by the
/// levels before it. Ties resolve to the smallest index.
pub fn assign_codes(x: &[f64], cb: &Codebook) -> Result<SemanticCode> {
    if x.len() != cb.dim() {
        return Err(QuantError::DimensionMismatch {
            expected: cb.dim(),
            found: x.len(),
        });
    }
    let mut residual = x.to_vec();
    let mut code = [0u32; 3];
    for (l, level) in cb.levels.iter().enumerate() {
        let (j, _) = nearest(level, &residual);
        code[l] = j as u32;
        for (r, c) in residual.iter_mut().zip(level.row(j)) {
            *r -= c;
        }
    }
    Ok(SemanticCode::from_array(code))
}

/// Sum of the centroids selected by the first `levels` components of `code`.
pub fn reconstruct_prefix(code: SemanticCode, cb: &Codebook, levels: usize) -> Result<EmbeddingVector> {
    code.check_bounds(cb.sizes())?;
    let mut out = vec![0.0; cb.dim()];
    for (l, &c) in code.as_array().iter().enumerate().take(levels) {
        for (o, v) in out.iter_mut().zip(cb.levels[l].row(c as usize)) {
            *o += v;
        }
    }
    Ok(EmbeddingVector::from_vec_unchecked(out))
}

pub fn reconstruct(code: SemanticCode, cb: &Codebook) -> Result<EmbeddingVector> {
    reconstruct_prefix(code, cb, 3)
}

/// Mean squared error of reconstructing every corpus row from its first
/// 1, 2 and 3 code levels.
pub fn reconstruction_mse(corpus: &Matrix, cb: &Codebook) -> Result<[f64; 3]> {
    let mut mse = [0.0; 3];
    for x in corpus.row_iter() {
        let code = assign_codes(x, cb)?;
        for (l, m) in mse.iter_mut().enumerate() {
            *m += squared_distance(x, &reconstruct_prefix(code, cb, l + 1)?);
        }
    }
    let n = corpus.rows().max(1) as f64;
    Ok(mse.map(|m| m / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use larm_core::Rng;

    fn random_corpus(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        Matrix::normal(n, d, 1.0, &mut rng)
    }

    #[test]
    fn exact_chain_is_recovered() {
        let cb = build_codebooks(&random_corpus(300, 4, 1), [8, 4, 2], 50, 1).unwrap();
        let code = SemanticCode::new(5, 2, 1);
        let x = reconstruct(code, &cb).unwrap();
        assert_eq!(assign_codes(&x, &cb).unwrap(), code);
    }

    #[test]
    fn corpus_of_k1_points_has_zero_residual() {
        let corpus = random_corpus(8, 3, 2);
        let cb = build_codebooks(&corpus, [8, 2, 2], 20, 4).unwrap();
        assert_eq!(cb.level_mse[0], 0.0);
        for l in 1..3 {
            assert!(cb.levels[l].max_abs() < 1e-12);
        }
    }

    #[test]
    fn too_small_corpus() {
        let err = build_codebooks(&random_corpus(5, 2, 0), [8, 4, 2], 10, 0).unwrap_err();
        assert!(matches!(err, QuantError::CorpusTooSmall { rows: 5, k1: 8 }));
    }

    #[test]
    fn zero_codebook_reconstructs_zero() {
        let cb = Codebook {
            levels: [Matrix::zeros(2, 3), Matrix::zeros(2, 3), Matrix::zeros(2, 3)],
            inertia: [0.0; 3],
            level_mse: [0.0; 3],
        };
        assert_eq!(reconstruct(SemanticCode::new(1, 0, 1), &cb).unwrap().as_slice(), &[0.0; 3]);
        assert!(matches!(
            reconstruct(SemanticCode::new(2, 0, 0), &cb),
            Err(QuantError::CodeOutOfRange { level: 0, value: 2, size: 2 })
        ));
    }

    #[test]
    fn level_error_matches_recomputation() {
        let corpus = random_corpus(2000, 16, 7);
        let cb = build_codebooks(&corpus, DEFAULT_SIZES, DEFAULT_MAX_ITERS, 7).unwrap();
        assert!(cb.level_mse[0] > cb.level_mse[1] && cb.level_mse[1] > cb.level_mse[2]);
        let again = reconstruction_mse(&corpus, &cb).unwrap();
        for l in 0..3 {
            assert!((again[l] - cb.level_mse[l]).abs() < 1e-9, "{again:?} vs {:?}", cb.level_mse);
        }
    }

    #[test]
    fn encode_round_trip() {
        let cb = build_codebooks(&random_corpus(100, 5, 3), [6, 3, 2], 20, 3).unwrap();
        let back = Codebook::decode(&cb.encode()).unwrap();
        assert_eq!(back.sizes(), [6, 3, 2]);
        for l in 0..3 {
            for (a, b) in back.levels[l].as_slice().iter().zip(cb.levels[l].as_slice()) {
                assert_eq!(*a, *b as f32 as f64);
            }
        }
        assert!(Codebook::decode(&cb.encode()[..20]).is_err());
    }
}
