use larm_core::{EmbeddingVector, Rng};

use crate::World;

const STREAM_WINDOWS: u64 = 1 << 32;

/// One 30-second window of a live session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionWindow {
    pub author_id: u32,
    pub session_id: u32,
    pub window_index: u32,
    /// Real-time multimodal embedding of this window.
    pub mm_embedding: EmbeddingVector,
    /// Running mean of the author's window embeddings up to and including this one.
    pub pooled: EmbeddingVector,
}

/// All windows of a world in `(author, session, window)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStore {
    pub n_authors: usize,
    pub sessions_per_author: usize,
    pub windows_per_session: usize,
    pub windows: Vec<SessionWindow>,
}

impl WindowStore {
    /// Rebuilds the store from raw window embeddings in canonical order,
    /// recomputing the running pooled embeddings.
    pub fn from_embeddings(
        n_authors: usize,
        sessions_per_author: usize,
        windows_per_session: usize,
        embeddings: Vec<Vec<f64>>,
    ) -> Option<Self> {
        if embeddings.len() != n_authors * sessions_per_author * windows_per_session {
            return None;
        }
        let dim = embeddings.first().map_or(0, Vec::len);
        let per_author = sessions_per_author * windows_per_session;
        let mut windows = Vec::with_capacity(embeddings.len());
        let mut sum = vec![0.0; dim];
        for (i, e) in embeddings.into_iter().enumerate() {
            let author = i / per_author;
            let within = i % per_author;
            if within == 0 {
                sum.iter_mut().for_each(|v| *v = 0.0);
            }
            for (s, v) in sum.iter_mut().zip(&e) {
                *s += v;
            }
            let count = (within + 1) as f64;
            let pooled = sum.iter().map(|s| s / count).collect();
            windows.push(SessionWindow {
                author_id: author as u32,
                session_id: (within / windows_per_session) as u32,
                window_index: (within % windows_per_session) as u32,
                mm_embedding: EmbeddingVector::from_vec_unchecked(e),
                pooled: EmbeddingVector::from_vec_unchecked(pooled),
            });
        }
        Some(Self {
            n_authors,
            sessions_per_author,
            windows_per_session,
            windows,
        })
    }

    pub fn dim(&self) -> usize {
        self.windows.first().map_or(0, |w| w.mm_embedding.dim())
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn position(&self, author: u32, session: u32, window: u32) -> Option<usize> {
        let (a, s, w) = (author as usize, session as usize, window as usize);
        if a >= self.n_authors || s >= self.sessions_per_author || w >= self.windows_per_session {
            return None;
        }
        Some((a * self.sessions_per_author + s) * self.windows_per_session + w)
    }

    pub fn get(&self, author: u32, session: u32, window: u32) -> Option<&SessionWindow> {
        self.position(author, session, window).map(|i| &self.windows[i])
    }

    /// The most recent window of an author.
    pub fn latest(&self, author: u32) -> Option<&SessionWindow> {
        self.get(
            author,
            self.sessions_per_author as u32 - 1,
            self.windows_per_session as u32 - 1,
        )
    }

    pub fn mm_rows(&self) -> Vec<&[f64]> {
        self.windows.iter().map(|w| w.mm_embedding.as_slice()).collect()
    }
}

/// Emits one embedding per window: the session's topic mixture applied to
/// the topic embeddings, plus isotropic Gaussian noise.
pub fn emit_windows(world: &World) -> WindowStore {
    let c = &world.config;
    let mut embeddings = Vec::with_capacity(c.n_windows());
    for author in 0..c.n_authors {
        let mut rng = Rng::substream(c.seed, STREAM_WINDOWS + author as u64);
        for session in 0..c.sessions_per_author {
            let mean = mixture_mean(world, author, session);
            for _ in 0..c.windows_per_session {
                let e: Vec<f64> = mean
                    .iter()
                    .map(|m| {
                        if c.embedding_noise > 0.0 {
                            m + c.embedding_noise * rng.normal()
                        } else {
                            *m
                        }
                    })
                    .collect();
                embeddings.push(e);
            }
        }
    }
    WindowStore::from_embeddings(c.n_authors, c.sessions_per_author, c.windows_per_session, embeddings)
        .expect("window count matches config")
}

/// Noise-free window embedding of a session.
pub fn mixture_mean(world: &World, author: usize, session: usize) -> Vec<f64> {
    let mut mean = vec![0.0; world.config.dim];
    for (w, topic) in world.session_topic(author, session).iter().zip(&world.topic_embeddings) {
        for (m, t) in mean.iter_mut().zip(topic) {
            *m += w * t;
        }
    }
    mean
}
