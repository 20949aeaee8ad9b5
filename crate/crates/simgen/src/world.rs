use larm_core::Rng;
use rand_distr::{Distribution, Gamma};

use crate::{Result, WorldConfig};

// Substream ids; every random quantity has its own stream so changing one
// count does not reshuffle unrelated draws.
const STREAM_TOPICS: u64 = 1;
const STREAM_AUTHORS: u64 = 2;
const STREAM_USERS: u64 = 3;
const STREAM_SESSIONS: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub author_base_topics: Vec<Vec<f64>>,
    pub user_prefs: Vec<Vec<f64>>,
    /// `n_topics` unit-scale directions in the embedding space.
    pub topic_embeddings: Vec<Vec<f64>>,
    /// `session_topics[author][session]`.
    pub session_topics: Vec<Vec<Vec<f64>>>,
    pub author_style: Vec<Vec<f64>>,
    pub user_style: Vec<Vec<f64>>,
    /// Unnormalized exposure weights.
    pub author_popularity: Vec<f64>,
}

impl World {
    pub fn session_topic(&self, author: usize, session: usize) -> &[f64] {
        &self.session_topics[author][session]
    }

    /// Topic affinity of a user for one live session.
    pub fn affinity(&self, user: usize, author: usize, session: usize) -> f64 {
        dot(&self.user_prefs[user], self.session_topic(author, session))
    }

    /// Latent style match between a user and an author, constant across sessions.
    pub fn style_match(&self, user: usize, author: usize) -> f64 {
        dot(&self.user_style[user], &self.author_style[author])
    }

    /// Dominant base topic of each author.
    pub fn author_main_topic(&self, author: usize) -> usize {
        argmax(&self.author_base_topics[author])
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Symmetric Dirichlet draw built from normalized Gamma variates.
pub(crate) fn dirichlet(rng: &mut Rng, k: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let mut xs: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = xs.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            xs.iter_mut().for_each(|x| *x /= sum);
            return xs;
        }
    }
}

fn normalize(xs: &mut [f64]) {
    let sum: f64 = xs.iter().sum();
    xs.iter_mut().for_each(|x| *x /= sum);
}

pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let c = config;
    let seed = c.seed;

    let mut rng = Rng::substream(seed, STREAM_TOPICS);
    let scale = 1.0 / (c.dim as f64).sqrt();
    let topic_embeddings = (0..c.n_topics)
        .map(|_| (0..c.dim).map(|_| scale * rng.normal()).collect())
        .collect();

    let mut rng = Rng::substream(seed, STREAM_AUTHORS);
    let style_scale = 1.0 / (c.style_dim as f64).sqrt().sqrt();
    let mut author_base_topics = Vec::with_capacity(c.n_authors);
    let mut author_style = Vec::with_capacity(c.n_authors);
    let mut author_popularity = Vec::with_capacity(c.n_authors);
    for _ in 0..c.n_authors {
        author_base_topics.push(dirichlet(&mut rng, c.n_topics, c.concentration));
        author_style.push((0..c.style_dim).map(|_| style_scale * rng.normal()).collect());
        author_popularity.push((c.popularity_sigma * rng.normal()).exp());
    }

    let mut rng = Rng::substream(seed, STREAM_USERS);
    let mut user_prefs = Vec::with_capacity(c.n_users);
    let mut user_style = Vec::with_capacity(c.n_users);
    for _ in 0..c.n_users {
        user_prefs.push(dirichlet(&mut rng, c.n_topics, c.concentration));
        user_style.push((0..c.style_dim).map(|_| style_scale * rng.normal()).collect());
    }

    let mut rng = Rng::substream(seed, STREAM_SESSIONS);
    let session_topics = author_base_topics
        .iter()
        .map(|base: &Vec<f64>| {
            (0..c.sessions_per_author)
                .map(|_| {
                    let draw = dirichlet(&mut rng, c.n_topics, c.concentration);
                    if c.topic_drift == 0.0 {
                        return base.clone();
                    }
                    let mut t: Vec<f64> = base
                        .iter()
                        .zip(&draw)
                        .map(|(b, d)| (1.0 - c.topic_drift) * b + c.topic_drift * d)
                        .collect();
                    normalize(&mut t);
                    t
                })
                .collect()
        })
        .collect();

    Ok(World {
        config: config.clone(),
        author_base_topics,
        user_prefs,
        topic_embeddings,
        session_topics,
        author_style,
        user_style,
        author_popularity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig {
            n_users: 20,
            n_authors: 10,
            sessions_per_author: 3,
            ..Default::default()
        }
    }

    #[test]
    fn zero_drift_freezes_authors() {
        let w = generate_world(&WorldConfig { topic_drift: 0.0, ..small() }).unwrap();
        for (a, sessions) in w.session_topics.iter().enumerate() {
            for s in sessions {
                assert_eq!(s, &w.author_base_topics[a]);
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        assert_eq!(generate_world(&small()).unwrap(), generate_world(&small()).unwrap());
        let other = generate_world(&WorldConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(other, generate_world(&small()).unwrap());
    }

    #[test]
    fn probability_vectors_are_normalized() {
        let w = generate_world(&small()).unwrap();
        let all = w
            .author_base_topics
            .iter()
            .chain(&w.user_prefs)
            .chain(w.session_topics.iter().flatten());
        for p in all {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn zero_counts_are_invalid() {
        assert!(generate_world(&WorldConfig { n_users: 0, ..small() }).is_err());
    }
}
