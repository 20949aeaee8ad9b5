use std::collections::HashMap;
use std::io::{BufRead, Write};

use larm_core::{InteractionEvent, SemanticCode};
use larm_nnkit::Matrix;
use larm_retrieval::TwoTowerModel;
use larm_simgen::{SessionWindow, WindowStore};

use crate::{assign_codes, Codebook, QuantError, Result};

/// Which embedding of a window is quantized.
#[derive(Debug, Clone, Copy)]
pub enum CodeSource<'a> {
    /// The item tower output for the window (`aFusionRep` for fused models).
    Fused(&'a TwoTowerModel),
    /// The window's raw multimodal embedding.
    RawMm,
}

/// Rows the codebooks are fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusScope {
    /// One row per author, from its most recent window.
    #[default]
    AuthorLatest,
    /// One row per emitted window.
    AllWindows,
}

impl std::str::FromStr for CorpusScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "author_latest" => Ok(Self::AuthorLatest),
            "all_windows" => Ok(Self::AllWindows),
            other => Err(format!("unknown corpus scope '{other}'")),
        }
    }
}

impl CorpusScope {
    pub fn name(self) -> &'static str {
        match self {
            Self::AuthorLatest => "author_latest",
            Self::AllWindows => "all_windows",
        }
    }
}

/// Embedding of one window under `source`.
pub fn window_embedding(source: CodeSource<'_>, w: &SessionWindow) -> Result<Vec<f64>> {
    match source {
        CodeSource::RawMm => Ok(w.mm_embedding.to_vec()),
        CodeSource::Fused(model) => Ok(model.item_tower(w.author_id, &w.mm_embedding, &w.pooled)?.0.into_inner()),
    }
}

/// Stacks the embeddings the codebooks are trained on.
pub fn codebook_corpus(source: CodeSource<'_>, windows: &WindowStore, scope: CorpusScope) -> Result<Matrix> {
    let rows: Vec<&SessionWindow> = match scope {
        CorpusScope::AuthorLatest => (0..windows.n_authors as u32)
            .map(|a| {
                windows.latest(a).ok_or(QuantError::MissingWindow {
                    author: a,
                    session: 0,
                    window: 0,
                })
            })
            .collect::<Result<_>>()?,
        CorpusScope::AllWindows => windows.windows.iter().collect(),
    };
    let rows = rows.into_iter().map(|w| window_embedding(source, w)).collect::<Result<Vec<_>>>()?;
    Ok(Matrix::from_rows(&rows))
}

/// An interaction tagged with the code of its window at exposure time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizedLogRecord {
    pub event: InteractionEvent,
    pub code: SemanticCode,
}

/// Codes every event from the embedding of the window it was exposed on.
/// Output order matches input order.
pub fn quantize_log(
    log: &[InteractionEvent],
    windows: &WindowStore,
    source: CodeSource<'_>,
    cb: &Codebook,
) -> Result<Vec<QuantizedLogRecord>> {
    let mut cache: HashMap<usize, SemanticCode> = HashMap::new();
    log.iter()
        .map(|e| {
            let pos = windows
                .position(e.author_id, e.session_id, e.window_index)
                .ok_or(QuantError::MissingWindow {
                    author: e.author_id,
                    session: e.session_id,
                    window: e.window_index,
                })?;
            let code = match cache.get(&pos) {
                Some(&c) => c,
                None => {
                    let c = assign_codes(&window_embedding(source, &windows.windows[pos])?, cb)?;
                    cache.insert(pos, c);
                    c
                }
            };
            Ok(QuantizedLogRecord { event: *e, code })
        })
        .collect()
}

/// Interaction-log columns followed by the three code columns.
pub fn write_quantized_log<W: Write>(mut w: W, records: &[QuantizedLogRecord]) -> Result<()> {
    for r in records {
        let [c1, c2, c3] = r.code.as_array();
        writeln!(w, "{}\t{c1}\t{c2}\t{c3}", r.event.to_tsv())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_quantized_log<R: BufRead>(r: R) -> Result<Vec<QuantizedLogRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| QuantError::Parse { line: i + 1, message };
        let (event, rest) = InteractionEvent::parse_tsv_prefix(&line).map_err(parse_err)?;
        if rest.len() != 3 {
            return Err(parse_err(format!("expected 3 code columns, found {}", rest.len())));
        }
        let mut code = [0u32; 3];
        for (c, s) in code.iter_mut().zip(&rest) {
            *c = s.parse().map_err(|_| parse_err(format!("bad code '{s}'")))?;
        }
        out.push(QuantizedLogRecord {
            event,
            code: SemanticCode::from_array(code),
        });
    }
    Ok(out)
}
