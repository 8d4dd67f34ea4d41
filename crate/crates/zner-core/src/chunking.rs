//! Sliding-window chunking over whitespace-tokenized documents.
//!
//! A word is a maximal non-whitespace run. The default window is 900 words
//! with no overlap; overlapping windows are supported for recall at chunk
//! boundaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::AnnotatedDoc;

pub const DEFAULT_WINDOW_WORDS: usize = 900;

#[derive(Debug, Error)]
pub enum ChunkError {
    #[error("window_words must be >= 1")]
    ZeroWindow,
    #[error("overlap_words ({overlap}) must be smaller than window_words ({window})")]
    OverlapTooLarge { overlap: usize, window: usize },
}

/// Half-open word-index windows over one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub doc_id: String,
    pub windows: Vec<(usize, usize)>,
    pub window_words: usize,
    pub overlap_words: usize,
}

impl ChunkPlan {
    pub fn n_chunks(&self) -> usize {
        self.windows.len()
    }
}

pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Splits `doc` into windows of at most `window_words` words, consecutive
/// windows sharing `overlap_words`. An empty document gets one empty window.
pub fn plan_chunks(
    doc: &AnnotatedDoc,
    window_words: usize,
    overlap_words: usize,
) -> Result<ChunkPlan, ChunkError> {
    if window_words == 0 {
        return Err(ChunkError::ZeroWindow);
    }
    if overlap_words >= window_words {
        return Err(ChunkError::OverlapTooLarge {
            overlap: overlap_words,
            window: window_words,
        });
    }
    let n_words = words(&doc.text).len();
    let stride = window_words - overlap_words;
    let mut windows = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + window_words).min(n_words);
        windows.push((start, end));
        if end == n_words {
            break;
        }
        start += stride;
    }
    Ok(ChunkPlan {
        doc_id: doc.id.clone(),
        windows,
        window_words,
        overlap_words,
    })
}

/// The text of one window, reassembled with single spaces.
pub fn chunk_text(doc: &AnnotatedDoc, window: (usize, usize)) -> String {
    words(&doc.text)[window.0..window.1].join(" ")
}
