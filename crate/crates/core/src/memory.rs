//! Retrieval memory: past (task, plan) pairs searched by cosine similarity.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_TOP_K: usize = 1;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("vector lengths differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cannot embed {text:?}: {reason}")]
    EmbeddingFailure { text: String, reason: String },
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("pool file line {line}: {source}")]
    Corrupt {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("pool file: {0}")]
    Io(#[from] io::Error),
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, MemoryError>;
}

/// Lowercased alphanumeric tokens, each counted into one hashed bucket,
/// then scaled to unit length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBagOfWords {
    pub dim: usize,
}

impl Default for HashedBagOfWords {
    fn default() -> Self {
        HashedBagOfWords { dim: DEFAULT_DIM }
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl EmbeddingProvider for HashedBagOfWords {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, MemoryError> {
        let mut v = vec![0.0; self.dim];
        for t in tokens(text) {
            v[(fnv1a(t.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(MemoryError::EmbeddingFailure {
                text: text.to_string(),
                reason: "no tokens".into(),
            });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, MemoryError> {
    if a.len() != b.len() {
        return Err(MemoryError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MemoryError::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub id: u64,
    pub task_text: String,
    pub plan_dsl: String,
    pub embedding: Vec<f64>,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub record: MemoryRecord,
    pub score: f64,
}

/// Append-only pool, optionally backed by a JSON Lines file.
pub struct MemoryPool {
    embedder: Box<dyn EmbeddingProvider>,
    path: Option<PathBuf>,
    records: RwLock<Vec<MemoryRecord>>,
}

impl std::fmt::Debug for MemoryPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemoryPool")
            .field("path", &self.path)
            .field("len", &self.len())
            .finish()
    }
}

impl MemoryPool {
    pub fn in_memory(embedder: impl EmbeddingProvider + 'static) -> Self {
        MemoryPool {
            embedder: Box::new(embedder),
            path: None,
            records: RwLock::new(Vec::new()),
        }
    }

    /// Opens a pool file, creating nothing until the first add.
    pub fn open(path: impl AsRef<Path>, embedder: impl EmbeddingProvider + 'static) -> Result<Self, MemoryError> {
        let path = path.as_ref().to_path_buf();
        let mut records = Vec::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: MemoryRecord = serde_json::from_str(&line)
                    .map_err(|source| MemoryError::Corrupt { line: i + 1, source })?;
                if rec.embedding.len() != embedder.dim() {
                    return Err(MemoryError::DimensionMismatch {
                        left: rec.embedding.len(),
                        right: embedder.dim(),
                    });
                }
                records.push(rec);
            }
        }
        Ok(MemoryPool {
            embedder: Box::new(embedder),
            path: Some(path),
            records: RwLock::new(records),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<MemoryRecord> {
        self.records.read().clone()
    }

    pub fn add(&self, task_text: &str, plan_dsl: &str) -> Result<MemoryRecord, MemoryError> {
        let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        self.add_at(task_text, plan_dsl, &now)
    }

    pub fn add_at(&self, task_text: &str, plan_dsl: &str, created_at: &str) -> Result<MemoryRecord, MemoryError> {
        if task_text.trim().is_empty() {
            return Err(MemoryError::EmptyField("task_text"));
        }
        if plan_dsl.trim().is_empty() {
            return Err(MemoryError::EmptyField("plan_dsl"));
        }
        let embedding = self.embedder.embed(task_text)?;
        let mut records = self.records.write();
        let rec = MemoryRecord {
            id: records.last().map_or(1, |r| r.id + 1),
            task_text: task_text.to_string(),
            plan_dsl: plan_dsl.to_string(),
            embedding,
            created_at: created_at.to_string(),
        };
        if let Some(path) = &self.path {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let line = serde_json::to_string(&rec).expect("record serializes");
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        records.push(rec.clone());
        Ok(rec)
    }

    pub fn clear(&self) -> Result<(), MemoryError> {
        let mut records = self.records.write();
        if let Some(path) = &self.path {
            if path.exists() {
                File::create(path)?;
            }
        }
        records.clear();
        Ok(())
    }

    /// Top `k` records by score, highest first, ties by smaller id.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Retrieved>, MemoryError> {
        let records = self.records.read();
        if records.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let q = self.embedder.embed(query)?;
        let mut scored = records
            .iter()
            .map(|r| Ok((cosine(&q, &r.embedding)?, r)))
            .collect::<Result<Vec<_>, MemoryError>>()?;
        scored.sort_by(|(sa, ra), (sb, rb)| sb.total_cmp(sa).then(ra.id.cmp(&rb.id)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(score, r)| Retrieved {
                record: r.clone(),
                score,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        assert!((cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.974631846).abs() < 1e-9);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(MemoryError::ZeroNorm)));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(MemoryError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn embedder_is_case_and_punctuation_blind() {
        let e = HashedBagOfWords::default();
        let a = e.embed("Build a wooden house!").unwrap();
        let b = e.embed("build, a WOODEN house").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), DEFAULT_DIM);
        assert!(matches!(e.embed(" ... "), Err(MemoryError::EmbeddingFailure { .. })));
    }

    #[test]
    fn empty_pool_retrieves_nothing() {
        let pool = MemoryPool::in_memory(HashedBagOfWords::default());
        assert!(pool.retrieve("anything", 3).unwrap().is_empty());
    }

    #[test]
    fn exact_text_is_top_hit() {
        let pool = MemoryPool::in_memory(HashedBagOfWords::default());
        pool.add_at("a snow pyramid", "pyramid snow_block (0,0,0) 5", "t").unwrap();
        let rec = pool.add_at("a wooden house with a door", "fill oak_planks (0,0,0) (7,0,7)", "t").unwrap();
        let hits = pool.retrieve("a wooden house with a door", 1).unwrap();
        assert_eq!(hits[0].record.id, rec.id);
        assert!((hits[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ids_increase_and_fields_required() {
        let pool = MemoryPool::in_memory(HashedBagOfWords::default());
        let a = pool.add_at("one", "place stone (0,0,0)", "t").unwrap();
        let b = pool.add_at("two", "place stone (0,0,0)", "t").unwrap();
        assert!(b.id > a.id);
        assert!(matches!(pool.add_at("", "x", "t"), Err(MemoryError::EmptyField("task_text"))));
        assert!(matches!(pool.add_at("x", " ", "t"), Err(MemoryError::EmptyField("plan_dsl"))));
    }

    #[test]
    fn ties_break_by_id() {
        let pool = MemoryPool::in_memory(HashedBagOfWords::default());
        for _ in 0..3 {
            pool.add_at("same words", "place stone (0,0,0)", "t").unwrap();
        }
        let ids: Vec<_> = pool.retrieve("same words", 3).unwrap().iter().map(|h| h.record.id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
    }

    #[test]
    fn reload_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.jsonl");
        let pool = MemoryPool::open(&path, HashedBagOfWords::default()).unwrap();
        pool.add_at("a tall watchtower", "line stone (0,0,0) (0,12,0)", "2024-01-01T00:00:00Z").unwrap();
        pool.add_at("a house by the lake", "fill oak_planks (0,0,0) (3,0,3)", "2024-01-02T00:00:00Z").unwrap();
        let before = pool.retrieve("tall house", 2).unwrap();
        let reopened = MemoryPool::open(&path, HashedBagOfWords::default()).unwrap();
        assert_eq!(reopened.records(), pool.records());
        assert_eq!(reopened.retrieve("tall house", 2).unwrap(), before);
        reopened.clear().unwrap();
        assert!(MemoryPool::open(&path, HashedBagOfWords::default()).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn cosine_is_bounded_and_symmetric(
            a in prop::collection::vec(-100.0f64..100.0, 4),
            b in prop::collection::vec(-100.0f64..100.0, 4),
        ) {
            if let (Ok(x), Ok(y)) = (cosine(&a, &b), cosine(&b, &a)) {
                prop_assert!((-1.0..=1.0).contains(&x));
                prop_assert_eq!(x, y);
            }
        }

        #[test]
        fn self_similarity_is_one(a in prop::collection::vec(-100.0f64..100.0, 1..16)) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-6));
            prop_assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn scores_never_increase(words in prop::collection::vec("[a-e]{1,2}", 1..30), q in "[a-e]{1,2}( [a-e]{1,2}){0,3}") {
            let pool = MemoryPool::in_memory(HashedBagOfWords { dim: 8 });
            for w in &words {
                pool.add_at(w, "place stone (0,0,0)", "t").unwrap();
            }
            let hits = pool.retrieve(&q, words.len()).unwrap();
            prop_assert_eq!(hits.len(), words.len());
            for pair in hits.windows(2) {
                prop_assert!(pair[0].score >= pair[1].score);
            }
        }
    }
}
