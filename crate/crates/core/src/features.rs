//! Leaf features: a pretrained word vector concatenated with a one-hot
//! position code.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graphio::DocumentGraph;

pub const DEFAULT_POSITION_SLOTS: usize = 350;

/// Half-width of the uniform range for out-of-vocabulary vectors.
pub const OOV_RANGE: f64 = 0.01;

#[derive(Clone, Debug, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// An empty table of fixed dimension; every word is out of vocabulary.
    pub fn empty(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Inserts unless the word is already present. Returns whether it was
    /// inserted.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector of dimension {} in a table of dimension {}",
                vector.len(),
                self.dim
            )));
        }
        let word = word.into();
        if self.vectors.contains_key(&word) {
            return Ok(false);
        }
        self.vectors.insert(word, vector);
        Ok(true)
    }

    /// Parses whitespace-separated `word v1 .. vd` lines. The first line
    /// fixes the dimension; blank lines are skipped.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::Parse {
                location: format!("line {lineno}"),
                message: e.to_string(),
            })?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse {
                    location: format!("line {lineno}"),
                    message: e.to_string(),
                })?;
            let table = table.get_or_insert_with(|| EmbeddingTable::empty(values.len()));
            if values.is_empty() || values.len() != table.dim {
                return Err(Error::Parse {
                    location: format!("line {lineno}"),
                    message: format!("expected {} values, found {}", table.dim, values.len()),
                });
            }
            table.insert(word, values)?;
        }
        table.ok_or_else(|| Error::Parse {
            location: "line 1".into(),
            message: "no vectors; cannot infer the embedding dimension".into(),
        })
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::parse(BufReader::new(file)).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

/// Deterministic vector for an out-of-vocabulary word: a function of the
/// seed and the word only, so every occurrence in every document agrees.
pub fn oov_vector(word: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(word.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
    let dist = Uniform::new_inclusive(-OOV_RANGE, OOV_RANGE);
    (0..dim).map(|_| dist.sample(&mut rng)).collect()
}

/// Per-token feature rows: `[word vector | one-hot position]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: Array2<f64>,
    word_dim: usize,
    position_slots: usize,
}

impl FeatureMatrix {
    /// Wraps an arbitrary matrix (e.g. contextual embeddings) with no
    /// position block.
    pub fn from_rows(rows: Array2<f64>) -> Self {
        let word_dim = rows.ncols();
        FeatureMatrix {
            rows,
            word_dim,
            position_slots: 0,
        }
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    /// Row width `d0`.
    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn word_dim(&self) -> usize {
        self.word_dim
    }

    pub fn position_slots(&self) -> usize {
        self.position_slots
    }

    /// SHA-256 over the shape and the little-endian bytes of every entry.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update((self.rows.nrows() as u64).to_le_bytes());
        hasher.update((self.rows.ncols() as u64).to_le_bytes());
        for x in self.rows.iter() {
            hasher.update(x.to_le_bytes());
        }
        hasher.finalize().into()
    }
}

pub fn featurize(
    g: &DocumentGraph,
    table: &EmbeddingTable,
    position_slots: usize,
    seed: u64,
) -> Result<FeatureMatrix> {
    if position_slots == 0 {
        return Err(Error::Config("position slot count must be at least 1".into()));
    }
    let dw = table.dim();
    let mut rows = Array2::zeros((g.num_nodes(), dw + position_slots));
    let mut oov: HashMap<&str, Vec<f64>> = HashMap::new();
    for (i, tok) in g.tokens().iter().enumerate() {
        let vector = match table.get(&tok.text) {
            Some(v) => v,
            None => oov
                .entry(tok.text.as_str())
                .or_insert_with(|| oov_vector(&tok.text, dw, seed))
                .as_slice(),
        };
        let mut row = rows.row_mut(i);
        for (dst, &src) in row.iter_mut().zip(vector) {
            *dst = src;
        }
        row[dw + i.min(position_slots - 1)] = 1.0;
    }
    Ok(FeatureMatrix {
        rows,
        word_dim: dw,
        position_slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphio::{build_cooccurrence_graph, Token};

    fn doc(words: &[&str]) -> DocumentGraph {
        let tokens = words.iter().enumerate().map(|(i, w)| Token::new(i, *w, 0)).collect();
        build_cooccurrence_graph(tokens, 2, "d", 0).unwrap()
    }

    fn table() -> EmbeddingTable {
        EmbeddingTable::parse("cat 0.5 -1\ndog 2 3\n".as_bytes()).unwrap()
    }

    #[test]
    fn parses_fixture() {
        let t = table();
        assert_eq!((t.len(), t.dim()), (2, 2));
        assert_eq!(t.get("dog"), Some(&[2.0, 3.0][..]));
    }

    #[test]
    fn duplicate_keeps_first() {
        let t = EmbeddingTable::parse("a 1\na 2\n".as_bytes()).unwrap();
        assert_eq!(t.get("a"), Some(&[1.0][..]));
    }

    #[test]
    fn ragged_line_reports_line_number() {
        let err = EmbeddingTable::parse("a 1 2 3\nb 1 2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn empty_input_is_error() {
        assert!(EmbeddingTable::parse("".as_bytes()).is_err());
        assert!(EmbeddingTable::parse("\n\n".as_bytes()).is_err());
    }

    #[test]
    fn known_word_row() {
        let f = featurize(&doc(&["cat", "dog"]), &table(), 3, 0).unwrap();
        assert_eq!(f.rows().row(0).to_vec(), vec![0.5, -1.0, 1.0, 0.0, 0.0]);
        assert_eq!(f.rows().row(1).to_vec(), vec![2.0, 3.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn oov_shared_per_word() {
        let f = featurize(&doc(&["zebra", "cat", "zebra"]), &table(), 2, 7).unwrap();
        let r = f.rows();
        assert_eq!(r.row(0).slice(ndarray::s![..2]), r.row(2).slice(ndarray::s![..2]));
        assert_eq!(r[[0, 2]], 1.0);
        assert_eq!(r[[2, 3]], 1.0);
        assert!(r.row(0).iter().take(2).all(|x| x.abs() <= OOV_RANGE));
    }

    #[test]
    fn long_documents_share_last_slot() {
        let f = featurize(&doc(&["a", "b", "c", "d"]), &table(), 2, 0).unwrap();
        assert_eq!(f.rows()[[3, 3]], 1.0);
        assert_eq!(f.rows()[[2, 3]], 1.0);
    }

    #[test]
    fn zero_slots_rejected() {
        assert!(featurize(&doc(&["a"]), &table(), 0, 0).is_err());
    }
}
