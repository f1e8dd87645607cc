//! Pre-trained embedding ingestion and term lookup.
//!
//! Files use the plain GloVe text layout: one vector per line, a token
//! followed by whitespace-separated decimal floats. Sense files use the same
//! layout with tokens of the form `word#id`; all senses of a word are averaged
//! into a single vector on load.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Immutable token to vector map of fixed dimension.
///
/// Vectors are stored contiguously in insertion order, which keeps writes
/// deterministic and lookups cheap for large vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` pairs. Later duplicates overwrite
    /// earlier ones.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::InvalidShape(vec![dim]));
        }
        let mut table = EmbeddingTable {
            dim,
            tokens: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        };
        for (token, vector) in entries {
            let token = token.into();
            if token.is_empty() {
                return Err(Error::Config("empty token".into()));
            }
            if vector.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: vector.len(),
                });
            }
            table.insert(token, &vector);
        }
        Ok(table)
    }

    fn insert(&mut self, token: String, vector: &[f64]) {
        match self.index.get(&token) {
            Some(&row) => {
                self.data[row * self.dim..(row + 1) * self.dim].copy_from_slice(vector);
            }
            None => {
                self.index.insert(token.clone(), self.tokens.len());
                self.tokens.push(token);
                self.data.extend_from_slice(vector);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&row| &self.data[row * self.dim..(row + 1) * self.dim])
    }

    /// Tokens in insertion order.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    /// Writes the table in the text format read by [`load_word_embeddings`].
    /// Floats use the shortest representation that parses back to the same
    /// bits.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for (row, token) in self.tokens.iter().enumerate() {
            out.write_all(token.as_bytes())?;
            for v in &self.data[row * self.dim..(row + 1) * self.dim] {
                write!(out, " {v}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Embedding vectors for the tokens of one term.
#[derive(Debug, Clone, PartialEq)]
pub struct TermSequence {
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub oov_mask: Vec<bool>,
}

impl TermSequence {
    /// A sequence with every token in vocabulary. Used for synthetic inputs.
    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Self {
        let n = vectors.len();
        TermSequence {
            tokens: (0..n).map(|i| format!("t{i}")).collect(),
            vectors,
            oov_mask: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn known_count(&self) -> usize {
        self.oov_mask.iter().filter(|&&oov| !oov).count()
    }
}

/// Line number, token and vector of one data line.
type Row = (usize, String, Vec<f64>);

fn parse_lines<R: BufRead>(source: R, expected_dim: Option<usize>) -> Result<(usize, Vec<Row>)> {
    let mut dim = expected_dim;
    let mut rows = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let mut fields = line.split([' ', '\t']).filter(|f| !f.is_empty());
        let Some(token) = fields.next() else {
            continue;
        };
        let vector = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(lineno, format!("non-numeric field {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None if vector.is_empty() => {
                return Err(Error::parse(lineno, "token without a vector"));
            }
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(Error::parse(
                    lineno,
                    format!("expected {d} values, found {}", vector.len()),
                ));
            }
            Some(_) => {}
        }
        rows.push((lineno, token.to_string(), vector));
    }
    match dim {
        Some(d) if !rows.is_empty() => Ok((d, rows)),
        _ => Err(Error::NoEmbeddings),
    }
}

/// Reads a word embedding file. The dimension is taken from the first data
/// line and must equal `expected_dim` when one is given.
pub fn load_word_embeddings<R: BufRead>(
    source: R,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    let (dim, rows) = parse_lines(source, expected_dim)?;
    EmbeddingTable::from_entries(dim, rows.into_iter().map(|(_, t, v)| (t, v)))
}

/// Reads a sense embedding file and averages all senses of each base word.
///
/// `bank#0` and `bank#1` collapse into `bank`; a token without `#` is its own
/// single sense. Repeated full tokens follow the word loader: last one wins.
pub fn load_sense_embeddings<R: BufRead>(source: R) -> Result<EmbeddingTable> {
    let (dim, rows) = parse_lines(source, None)?;

    // Resolve duplicates of the full sense token first.
    let mut senses: Vec<(usize, String, Vec<f64>)> = Vec::with_capacity(rows.len());
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (lineno, token, vector) in rows {
        match seen.get(&token) {
            Some(&i) => senses[i].2 = vector,
            None => {
                seen.insert(token.clone(), senses.len());
                senses.push((lineno, token, vector));
            }
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut sums: HashMap<String, (Vec<f64>, usize)> = HashMap::new();
    for (lineno, token, vector) in senses {
        let base = match token.rsplit_once('#') {
            Some((base, id)) => {
                if id.parse::<u64>().is_err() {
                    return Err(Error::parse(lineno, format!("bad sense id in {token:?}")));
                }
                base
            }
            None => token.as_str(),
        };
        if base.is_empty() {
            return Err(Error::parse(
                lineno,
                format!("empty base word in {token:?}"),
            ));
        }
        let entry = sums.entry(base.to_string()).or_insert_with(|| {
            order.push(base.to_string());
            (vec![0.0; dim], 0)
        });
        for (acc, v) in entry.0.iter_mut().zip(&vector) {
            *acc += v;
        }
        entry.1 += 1;
    }

    EmbeddingTable::from_entries(
        dim,
        order.into_iter().map(|word| {
            let (sum, count) = sums.remove(&word).expect("every ordered word has a sum");
            let k = count as f64;
            (word, sum.into_iter().map(|s| s / k).collect())
        }),
    )
}

/// Lowercases a term and splits it on whitespace and underscores.
pub fn tokenize(term: &str) -> Vec<String> {
    term.to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '_')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Canonical surface form of a term: its tokens joined by single spaces.
pub fn normalize_term(term: &str) -> String {
    tokenize(term).join(" ")
}

/// Maps a term to its vector sequence. Out-of-vocabulary tokens get the zero
/// vector and are flagged in the mask; a term with no known token is an error.
pub fn lookup_term(table: &EmbeddingTable, term: &str) -> Result<TermSequence> {
    let tokens = tokenize(term);
    if tokens.is_empty() {
        return Err(Error::EmptyTerm);
    }
    let mut vectors = Vec::with_capacity(tokens.len());
    let mut oov_mask = Vec::with_capacity(tokens.len());
    for token in &tokens {
        match table.get(token) {
            Some(v) => {
                vectors.push(v.to_vec());
                oov_mask.push(false);
            }
            None => {
                vectors.push(vec![0.0; table.dim()]);
                oov_mask.push(true);
            }
        }
    }
    if oov_mask.iter().all(|&oov| oov) {
        return Err(Error::Unrepresentable(term.to_string()));
    }
    Ok(TermSequence {
        tokens,
        vectors,
        oov_mask,
    })
}
