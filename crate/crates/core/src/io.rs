//! Line-oriented text formats for training pairs, gold standards,
//! vocabularies, query lists and predictions.
//!
//! Pair and gold files share one layout: the query, a tab, then each gold
//! hypernym tab-separated. Prediction files hold one line per query with up to
//! 15 tab-separated candidates in rank order; an empty line means no
//! prediction.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::GoldStandard;
use crate::ranker::{RankedList, TrainingPair};

pub fn open(path: impl AsRef<Path>) -> Result<BufReader<File>> {
    let path = path.as_ref();
    File::open(path).map(BufReader::new).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn split_fields(line: &str, lineno: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
    if fields.iter().any(|f| f.is_empty()) {
        return Err(Error::parse(lineno, "empty tab-separated field"));
    }
    Ok(fields)
}

fn query_lines<R: BufRead>(source: R) -> Result<Vec<(usize, String, Vec<String>)>> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_fields(line.trim_end_matches('\r'), lineno)?;
        if fields.len() < 2 {
            return Err(Error::parse(lineno, "query without hypernyms"));
        }
        out.push((
            lineno,
            fields[0].to_string(),
            fields[1..].iter().map(|s| s.to_string()).collect(),
        ));
    }
    Ok(out)
}

pub fn read_pairs<R: BufRead>(source: R) -> Result<Vec<TrainingPair>> {
    query_lines(source)?
        .into_iter()
        .map(|(lineno, query, gold)| {
            TrainingPair::new(query, gold).map_err(|e| Error::parse(lineno, e.to_string()))
        })
        .collect()
}

pub fn read_gold<R: BufRead>(source: R) -> Result<GoldStandard> {
    let mut gold = GoldStandard::new();
    for (lineno, query, hypernyms) in query_lines(source)? {
        gold.insert(query, hypernyms)
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
    }
    Ok(gold)
}

/// One candidate per line; blank lines and repeats are dropped.
pub fn read_vocab<R: BufRead>(source: R) -> Result<Vec<String>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for line in source.lines() {
        let line = line?;
        let term = line.trim();
        if !term.is_empty() && seen.insert(term.to_string()) {
            out.push(term.to_string());
        }
    }
    Ok(out)
}

/// One query per line. Anything after the first tab is ignored, so pair and
/// gold files can be used as query lists.
pub fn read_terms<R: BufRead>(source: R) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in source.lines() {
        let line = line?;
        let query = line.split('\t').next().unwrap_or("").trim();
        if !query.is_empty() {
            out.push(query.to_string());
        }
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(mut out: W, lists: &[Option<RankedList>]) -> Result<()> {
    for list in lists {
        if let Some(list) = list {
            let line = list
                .items
                .iter()
                .map(|(c, _)| c.as_str())
                .collect::<Vec<_>>()
                .join("\t");
            out.write_all(line.as_bytes())?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Prediction lines in order; `None` for empty lines. Repeated candidates
/// within a line keep their first position.
pub fn read_predictions<R: BufRead>(source: R) -> Result<Vec<Option<Vec<String>>>> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            out.push(None);
            continue;
        }
        let mut seen = std::collections::HashSet::new();
        let fields = split_fields(line, i + 1)?
            .into_iter()
            .filter(|f| seen.insert(*f))
            .map(str::to_string)
            .collect();
        out.push(Some(fields));
    }
    Ok(out)
}

/// Pairs prediction lines with gold queries by position.
pub fn align_predictions(
    predictions: Vec<Option<Vec<String>>>,
    gold: &GoldStandard,
) -> Result<HashMap<String, Vec<String>>> {
    if predictions.len() > gold.len() {
        return Err(Error::parse(
            gold.len() + 1,
            format!(
                "{} prediction lines for {} gold queries",
                predictions.len(),
                gold.len()
            ),
        ));
    }
    Ok(gold
        .iter()
        .zip(predictions)
        .filter_map(|((query, _), ranked)| ranked.map(|r| (query.to_string(), r)))
        .collect())
}
