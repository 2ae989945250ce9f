//! JSON Lines ingestion and serialization for corpora. One sentence per
//! line; blank lines are tolerated; any structural violation aborts with the
//! 1-based line number and the violated rule.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{CorpusError, Sentence};

pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<Sentence>, CorpusError> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut sentence: Sentence = serde_json::from_str(&line)
            .map_err(|source| CorpusError::Json { line: lineno + 1, source })?;
        sentence
            .validate()
            .map_err(|rule| CorpusError::Invalid { line: lineno + 1, rule })?;
        sentence.id = out.len();
        out.push(sentence);
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Sentence>, CorpusError> {
    parse_corpus(BufReader::new(File::open(path)?))
}

pub fn write_corpus(path: &Path, sentences: &[Sentence]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in sentences {
        serde_json::to_writer(&mut w, s).map_err(|e| CorpusError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
