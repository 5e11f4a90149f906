//! On-disk layout of a [`SparseIndex`]. See `docs/index-format.md`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Bm25Params, Posting, SparseIndex};
use crate::analysis::{Analyzer, AnalyzerConfig, StopWords};
use crate::binio::{put_varint, ByteReader};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SPIX";
pub const FORMAT_VERSION: u32 = 1;

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_varint(buf, s.len() as u64);
    buf.extend_from_slice(s.as_bytes());
}

pub(super) fn encode(index: &SparseIndex) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let cfg = index.analyzer.config();
    buf.push(u8::from(cfg.lowercase));
    buf.push(cfg.stop_words.id());
    buf.extend_from_slice(&index.params.k1.to_le_bytes());
    buf.extend_from_slice(&index.params.b.to_le_bytes());

    put_varint(&mut buf, index.passage_ids.len() as u64);
    for (id, &len) in index.passage_ids.iter().zip(&index.doc_lengths) {
        put_str(&mut buf, id);
        put_varint(&mut buf, u64::from(len));
    }

    let mut terms: Vec<(&String, &u32)> = index.terms.iter().collect();
    terms.sort_unstable();
    put_varint(&mut buf, terms.len() as u64);
    for (term, &id) in terms {
        let list = &index.postings[id as usize];
        put_str(&mut buf, term);
        put_varint(&mut buf, list.len() as u64);
        let mut prev = 0u32;
        for (i, p) in list.iter().enumerate() {
            let delta = if i == 0 { p.ordinal } else { p.ordinal - prev };
            put_varint(&mut buf, u64::from(delta));
            put_varint(&mut buf, u64::from(p.tf));
            prev = p.ordinal;
        }
    }
    buf
}

pub(super) fn decode(buf: &[u8]) -> Result<SparseIndex> {
    let mut c = ByteReader::new(buf);
    if c.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, not a sparse index".into()));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported sparse index version {version}"
        )));
    }
    let lowercase = c.u8()? != 0;
    let stop_id = c.u8()?;
    let stop_words = StopWords::from_id(stop_id)
        .ok_or_else(|| Error::Format(format!("unknown stop-word list id {stop_id}")))?;
    let params = Bm25Params {
        k1: c.f64()?,
        b: c.f64()?,
    };
    params.validate()?;

    let n = c.varint()? as usize;
    let mut passage_ids = Vec::with_capacity(n.min(1 << 24));
    let mut doc_lengths = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let len = c.varint()? as usize;
        passage_ids.push(c.str_bytes(len)?);
        doc_lengths.push(c.varint_u32()?);
    }

    let t = c.varint()? as usize;
    let mut terms = HashMap::with_capacity(t.min(1 << 24));
    let mut postings = Vec::with_capacity(t.min(1 << 24));
    for id in 0..t {
        let len = c.varint()? as usize;
        let term = c.str_bytes(len)?;
        let df = c.varint()? as usize;
        let mut list = Vec::with_capacity(df.min(n));
        let mut prev = 0u32;
        for i in 0..df {
            let delta = c.varint_u32()?;
            if i > 0 && delta == 0 {
                return Err(Error::Format(format!(
                    "postings for {term:?} not strictly increasing"
                )));
            }
            let ordinal = prev
                .checked_add(delta)
                .filter(|&o| (o as usize) < n)
                .ok_or_else(|| {
                    Error::Format(format!("posting ordinal out of range for {term:?}"))
                })?;
            list.push(Posting {
                ordinal,
                tf: c.varint_u32()?,
            });
            prev = ordinal;
        }
        if terms.insert(term, id as u32).is_some() {
            return Err(Error::Format("duplicate term in index".into()));
        }
        postings.push(list);
    }
    if !c.is_exhausted() {
        return Err(Error::Format("trailing bytes after postings".into()));
    }

    Ok(SparseIndex::from_parts(
        terms,
        postings,
        doc_lengths,
        passage_ids,
        params,
        Analyzer::new(AnalyzerConfig {
            lowercase,
            stop_words,
        }),
    ))
}

pub(super) fn save(index: &SparseIndex, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode(index))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub(super) fn load(path: &Path) -> Result<SparseIndex> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    decode(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Passage;

    fn index() -> SparseIndex {
        let ps = [
            Passage::new("d1", "a b a"),
            Passage::new("d2", "b c"),
            Passage::new("d3", "The quick brown fox"),
        ];
        let cfg = AnalyzerConfig {
            lowercase: true,
            stop_words: StopWords::English,
        };
        SparseIndex::build(&ps, Bm25Params { k1: 0.9, b: 0.4 }, cfg).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&index());
        assert_eq!(&bytes[..4], b"SPIX");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(bytes[8], 1);
        assert_eq!(bytes[9], StopWords::English.id());
        assert_eq!(f64::from_le_bytes(bytes[10..18].try_into().unwrap()), 0.9);
    }

    #[test]
    fn save_load_preserves_search() {
        let idx = index();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.spix");
        idx.save(&p).unwrap();
        let back = SparseIndex::load(&p).unwrap();
        assert_eq!(back.passage_ids(), idx.passage_ids());
        assert_eq!(back.params(), idx.params());
        assert_eq!(back.analyzer().config(), idx.analyzer().config());
        for q in ["a", "b c", "the fox", "QUICK"] {
            assert_eq!(back.search(q, 10), idx.search(q, 10));
        }
        // Encoding is canonical.
        assert_eq!(encode(&back), encode(&idx));
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = encode(&index());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode(&bad).is_err());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes;
        bad.push(0);
        assert!(decode(&bad).is_err());
    }
}
