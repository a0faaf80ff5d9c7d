use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::io::{fmt_sig9, parse_f64, parse_usize};

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    pub vector: DVector<f64>,
    pub utt_id: String,
    pub spk_id: Option<String>,
}

impl SpeakerEmbedding {
    pub fn new(utt_id: impl Into<String>, vector: DVector<f64>) -> Self {
        Self {
            vector,
            utt_id: utt_id.into(),
            spk_id: None,
        }
    }

    pub fn with_speaker(mut self, spk: impl Into<String>) -> Self {
        self.spk_id = Some(spk.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Text archive, one `"<utt_id> <d> v1 … vd"` line per embedding.
pub fn write_embedding_archive(embs: &[SpeakerEmbedding]) -> String {
    let mut s = String::new();
    for e in embs {
        let _ = write!(s, "{} {}", e.utt_id, e.dim());
        for v in e.vector.iter() {
            s.push(' ');
            s.push_str(&fmt_sig9(*v));
        }
        s.push('\n');
    }
    s
}

pub fn parse_embedding_archive(text: &str) -> Result<Vec<SpeakerEmbedding>> {
    let mut out: Vec<SpeakerEmbedding> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let mut toks = line.split_whitespace();
        let Some(id) = toks.next() else { continue };
        let d = parse_usize(toks.next().ok_or_else(|| Error::parse(ln, "missing dimension"))?, ln)?;
        let vals = toks.map(|t| parse_f64(t, ln)).collect::<Result<Vec<_>>>()?;
        if vals.len() != d {
            return Err(Error::parse(ln, format!("declared {d} values, found {}", vals.len())));
        }
        if let Some(prev) = out.first() {
            if prev.dim() != d {
                return Err(Error::parse(ln, format!("dimension {d} differs from {}", prev.dim())));
            }
        }
        out.push(SpeakerEmbedding::new(id, DVector::from_vec(vals)));
    }
    Ok(out)
}

const MAGIC: &[u8; 4] = b"EMB1";

/// Binary archive: `EMB1`, u32 d, u32 count, then per record a u16 id
/// length, the id bytes and d little-endian f32 values.
pub fn write_embedding_archive_binary(embs: &[SpeakerEmbedding]) -> Result<Vec<u8>> {
    let d = embs.first().map_or(0, SpeakerEmbedding::dim);
    let mut out = Vec::with_capacity(12 + embs.len() * (2 + 16 + 4 * d));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(embs.len() as u32).to_le_bytes());
    for e in embs {
        if e.dim() != d {
            return Err(Error::ShapeMismatch {
                expected: format!("dimension {d}"),
                found: format!("{} for {}", e.dim(), e.utt_id),
            });
        }
        let id = e.utt_id.as_bytes();
        let len =
            u16::try_from(id.len()).map_err(|_| Error::Precondition(format!("utterance id too long: {}", e.utt_id)))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id);
        for v in e.vector.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn parse_embedding_archive_binary(bytes: &[u8]) -> Result<Vec<SpeakerEmbedding>> {
    struct Cursor<'a> {
        bytes: &'a [u8],
        pos: usize,
    }
    impl<'a> Cursor<'a> {
        fn take(&mut self, n: usize) -> Result<&'a [u8]> {
            let end = self.pos + n;
            let s = self
                .bytes
                .get(self.pos..end)
                .ok_or_else(|| Error::MalformedHeader(format!("embedding archive truncated at byte {}", self.pos)))?;
            self.pos = end;
            Ok(s)
        }
        fn u32(&mut self) -> Result<u32> {
            let b = self.take(4)?;
            Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        }
    }

    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::MalformedHeader("missing EMB1 magic".into()));
    }
    let d = c.u32()? as usize;
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = c.take(2)?;
        let len = u16::from_le_bytes([len[0], len[1]]) as usize;
        let id = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::MalformedHeader("utterance id is not UTF-8".into()))?
            .to_string();
        let raw = c.take(4 * d)?;
        let vals: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding {id}")));
        }
        out.push(SpeakerEmbedding::new(id, DVector::from_vec(vals)));
    }
    if c.pos != bytes.len() {
        return Err(Error::MalformedHeader("trailing bytes after embedding records".into()));
    }
    Ok(out)
}
