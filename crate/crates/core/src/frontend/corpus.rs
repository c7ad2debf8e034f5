//! Binary corpus and audio files.
//!
//! All integers little-endian. Corpus layout (version 1):
//!
//! ```text
//! magic    8 bytes  "KWSCORP\0"
//! version  u32
//! T        u32      maximum keyword length the anchors were padded to
//! F        u32      feature dimension
//! V        u32      number of phoneme symbols, then V × (u16 len, utf-8 bytes)
//! count    u64
//! record × count:
//!   kind      u8       0 positive, 1 easy negative, 2 hard negative
//!   n         u32      frame count, then n·F × f32
//!   anchor    u32 len, len × u16 ids (unpadded)
//!   spoken    u32 len, len × u16 ids
//! ```
//!
//! A standalone audio file is `"KWSAUDI\0"`, version u32, n u32, F u32, n·F × f32.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::anchor::pad_anchor;
use super::synth::{generate, AudioFeatures, PairCounts, PairKind, PairSample, Synthesizer};
use super::vocab::{PhonemeSeq, PhonemeVocab};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const CORPUS_MAGIC: &[u8; 8] = b"KWSCORP\0";
const AUDIO_MAGIC: &[u8; 8] = b"KWSAUDI\0";
const VERSION: u32 = 1;

/// A set of pairs plus the metadata needed to interpret them.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub vocab: PhonemeVocab,
    pub max_keyword_len: usize,
    pub feature_dim: usize,
    pub samples: Vec<PairSample>,
}

impl Corpus {
    /// Draws `counts` pairs from the synthesizer's world.
    pub fn synthesize(synth: &Synthesizer, counts: PairCounts, seed: u64) -> Result<Self> {
        let cfg = synth.config();
        Ok(Self {
            vocab: synth.vocab().clone(),
            max_keyword_len: cfg.max_keyword_len,
            feature_dim: cfg.feature_dim,
            samples: generate(synth, counts, seed)?,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(CORPUS_MAGIC);
        put_u32(&mut w, VERSION);
        put_u32(&mut w, self.max_keyword_len as u32);
        put_u32(&mut w, self.feature_dim as u32);
        put_u32(&mut w, self.vocab.len() as u32);
        for s in self.vocab.symbols() {
            w.extend_from_slice(&(s.len() as u16).to_le_bytes());
            w.extend_from_slice(s.as_bytes());
        }
        w.extend_from_slice(&(self.samples.len() as u64).to_le_bytes());
        for s in &self.samples {
            w.push(s.kind.code());
            put_frames(&mut w, s.audio.frames());
            put_ids(&mut w, s.anchor.phonemes());
            put_ids(&mut w, &s.spoken);
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        expect_magic(&mut r, CORPUS_MAGIC, "corpus")?;
        let max_keyword_len = get_u32(&mut r)? as usize;
        let feature_dim = get_u32(&mut r)? as usize;
        let v = get_u32(&mut r)? as usize;
        let mut symbols = Vec::with_capacity(v);
        for _ in 0..v {
            let len = u16::from_le_bytes(take::<2>(&mut r)?) as usize;
            let raw = take_slice(&mut r, len)?;
            symbols.push(
                String::from_utf8(raw.to_vec())
                    .map_err(|_| Error::Format("phoneme symbol is not utf-8".into()))?,
            );
        }
        let vocab = PhonemeVocab::new(symbols)?;
        let count = u64::from_le_bytes(take::<8>(&mut r)?) as usize;
        let mut samples = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let kind = PairKind::from_code(take::<1>(&mut r)?[0])?;
            let frames = get_frames(&mut r, feature_dim)?;
            let anchor_ids = get_ids(&mut r, vocab.len())?;
            let spoken = get_ids(&mut r, vocab.len())?;
            samples.push(PairSample {
                audio: AudioFeatures::new(frames)?,
                anchor: pad_anchor(&anchor_ids, max_keyword_len, vocab.pad_id())?,
                spoken: PhonemeSeq(spoken),
                kind,
            });
        }
        if !r.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", r.len())));
        }
        Ok(Self {
            vocab,
            max_keyword_len,
            feature_dim,
            samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialised corpus, hex encoded.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            vocab: self.vocab.clone(),
            max_keyword_len: self.max_keyword_len,
            feature_dim: self.feature_dim,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

pub fn audio_to_bytes(audio: &AudioFeatures) -> Vec<u8> {
    let mut w = Vec::new();
    w.extend_from_slice(AUDIO_MAGIC);
    put_u32(&mut w, VERSION);
    put_u32(&mut w, audio.feature_dim() as u32);
    put_frames(&mut w, audio.frames());
    w
}

pub fn audio_from_bytes(bytes: &[u8]) -> Result<AudioFeatures> {
    let mut r = bytes;
    expect_magic(&mut r, AUDIO_MAGIC, "audio")?;
    let f = get_u32(&mut r)? as usize;
    let frames = get_frames(&mut r, f)?;
    if !r.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", r.len())));
    }
    AudioFeatures::new(frames)
}

pub fn save_audio(audio: &AudioFeatures, path: &Path) -> Result<()> {
    std::fs::write(path, audio_to_bytes(audio))?;
    Ok(())
}

pub fn load_audio(path: &Path) -> Result<AudioFeatures> {
    audio_from_bytes(&std::fs::read(path)?)
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_frames(w: &mut Vec<u8>, frames: &Tensor) {
    put_u32(w, frames.rows() as u32);
    for &x in frames.data() {
        w.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

fn put_ids(w: &mut Vec<u8>, ids: &[usize]) {
    put_u32(w, ids.len() as u32);
    for &id in ids {
        w.extend_from_slice(&(id as u16).to_le_bytes());
    }
}

fn take_slice<'a>(r: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if r.len() < n {
        return Err(Error::Format("unexpected end of file".into()));
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

fn take<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let s = take_slice(r, N)?;
    Ok(s.try_into().expect("length checked"))
}

fn get_u32(r: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take::<4>(r)?))
}

fn expect_magic(r: &mut &[u8], magic: &[u8; 8], what: &str) -> Result<()> {
    if take_slice(r, 8).ok() != Some(&magic[..]) {
        return Err(Error::Format(format!("not a {what} file (bad magic)")));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported {what} version {version} (expected {VERSION})"
        )));
    }
    Ok(())
}

fn get_frames(r: &mut &[u8], f: usize) -> Result<Tensor> {
    let n = get_u32(r)? as usize;
    if n == 0 || f == 0 {
        return Err(Error::EmptyAudio);
    }
    let raw = take_slice(r, n * f * 4)?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
        .collect();
    Ok(Tensor::matrix(n, f, data))
}

fn get_ids(r: &mut &[u8], vocab: usize) -> Result<Vec<usize>> {
    let len = get_u32(r)? as usize;
    let raw = take_slice(r, len * 2)?;
    raw.chunks_exact(2)
        .map(|c| {
            let id = u16::from_le_bytes([c[0], c[1]]) as usize;
            if id >= vocab {
                Err(Error::IdOutOfRange { id, rows: vocab })
            } else {
                Ok(id)
            }
        })
        .collect()
}
