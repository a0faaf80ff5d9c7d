//! PCM input and log-Mel front end.
//!
//! Audio is read from 16-bit mono RIFF/WAVE files and turned into a `T × F`
//! matrix of natural-log Mel energies: Hann-windowed frames, power spectrum,
//! triangular Mel filterbank (HTK Mel scale), then `ln(x + 1e-10)`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_sig9, parse_f64, parse_usize, read_bytes};

/// Floor added before the logarithm so silence maps to `ln(1e-10)`.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Precondition("audio clip is empty".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Precondition("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio sample".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Framing metadata carried alongside a feature matrix. Archives do not
/// store it, so matrices read back from text have none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMeta {
    pub frame_shift: f64,
    pub sample_rate: u32,
}

/// Log-Mel spectrogram, frames along rows and Mel bins along columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
    meta: Option<FrameMeta>,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>, meta: Option<FrameMeta>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Precondition(
                "feature matrix needs at least one frame and one bin".into(),
            ));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature matrix entry".into()));
        }
        Ok(Self { data, meta })
    }

    /// Builds a matrix from per-frame rows.
    pub fn from_frames(frames: &[Vec<f64>]) -> Result<Self> {
        let cols = frames.first().map_or(0, Vec::len);
        if frames.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch {
                expected: format!("{cols} bins per frame"),
                found: "ragged frames".into(),
            });
        }
        Self::new(DMatrix::from_fn(frames.len(), cols, |t, f| frames[t][f]), None)
    }

    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, t: usize, f: usize) -> f64 {
        self.data[(t, f)]
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn meta(&self) -> Option<FrameMeta> {
        self.meta
    }

    pub(crate) fn with_data(&self, data: DMatrix<f64>) -> Self {
        Self { data, meta: self.meta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MelConfig {
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for MelConfig {
    /// 25 ms windows with a 10 ms hop at 16 kHz, 80 bins over 20–7600 Hz.
    fn default() -> Self {
        Self {
            n_fft: 512,
            win_length: 400,
            hop_length: 160,
            n_mels: 80,
            f_min: 20.0,
            f_max: 7600.0,
        }
    }
}

impl MelConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.n_fft == 0 || self.win_length == 0 || self.hop_length == 0 || self.n_mels == 0 {
            return Err(Error::InvalidConfig(
                "n_fft, win_length, hop_length and n_mels must be positive".into(),
            ));
        }
        if self.win_length > self.n_fft {
            return Err(Error::InvalidConfig(format!(
                "win_length {} exceeds n_fft {}",
                self.win_length, self.n_fft
            )));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyquist) {
            return Err(Error::InvalidConfig(format!(
                "invalid mel range [{}, {}] for Nyquist {nyquist}",
                self.f_min, self.f_max
            )));
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK Mel scale, evaluated at FFT bin frequencies.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_mels + 2` edge frequencies in Hz; filter `m` spans `edges[m]..edges[m+2]`.
    edges: Vec<f64>,
    weights: DMatrix<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &MelConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate(sample_rate)?;
        let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
        let step = (hi - lo) / (cfg.n_mels + 1) as f64;
        let edges: Vec<f64> = (0..cfg.n_mels + 2).map(|i| mel_to_hz(lo + step * i as f64)).collect();
        let n_bins = cfg.n_fft / 2 + 1;
        let bin_hz = f64::from(sample_rate) / cfg.n_fft as f64;
        let mut fb = Self {
            edges,
            weights: DMatrix::zeros(cfg.n_mels, n_bins),
        };
        for m in 0..cfg.n_mels {
            for k in 0..n_bins {
                fb.weights[(m, k)] = fb.response(m, k as f64 * bin_hz);
            }
        }
        Ok(fb)
    }

    /// Continuous response of filter `m` at `hz`; peaks at 1 on the center.
    pub fn response(&self, m: usize, hz: f64) -> f64 {
        let (l, c, r) = (self.edges[m], self.edges[m + 1], self.edges[m + 2]);
        if hz <= l || hz >= r {
            0.0
        } else if hz <= c {
            (hz - l) / (c - l)
        } else {
            (r - hz) / (r - c)
        }
    }

    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges[m + 1]
    }

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    /// `n_mels × (n_fft/2 + 1)` weight matrix.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn frame_count(len: usize, win_length: usize, hop_length: usize) -> Option<usize> {
    (len >= win_length && hop_length > 0).then(|| 1 + (len - win_length) / hop_length)
}

pub fn log_mel(clip: &AudioClip, cfg: &MelConfig) -> Result<FeatureMatrix> {
    let fb = MelFilterbank::new(cfg, clip.sample_rate())?;
    let n_frames = frame_count(clip.len(), cfg.win_length, cfg.hop_length).ok_or_else(|| {
        Error::Precondition(format!(
            "clip of {} samples is shorter than one {}-sample window",
            clip.len(),
            cfg.win_length
        ))
    })?;

    let window = hann(cfg.win_length);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let n_bins = cfg.n_fft / 2 + 1;
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut power = nalgebra::DVector::<f64>::zeros(n_bins);
    let mut out = DMatrix::<f64>::zeros(n_frames, cfg.n_mels);

    for t in 0..n_frames {
        let start = t * cfg.hop_length;
        let frame = &clip.samples()[start..start + cfg.win_length];
        buf.fill(Complex::new(0.0, 0.0));
        for (slot, (s, w)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            slot.re = s * w;
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf[..n_bins]) {
            *p = c.norm_sqr();
        }
        let mel = fb.weights() * &power;
        for (f, e) in mel.iter().enumerate() {
            out[(t, f)] = (e + LOG_FLOOR).ln();
        }
    }

    FeatureMatrix::new(
        out,
        Some(FrameMeta {
            frame_shift: cfg.hop_length as f64 / f64::from(clip.sample_rate()),
            sample_rate: clip.sample_rate(),
        }),
    )
}

// ---------------------------------------------------------------------------
// WAV

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Decodes a RIFF/WAVE byte stream holding 16-bit little-endian mono PCM.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedHeader("missing RIFF/WAVE magic".into()));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::MalformedHeader(format!("chunk {:?} overruns file", String::from_utf8_lossy(id))))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::MalformedHeader("fmt chunk too short".into()));
                }
                fmt = Some((u16_at(body, 0), u16_at(body, 2), u32_at(body, 4), u16_at(body, 14)));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let (tag, channels, sample_rate, bits) = fmt.ok_or_else(|| Error::MalformedHeader("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::MalformedHeader("missing data chunk".into()))?;
    if tag != 1 {
        return Err(Error::UnsupportedEncoding(tag));
    }
    if channels != 1 {
        return Err(Error::UnsupportedChannels(channels));
    }
    if bits != 16 {
        return Err(Error::UnsupportedBitDepth(bits));
    }
    if data.len() % 2 != 0 {
        return Err(Error::MalformedHeader("odd-sized 16-bit data chunk".into()));
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])) / 32768.0)
        .collect();
    AudioClip::new(samples, sample_rate)
}

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    parse_wav(&read_bytes(path)?)
}

/// Encodes samples as 16-bit mono PCM, clamping to the representable range.
pub fn encode_wav(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

// ---------------------------------------------------------------------------
// Feature archive: "<utt_id> <T> <F>" then T lines of F values.

pub fn write_feature_archive(entries: &[(String, FeatureMatrix)]) -> String {
    let mut s = String::new();
    for (id, m) in entries {
        let _ = writeln!(s, "{id} {} {}", m.n_frames(), m.n_bins());
        for t in 0..m.n_frames() {
            let row: Vec<String> = (0..m.n_bins()).map(|f| fmt_sig9(m.get(t, f))).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
    }
    s
}

pub fn parse_feature_archive(text: &str) -> Result<Vec<(String, FeatureMatrix)>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let mut out = Vec::new();
    while let Some((ln, header)) = lines.next() {
        let toks: Vec<&str> = header.split_whitespace().collect();
        let [id, t, f] = toks[..] else {
            return Err(Error::parse(ln, "expected header \"<utt_id> <T> <F>\""));
        };
        let (t, f) = (parse_usize(t, ln)?, parse_usize(f, ln)?);
        let mut frames = Vec::with_capacity(t);
        for _ in 0..t {
            let (ln, row) = lines
                .next()
                .ok_or_else(|| Error::parse(ln, format!("archive ends inside {id}")))?;
            let vals = row
                .split_whitespace()
                .map(|tok| parse_f64(tok, ln))
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != f {
                return Err(Error::parse(ln, format!("expected {f} values, found {}", vals.len())));
            }
            frames.push(vals);
        }
        let m = FeatureMatrix::from_frames(&frames).map_err(|e| Error::parse(ln, e.to_string()))?;
        out.push((id.to_string(), m));
    }
    Ok(out)
}
