//! The `.lgtr` logit trace format and offline replay.
//!
//! Layout, all integers little-endian, no padding:
//!
//! ```text
//! offset size field
//! 0      4    magic "LGTR"
//! 4      4    version (u32, currently 1)
//! 8      4    vocab V (u32)
//! 12     4    frames T (u32)
//! 16     4    sites per frame m (u32)
//! 20     1    dtype (u8, 0 = f32 little-endian)
//! 21     ...  T*m*V logits, frame-major, then site, then token
//! ```

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::diagnostics::{self, CollapseReport, EntropyGrid};
use crate::distributions::{softmax, LogitVector, ProbabilityDistribution, TokenId};
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::samplers::{SampleDiagnostics, SamplerConfig};

pub const MAGIC: [u8; 4] = *b"LGTR";
pub const VERSION: u32 = 1;
pub const DTYPE_F32_LE: u8 = 0;
pub const HEADER_LEN: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceHeader {
    pub version: u32,
    pub vocab: u32,
    pub frames: u32,
    pub sites_per_frame: u32,
    pub dtype: u8,
}

impl TraceHeader {
    pub fn validate(&self) -> Result<()> {
        if self.version != VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        if self.dtype != DTYPE_F32_LE {
            return Err(Error::UnsupportedDtype(self.dtype));
        }
        if self.vocab < 2 {
            return Err(Error::InvalidHeader(format!("vocab {} < 2", self.vocab)));
        }
        if self.frames == 0 || self.sites_per_frame == 0 {
            return Err(Error::InvalidHeader("frames and sites must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of f32 values in the payload.
    pub fn payload_len(&self) -> usize {
        self.frames as usize * self.sites_per_frame as usize * self.vocab as usize
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&self.version.to_le_bytes());
        out[8..12].copy_from_slice(&self.vocab.to_le_bytes());
        out[12..16].copy_from_slice(&self.frames.to_le_bytes());
        out[16..20].copy_from_slice(&self.sites_per_frame.to_le_bytes());
        out[20] = self.dtype;
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitTrace {
    header: TraceHeader,
    payload: Vec<f32>,
}

impl LogitTrace {
    pub fn new(vocab: u32, frames: u32, sites_per_frame: u32, payload: Vec<f32>) -> Result<Self> {
        let header = TraceHeader { version: VERSION, vocab, frames, sites_per_frame, dtype: DTYPE_F32_LE };
        let trace = Self { header, payload };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        self.header.validate()?;
        let expected = self.header.payload_len();
        if self.payload.len() != expected {
            return Err(Error::DimensionMismatch { expected, actual: self.payload.len() });
        }
        if let Some(i) = self.payload.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLogit(i));
        }
        Ok(())
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    pub fn vocab(&self) -> usize {
        self.header.vocab as usize
    }

    pub fn frames(&self) -> usize {
        self.header.frames as usize
    }

    pub fn sites(&self) -> usize {
        self.header.sites_per_frame as usize
    }

    pub fn payload(&self) -> &[f32] {
        &self.payload
    }

    /// Logits recorded for `(frame, site)`.
    pub fn logits(&self, frame: usize, site: usize) -> Result<&[f32]> {
        if frame >= self.frames() {
            return Err(Error::DimensionMismatch { expected: self.frames(), actual: frame });
        }
        if site >= self.sites() {
            return Err(Error::DimensionMismatch { expected: self.sites(), actual: site });
        }
        let v = self.vocab();
        let start = (frame * self.sites() + site) * v;
        Ok(&self.payload[start..start + v])
    }

    pub fn distribution(&self, frame: usize, site: usize, temperature: f64) -> Result<ProbabilityDistribution> {
        softmax(&LogitVector::from_f32(self.logits(frame, site)?)?, temperature)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len() * 4);
        out.extend_from_slice(&self.header.encode());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::InvalidHeader(format!("{} bytes is shorter than the header", bytes.len())));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("slice of 4");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("slice of 4"));
        let header = TraceHeader {
            version: u32_at(4),
            vocab: u32_at(8),
            frames: u32_at(12),
            sites_per_frame: u32_at(16),
            dtype: bytes[20],
        };
        header.validate()?;
        let body = &bytes[HEADER_LEN..];
        let expected = header.payload_len() * 4;
        if body.len() < expected {
            return Err(Error::TruncatedPayload { expected, actual: body.len() });
        }
        if body.len() > expected {
            return Err(Error::InvalidHeader(format!(
                "{} trailing bytes after payload",
                body.len() - expected
            )));
        }
        let payload: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        if let Some(i) = payload.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLogit(i));
        }
        Ok(Self { header, payload })
    }
}

pub fn write_trace<W: Write>(trace: &LogitTrace, mut sink: W) -> Result<()> {
    trace.validate()?;
    sink.write_all(&trace.to_bytes())?;
    sink.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(mut source: R) -> Result<LogitTrace> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    LogitTrace::from_bytes(&bytes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutput {
    pub tokens: Vec<Vec<TokenId>>,
    pub diagnostics: Vec<Vec<SampleDiagnostics>>,
    pub report: CollapseReport,
}

/// Decode every cell of a trace with one sampler. Cell `(t, i)` draws from
/// the `(seed, t, i)` substream, matching the simulator.
pub fn replay(
    trace: &LogitTrace,
    sampler: &SamplerConfig,
    temperature: f64,
    seed: u64,
    collapse_threshold: f64,
) -> Result<ReplayOutput> {
    sampler.validate()?;
    let (frames, sites) = (trace.frames(), trace.sites());
    let cells: Vec<(TokenId, SampleDiagnostics, f64)> = (0..frames * sites)
        .into_par_iter()
        .map(|cell| {
            let (t, i) = (cell / sites, cell % sites);
            let dist = trace.distribution(t, i, temperature)?;
            let mut rng = RngState::for_cell(seed, t as u64, i as u64);
            let (tok, diag) = sampler.sample(&dist, &mut rng)?;
            Ok((tok, diag, dist.top1()))
        })
        .collect::<Result<_>>()?;

    let mut tokens = Vec::with_capacity(frames);
    let mut diags = Vec::with_capacity(frames);
    let mut grids = Vec::with_capacity(frames);
    let mut top1 = Vec::with_capacity(frames);
    for (t, chunk) in cells.chunks(sites).enumerate() {
        tokens.push(chunk.iter().map(|c| c.0).collect());
        let frame_diags: Vec<SampleDiagnostics> = chunk.iter().map(|c| c.1).collect();
        grids.push(EntropyGrid::new(t, 1, sites, frame_diags.iter().map(|d| d.normalized_entropy).collect())?);
        diags.push(frame_diags);
        top1.push(chunk.iter().map(|c| c.2).sum::<f64>() / sites as f64);
    }
    let report = diagnostics::collapse_report_from_grids(&grids, top1, collapse_threshold)?;
    Ok(ReplayOutput { tokens, diagnostics: diags, report })
}

/// Entropy grid of one recorded frame, laid out as `height x width`.
pub fn frame_entropy_grid(
    trace: &LogitTrace,
    frame: usize,
    height: usize,
    width: usize,
    temperature: f64,
) -> Result<EntropyGrid> {
    if height * width != trace.sites() {
        return Err(Error::DimensionMismatch { expected: trace.sites(), actual: height * width });
    }
    let dists = (0..trace.sites())
        .map(|i| trace.distribution(frame, i, temperature))
        .collect::<Result<Vec<_>>>()?;
    diagnostics::entropy_grid(&dists, frame, height, width)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LogitTrace {
        LogitTrace::new(4, 1, 1, vec![0.5, -1.0, 2.0, 0.0]).unwrap()
    }

    #[test]
    fn file_size() {
        assert_eq!(small().to_bytes().len(), 21 + 16);
    }

    #[test]
    fn header_layout() {
        let b = small().to_bytes();
        assert_eq!(&b[0..4], b"LGTR");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &4u32.to_le_bytes());
        assert_eq!(&b[12..16], &1u32.to_le_bytes());
        assert_eq!(&b[16..20], &1u32.to_le_bytes());
        assert_eq!(b[20], 0);
        assert_eq!(&b[21..25], &0.5f32.to_le_bytes());
    }

    #[test]
    fn round_trip() {
        let t = small();
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).unwrap();
        assert_eq!(read_trace(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn nan_rejected_before_write() {
        assert_eq!(LogitTrace::new(2, 1, 1, vec![0.0, f32::NAN]), Err(Error::NonFiniteLogit(1)));
        let bad = LogitTrace {
            header: small().header,
            payload: vec![0.0, 1.0, f32::INFINITY, 0.0],
        };
        let mut buf = Vec::new();
        assert_eq!(write_trace(&bad, &mut buf), Err(Error::NonFiniteLogit(2)));
        assert!(buf.is_empty());
    }

    #[test]
    fn corrupted_inputs() {
        let mut b = small().to_bytes();
        b[0] = b'X';
        assert_eq!(LogitTrace::from_bytes(&b), Err(Error::BadMagic(*b"XGTR")));

        let b = small().to_bytes();
        assert_eq!(
            LogitTrace::from_bytes(&b[..b.len() - 4]),
            Err(Error::TruncatedPayload { expected: 16, actual: 12 })
        );

        let mut b = small().to_bytes();
        b[4] = 2;
        assert_eq!(LogitTrace::from_bytes(&b), Err(Error::UnsupportedVersion(2)));

        let mut b = small().to_bytes();
        b[21..25].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(LogitTrace::from_bytes(&b), Err(Error::NonFiniteLogit(0)));

        assert!(matches!(LogitTrace::from_bytes(b"LGT"), Err(Error::InvalidHeader(_))));
    }

    #[test]
    fn cell_addressing() {
        let payload: Vec<f32> = (0..2 * 3 * 2).map(|v| v as f32).collect();
        let t = LogitTrace::new(2, 2, 3, payload).unwrap();
        assert_eq!(t.logits(1, 2).unwrap(), &[10.0, 11.0]);
        assert!(t.logits(2, 0).is_err());
        assert!(t.logits(0, 3).is_err());
    }

    #[test]
    fn greedy_replay_ignores_seed() {
        let payload: Vec<f32> = (0..3 * 4 * 5).map(|v| ((v * 7) % 11) as f32 / 3.0).collect();
        let t = LogitTrace::new(5, 3, 4, payload).unwrap();
        let a = replay(&t, &SamplerConfig::Greedy, 1.0, 1, 0.25).unwrap();
        let b = replay(&t, &SamplerConfig::Greedy, 1.0, 2, 0.25).unwrap();
        assert_eq!(a.tokens, b.tokens);
        let k1 = replay(&t, &SamplerConfig::TopK { k: 1 }, 1.0, 9, 0.25).unwrap();
        assert_eq!(a.tokens, k1.tokens);
        assert_eq!(a.report.frames(), 3);
    }
}
