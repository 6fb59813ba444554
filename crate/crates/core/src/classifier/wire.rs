//! Little-endian framing for the remote classifier.
//!
//! ```text
//! request:  "CLP1" | version u8 = 1 | track_id u64 | anchor_frame u64
//!           | side u16 | num_frames u8 = 16 | channels u8 = 3
//!           | num_frames * side * side * channels bytes of RGB, frame-major, row-major
//! response: "CLR1" | version u8 = 1 | probs f32[4] (safe, evacuation,
//!           call_for_help, emergency) | flags u8 (bit 0: low confidence)
//! ```

use std::io::{Read, Write};

use image::RgbImage;

use super::ClassifierError;
use crate::windower::{Clip, CLIP_LEN};

pub const REQUEST_MAGIC: [u8; 4] = *b"CLP1";
pub const RESPONSE_MAGIC: [u8; 4] = *b"CLR1";
pub const VERSION: u8 = 1;
pub const REQUEST_HEADER_LEN: usize = 4 + 1 + 8 + 8 + 2 + 1 + 1;
pub const RESPONSE_LEN: usize = 4 + 1 + 16 + 1;
pub const FLAG_LOW_CONFIDENCE: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipRequest {
    pub track_id: u64,
    pub anchor_frame: u64,
    pub side: u16,
    pub num_frames: u8,
    pub channels: u8,
    pub payload: Vec<u8>,
}

impl ClipRequest {
    pub fn from_clip(clip: &Clip) -> Result<Self, ClassifierError> {
        let side = clip.side();
        let side16 = u16::try_from(side)
            .map_err(|_| ClassifierError::Protocol(format!("clip side {side} exceeds u16")))?;
        if clip.frames.len() != CLIP_LEN {
            return Err(ClassifierError::Protocol(format!(
                "clip has {} frames, expected {CLIP_LEN}",
                clip.frames.len()
            )));
        }
        let mut payload = Vec::with_capacity(CLIP_LEN * (side as usize).pow(2) * 3);
        for f in &clip.frames {
            if f.dimensions() != (side, side) {
                return Err(ClassifierError::Protocol("clip frames differ in size".into()));
            }
            payload.extend_from_slice(f.as_raw());
        }
        Ok(ClipRequest {
            track_id: clip.track_id,
            anchor_frame: clip.anchor_frame_index,
            side: side16,
            num_frames: CLIP_LEN as u8,
            channels: 3,
            payload,
        })
    }

    pub fn frames(&self) -> Vec<RgbImage> {
        let side = self.side as u32;
        let len = (side as usize).pow(2) * 3;
        self.payload
            .chunks_exact(len)
            .map(|c| RgbImage::from_raw(side, side, c.to_vec()).expect("chunk length matches"))
            .collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(REQUEST_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&REQUEST_MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.track_id.to_le_bytes());
        out.extend_from_slice(&self.anchor_frame.to_le_bytes());
        out.extend_from_slice(&self.side.to_le_bytes());
        out.push(self.num_frames);
        out.push(self.channels);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }

    /// Reads one request. `Ok(None)` on a clean end of stream before the
    /// first byte.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Self>, ClassifierError> {
        let mut header = [0u8; REQUEST_HEADER_LEN];
        if !read_exact_or_eof(r, &mut header)? {
            return Ok(None);
        }
        if header[..4] != REQUEST_MAGIC {
            return Err(ClassifierError::Protocol(format!("bad request magic {:?}", &header[..4])));
        }
        if header[4] != VERSION {
            return Err(ClassifierError::Protocol(format!("unsupported version {}", header[4])));
        }
        let track_id = u64::from_le_bytes(header[5..13].try_into().unwrap());
        let anchor_frame = u64::from_le_bytes(header[13..21].try_into().unwrap());
        let side = u16::from_le_bytes(header[21..23].try_into().unwrap());
        let num_frames = header[23];
        let channels = header[24];
        if num_frames as usize != CLIP_LEN || channels != 3 || side == 0 {
            return Err(ClassifierError::Protocol(format!(
                "unsupported shape {num_frames}x{side}x{side}x{channels}"
            )));
        }
        let mut payload = vec![0u8; num_frames as usize * (side as usize).pow(2) * channels as usize];
        r.read_exact(&mut payload).map_err(truncated)?;
        Ok(Some(ClipRequest {
            track_id,
            anchor_frame,
            side,
            num_frames,
            channels,
            payload,
        }))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ClassifierError> {
        let mut cursor = bytes;
        let req = Self::read_from(&mut cursor)?
            .ok_or_else(|| ClassifierError::Protocol("empty request".into()))?;
        if !cursor.is_empty() {
            return Err(ClassifierError::Protocol(format!("{} trailing bytes", cursor.len())));
        }
        Ok(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipResponse {
    pub probabilities: [f32; 4],
    pub flags: u8,
}

impl ClipResponse {
    pub fn encode(&self) -> [u8; RESPONSE_LEN] {
        let mut out = [0u8; RESPONSE_LEN];
        out[..4].copy_from_slice(&RESPONSE_MAGIC);
        out[4] = VERSION;
        for (i, p) in self.probabilities.iter().enumerate() {
            out[5 + 4 * i..9 + 4 * i].copy_from_slice(&p.to_le_bytes());
        }
        out[21] = self.flags;
        out
    }

    pub fn decode(bytes: &[u8; RESPONSE_LEN]) -> Result<Self, ClassifierError> {
        if bytes[..4] != RESPONSE_MAGIC {
            return Err(ClassifierError::Protocol(format!("bad response magic {:?}", &bytes[..4])));
        }
        if bytes[4] != VERSION {
            return Err(ClassifierError::Protocol(format!("unsupported version {}", bytes[4])));
        }
        let mut probabilities = [0f32; 4];
        for (i, p) in probabilities.iter_mut().enumerate() {
            *p = f32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap());
        }
        Ok(ClipResponse {
            probabilities,
            flags: bytes[21],
        })
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, ClassifierError> {
        let mut buf = [0u8; RESPONSE_LEN];
        r.read_exact(&mut buf).map_err(truncated)?;
        Self::decode(&buf)
    }

    /// Probabilities as f64, renormalized when the sum is within 1% of one.
    pub fn validated(&self) -> Result<[f64; 4], ClassifierError> {
        let p = self.probabilities.map(f64::from);
        let sum: f64 = p.iter().sum();
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) || !(0.99..=1.01).contains(&sum) {
            return Err(ClassifierError::BadSimplex(sum));
        }
        Ok(p.map(|x| x / sum))
    }
}

fn truncated(e: std::io::Error) -> ClassifierError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        ClassifierError::Protocol("truncated message".into())
    } else {
        ClassifierError::from_io(e)
    }
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool, ClassifierError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(ClassifierError::Protocol("truncated message".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(ClassifierError::from_io(e)),
        }
    }
    Ok(true)
}
