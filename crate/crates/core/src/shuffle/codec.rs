//! Byte payloads to lattice symbols and back.
//!
//! A frame is `len (u32 LE) | payload | fnv1a-32(payload) (u32 LE)`. Each
//! byte becomes one complex symbol: high nibble on the real axis, low
//! nibble on the imaginary axis, both in `0..=15`. Frames shorter than the
//! slot are zero padded.

use num_complex::Complex64;

const HEADER: usize = 4;
const TRAILER: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("frame shorter than its header")]
    Truncated,
    #[error("declared length {declared} exceeds the {available} bytes received")]
    BadLength { declared: usize, available: usize },
    #[error("checksum mismatch")]
    Checksum,
}

/// Symbols occupied by a payload of `payload_len` bytes.
pub fn frame_symbols(payload_len: usize) -> usize {
    HEADER + payload_len + TRAILER
}

pub fn checksum(bytes: &[u8]) -> u32 {
    bytes
        .iter()
        .fold(0x811c_9dc5u32, |h, &b| (h ^ u32::from(b)).wrapping_mul(0x0100_0193))
}

fn frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame_symbols(payload.len()));
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&checksum(payload).to_le_bytes());
    out
}

pub fn byte_to_symbol(b: u8) -> Complex64 {
    Complex64::new(f64::from(b >> 4), f64::from(b & 0x0f))
}

/// Nearest lattice point, clamped to the nibble range.
pub fn symbol_to_byte(z: Complex64) -> u8 {
    let nib = |v: f64| v.round().clamp(0.0, 15.0) as u8;
    (nib(z.re) << 4) | nib(z.im)
}

/// Frames `payload` and pads with zero symbols up to `padded_len`.
pub fn encode(payload: &[u8], padded_len: usize) -> Vec<Complex64> {
    let framed = frame(payload);
    assert!(framed.len() <= padded_len, "slot shorter than frame");
    framed
        .into_iter()
        .map(byte_to_symbol)
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(padded_len)
        .collect()
}

pub fn decode_bytes(bytes: &[u8]) -> Result<Vec<u8>, CodecError> {
    if bytes.len() < HEADER + TRAILER {
        return Err(CodecError::Truncated);
    }
    let declared = u32::from_le_bytes(bytes[..HEADER].try_into().unwrap()) as usize;
    let available = bytes.len() - HEADER - TRAILER;
    if declared > available {
        return Err(CodecError::BadLength { declared, available });
    }
    let payload = &bytes[HEADER..HEADER + declared];
    let sum = u32::from_le_bytes(
        bytes[HEADER + declared..HEADER + declared + TRAILER]
            .try_into()
            .unwrap(),
    );
    if sum != checksum(payload) {
        return Err(CodecError::Checksum);
    }
    Ok(payload.to_vec())
}

pub fn decode(symbols: &[Complex64]) -> Result<Vec<u8>, CodecError> {
    let bytes: Vec<u8> = symbols.iter().map(|&z| symbol_to_byte(z)).collect();
    decode_bytes(&bytes)
}
