//! Bit-exact framing for the socket transport.
//!
//! ```text
//! frame   = u32 LE payload length | u8 tag | payload
//! 0x01 Hello          u16 n, u16 m, u8 mode (0 classical, 1 quantum)
//! 0x02 Register       u16 layer, u16 n, 2^n × (f64 re, f64 im)
//! 0x03 Instruction    u16 layer, u16 n, u16 k, (n/k)·2^k × f64 phase
//! 0x04 Outcomes       u16 layer, u16 n, ceil(n/8) bytes, bit j at byte j/8, bit j%8
//! 0x05 FinalRegister  u16 n, 2^n × (f64 re, f64 im)
//! ```
//!
//! The length field counts payload bytes only, not the tag. All integers
//! and floats are little-endian.

use std::io::{self, Read};

use num_complex::Complex64;
use thiserror::Error;

use super::message::{OutputMode, ProtocolMessage};
use crate::bits::BitString;
use crate::diaggroup::DiagonalUnitary;
use crate::qsim::StateVector;

pub const TAG_HELLO: u8 = 0x01;
pub const TAG_REGISTER: u8 = 0x02;
pub const TAG_INSTRUCTION: u8 = 0x03;
pub const TAG_OUTCOMES: u8 = 0x04;
pub const TAG_FINAL_REGISTER: u8 = 0x05;

/// Length prefix plus tag.
pub const HEADER_LEN: usize = 5;
/// Upper bound on a payload; a 16-qubit register needs about 1 MiB.
pub const MAX_PAYLOAD: usize = 1 << 21;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeErrorKind {
    #[error("truncated frame: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("unknown tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("length mismatch: header declares {declared} payload bytes, content needs {expected}")]
    LengthMismatch { declared: usize, expected: usize },
    #[error("payload length {0} exceeds limit")]
    Oversized(usize),
    #[error("invalid field: {0}")]
    InvalidField(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("frame decode error at offset {offset}: {kind}")]
pub struct DecodeError {
    pub offset: u64,
    pub kind: DecodeErrorKind,
}

#[derive(Debug, Error)]
pub enum FrameReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

fn put_u16(out: &mut Vec<u8>, v: usize) {
    let v = u16::try_from(v).expect("field exceeds u16");
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_state(out: &mut Vec<u8>, state: &StateVector) {
    put_u16(out, state.num_qubits());
    for a in state.amplitudes() {
        out.extend_from_slice(&a.re.to_le_bytes());
        out.extend_from_slice(&a.im.to_le_bytes());
    }
}

/// Encodes one message as a complete frame.
pub fn encode_frame(msg: &ProtocolMessage) -> Vec<u8> {
    let mut payload = Vec::new();
    let tag = match msg {
        ProtocolMessage::Hello { n, m, mode } => {
            put_u16(&mut payload, *n);
            put_u16(&mut payload, *m);
            payload.push(match mode {
                OutputMode::Classical => 0,
                OutputMode::Quantum => 1,
            });
            TAG_HELLO
        }
        ProtocolMessage::Register { layer, state } => {
            put_u16(&mut payload, *layer);
            put_state(&mut payload, state);
            TAG_REGISTER
        }
        ProtocolMessage::Instruction { layer, op } => {
            put_u16(&mut payload, *layer);
            put_u16(&mut payload, op.num_qubits());
            put_u16(&mut payload, op.block_size());
            for p in op.flat_phases() {
                payload.extend_from_slice(&p.to_le_bytes());
            }
            TAG_INSTRUCTION
        }
        ProtocolMessage::Outcomes { layer, bits } => {
            put_u16(&mut payload, *layer);
            put_u16(&mut payload, bits.len());
            payload.extend_from_slice(&bits.to_packed_bytes());
            TAG_OUTCOMES
        }
        ProtocolMessage::FinalRegister { state } => {
            put_state(&mut payload, state);
            TAG_FINAL_REGISTER
        }
    };
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.push(tag);
    frame.extend_from_slice(&payload);
    frame
}

/// Cursor over one payload; offsets in errors are absolute.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    base: u64,
}

impl<'a> Reader<'a> {
    fn err(&self, kind: DecodeErrorKind) -> DecodeError {
        DecodeError {
            offset: self.base + self.pos as u64,
            kind,
        }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < len {
            return Err(self.err(DecodeErrorKind::Truncated {
                needed: len,
                available: self.buf.len() - self.pos,
            }));
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u16(&mut self) -> Result<usize, DecodeError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]) as usize)
    }

    fn f64(&mut self) -> Result<f64, DecodeError> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    /// Fails unless exactly `expected` payload bytes remain.
    fn expect_remaining(&self, expected: usize) -> Result<(), DecodeError> {
        let remaining = self.buf.len() - self.pos;
        if remaining != expected {
            return Err(self.err(DecodeErrorKind::LengthMismatch {
                declared: self.buf.len(),
                expected: self.pos + expected,
            }));
        }
        Ok(())
    }

    fn invalid(&self, what: impl Into<String>) -> DecodeError {
        self.err(DecodeErrorKind::InvalidField(what.into()))
    }

    fn state(&mut self) -> Result<StateVector, DecodeError> {
        let n = self.u16()?;
        if n == 0 || n > 16 {
            return Err(self.invalid(format!("register width {n}")));
        }
        self.expect_remaining(16 << n)?;
        let mut amps = Vec::with_capacity(1 << n);
        for _ in 0..1usize << n {
            let re = self.f64()?;
            let im = self.f64()?;
            amps.push(Complex64::new(re, im));
        }
        StateVector::from_amplitudes(amps).map_err(|e| self.invalid(e.to_string()))
    }
}

/// Decodes a single frame from the front of `bytes`, returning the message
/// and the number of bytes consumed. `base` is the absolute offset of
/// `bytes[0]`, used in error reports.
pub fn decode_frame(bytes: &[u8], base: u64) -> Result<(ProtocolMessage, usize), DecodeError> {
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError {
            offset: base,
            kind: DecodeErrorKind::Truncated {
                needed: HEADER_LEN,
                available: bytes.len(),
            },
        });
    }
    let declared = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    if declared > MAX_PAYLOAD {
        return Err(DecodeError {
            offset: base,
            kind: DecodeErrorKind::Oversized(declared),
        });
    }
    let tag = bytes[4];
    let available = bytes.len() - HEADER_LEN;
    if available < declared {
        return Err(DecodeError {
            offset: base,
            kind: DecodeErrorKind::Truncated {
                needed: HEADER_LEN + declared,
                available: bytes.len(),
            },
        });
    }
    let msg = decode_payload(tag, &bytes[HEADER_LEN..HEADER_LEN + declared], base)?;
    Ok((msg, HEADER_LEN + declared))
}

fn decode_payload(tag: u8, payload: &[u8], frame_offset: u64) -> Result<ProtocolMessage, DecodeError> {
    let mut r = Reader {
        buf: payload,
        pos: 0,
        base: frame_offset + HEADER_LEN as u64,
    };
    let msg = match tag {
        TAG_HELLO => {
            r.expect_remaining(5)?;
            let n = r.u16()?;
            let m = r.u16()?;
            let mode = match r.take(1)?[0] {
                0 => OutputMode::Classical,
                1 => OutputMode::Quantum,
                other => return Err(r.invalid(format!("output mode byte {other}"))),
            };
            ProtocolMessage::Hello { n, m, mode }
        }
        TAG_REGISTER => {
            let layer = r.u16()?;
            let state = r.state()?;
            ProtocolMessage::Register { layer, state }
        }
        TAG_INSTRUCTION => {
            let layer = r.u16()?;
            let n = r.u16()?;
            let k = r.u16()?;
            if k == 0 || n == 0 || n % k != 0 || k > 16 {
                return Err(r.invalid(format!("instruction shape n = {n}, k = {k}")));
            }
            let count = (n / k) << k;
            r.expect_remaining(8 * count)?;
            let phases = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            let op = DiagonalUnitary::from_canonical_flat(n, k, &phases).map_err(|e| r.invalid(e.to_string()))?;
            ProtocolMessage::Instruction { layer, op }
        }
        TAG_OUTCOMES => {
            let layer = r.u16()?;
            let n = r.u16()?;
            let len = n.div_ceil(8);
            r.expect_remaining(len)?;
            let bytes = r.take(len)?;
            let bits = BitString::from_packed_bytes(bytes, n)
                .ok_or_else(|| r.invalid("nonzero padding bits in outcome string"))?;
            ProtocolMessage::Outcomes { layer, bits }
        }
        TAG_FINAL_REGISTER => ProtocolMessage::FinalRegister { state: r.state()? },
        other => {
            return Err(DecodeError {
                offset: frame_offset + 4,
                kind: DecodeErrorKind::UnknownTag(other),
            })
        }
    };
    Ok(msg)
}

/// Splits a byte stream into frames, failing on the first malformed one.
pub fn decode_frames(bytes: &[u8]) -> Result<Vec<ProtocolMessage>, DecodeError> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let (msg, used) = decode_frame(&bytes[pos..], pos as u64)?;
        out.push(msg);
        pos += used;
    }
    Ok(out)
}

/// Reads one raw frame (header included) from a stream. Returns `Ok(None)`
/// on a clean end of stream before any header byte.
pub fn read_frame<R: Read>(reader: &mut R, offset: u64) -> Result<Option<Vec<u8>>, FrameReadError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match reader.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(DecodeError {
                    offset,
                    kind: DecodeErrorKind::Truncated {
                        needed: HEADER_LEN,
                        available: got,
                    },
                }
                .into())
            }
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let declared = u32::from_le_bytes(header[0..4].try_into().expect("4 bytes")) as usize;
    if declared > MAX_PAYLOAD {
        return Err(DecodeError {
            offset,
            kind: DecodeErrorKind::Oversized(declared),
        }
        .into());
    }
    let mut frame = header.to_vec();
    frame.resize(HEADER_LEN + declared, 0);
    let mut filled = HEADER_LEN;
    while filled < frame.len() {
        match reader.read(&mut frame[filled..]) {
            Ok(0) => {
                return Err(DecodeError {
                    offset,
                    kind: DecodeErrorKind::Truncated {
                        needed: HEADER_LEN + declared,
                        available: filled,
                    },
                }
                .into())
            }
            Ok(k) => filled += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(frame))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diaggroup::SubgroupSpec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hello_layout() {
        let frame = encode_frame(&ProtocolMessage::Hello {
            n: 2,
            m: 3,
            mode: OutputMode::Quantum,
        });
        assert_eq!(frame, vec![5, 0, 0, 0, 0x01, 2, 0, 3, 0, 1]);
    }

    #[test]
    fn outcomes_layout() {
        let bits: BitString = "1000000001".parse().unwrap();
        let frame = encode_frame(&ProtocolMessage::Outcomes { layer: 7, bits });
        assert_eq!(frame, vec![6, 0, 0, 0, 0x04, 7, 0, 10, 0, 0x01, 0x02]);
    }

    #[test]
    fn instruction_layout() {
        let op = DiagonalUnitary::single_block(vec![0.0, 0.5]).unwrap();
        let frame = encode_frame(&ProtocolMessage::Instruction { layer: 1, op });
        let mut expected = vec![22, 0, 0, 0, 0x03, 1, 0, 1, 0, 1, 0];
        expected.extend_from_slice(&0.0f64.to_le_bytes());
        expected.extend_from_slice(&0.5f64.to_le_bytes());
        assert_eq!(frame, expected);
    }

    #[test]
    fn register_layout() {
        let state = StateVector::basis(1, 1).unwrap();
        let frame = encode_frame(&ProtocolMessage::Register {
            layer: 2,
            state: state.clone(),
        });
        assert_eq!(&frame[..9], &[36, 0, 0, 0, 0x02, 2, 0, 1, 0]);
        assert_eq!(&frame[25..33], &1.0f64.to_le_bytes());
        let fin = encode_frame(&ProtocolMessage::FinalRegister { state });
        assert_eq!(&fin[..7], &[34, 0, 0, 0, 0x05, 1, 0]);
    }

    #[test]
    fn decode_errors_name_offsets() {
        let a = encode_frame(&ProtocolMessage::Hello {
            n: 1,
            m: 1,
            mode: OutputMode::Classical,
        });
        let b = encode_frame(&ProtocolMessage::Outcomes {
            layer: 1,
            bits: "1".parse().unwrap(),
        });
        let mut stream = a.clone();
        stream.extend_from_slice(&b[..b.len() - 1]);
        let err = decode_frames(&stream).unwrap_err();
        assert_eq!(err.offset, a.len() as u64);
        assert!(matches!(err.kind, DecodeErrorKind::Truncated { .. }));
        assert!(err.to_string().contains(&format!("offset {}", a.len())));

        let mut bad_tag = a.clone();
        bad_tag[4] = 0x09;
        let err = decode_frames(&bad_tag).unwrap_err();
        assert_eq!(err.kind, DecodeErrorKind::UnknownTag(0x09));
        assert_eq!(err.offset, 4);

        let mut bad_len = a.clone();
        bad_len[0] = 6;
        bad_len.push(0);
        let err = decode_frames(&bad_len).unwrap_err();
        assert!(matches!(err.kind, DecodeErrorKind::LengthMismatch { .. }));
    }

    #[test]
    fn rejects_non_canonical_instruction() {
        let op = DiagonalUnitary::single_block(vec![0.0, 0.5]).unwrap();
        let mut frame = encode_frame(&ProtocolMessage::Instruction { layer: 1, op });
        frame[11..19].copy_from_slice(&0.25f64.to_le_bytes());
        let err = decode_frames(&frame).unwrap_err();
        assert!(matches!(err.kind, DecodeErrorKind::InvalidField(_)));
    }

    #[test]
    fn read_frame_from_stream() {
        let a = encode_frame(&ProtocolMessage::Hello {
            n: 1,
            m: 2,
            mode: OutputMode::Classical,
        });
        let mut cursor = io::Cursor::new(a.clone());
        assert_eq!(read_frame(&mut cursor, 0).unwrap(), Some(a.clone()));
        assert!(read_frame(&mut cursor, a.len() as u64).unwrap().is_none());
        let mut truncated = io::Cursor::new(a[..7].to_vec());
        assert!(matches!(
            read_frame(&mut truncated, 0),
            Err(FrameReadError::Decode(DecodeError { offset: 0, .. }))
        ));
    }

    fn arb_message() -> impl Strategy<Value = ProtocolMessage> {
        (0u8..5, any::<u64>(), 1usize..=4, 1usize..=9).prop_map(|(tag, seed, n, layer)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match tag {
                0 => ProtocolMessage::Hello {
                    n,
                    m: layer,
                    mode: if seed % 2 == 0 {
                        OutputMode::Classical
                    } else {
                        OutputMode::Quantum
                    },
                },
                1 => ProtocolMessage::Register {
                    layer,
                    state: StateVector::haar_random(n, &mut rng).unwrap(),
                },
                2 => {
                    let k = if n % 2 == 0 { 2 } else { 1 };
                    ProtocolMessage::Instruction {
                        layer,
                        op: SubgroupSpec::continuous(k).sample(n, &mut rng).unwrap(),
                    }
                }
                3 => ProtocolMessage::Outcomes {
                    layer,
                    bits: BitString::from_index(seed as usize, n + layer),
                },
                _ => ProtocolMessage::FinalRegister {
                    state: StateVector::haar_random(n, &mut rng).unwrap(),
                },
            }
        })
    }

    proptest! {
        #[test]
        fn frames_round_trip(msgs in prop::collection::vec(arb_message(), 1..6)) {
            let stream: Vec<u8> = msgs.iter().flat_map(encode_frame).collect();
            prop_assert_eq!(decode_frames(&stream).unwrap(), msgs);
        }

        #[test]
        fn any_strict_prefix_fails(msg in arb_message(), cut in 1usize..40) {
            let frame = encode_frame(&msg);
            let cut = cut.min(frame.len() - 1);
            prop_assert!(decode_frames(&frame[..cut]).is_err());
        }
    }
}
