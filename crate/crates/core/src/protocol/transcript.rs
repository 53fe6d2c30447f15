//! Bob's view of a session and its on-disk form.
//!
//! The file is TOML: the public session parameters, both seeds, the
//! hex-encoded frames in channel order, Alice's result, and optionally the
//! run configuration that produced it (so the session can be replayed).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::message::{OutputMode, ProtocolMessage};
use super::session::{Seeds, SessionOutput};
use super::wire::{decode_frame, DecodeError};
use crate::bits::BitString;
use crate::qsim::StateVector;

pub const TRANSCRIPT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SessionResult {
    Classical(BitString),
    /// SHA-256 of the corrected state's little-endian amplitude bytes.
    Quantum {
        fingerprint: String,
    },
}

impl SessionResult {
    pub fn from_output(output: &SessionOutput) -> Self {
        match output {
            SessionOutput::Classical(b) => SessionResult::Classical(b.clone()),
            SessionOutput::Quantum(s) => SessionResult::Quantum {
                fingerprint: state_fingerprint(s),
            },
        }
    }
}

pub fn state_fingerprint(state: &StateVector) -> String {
    let mut hasher = Sha256::new();
    for a in state.amplitudes() {
        hasher.update(a.re.to_le_bytes());
        hasher.update(a.im.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// SHA-256 over the concatenated frames, hex encoded.
pub fn frames_digest(frames: &[Vec<u8>]) -> String {
    let mut hasher = Sha256::new();
    for f in frames {
        hasher.update(f);
    }
    hex::encode(hasher.finalize())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionTranscript {
    pub n: usize,
    pub m: usize,
    pub output_mode: OutputMode,
    pub seeds: Seeds,
    /// Every frame on the channel, in order, exactly as encoded.
    pub frames: Vec<Vec<u8>>,
    pub result: SessionResult,
}

/// Expected-message predicate used by the grammar check.
type MessageCheck = Box<dyn Fn(&ProtocolMessage) -> bool>;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("frame {index}: {source}")]
    Decode { index: usize, source: DecodeError },
    #[error("grammar violation at message {index}: expected {expected}, found {found}")]
    Grammar {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("transcript file: {0}")]
    Format(String),
}

impl SessionTranscript {
    pub fn messages(&self) -> Result<Vec<ProtocolMessage>, TranscriptError> {
        let mut offset = 0u64;
        self.frames
            .iter()
            .enumerate()
            .map(|(index, f)| {
                let (msg, used) =
                    decode_frame(f, offset).map_err(|source| TranscriptError::Decode { index, source })?;
                if used != f.len() {
                    return Err(TranscriptError::Format(format!("frame {index} has trailing bytes")));
                }
                offset += used as u64;
                Ok(msg)
            })
            .collect()
    }

    /// Hello, `m` Registers, then per layer Instruction followed by
    /// Outcomes; in quantum mode the last layer ends with FinalRegister.
    pub fn check_grammar(&self) -> Result<(), TranscriptError> {
        let msgs = self.messages()?;
        let (n, m, mode) = (self.n, self.m, self.output_mode);
        let mut expected: Vec<(String, MessageCheck)> = Vec::new();
        expected.push((
            format!("Hello({n}, {m}, {mode})"),
            Box::new(move |msg| matches!(msg, ProtocolMessage::Hello { n: a, m: b, mode: c } if *a == n && *b == m && *c == mode)),
        ));
        for i in 1..=m {
            expected.push((
                format!("Register {i}"),
                Box::new(move |msg| {
                    matches!(msg, ProtocolMessage::Register { layer, state } if *layer == i && state.num_qubits() == n)
                }),
            ));
        }
        for i in 1..=m {
            expected.push((
                format!("Instruction {i}"),
                Box::new(move |msg| {
                    matches!(msg, ProtocolMessage::Instruction { layer, op } if *layer == i && op.num_qubits() == n)
                }),
            ));
            if mode == OutputMode::Quantum && i == m {
                expected.push((
                    "FinalRegister".into(),
                    Box::new(
                        move |msg| matches!(msg, ProtocolMessage::FinalRegister { state } if state.num_qubits() == n),
                    ),
                ));
            } else {
                expected.push((
                    format!("Outcomes {i}"),
                    Box::new(move |msg| matches!(msg, ProtocolMessage::Outcomes { layer, bits } if *layer == i && bits.len() == n)),
                ));
            }
        }
        for (index, (label, ok)) in expected.iter().enumerate() {
            match msgs.get(index) {
                Some(msg) if ok(msg) => {}
                Some(msg) => {
                    return Err(TranscriptError::Grammar {
                        index,
                        expected: label.clone(),
                        found: msg.kind().to_string(),
                    })
                }
                None => {
                    return Err(TranscriptError::Grammar {
                        index,
                        expected: label.clone(),
                        found: "end of transcript".into(),
                    })
                }
            }
        }
        if msgs.len() > expected.len() {
            return Err(TranscriptError::Grammar {
                index: expected.len(),
                expected: "end of transcript".into(),
                found: msgs[expected.len()].kind().to_string(),
            });
        }
        Ok(())
    }

    /// Concatenation of all frames.
    pub fn wire_bytes(&self) -> Vec<u8> {
        self.frames.concat()
    }

    /// SHA-256 over the frame bytes, hex encoded.
    pub fn digest(&self) -> String {
        frames_digest(&self.frames)
    }

    pub fn to_toml(&self, config: Option<&toml::Table>) -> Result<String, TranscriptError> {
        let (classical, quantum_fingerprint) = match &self.result {
            SessionResult::Classical(b) => (Some(b.to_string()), None),
            SessionResult::Quantum { fingerprint } => (None, Some(fingerprint.clone())),
        };
        let file = TranscriptFile {
            schema_version: TRANSCRIPT_SCHEMA_VERSION,
            n: self.n as u32,
            m: self.m as u32,
            output_mode: self.output_mode.as_str().to_string(),
            alice_seed: self.seeds.alice.to_string(),
            bob_seed: self.seeds.bob.to_string(),
            digest: self.digest(),
            frames: self.frames.iter().map(hex::encode).collect(),
            result: ResultSection {
                classical,
                quantum_fingerprint,
            },
            config: config.cloned(),
        };
        toml::to_string(&file).map_err(|e| TranscriptError::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<(Self, Option<toml::Table>), TranscriptError> {
        let file: TranscriptFile = toml::from_str(text).map_err(|e| TranscriptError::Format(e.to_string()))?;
        if file.schema_version != TRANSCRIPT_SCHEMA_VERSION {
            return Err(TranscriptError::Format(format!(
                "unsupported schema_version {}",
                file.schema_version
            )));
        }
        let seed = |s: &str, name: &str| {
            s.parse::<u64>()
                .map_err(|e| TranscriptError::Format(format!("{name}: {e}")))
        };
        let frames = file
            .frames
            .iter()
            .enumerate()
            .map(|(i, h)| hex::decode(h).map_err(|e| TranscriptError::Format(format!("frame {i}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let result = match (file.result.classical, file.result.quantum_fingerprint) {
            (Some(bits), None) => SessionResult::Classical(
                bits.parse()
                    .map_err(|e| TranscriptError::Format(format!("result.classical: {e}")))?,
            ),
            (None, Some(fingerprint)) => SessionResult::Quantum { fingerprint },
            _ => {
                return Err(TranscriptError::Format(
                    "result needs exactly one of classical or quantum_fingerprint".into(),
                ))
            }
        };
        let transcript = SessionTranscript {
            n: file.n as usize,
            m: file.m as usize,
            output_mode: file.output_mode.parse().map_err(TranscriptError::Format)?,
            seeds: Seeds {
                alice: seed(&file.alice_seed, "alice_seed")?,
                bob: seed(&file.bob_seed, "bob_seed")?,
            },
            frames,
            result,
        };
        if transcript.digest() != file.digest {
            return Err(TranscriptError::Format("digest does not match frames".into()));
        }
        Ok((transcript, file.config))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TranscriptFile {
    schema_version: u32,
    n: u32,
    m: u32,
    output_mode: String,
    /// Seeds are strings so the full u64 range survives TOML's i64 integers.
    alice_seed: String,
    bob_seed: String,
    digest: String,
    frames: Vec<String>,
    result: ResultSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<toml::Table>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    classical: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quantum_fingerprint: Option<String>,
}
