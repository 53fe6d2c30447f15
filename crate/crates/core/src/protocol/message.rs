use std::fmt;

use crate::bits::BitString;
use crate::diaggroup::DiagonalUnitary;
use crate::qsim::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OutputMode {
    Classical,
    Quantum,
}

impl OutputMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputMode::Classical => "classical",
            OutputMode::Quantum => "quantum",
        }
    }
}

impl fmt::Display for OutputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for OutputMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classical" => Ok(OutputMode::Classical),
            "quantum" => Ok(OutputMode::Quantum),
            other => Err(format!("unknown output mode {other:?} (expected classical or quantum)")),
        }
    }
}

/// Everything that crosses the channel between client and server. Layer
/// indices are 1-based.
#[derive(Clone, Debug, PartialEq)]
pub enum ProtocolMessage {
    Hello { n: usize, m: usize, mode: OutputMode },
    Register { layer: usize, state: StateVector },
    Instruction { layer: usize, op: DiagonalUnitary },
    Outcomes { layer: usize, bits: BitString },
    FinalRegister { state: StateVector },
}

impl ProtocolMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolMessage::Hello { .. } => "Hello",
            ProtocolMessage::Register { .. } => "Register",
            ProtocolMessage::Instruction { .. } => "Instruction",
            ProtocolMessage::Outcomes { .. } => "Outcomes",
            ProtocolMessage::FinalRegister { .. } => "FinalRegister",
        }
    }
}
