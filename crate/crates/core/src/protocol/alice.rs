use super::message::{OutputMode, ProtocolMessage};
use super::{
    correction_bits_with, final_correction, instruction, prepare_layer, record_outcome, Computation, DependencyRule,
    ProtocolError, SecretKey,
};
use crate::bits::BitString;
use crate::qsim::StateVector;

#[derive(Clone, Debug, PartialEq)]
enum Phase {
    Start,
    /// Waiting for the outcomes of this layer.
    Outcomes(usize),
    /// Waiting for the returned final register.
    FinalRegister,
    Done,
}

/// What Alice does after handling a message.
#[derive(Clone, Debug, PartialEq)]
pub enum AliceStep {
    Send(ProtocolMessage),
    Classical(BitString),
    Quantum(StateVector),
}

/// Client side of the protocol. Holds every secret; nothing here is ever
/// serialised onto the channel except through [`ProtocolMessage`].
#[derive(Clone, Debug)]
pub struct AliceMachine {
    comp: Computation,
    key: SecretKey,
    rule: DependencyRule,
    /// `s_history[k-1] = s_k`.
    s_history: Vec<BitString>,
    phase: Phase,
}

impl AliceMachine {
    pub fn new(comp: Computation, key: SecretKey) -> Result<Self, ProtocolError> {
        if key.m() != comp.m() {
            return Err(ProtocolError::Computation(format!(
                "secret key covers {} layers, computation has {}",
                key.m(),
                comp.m()
            )));
        }
        for (i, s) in key.layers().iter().enumerate() {
            let u = comp.layer(i + 1);
            if s.pad.num_qubits() != comp.n() || s.pad.block_size() != u.block_size() || s.z_mask.len() != comp.n() {
                return Err(ProtocolError::Computation(format!(
                    "secret for layer {} does not match the layer shape",
                    i + 1
                )));
            }
        }
        Ok(AliceMachine {
            comp,
            key,
            rule: DependencyRule::Alternating,
            s_history: Vec::new(),
            phase: Phase::Start,
        })
    }

    /// Replaces the measurement dependency rule (negative controls only).
    pub fn with_dependency_rule(mut self, rule: DependencyRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn computation(&self) -> &Computation {
        &self.comp
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    fn c(&self, i: usize) -> Result<BitString, ProtocolError> {
        correction_bits_with(self.rule, i, &self.s_history, self.comp.n())
    }

    fn instruction_message(&self, i: usize) -> Result<ProtocolMessage, ProtocolError> {
        let op = instruction(self.comp.layer(i), self.key.layer(i), &self.c(i)?)?;
        Ok(ProtocolMessage::Instruction { layer: i, op })
    }

    fn awaiting_after_instruction(&self, i: usize) -> Phase {
        if self.comp.output_mode() == OutputMode::Quantum && i == self.comp.m() {
            Phase::FinalRegister
        } else {
            Phase::Outcomes(i)
        }
    }

    /// Hello, all `m` prepared registers, then the first instruction.
    pub fn start(&mut self) -> Result<Vec<ProtocolMessage>, ProtocolError> {
        if self.phase != Phase::Start {
            return Err(ProtocolError::Finished);
        }
        let mut out = vec![ProtocolMessage::Hello {
            n: self.comp.n(),
            m: self.comp.m(),
            mode: self.comp.output_mode(),
        }];
        for (i, secret) in self.key.layers().iter().enumerate() {
            out.push(ProtocolMessage::Register {
                layer: i + 1,
                state: prepare_layer(secret)?,
            });
        }
        out.push(self.instruction_message(1)?);
        self.phase = self.awaiting_after_instruction(1);
        Ok(out)
    }

    pub fn receive(&mut self, msg: ProtocolMessage) -> Result<AliceStep, ProtocolError> {
        let n = self.comp.n();
        let m = self.comp.m();
        match (&self.phase, msg) {
            (Phase::Outcomes(expected), ProtocolMessage::Outcomes { layer, bits }) => {
                let i = *expected;
                if layer != i {
                    return Err(ProtocolError::LayerOrder {
                        expected: i,
                        found: layer,
                    });
                }
                if bits.len() != n {
                    return Err(ProtocolError::Width {
                        expected: n,
                        found: bits.len(),
                    });
                }
                let s = record_outcome(&bits, &self.key.layer(i).z_mask)?;
                self.s_history.push(s);
                if i == m {
                    self.phase = Phase::Done;
                    let set = self.rule.set(m);
                    let out = super::xor_over(&set, &self.s_history, n)?;
                    Ok(AliceStep::Classical(out))
                } else {
                    let next = self.instruction_message(i + 1)?;
                    self.phase = self.awaiting_after_instruction(i + 1);
                    Ok(AliceStep::Send(next))
                }
            }
            (Phase::FinalRegister, ProtocolMessage::FinalRegister { mut state }) => {
                if state.num_qubits() != n {
                    return Err(ProtocolError::Width {
                        expected: n,
                        found: state.num_qubits(),
                    });
                }
                let c_m = self.c(m)?;
                let c_prev = self.c(m - 1)?;
                final_correction(&mut state, &c_m, &c_prev, &self.key.layer(m).z_mask)?;
                self.phase = Phase::Done;
                Ok(AliceStep::Quantum(state))
            }
            (Phase::Done, _) => Err(ProtocolError::Finished),
            (phase, other) => Err(ProtocolError::UnexpectedMessage {
                expected: match phase {
                    Phase::Start => "start() before any message".into(),
                    Phase::Outcomes(i) => format!("Outcomes for layer {i}"),
                    Phase::FinalRegister => "FinalRegister".into(),
                    Phase::Done => unreachable!(),
                },
                found: other.kind(),
            }),
        }
    }
}
