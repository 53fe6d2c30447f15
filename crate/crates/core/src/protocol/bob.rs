use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::message::{OutputMode, ProtocolMessage};
use super::{entangle_registers, ProtocolError};
use crate::bits::BitString;
use crate::diaggroup::DiagonalUnitary;
use crate::qsim::{Basis, StateVector, DEFAULT_BRANCH_CAP, DEFAULT_MAX_QUBITS};

#[derive(Clone, Debug)]
enum Phase {
    Hello,
    Registers {
        n: usize,
        m: usize,
        mode: OutputMode,
        received: Vec<StateVector>,
    },
    Layers {
        n: usize,
        m: usize,
        mode: OutputMode,
        /// Next layer to process; registers before it are measured and
        /// already removed, so this register sits on qubits `0..n`.
        next: usize,
        state: StateVector,
    },
    Done,
}

/// Server side: stores registers, entangles them and executes the
/// instructions it is sent, measuring with its own seeded randomness.
#[derive(Clone, Debug)]
pub struct BobMachine {
    phase: Phase,
    rng: ChaCha8Rng,
}

/// One measurement branch of Bob's next step.
#[derive(Clone, Debug)]
pub struct BobBranch {
    pub probability: f64,
    pub machine: BobMachine,
    pub reply: Option<ProtocolMessage>,
}

/// Result of applying an instruction, before measurement.
enum Prepared {
    Measure { n: usize, layer: usize, state: StateVector },
    Final(StateVector),
}

impl BobMachine {
    pub fn new(seed: u64) -> Self {
        BobMachine {
            phase: Phase::Hello,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, Phase::Done)
    }

    fn unexpected(&self, msg: &ProtocolMessage) -> ProtocolError {
        let expected = match &self.phase {
            Phase::Hello => "Hello".to_string(),
            Phase::Registers { received, .. } => format!("Register for layer {}", received.len() + 1),
            Phase::Layers { next, .. } => format!("Instruction for layer {next}"),
            Phase::Done => return ProtocolError::Finished,
        };
        ProtocolError::UnexpectedMessage {
            expected,
            found: msg.kind(),
        }
    }

    /// Handles every message that does not involve measuring.
    fn receive_setup(&mut self, msg: ProtocolMessage) -> Result<Option<ProtocolMessage>, ProtocolError> {
        let phase = std::mem::replace(&mut self.phase, Phase::Done);
        match (phase, msg) {
            (Phase::Hello, ProtocolMessage::Hello { n, m, mode }) => {
                if n == 0 || m == 0 || n * m > DEFAULT_MAX_QUBITS {
                    return Err(ProtocolError::SessionSize {
                        n,
                        m,
                        cap: DEFAULT_MAX_QUBITS,
                    });
                }
                self.phase = Phase::Registers {
                    n,
                    m,
                    mode,
                    received: Vec::with_capacity(m),
                };
                Ok(None)
            }
            (
                Phase::Registers {
                    n,
                    m,
                    mode,
                    mut received,
                },
                ProtocolMessage::Register { layer, state },
            ) => {
                if layer != received.len() + 1 {
                    return Err(ProtocolError::LayerOrder {
                        expected: received.len() + 1,
                        found: layer,
                    });
                }
                if state.num_qubits() != n {
                    return Err(ProtocolError::Width {
                        expected: n,
                        found: state.num_qubits(),
                    });
                }
                received.push(state);
                self.phase = if received.len() == m {
                    Phase::Layers {
                        n,
                        m,
                        mode,
                        next: 1,
                        state: entangle_registers(&received)?,
                    }
                } else {
                    Phase::Registers { n, m, mode, received }
                };
                Ok(None)
            }
            (phase, msg) => {
                self.phase = phase;
                Err(self.unexpected(&msg))
            }
        }
    }

    fn apply_instruction(&self, layer: usize, op: &DiagonalUnitary) -> Result<Prepared, ProtocolError> {
        let Phase::Layers {
            n,
            m,
            mode,
            next,
            state,
        } = &self.phase
        else {
            unreachable!("caller checked phase");
        };
        if layer < *next {
            return Err(ProtocolError::DoubleMeasurement(layer));
        }
        if layer != *next {
            return Err(ProtocolError::LayerOrder {
                expected: *next,
                found: layer,
            });
        }
        if op.num_qubits() != *n {
            return Err(ProtocolError::Width {
                expected: *n,
                found: op.num_qubits(),
            });
        }
        let mut state = state.clone();
        state.apply_diagonal_at(op, 0)?;
        if *mode == OutputMode::Quantum && layer == *m {
            state.apply_hadamard_all();
            Ok(Prepared::Final(state))
        } else {
            Ok(Prepared::Measure { n: *n, layer, state })
        }
    }

    /// Moves to the next layer after register `layer` produced `bits`.
    fn after_measurement(&mut self, layer: usize, bits: &BitString, post: &StateVector) -> Result<(), ProtocolError> {
        let Phase::Layers { n, m, mode, .. } = self.phase else {
            unreachable!("caller checked phase");
        };
        self.phase = if layer == m {
            Phase::Done
        } else {
            let qubits: Vec<usize> = (0..n).collect();
            Phase::Layers {
                n,
                m,
                mode,
                next: layer + 1,
                state: post.discard_qubits(&qubits, bits, Basis::Hadamard)?,
            }
        };
        Ok(())
    }

    /// Handles one message, sampling any measurement from Bob's own RNG.
    pub fn receive(&mut self, msg: ProtocolMessage) -> Result<Option<ProtocolMessage>, ProtocolError> {
        let ProtocolMessage::Instruction { layer, op } = &msg else {
            return self.receive_setup(msg);
        };
        if !matches!(self.phase, Phase::Layers { .. }) {
            return Err(self.unexpected(&msg));
        }
        match self.apply_instruction(*layer, op)? {
            Prepared::Final(state) => {
                self.phase = Phase::Done;
                Ok(Some(ProtocolMessage::FinalRegister { state }))
            }
            Prepared::Measure { n, layer, state } => {
                let qubits: Vec<usize> = (0..n).collect();
                let branch = state.sample_measurement(&qubits, Basis::Hadamard, &mut self.rng)?;
                let post = branch.post_state.expect("sampled branch has a state");
                self.after_measurement(layer, &branch.outcome, &post)?;
                Ok(Some(ProtocolMessage::Outcomes {
                    layer,
                    bits: branch.outcome,
                }))
            }
        }
    }

    /// Every possible continuation of `receive(msg)`, with probabilities.
    /// Zero-probability outcomes are omitted.
    pub fn receive_branches(&self, msg: ProtocolMessage) -> Result<Vec<BobBranch>, ProtocolError> {
        let ProtocolMessage::Instruction { layer, op } = &msg else {
            let mut machine = self.clone();
            let reply = machine.receive_setup(msg)?;
            return Ok(vec![BobBranch {
                probability: 1.0,
                machine,
                reply,
            }]);
        };
        if !matches!(self.phase, Phase::Layers { .. }) {
            return Err(self.unexpected(&msg));
        }
        match self.apply_instruction(*layer, op)? {
            Prepared::Final(state) => {
                let mut machine = self.clone();
                machine.phase = Phase::Done;
                Ok(vec![BobBranch {
                    probability: 1.0,
                    machine,
                    reply: Some(ProtocolMessage::FinalRegister { state }),
                }])
            }
            Prepared::Measure { n, layer, state } => {
                let qubits: Vec<usize> = (0..n).collect();
                let mut out = Vec::new();
                for branch in state.enumerate_measurement(&qubits, Basis::Hadamard, DEFAULT_BRANCH_CAP)? {
                    let Some(post) = branch.post_state.filter(|_| branch.probability > 1e-14) else {
                        continue;
                    };
                    let mut machine = self.clone();
                    machine.after_measurement(layer, &branch.outcome, &post)?;
                    out.push(BobBranch {
                        probability: branch.probability,
                        machine,
                        reply: Some(ProtocolMessage::Outcomes {
                            layer,
                            bits: branch.outcome,
                        }),
                    });
                }
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn d1(theta: f64) -> DiagonalUnitary {
        DiagonalUnitary::single_block(vec![0.0, theta]).unwrap()
    }

    fn single_layer_bob(register: StateVector) -> BobMachine {
        let mut bob = BobMachine::new(0);
        bob.receive(ProtocolMessage::Hello {
            n: 1,
            m: 1,
            mode: OutputMode::Classical,
        })
        .unwrap();
        bob.receive(ProtocolMessage::Register {
            layer: 1,
            state: register,
        })
        .unwrap();
        bob
    }

    fn minus() -> StateVector {
        let mut s = StateVector::plus(1).unwrap();
        s.apply_diagonal(&d1(PI)).unwrap();
        s
    }

    fn outcome(reply: Option<ProtocolMessage>) -> String {
        match reply {
            Some(ProtocolMessage::Outcomes { bits, .. }) => bits.to_string(),
            other => panic!("unexpected reply {other:?}"),
        }
    }

    #[test]
    fn layer_examples() {
        for seed in 0..10 {
            let mut bob = single_layer_bob(StateVector::plus(1).unwrap());
            bob.rng = ChaCha8Rng::seed_from_u64(seed);
            let reply = bob
                .receive(ProtocolMessage::Instruction { layer: 1, op: d1(0.0) })
                .unwrap();
            assert_eq!(outcome(reply), "0");
            assert!(bob.is_done());

            let mut bob = single_layer_bob(minus());
            let reply = bob
                .receive(ProtocolMessage::Instruction { layer: 1, op: d1(0.0) })
                .unwrap();
            assert_eq!(outcome(reply), "1");

            let mut bob = single_layer_bob(StateVector::plus(1).unwrap());
            let reply = bob
                .receive(ProtocolMessage::Instruction { layer: 1, op: d1(PI) })
                .unwrap();
            assert_eq!(outcome(reply), "1");
        }
    }

    #[test]
    fn rejects_out_of_grammar_messages() {
        let mut bob = BobMachine::new(0);
        let err = bob
            .receive(ProtocolMessage::Instruction { layer: 1, op: d1(0.0) })
            .unwrap_err();
        assert!(matches!(err, ProtocolError::UnexpectedMessage { .. }), "{err}");

        let mut bob = single_layer_bob(StateVector::plus(1).unwrap());
        let err = bob
            .receive(ProtocolMessage::Instruction { layer: 2, op: d1(0.0) })
            .unwrap_err();
        assert!(matches!(err, ProtocolError::LayerOrder { expected: 1, found: 2 }));
        bob.receive(ProtocolMessage::Instruction { layer: 1, op: d1(0.0) })
            .unwrap();
        assert!(matches!(
            bob.receive(ProtocolMessage::Instruction { layer: 1, op: d1(0.0) }),
            Err(ProtocolError::Finished)
        ));
    }

    #[test]
    fn rejects_remeasuring_a_register() {
        let mut bob = BobMachine::new(3);
        bob.receive(ProtocolMessage::Hello {
            n: 1,
            m: 2,
            mode: OutputMode::Classical,
        })
        .unwrap();
        for layer in 1..=2 {
            bob.receive(ProtocolMessage::Register {
                layer,
                state: StateVector::plus(1).unwrap(),
            })
            .unwrap();
        }
        bob.receive(ProtocolMessage::Instruction { layer: 1, op: d1(0.0) })
            .unwrap();
        assert!(matches!(
            bob.receive(ProtocolMessage::Instruction { layer: 1, op: d1(0.0) }),
            Err(ProtocolError::DoubleMeasurement(1))
        ));
    }

    #[test]
    fn rejects_oversized_sessions() {
        let mut bob = BobMachine::new(0);
        assert!(matches!(
            bob.receive(ProtocolMessage::Hello {
                n: 4,
                m: 4,
                mode: OutputMode::Quantum
            }),
            Err(ProtocolError::SessionSize { .. })
        ));
    }

    #[test]
    fn branches_cover_sampling() {
        let mut bob = BobMachine::new(9);
        bob.receive(ProtocolMessage::Hello {
            n: 1,
            m: 2,
            mode: OutputMode::Classical,
        })
        .unwrap();
        for layer in 1..=2 {
            bob.receive(ProtocolMessage::Register {
                layer,
                state: StateVector::plus(1).unwrap(),
            })
            .unwrap();
        }
        let msg = ProtocolMessage::Instruction { layer: 1, op: d1(0.4) };
        let branches = bob.receive_branches(msg.clone()).unwrap();
        let total: f64 = branches.iter().map(|b| b.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let sampled = bob.clone().receive(msg).unwrap();
        assert!(branches.iter().any(|b| b.reply == sampled));
    }
}
