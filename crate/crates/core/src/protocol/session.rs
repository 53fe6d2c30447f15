//! Drivers for complete protocol runs.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::alice::{AliceMachine, AliceStep};
use super::bob::BobMachine;
use super::message::ProtocolMessage;
use super::transcript::{SessionResult, SessionTranscript};
use super::transport::{Recorder, Transport};
use super::{Computation, DependencyRule, ProtocolError, SecretKey};
use crate::bits::BitString;
use crate::diaggroup::SubgroupSpec;
use crate::qsim::StateVector;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Seeds {
    pub alice: u64,
    pub bob: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SessionOutput {
    Classical(BitString),
    /// Alice's register after her final correction.
    Quantum(StateVector),
}

impl SessionOutput {
    fn from_step(step: AliceStep) -> Option<Self> {
        match step {
            AliceStep::Send(_) => None,
            AliceStep::Classical(b) => Some(SessionOutput::Classical(b)),
            AliceStep::Quantum(s) => Some(SessionOutput::Quantum(s)),
        }
    }
}

/// Alice's secrets for a session, derived from her seed.
pub fn sample_key(comp: &Computation, spec: &SubgroupSpec, alice_seed: u64) -> Result<SecretKey, ProtocolError> {
    let mut rng = ChaCha20Rng::seed_from_u64(alice_seed);
    SecretKey::sample(spec, comp.n(), comp.m(), &mut rng)
}

/// Full run: draws Alice's key from `seeds.alice`, drives Alice against
/// the transport and records the channel. `seeds.bob` is recorded for
/// replay and must match the seed the transport's Bob was built with.
pub fn run_session(
    comp: &Computation,
    spec: &SubgroupSpec,
    seeds: Seeds,
    transport: &mut dyn Transport,
) -> Result<(SessionOutput, SessionTranscript), ProtocolError> {
    comp.check_against(spec)?;
    let key = sample_key(comp, spec, seeds.alice)?;
    run_session_with_key(comp, key, seeds, transport)
}

pub fn run_session_with_key(
    comp: &Computation,
    key: SecretKey,
    seeds: Seeds,
    transport: &mut dyn Transport,
) -> Result<(SessionOutput, SessionTranscript), ProtocolError> {
    let mut alice = AliceMachine::new(comp.clone(), key)?;
    let mut channel = Recorder {
        inner: transport,
        frames: Vec::new(),
    };
    for msg in alice.start()? {
        channel.send(&msg)?;
    }
    let output = loop {
        let reply = channel.recv()?;
        let step = alice.receive(reply)?;
        if let AliceStep::Send(msg) = &step {
            channel.send(msg)?;
            continue;
        }
        break SessionOutput::from_step(step).expect("terminal step");
    };
    let result = SessionResult::from_output(&output);
    let transcript = SessionTranscript {
        n: comp.n(),
        m: comp.m(),
        output_mode: comp.output_mode(),
        seeds,
        frames: channel.frames,
        result,
    };
    Ok((output, transcript))
}

/// Every measurement branch of a session with a fixed key, with its
/// probability. Bob's outcomes are enumerated rather than sampled.
pub fn enumerate_session(
    comp: &Computation,
    key: &SecretKey,
    rule: DependencyRule,
) -> Result<Vec<(f64, SessionOutput)>, ProtocolError> {
    let mut alice = AliceMachine::new(comp.clone(), key.clone())?.with_dependency_rule(rule);
    let mut bob = BobMachine::new(0);
    let mut opening = alice.start()?;
    let first = opening.pop().expect("start emits an instruction");
    for msg in opening {
        bob.receive(msg)?;
    }
    let mut out = Vec::new();
    explore(&alice, &bob, first, 1.0, &mut out)?;
    Ok(out)
}

fn explore(
    alice: &AliceMachine,
    bob: &BobMachine,
    msg: ProtocolMessage,
    weight: f64,
    out: &mut Vec<(f64, SessionOutput)>,
) -> Result<(), ProtocolError> {
    for branch in bob.receive_branches(msg)? {
        let reply = branch.reply.ok_or(ProtocolError::Closed)?;
        let mut alice = alice.clone();
        let p = weight * branch.probability;
        match alice.receive(reply)? {
            AliceStep::Send(next) => explore(&alice, &branch.machine, next, p, out)?,
            step => out.push((p, SessionOutput::from_step(step).expect("terminal step"))),
        }
    }
    Ok(())
}
