//! Ordered, reliable message delivery between the two parties.
//!
//! [`InProcessTransport`] runs Bob inside the caller; [`StreamTransport`]
//! talks to a remote Bob over any byte stream using the framing in
//! [`super::wire`]. Either way every message is passed through the codec,
//! so both paths see identical values.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;

use super::bob::BobMachine;
use super::message::ProtocolMessage;
use super::wire::{decode_frame, encode_frame, read_frame, FrameReadError};
use super::ProtocolError;

/// Alice's end of the channel.
pub trait Transport {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), ProtocolError>;
    fn recv(&mut self) -> Result<ProtocolMessage, ProtocolError>;
}

fn through_codec(msg: &ProtocolMessage) -> Result<ProtocolMessage, ProtocolError> {
    Ok(decode_frame(&encode_frame(msg), 0)?.0)
}

/// Bob lives in the same thread and answers synchronously.
#[derive(Debug)]
pub struct InProcessTransport {
    bob: BobMachine,
    inbox: VecDeque<ProtocolMessage>,
}

impl InProcessTransport {
    pub fn new(bob_seed: u64) -> Self {
        InProcessTransport {
            bob: BobMachine::new(bob_seed),
            inbox: VecDeque::new(),
        }
    }

    pub fn bob(&self) -> &BobMachine {
        &self.bob
    }
}

impl Transport for InProcessTransport {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), ProtocolError> {
        if let Some(reply) = self.bob.receive(through_codec(msg)?)? {
            self.inbox.push_back(through_codec(&reply)?);
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<ProtocolMessage, ProtocolError> {
        self.inbox.pop_front().ok_or(ProtocolError::Closed)
    }
}

/// Framed messages over a byte stream (normally a `TcpStream`).
#[derive(Debug)]
pub struct StreamTransport<S> {
    stream: S,
    read_offset: u64,
}

impl<S: Read + Write> StreamTransport<S> {
    pub fn new(stream: S) -> Self {
        StreamTransport { stream, read_offset: 0 }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

impl StreamTransport<TcpStream> {
    pub fn connect(addr: impl std::net::ToSocketAddrs) -> Result<Self, ProtocolError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self::new(stream))
    }
}

fn read_message<S: Read>(stream: &mut S, offset: &mut u64) -> Result<ProtocolMessage, ProtocolError> {
    let frame = match read_frame(stream, *offset) {
        Ok(Some(frame)) => frame,
        Ok(None) => return Err(ProtocolError::Closed),
        Err(FrameReadError::Io(e)) => return Err(e.into()),
        Err(FrameReadError::Decode(e)) => return Err(e.into()),
    };
    let (msg, used) = decode_frame(&frame, *offset)?;
    *offset += used as u64;
    Ok(msg)
}

impl<S: Read + Write> Transport for StreamTransport<S> {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), ProtocolError> {
        self.stream.write_all(&encode_frame(msg))?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<ProtocolMessage, ProtocolError> {
        read_message(&mut self.stream, &mut self.read_offset)
    }
}

/// Runs one Bob session over `stream` until the protocol finishes. Returns
/// every frame Bob received or sent, in order. Any malformed or
/// out-of-grammar message aborts the session.
pub fn serve_session<S: Read + Write>(mut stream: S, bob_seed: u64) -> Result<Vec<Vec<u8>>, ProtocolError> {
    let mut bob = BobMachine::new(bob_seed);
    let mut offset = 0u64;
    let mut frames = Vec::new();
    while !bob.is_done() {
        let msg = read_message(&mut stream, &mut offset)?;
        frames.push(encode_frame(&msg));
        if let Some(reply) = bob.receive(msg)? {
            let frame = encode_frame(&reply);
            stream.write_all(&frame)?;
            stream.flush()?;
            frames.push(frame);
        }
    }
    Ok(frames)
}

/// Accept loop: one session per connection, all sessions seeded with
/// `bob_seed`. Stops after `max_sessions` connections when given. With
/// `threaded`, each connection runs on its own thread.
pub fn serve_listener(
    listener: &TcpListener,
    bob_seed: u64,
    max_sessions: Option<usize>,
    threaded: bool,
    mut on_session: impl FnMut(Result<Vec<Vec<u8>>, ProtocolError>),
) -> Result<(), ProtocolError> {
    let mut handles = Vec::new();
    for (index, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        stream.set_nodelay(true)?;
        if threaded {
            handles.push(thread::spawn(move || serve_session(stream, bob_seed)));
        } else {
            on_session(serve_session(stream, bob_seed));
        }
        if max_sessions.is_some_and(|max| index + 1 >= max) {
            break;
        }
    }
    for h in handles {
        on_session(h.join().unwrap_or(Err(ProtocolError::Closed)));
    }
    Ok(())
}

/// Wraps a transport and records every frame in channel order.
#[derive(Debug)]
pub(crate) struct Recorder<'a, T: ?Sized> {
    pub inner: &'a mut T,
    pub frames: Vec<Vec<u8>>,
}

impl<T: Transport + ?Sized> Transport for Recorder<'_, T> {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), ProtocolError> {
        self.inner.send(msg)?;
        self.frames.push(encode_frame(msg));
        Ok(())
    }

    fn recv(&mut self) -> Result<ProtocolMessage, ProtocolError> {
        let msg = self.inner.recv()?;
        self.frames.push(encode_frame(&msg));
        Ok(msg)
    }
}
