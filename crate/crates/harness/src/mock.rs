//! Scripted controller peer for end-to-end tests.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use sdn_fabric::ofp::{decode, frame_len, Hello, Message, OfpMessage};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub direction: Direction,
    pub message: OfpMessage,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript(pub Vec<Entry>);

impl Transcript {
    pub fn received(&self) -> impl Iterator<Item = &OfpMessage> {
        self.0
            .iter()
            .filter(|e| e.direction == Direction::Received)
            .map(|e| &e.message)
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        for e in &self.0 {
            let arrow = match e.direction {
                Direction::Sent => "->",
                Direction::Received => "<-",
            };
            let _ = writeln!(s, "{arrow} xid={} {:?}", e.message.xid, e.message.body);
        }
        s
    }
}

#[derive(Debug, Error)]
pub enum MockError {
    #[error("step {step}: timed out after {timeout:?}\n{transcript}")]
    Timeout {
        step: usize,
        timeout: Duration,
        transcript: String,
    },
    #[error("switch closed the connection\n{0}")]
    Closed(String),
    #[error("undecodable message from switch: {0}")]
    Decode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Predicate = Box<dyn Fn(&OfpMessage) -> bool + Send>;
type Responder = Box<dyn Fn(&OfpMessage) -> Vec<Message> + Send>;

/// One script step: wait for a matching message (if any), then send the
/// responder's messages.
pub struct Step {
    expect: Option<Predicate>,
    respond: Responder,
}

impl Step {
    pub fn send(msgs: Vec<Message>) -> Self {
        Step {
            expect: None,
            respond: Box::new(move |_| msgs.clone()),
        }
    }

    pub fn expect(pred: impl Fn(&OfpMessage) -> bool + Send + 'static) -> Self {
        Step {
            expect: Some(Box::new(pred)),
            respond: Box::new(|_| Vec::new()),
        }
    }

    pub fn on(
        pred: impl Fn(&OfpMessage) -> bool + Send + 'static,
        respond: impl Fn(&OfpMessage) -> Vec<Message> + Send + 'static,
    ) -> Self {
        Step {
            expect: Some(Box::new(pred)),
            respond: Box::new(respond),
        }
    }
}

pub struct MockController {
    listener: TcpListener,
}

impl MockController {
    pub fn bind() -> std::io::Result<Self> {
        Ok(MockController {
            listener: TcpListener::bind("127.0.0.1:0")?,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener")
    }

    pub fn accept(&self, timeout: Duration) -> Result<Session, MockError> {
        self.listener.set_nonblocking(true)?;
        let deadline = Instant::now() + timeout;
        loop {
            match self.listener.accept() {
                Ok((s, _)) => {
                    s.set_nonblocking(false)?;
                    return Session::new(s);
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() > deadline {
                        return Err(MockError::Timeout {
                            step: 0,
                            timeout,
                            transcript: "no connection".into(),
                        });
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Accepts one switch, performs the handshake and runs `script` on its
    /// own thread.
    pub fn spawn(
        self,
        script: Vec<Step>,
        timeout: Duration,
    ) -> JoinHandle<Result<Transcript, MockError>> {
        thread::spawn(move || {
            let mut s = self.accept(timeout)?;
            s.handshake(timeout)?;
            s.run(script, timeout)?;
            Ok(s.transcript)
        })
    }
}

/// An accepted switch connection. Echo requests are answered automatically.
/// Messages that arrive while waiting for something else are kept for later
/// waits.
pub struct Session {
    stream: TcpStream,
    buf: Vec<u8>,
    backlog: VecDeque<OfpMessage>,
    next_xid: u32,
    pub transcript: Transcript,
}

impl Session {
    fn new(stream: TcpStream) -> Result<Self, MockError> {
        stream.set_nodelay(true)?;
        Ok(Session {
            stream,
            buf: Vec::new(),
            backlog: VecDeque::new(),
            next_xid: 0x1000,
            transcript: Transcript::default(),
        })
    }

    /// Sends `body` with a fresh xid and returns that xid.
    pub fn send(&mut self, body: Message) -> Result<u32, MockError> {
        let xid = self.next_xid;
        self.next_xid += 1;
        self.send_msg(OfpMessage::new(xid, body))?;
        Ok(xid)
    }

    pub fn send_msg(&mut self, msg: OfpMessage) -> Result<(), MockError> {
        let bytes = msg.encode().map_err(|e| MockError::Decode(e.to_string()))?;
        self.stream.write_all(&bytes)?;
        self.transcript.0.push(Entry {
            direction: Direction::Sent,
            message: msg,
        });
        Ok(())
    }

    /// Next message from the switch, or `None` at the deadline.
    fn next_message(&mut self, deadline: Instant) -> Result<Option<OfpMessage>, MockError> {
        loop {
            if let Ok(Some(n)) = frame_len(&self.buf) {
                if self.buf.len() >= n {
                    let msg =
                        decode(&self.buf[..n]).map_err(|e| MockError::Decode(e.to_string()))?;
                    self.buf.drain(..n);
                    self.transcript.0.push(Entry {
                        direction: Direction::Received,
                        message: msg.clone(),
                    });
                    if let Message::EchoRequest(data) = &msg.body {
                        self.send_msg(OfpMessage::new(msg.xid, Message::EchoReply(data.clone())))?;
                    }
                    return Ok(Some(msg));
                }
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            self.stream
                .set_read_timeout(Some((deadline - now).max(Duration::from_millis(1))))?;
            let mut chunk = [0u8; 16384];
            match self.stream.read(&mut chunk) {
                Ok(0) => return Err(MockError::Closed(self.transcript.dump())),
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Waits for a message satisfying `pred`, oldest first.
    pub fn await_msg(
        &mut self,
        pred: impl Fn(&OfpMessage) -> bool,
        timeout: Duration,
    ) -> Result<OfpMessage, MockError> {
        self.await_step(0, &pred, timeout)
    }

    fn await_step(
        &mut self,
        step: usize,
        pred: &dyn Fn(&OfpMessage) -> bool,
        timeout: Duration,
    ) -> Result<OfpMessage, MockError> {
        if let Some(i) = self.backlog.iter().position(pred) {
            return Ok(self.backlog.remove(i).expect("index in range"));
        }
        let deadline = Instant::now() + timeout;
        while let Some(m) = self.next_message(deadline)? {
            if pred(&m) {
                return Ok(m);
            }
            if !matches!(m.body, Message::EchoRequest(_)) {
                self.backlog.push_back(m);
            }
        }
        Err(MockError::Timeout {
            step,
            timeout,
            transcript: self.transcript.dump(),
        })
    }

    /// Exchanges Hello messages, then features request and reply.
    pub fn handshake(&mut self, timeout: Duration) -> Result<OfpMessage, MockError> {
        self.await_msg(|m| matches!(m.body, Message::Hello(_)), timeout)?;
        self.send(Message::Hello(Hello::v13()))?;
        let xid = self.send(Message::FeaturesRequest)?;
        self.await_msg(
            move |m| m.xid == xid && matches!(m.body, Message::FeaturesReply(_)),
            timeout,
        )
    }

    /// Sends `body` and waits for the reply carrying the same xid.
    pub fn request(&mut self, body: Message, timeout: Duration) -> Result<OfpMessage, MockError> {
        let xid = self.send(body)?;
        self.await_msg(move |m| m.xid == xid, timeout)
    }

    /// Sends a barrier and waits for its reply, so that earlier requests
    /// have been handled.
    pub fn barrier(&mut self, timeout: Duration) -> Result<(), MockError> {
        let xid = self.send(Message::BarrierRequest)?;
        self.await_msg(
            move |m| m.xid == xid && m.body == Message::BarrierReply,
            timeout,
        )
        .map(|_| ())
    }

    pub fn run(&mut self, script: Vec<Step>, timeout: Duration) -> Result<(), MockError> {
        for (i, step) in script.into_iter().enumerate() {
            let trigger = match &step.expect {
                Some(pred) => Some(self.await_step(i + 1, pred.as_ref(), timeout)?),
                None => None,
            };
            let out = match &trigger {
                Some(m) => (step.respond)(m),
                None => (step.respond)(&OfpMessage::new(0, Message::BarrierReply)),
            };
            for body in out {
                self.send(body)?;
            }
        }
        Ok(())
    }
}
