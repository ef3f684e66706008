//! Threaded execution: dataplane workers, timers and the controller
//! connection.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::{lock, Switch};
use crate::ofp::{frame_len, Channel, ChannelState, Event, KeepaliveConfig, OfpMessage};

const POLL: Duration = Duration::from_millis(20);
const TIMER_PERIOD: Duration = Duration::from_millis(100);
const MAX_BACKOFF: Duration = Duration::from_secs(2);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerStatus {
    Disabled,
    Connecting,
    AwaitingHello,
    Negotiated,
}

/// A running switch. Dropping the handle without calling
/// [`shutdown`](Self::shutdown) leaves the threads running.
pub struct SwitchHandle {
    switch: Arc<Switch>,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
    services: Vec<JoinHandle<()>>,
    status: Arc<Mutex<ControllerStatus>>,
}

impl SwitchHandle {
    pub fn start(switch: Arc<Switch>) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let workers = (0..switch.shard_count())
            .map(|shard| {
                let (sw, stop) = (switch.clone(), stop.clone());
                thread::Builder::new()
                    .name(format!("worker-{shard}"))
                    .spawn(move || loop {
                        if !sw.step_shard(shard, POLL) && stop.load(Ordering::Acquire) {
                            break;
                        }
                    })
                    .expect("spawn worker")
            })
            .collect();

        let mut services = Vec::new();
        let (sw, st) = (switch.clone(), stop.clone());
        services.push(
            thread::Builder::new()
                .name("timers".into())
                .spawn(move || {
                    while !st.load(Ordering::Acquire) {
                        sw.expire(sw.now());
                        thread::sleep(TIMER_PERIOD);
                    }
                })
                .expect("spawn timer"),
        );

        let status = Arc::new(Mutex::new(ControllerStatus::Disabled));
        if let Some(addr) = switch.config().controller_addr() {
            *lock(&status) = ControllerStatus::Connecting;
            let (sw, st, status) = (switch.clone(), stop.clone(), status.clone());
            services.push(
                thread::Builder::new()
                    .name("controller".into())
                    .spawn(move || controller_loop(&sw, &addr, &st, &status))
                    .expect("spawn controller"),
            );
        }
        SwitchHandle {
            switch,
            stop,
            workers,
            services,
            status,
        }
    }

    pub fn switch(&self) -> &Arc<Switch> {
        &self.switch
    }

    pub fn controller_status(&self) -> ControllerStatus {
        *lock(&self.status)
    }

    /// Processes every frame already queued, then stops all threads.
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::Release);
        self.switch.wake_workers();
        for w in self.workers {
            let _ = w.join();
        }
        self.switch.outbound().close();
        for s in self.services {
            let _ = s.join();
        }
        self.switch.outbound().reopen();
    }
}

fn sleep_unless(stop: &AtomicBool, d: Duration) {
    let mut left = d;
    while !left.is_zero() && !stop.load(Ordering::Acquire) {
        let step = left.min(POLL);
        thread::sleep(step);
        left -= step;
    }
}

fn controller_loop(
    sw: &Arc<Switch>,
    addr: &str,
    stop: &AtomicBool,
    status: &Mutex<ControllerStatus>,
) {
    let mut backoff = Duration::from_millis(100);
    while !stop.load(Ordering::Acquire) {
        *lock(status) = ControllerStatus::Connecting;
        let stream = addr
            .to_socket_addrs()
            .ok()
            .and_then(|mut a| a.next())
            .and_then(|a| TcpStream::connect_timeout(&a, Duration::from_secs(1)).ok());
        match stream {
            Some(s) => {
                log::info!("connected to controller {addr}");
                backoff = Duration::from_millis(100);
                if let Err(e) = serve(sw, s, stop, status) {
                    log::warn!("controller connection lost: {e}");
                }
            }
            None => {
                log::debug!("controller {addr} unreachable, retrying in {backoff:?}");
                sleep_unless(stop, backoff);
                backoff = (backoff * 2).min(MAX_BACKOFF);
            }
        }
    }
}

fn write_msg(sock: &Mutex<TcpStream>, msg: &OfpMessage) -> std::io::Result<()> {
    let bytes = msg
        .encode()
        .map_err(|e| std::io::Error::new(ErrorKind::InvalidData, e.to_string()))?;
    lock(sock).write_all(&bytes)
}

/// Runs one controller session until it closes.
fn serve(
    sw: &Arc<Switch>,
    stream: TcpStream,
    stop: &AtomicBool,
    status: &Mutex<ControllerStatus>,
) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(POLL))?;
    let mut reader = stream.try_clone()?;
    let sock = Arc::new(Mutex::new(stream));
    let negotiated = Arc::new(AtomicBool::new(false));
    let alive = Arc::new(AtomicBool::new(true));

    let stale = sw.outbound().drain().len();
    if stale > 0 {
        log::debug!("discarding {stale} messages queued while disconnected");
    }

    let writer = {
        let (sw, sock, negotiated, alive) =
            (sw.clone(), sock.clone(), negotiated.clone(), alive.clone());
        thread::spawn(move || {
            while alive.load(Ordering::Acquire) {
                if !negotiated.load(Ordering::Acquire) {
                    thread::sleep(Duration::from_millis(2));
                    continue;
                }
                if let Some(msg) = sw.outbound().pop_wait(POLL) {
                    if let Err(e) = write_msg(&sock, &msg) {
                        log::debug!("write failed: {e}");
                        alive.store(false, Ordering::Release);
                    }
                }
            }
        })
    };

    let ka = KeepaliveConfig {
        interval_ns: sw.config().echo_interval_ms * 1_000_000,
        max_missed: sw.config().echo_max_missed,
    };
    let mut channel = Channel::new(ka);
    let xids = || sw.outbound().next_xid();
    let emit = |channel: &Channel, msgs: Vec<OfpMessage>| -> std::io::Result<()> {
        for m in msgs {
            if channel.state() == ChannelState::Negotiated {
                // Replies share the priority queue with dataplane messages.
                let _ = sw.outbound().push(m);
            } else {
                write_msg(&sock, &m)?;
            }
        }
        Ok(())
    };

    let result = (|| {
        *lock(status) = ControllerStatus::AwaitingHello;
        let hello = channel.step_with(Event::Connected, &**sw, sw.now(), Some(&xids));
        emit(&channel, hello)?;
        let mut buf = Vec::with_capacity(65536);
        let mut chunk = vec![0u8; 65536];
        while !stop.load(Ordering::Acquire) && alive.load(Ordering::Acquire) {
            match reader.read(&mut chunk) {
                Ok(0) => {
                    return Err(std::io::Error::new(
                        ErrorKind::UnexpectedEof,
                        "controller closed",
                    ))
                }
                Ok(n) => buf.extend_from_slice(&chunk[..n]),
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) => return Err(e),
            }
            loop {
                let n = match frame_len(&buf) {
                    Ok(Some(n)) if buf.len() >= n => n,
                    Ok(_) => break,
                    Err(e) => {
                        return Err(std::io::Error::new(ErrorKind::InvalidData, e.to_string()))
                    }
                };
                let out =
                    channel.step_with(Event::Received(&buf[..n]), &**sw, sw.now(), Some(&xids));
                buf.drain(..n);
                emit(&channel, out)?;
            }
            let out = channel.step_with(Event::Tick, &**sw, sw.now(), Some(&xids));
            emit(&channel, out)?;
            match channel.state() {
                ChannelState::Negotiated => {
                    negotiated.store(true, Ordering::Release);
                    *lock(status) = ControllerStatus::Negotiated;
                }
                ChannelState::Closed => {
                    return Err(std::io::Error::new(
                        ErrorKind::ConnectionAborted,
                        "channel closed",
                    ))
                }
                ChannelState::AwaitingHello => {}
            }
        }
        Ok(())
    })();

    alive.store(false, Ordering::Release);
    let _ = writer.join();
    let _ = lock(&sock).shutdown(std::net::Shutdown::Both);
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ofp::{decode, Hello, Message};
    use crate::switch::Config;
    use std::net::TcpListener;

    fn read_msg(s: &mut TcpStream) -> OfpMessage {
        let mut head = [0u8; 8];
        s.read_exact(&mut head).unwrap();
        let len = usize::from(u16::from_be_bytes([head[2], head[3]]));
        let mut rest = vec![0u8; len - 8];
        s.read_exact(&mut rest).unwrap();
        decode(&[&head[..], &rest].concat()).unwrap()
    }

    #[test]
    fn handshake_and_packet_in_over_tcp() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let sw = Arc::new(
            Switch::new(Config {
                ports: 2,
                controller: Some(addr),
                ..Config::default()
            })
            .unwrap(),
        );
        let handle = SwitchHandle::start(sw.clone());
        let (mut c, _) = listener.accept().unwrap();
        c.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        assert!(matches!(read_msg(&mut c).body, Message::Hello(_)));
        c.write_all(
            &OfpMessage::new(1, Message::Hello(Hello::v13()))
                .encode()
                .unwrap(),
        )
        .unwrap();
        c.write_all(
            &OfpMessage::new(2, Message::FeaturesRequest)
                .encode()
                .unwrap(),
        )
        .unwrap();
        let reply = read_msg(&mut c);
        assert_eq!(reply.xid, 2);
        assert!(matches!(reply.body, Message::FeaturesReply(_)));
        assert_eq!(handle.controller_status(), ControllerStatus::Negotiated);
        sw.ingress(0, vec![0xffu8; 64]).unwrap();
        assert!(matches!(read_msg(&mut c).body, Message::PacketIn(_)));
        handle.shutdown();
    }

    #[test]
    fn shutdown_drains_inputs() {
        let sw = Arc::new(
            Switch::new(Config {
                ports: 4,
                workers: 2,
                miss_policy: crate::pipeline::MissPolicy::Drop,
                ..Config::default()
            })
            .unwrap(),
        );
        let handle = SwitchHandle::start(sw.clone());
        for i in 0..400u32 {
            sw.ingress(i % 4, vec![0u8; 60]).unwrap();
        }
        handle.shutdown();
        let c = sw.conservation();
        assert_eq!(c.in_flight, 0);
        assert!(c.holds(), "{c:?}");
    }
}
