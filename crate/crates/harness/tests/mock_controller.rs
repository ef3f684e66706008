//! Scripted controller sessions against a running switch.

use std::sync::Arc;
use std::time::{Duration, Instant};

use fabric_harness::mock::{MockController, MockError, Step};
use sdn_fabric::action::{Action, NO_BUFFER};
use sdn_fabric::ofp::{
    FlowStatsRequest, Message, MultipartReplyBody, MultipartRequest, MultipartRequestBody,
    OfpMessage, PacketOut,
};
use sdn_fabric::oxm::{Match, Oxm, OxmField};
use sdn_fabric::packet::{FrameBuilder, L4Header};
use sdn_fabric::pipeline::{FlowMod, Instruction};
use sdn_fabric::switch::{Config, ControllerStatus, EgressFrame, Switch, SwitchHandle};

const T: Duration = Duration::from_secs(5);

fn start(mock: &MockController) -> (Arc<Switch>, SwitchHandle) {
    let sw = Arc::new(
        Switch::new(Config {
            controller: Some(mock.addr().to_string()),
            ..Config::default()
        })
        .unwrap(),
    );
    let h = SwitchHandle::start(sw.clone());
    (sw, h)
}

fn frame(src: u16, len: usize) -> Vec<u8> {
    FrameBuilder::default()
        .ipv4(0x0a00_0001, 0x0a00_0002, L4Header::Tcp { src, dst: 80 })
        .frame_len(len)
        .build()
}

fn egress(sw: &Switch, port: u32, n: usize) -> Vec<EgressFrame> {
    let start = Instant::now();
    let mut got = Vec::new();
    while got.len() < n && start.elapsed() < T {
        got.extend(sw.drain_output(port));
        std::thread::sleep(Duration::from_millis(1));
    }
    got
}

fn tcp_to_port_80() -> Match {
    Match::any()
        .with(Oxm::exact(OxmField::EthType, 0x0800))
        .with(Oxm::exact(OxmField::IpProto, 6))
        .with(Oxm::exact(OxmField::TcpDst, 80))
}

#[test]
fn installed_flow_forwards_traffic() {
    let mock = MockController::bind().unwrap();
    let (sw, h) = start(&mock);
    let script = vec![
        Step::send(vec![Message::FlowMod(FlowMod::add(
            0,
            5,
            tcp_to_port_80(),
            vec![Instruction::WriteActions(vec![Action::output(4)])],
        ))]),
        Step::send(vec![Message::BarrierRequest]),
        Step::expect(|m| m.body == Message::BarrierReply),
    ];
    let t = mock.spawn(script, T).join().unwrap().unwrap();
    assert!(t
        .received()
        .any(|m| matches!(m.body, Message::FeaturesReply(_))));
    assert_eq!(h.controller_status(), ControllerStatus::Negotiated);

    let sent: Vec<_> = (0..20).map(|i| frame(i, 100)).collect();
    for f in &sent {
        sw.ingress(1, f.clone()).unwrap();
    }
    let out = egress(&sw, 4, sent.len());
    h.shutdown();
    assert_eq!(out.iter().map(|e| e.data.clone()).collect::<Vec<_>>(), sent);
    assert!(sw.conservation().holds());
}

#[test]
fn packet_in_answered_with_packet_out() {
    let mock = MockController::bind().unwrap();
    let (sw, h) = start(&mock);
    let script = vec![Step::on(
        |m| matches!(m.body, Message::PacketIn(_)),
        |m| {
            let Message::PacketIn(p) = &m.body else {
                unreachable!()
            };
            vec![Message::PacketOut(PacketOut {
                buffer_id: p.buffer_id,
                in_port: 0,
                actions: vec![Action::output(2)],
                data: Vec::new(),
            })]
        },
    )];
    let session = mock.spawn(script, T);
    let start = Instant::now();
    while h.controller_status() != ControllerStatus::Negotiated {
        assert!(start.elapsed() < T, "no negotiation");
        std::thread::sleep(Duration::from_millis(1));
    }
    let f = frame(9, 300);
    sw.ingress(0, f.clone()).unwrap();
    let t = session.join().unwrap().unwrap();
    let pin = t
        .received()
        .find_map(|m| match &m.body {
            Message::PacketIn(p) => Some(p.clone()),
            _ => None,
        })
        .unwrap();
    assert_ne!(pin.buffer_id, NO_BUFFER);
    assert!(f.starts_with(&pin.data));
    let out = egress(&sw, 2, 1);
    h.shutdown();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].data, f);
    let c = sw.conservation();
    assert_eq!((c.buffered_live, c.tx_packets), (0, 1));
    assert!(c.holds(), "{c:?}");
}

#[test]
fn flow_stats_count_matched_packets() {
    let mock = MockController::bind().unwrap();
    let (sw, h) = start(&mock);
    let mut s = mock.accept(T).unwrap();
    s.handshake(T).unwrap();
    s.send(Message::FlowMod(FlowMod::add(
        1,
        7,
        tcp_to_port_80(),
        vec![Instruction::WriteActions(vec![Action::output(3)])],
    )))
    .unwrap();
    s.send(Message::FlowMod(FlowMod::add(
        0,
        1,
        Match::any().with(Oxm::exact(OxmField::InPort, 5)),
        vec![Instruction::GotoTable(1)],
    )))
    .unwrap();
    s.barrier(T).unwrap();
    let k = 25u64;
    let mut bytes = 0;
    for i in 0..k {
        let f = frame(i as u16, 64 + i as usize * 10);
        bytes += f.len() as u64;
        sw.ingress(5, f).unwrap();
    }
    assert_eq!(egress(&sw, 3, k as usize).len() as u64, k);
    let reply = s
        .request(
            Message::MultipartRequest(MultipartRequest {
                flags: 0,
                body: MultipartRequestBody::Flow(FlowStatsRequest {
                    table_id: 1,
                    ..FlowStatsRequest::default()
                }),
            }),
            T,
        )
        .unwrap();
    h.shutdown();
    let Message::MultipartReply(r) = reply.body else {
        panic!("{reply:?}")
    };
    let MultipartReplyBody::Flow(stats) = r.body else {
        panic!()
    };
    assert_eq!(stats.len(), 1);
    assert_eq!((stats[0].packet_count, stats[0].byte_count), (k, bytes));
    assert_eq!(stats[0].priority, 7);
}

#[test]
fn bad_request_gets_error_reply() {
    let mock = MockController::bind().unwrap();
    let (_sw, h) = start(&mock);
    let mut s = mock.accept(T).unwrap();
    s.handshake(T).unwrap();
    let reply = s
        .request(
            Message::FlowMod(FlowMod::add(
                2,
                1,
                Match::any(),
                vec![Instruction::GotoTable(1)],
            )),
            T,
        )
        .unwrap();
    h.shutdown();
    assert!(matches!(reply.body, Message::Error(_)), "{reply:?}");
}

#[test]
fn step_timeout_reports_transcript() {
    let mock = MockController::bind().unwrap();
    let (_sw, h) = start(&mock);
    let script = vec![Step::expect(|m: &OfpMessage| {
        matches!(m.body, Message::FlowRemoved(_))
    })];
    let err = mock
        .spawn(script, Duration::from_millis(300))
        .join()
        .unwrap()
        .unwrap_err();
    h.shutdown();
    let MockError::Timeout {
        step, transcript, ..
    } = err
    else {
        panic!("{err}")
    };
    assert_eq!(step, 1);
    assert!(transcript.contains("FeaturesReply"), "{transcript}");
}
