//! Random OpenFlow messages covering every type the codec supports.

use rand::seq::SliceRandom;
use rand::Rng;
use sdn_fabric::action::{port, Action};
use sdn_fabric::error::OfpError;
use sdn_fabric::ofp::{
    Desc, ErrorMsg, Features, FlowRemoved, FlowStatsRequest, Hello, HelloElement, Message,
    MultipartReply, MultipartReplyBody, MultipartRequest, MultipartRequestBody, OfpMessage,
    PacketIn, PacketInReason, PacketOut, PortDesc, PortStats, QueueStats, SwitchConfig, TableMod,
};
use sdn_fabric::oxm::{Match, Oxm, OxmField};
use sdn_fabric::pipeline::{
    FlowMod, FlowModCommand, FlowStats, Instruction, RemovalReason, TableStats,
};

/// Number of distinct message shapes [`sample`] can produce.
pub const KINDS: usize = 30;

/// Random bytes with `len % 8 == residue`, so that the enclosing message
/// needs no trailing padding and decodes back to the same value.
fn bytes(rng: &mut impl Rng, max: usize, residue: usize) -> Vec<u8> {
    let n = rng.gen_range(0..=max / 8) * 8 + residue;
    (0..n).map(|_| rng.gen()).collect()
}

fn text(rng: &mut impl Rng, max: usize) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
}

/// A match whose fields respect their prerequisites.
pub fn random_match(rng: &mut impl Rng) -> Match {
    let mut m = Match::any();
    if rng.gen() {
        m = m.with(Oxm::exact(OxmField::InPort, rng.gen_range(0..64)));
    }
    if rng.gen() {
        let mask = rng.gen::<u64>() & 0xffff_ffff_ffff;
        m = m.with(Oxm::masked(OxmField::EthDst, rng.gen::<u64>() & mask, mask));
    }
    if rng.gen_bool(0.3) {
        m = m.with(Oxm::exact(
            OxmField::EthSrc,
            rng.gen::<u64>() & 0xffff_ffff_ffff,
        ));
    }
    if rng.gen_bool(0.3) {
        m = m
            .with(Oxm::exact(
                OxmField::VlanVid,
                0x1000 | rng.gen_range(0..4096),
            ))
            .with(Oxm::exact(OxmField::VlanPcp, rng.gen_range(0..8)));
    }
    match rng.gen_range(0..3) {
        0 => {
            m = m.with(Oxm::exact(OxmField::EthType, 0x0800));
            if rng.gen() {
                m = m.with(Oxm::exact(OxmField::IpDscp, rng.gen_range(0..64)));
            }
            if rng.gen() {
                let mask = u64::from(u32::MAX << rng.gen_range(0..32));
                m = m.with(Oxm::masked(
                    OxmField::Ipv4Src,
                    rng.gen::<u64>() & mask,
                    mask,
                ));
            }
            if rng.gen() {
                m = m.with(Oxm::exact(OxmField::Ipv4Dst, u64::from(rng.gen::<u32>())));
            }
            let (proto, s, d) = if rng.gen() {
                (6, OxmField::TcpSrc, OxmField::TcpDst)
            } else {
                (17, OxmField::UdpSrc, OxmField::UdpDst)
            };
            if rng.gen() {
                m = m
                    .with(Oxm::exact(OxmField::IpProto, proto))
                    .with(Oxm::exact(s, u64::from(rng.gen::<u16>())))
                    .with(Oxm::exact(d, u64::from(rng.gen::<u16>())));
            }
        }
        1 => {
            m = m
                .with(Oxm::exact(OxmField::EthType, 0x8847))
                .with(Oxm::exact(OxmField::MplsLabel, rng.gen_range(0..1 << 20)))
                .with(Oxm::exact(OxmField::MplsTc, rng.gen_range(0..8)));
        }
        _ => {}
    }
    m
}

pub fn random_action(rng: &mut impl Rng) -> Action {
    match rng.gen_range(0..9) {
        0 => Action::output(rng.gen_range(0..64)),
        1 => Action::Output {
            port: port::CONTROLLER,
            max_len: rng.gen(),
        },
        2 => Action::PushVlan(*[0x8100, 0x88a8].choose(rng).unwrap()),
        3 => Action::PopVlan,
        4 => Action::PushMpls(*[0x8847, 0x8848].choose(rng).unwrap()),
        5 => Action::PopMpls(0x0800),
        6 => Action::SetNwTtl(rng.gen()),
        7 => Action::DecNwTtl,
        _ => {
            let f = *OxmField::ALL[1..].choose(rng).unwrap();
            Action::set_field(f, rng.gen::<u64>() & f.max_value())
        }
    }
}

fn actions(rng: &mut impl Rng) -> Vec<Action> {
    (0..rng.gen_range(0..5))
        .map(|_| random_action(rng))
        .collect()
}

pub fn random_instructions(rng: &mut impl Rng) -> Vec<Instruction> {
    (0..rng.gen_range(0..4))
        .map(|_| match rng.gen_range(0..6) {
            0 => Instruction::GotoTable(rng.gen()),
            1 => Instruction::WriteMetadata {
                metadata: rng.gen(),
                mask: rng.gen(),
            },
            2 => Instruction::WriteActions(actions(rng)),
            3 => Instruction::ApplyActions(actions(rng)),
            4 => Instruction::ClearActions,
            _ => Instruction::Meter(rng.gen()),
        })
        .collect()
}

fn flow_stats(rng: &mut impl Rng) -> FlowStats {
    FlowStats {
        table_id: rng.gen(),
        duration_sec: rng.gen(),
        duration_nsec: rng.gen_range(0..1_000_000_000),
        priority: rng.gen(),
        idle_timeout: rng.gen(),
        hard_timeout: rng.gen(),
        flags: rng.gen_range(0..8),
        cookie: rng.gen(),
        packet_count: rng.gen(),
        byte_count: rng.gen(),
        match_fields: random_match(rng),
        instructions: random_instructions(rng),
    }
}

fn port_stats(rng: &mut impl Rng) -> PortStats {
    PortStats {
        port_no: rng.gen_range(0..64),
        rx_packets: rng.gen(),
        tx_packets: rng.gen(),
        rx_bytes: rng.gen(),
        tx_bytes: rng.gen(),
        rx_dropped: rng.gen(),
        tx_dropped: rng.gen(),
        rx_errors: rng.gen(),
        tx_errors: rng.gen(),
        rx_frame_err: rng.gen(),
        rx_over_err: rng.gen(),
        rx_crc_err: rng.gen(),
        collisions: rng.gen(),
        duration_sec: rng.gen(),
        duration_nsec: rng.gen_range(0..1_000_000_000),
    }
}

fn port_desc(rng: &mut impl Rng) -> PortDesc {
    PortDesc {
        port_no: rng.gen_range(0..64),
        hw_addr: rng.gen::<u64>() & 0xffff_ffff_ffff,
        name: text(rng, 15),
        config: rng.gen(),
        state: rng.gen(),
        curr: rng.gen(),
        advertised: rng.gen(),
        supported: rng.gen(),
        peer: rng.gen(),
        curr_speed: rng.gen(),
        max_speed: rng.gen(),
    }
}

fn list<R: Rng, T>(rng: &mut R, max: usize, mut f: impl FnMut(&mut R) -> T) -> Vec<T> {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| f(rng)).collect()
}

/// Message of shape `kind` (taken modulo [`KINDS`]).
pub fn sample(rng: &mut impl Rng, kind: usize) -> Message {
    match kind % KINDS {
        0 => Message::Hello(Hello::v13()),
        1 => Message::Hello(Hello {
            elements: vec![HelloElement::VersionBitmap(vec![rng.gen::<u32>() | 0x10])],
        }),
        2 => Message::Error(ErrorMsg {
            error: OfpError::new(rng.gen_range(0..14), rng.gen_range(0..16)),
            data: bytes(rng, 64, 4),
        }),
        3 => Message::EchoRequest(bytes(rng, 40, 0)),
        4 => Message::EchoReply(bytes(rng, 40, 0)),
        5 => Message::FeaturesRequest,
        6 => Message::FeaturesReply(Features {
            datapath_id: rng.gen(),
            n_buffers: rng.gen(),
            n_tables: rng.gen(),
            auxiliary_id: rng.gen(),
            capabilities: rng.gen(),
        }),
        7 => Message::GetConfigRequest,
        8 => Message::GetConfigReply(SwitchConfig {
            flags: rng.gen_range(0..4),
            miss_send_len: rng.gen(),
        }),
        9 => Message::SetConfig(SwitchConfig {
            flags: rng.gen_range(0..4),
            miss_send_len: rng.gen(),
        }),
        10 => {
            let data = bytes(rng, 200, 6);
            Message::PacketIn(PacketIn {
                buffer_id: rng.gen(),
                total_len: rng.gen_range(data.len() as u16..=u16::MAX),
                reason: *[
                    PacketInReason::NoMatch,
                    PacketInReason::Action,
                    PacketInReason::InvalidTtl,
                ]
                .choose(rng)
                .unwrap(),
                table_id: rng.gen(),
                cookie: rng.gen(),
                match_fields: random_match(rng),
                data,
            })
        }
        11 => Message::FlowRemoved(FlowRemoved {
            cookie: rng.gen(),
            priority: rng.gen(),
            reason: *[
                RemovalReason::IdleTimeout,
                RemovalReason::HardTimeout,
                RemovalReason::Delete,
            ]
            .choose(rng)
            .unwrap(),
            table_id: rng.gen(),
            duration_sec: rng.gen(),
            duration_nsec: rng.gen_range(0..1_000_000_000),
            idle_timeout: rng.gen(),
            hard_timeout: rng.gen(),
            packet_count: rng.gen(),
            byte_count: rng.gen(),
            match_fields: random_match(rng),
        }),
        12 => Message::PacketOut(PacketOut {
            buffer_id: rng.gen(),
            in_port: rng.gen_range(0..64),
            actions: actions(rng),
            data: bytes(rng, 200, 0),
        }),
        13 => Message::FlowMod(FlowMod {
            cookie: rng.gen(),
            cookie_mask: rng.gen(),
            table_id: rng.gen(),
            command: FlowModCommand::from_code(rng.gen_range(0..5)).unwrap(),
            idle_timeout: rng.gen(),
            hard_timeout: rng.gen(),
            priority: rng.gen(),
            buffer_id: rng.gen(),
            out_port: rng.gen(),
            out_group: rng.gen(),
            flags: rng.gen_range(0..8),
            match_fields: random_match(rng),
            instructions: random_instructions(rng),
        }),
        14 => Message::TableMod(TableMod {
            table_id: rng.gen(),
            config: rng.gen_range(0..4),
        }),
        15 => request(rng, MultipartRequestBody::Desc),
        16 => {
            let body = MultipartRequestBody::Flow(FlowStatsRequest {
                table_id: rng.gen(),
                out_port: rng.gen(),
                out_group: rng.gen(),
                cookie: rng.gen(),
                cookie_mask: rng.gen(),
                match_fields: random_match(rng),
            });
            request(rng, body)
        }
        17 => request(rng, MultipartRequestBody::Table),
        18 => {
            let body = MultipartRequestBody::PortStats { port_no: rng.gen() };
            request(rng, body)
        }
        19 => {
            let body = MultipartRequestBody::Queue {
                port_no: rng.gen(),
                queue_id: rng.gen(),
            };
            request(rng, body)
        }
        20 => request(rng, MultipartRequestBody::PortDesc),
        21 => {
            let body = MultipartReplyBody::Desc(Desc {
                mfr_desc: text(rng, 255),
                hw_desc: text(rng, 255),
                sw_desc: text(rng, 255),
                serial_num: text(rng, 31),
                dp_desc: text(rng, 255),
            });
            reply(rng, body)
        }
        22 => {
            let body = MultipartReplyBody::Flow(list(rng, 4, flow_stats));
            reply(rng, body)
        }
        23 => {
            let body = MultipartReplyBody::Table(list(rng, 6, |r| TableStats {
                table_id: r.gen(),
                active_count: r.gen(),
                lookup_count: r.gen(),
                matched_count: r.gen(),
            }));
            reply(rng, body)
        }
        24 => {
            let body = MultipartReplyBody::PortStats(list(rng, 4, port_stats));
            reply(rng, body)
        }
        25 => {
            let body = MultipartReplyBody::Queue(list(rng, 4, |r| QueueStats {
                port_no: r.gen(),
                queue_id: r.gen(),
                tx_bytes: r.gen(),
                tx_packets: r.gen(),
                tx_errors: r.gen(),
                duration_sec: r.gen(),
                duration_nsec: r.gen_range(0..1_000_000_000),
            }));
            reply(rng, body)
        }
        26 => {
            let body = MultipartReplyBody::PortDesc(list(rng, 4, port_desc));
            reply(rng, body)
        }
        27 => Message::BarrierRequest,
        28 => Message::BarrierReply,
        _ => Message::Hello(Hello {
            elements: Vec::new(),
        }),
    }
}

fn request(rng: &mut impl Rng, body: MultipartRequestBody) -> Message {
    Message::MultipartRequest(MultipartRequest {
        flags: rng.gen_range(0..2),
        body,
    })
}

fn reply(rng: &mut impl Rng, body: MultipartReplyBody) -> Message {
    Message::MultipartReply(MultipartReply {
        flags: rng.gen_range(0..2),
        body,
    })
}

/// `n` messages cycling through every shape, with random xids.
pub fn corpus(rng: &mut impl Rng, n: usize) -> Vec<OfpMessage> {
    (0..n)
        .map(|i| OfpMessage::new(rng.gen(), sample(rng, i)))
        .collect()
}
