//! OpenFlow agent: wire codec, channel state machine and outbound arbiter.

mod channel;
mod message;
mod queue;

pub use channel::{error_reply, Channel, ChannelState, Datapath, Event, KeepaliveConfig};
pub use message::*;
pub use queue::{Class, OutboundQueue};
