//! Software OpenFlow 1.3 switch fabric.

pub mod action;
mod bytes;
pub mod checksum;
pub mod error;
pub mod ofp;
pub mod oxm;
pub mod packet;
pub mod pipeline;
pub mod switch;
pub mod tcam;
