//! OpenFlow error descriptors (`ofp_error_type` / code pairs).

use thiserror::Error;

pub mod err_type {
    pub const HELLO_FAILED: u16 = 0;
    pub const BAD_REQUEST: u16 = 1;
    pub const BAD_ACTION: u16 = 2;
    pub const BAD_INSTRUCTION: u16 = 3;
    pub const BAD_MATCH: u16 = 4;
    pub const FLOW_MOD_FAILED: u16 = 5;
    pub const TABLE_MOD_FAILED: u16 = 8;
    pub const QUEUE_OP_FAILED: u16 = 9;
    pub const SWITCH_CONFIG_FAILED: u16 = 10;
}

/// An error the switch reports to the controller in an `OFPT_ERROR` message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Error)]
#[error("openflow error type {err_type} code {code}")]
pub struct OfpError {
    pub err_type: u16,
    pub code: u16,
}

impl OfpError {
    pub const fn new(err_type: u16, code: u16) -> Self {
        OfpError { err_type, code }
    }

    pub const HELLO_INCOMPATIBLE: OfpError = OfpError::new(err_type::HELLO_FAILED, 0);
    pub const HELLO_EPERM: OfpError = OfpError::new(err_type::HELLO_FAILED, 1);

    pub const BAD_VERSION: OfpError = OfpError::new(err_type::BAD_REQUEST, 0);
    pub const BAD_TYPE: OfpError = OfpError::new(err_type::BAD_REQUEST, 1);
    pub const BAD_MULTIPART: OfpError = OfpError::new(err_type::BAD_REQUEST, 2);
    pub const BAD_REQUEST_LEN: OfpError = OfpError::new(err_type::BAD_REQUEST, 6);
    pub const BUFFER_EMPTY: OfpError = OfpError::new(err_type::BAD_REQUEST, 7);
    pub const BUFFER_UNKNOWN: OfpError = OfpError::new(err_type::BAD_REQUEST, 8);
    pub const BAD_REQUEST_TABLE_ID: OfpError = OfpError::new(err_type::BAD_REQUEST, 9);
    pub const BAD_PORT: OfpError = OfpError::new(err_type::BAD_REQUEST, 11);
    pub const BAD_PACKET: OfpError = OfpError::new(err_type::BAD_REQUEST, 12);

    pub const BAD_ACTION_TYPE: OfpError = OfpError::new(err_type::BAD_ACTION, 0);
    pub const BAD_ACTION_LEN: OfpError = OfpError::new(err_type::BAD_ACTION, 1);
    pub const BAD_OUT_PORT: OfpError = OfpError::new(err_type::BAD_ACTION, 4);
    pub const BAD_ACTION_ARGUMENT: OfpError = OfpError::new(err_type::BAD_ACTION, 5);
    pub const BAD_SET_TYPE: OfpError = OfpError::new(err_type::BAD_ACTION, 13);
    pub const BAD_SET_LEN: OfpError = OfpError::new(err_type::BAD_ACTION, 14);
    pub const BAD_SET_ARGUMENT: OfpError = OfpError::new(err_type::BAD_ACTION, 15);

    pub const UNKNOWN_INST: OfpError = OfpError::new(err_type::BAD_INSTRUCTION, 0);
    pub const UNSUP_INST: OfpError = OfpError::new(err_type::BAD_INSTRUCTION, 1);
    pub const BAD_INST_TABLE_ID: OfpError = OfpError::new(err_type::BAD_INSTRUCTION, 2);
    pub const BAD_INST_LEN: OfpError = OfpError::new(err_type::BAD_INSTRUCTION, 7);
    pub const INST_EPERM: OfpError = OfpError::new(err_type::BAD_INSTRUCTION, 8);

    pub const BAD_MATCH_TYPE: OfpError = OfpError::new(err_type::BAD_MATCH, 0);
    pub const BAD_MATCH_LEN: OfpError = OfpError::new(err_type::BAD_MATCH, 1);
    pub const BAD_FIELD: OfpError = OfpError::new(err_type::BAD_MATCH, 6);
    pub const BAD_VALUE: OfpError = OfpError::new(err_type::BAD_MATCH, 7);
    pub const BAD_MASK: OfpError = OfpError::new(err_type::BAD_MATCH, 8);
    pub const BAD_PREREQ: OfpError = OfpError::new(err_type::BAD_MATCH, 9);
    pub const DUP_FIELD: OfpError = OfpError::new(err_type::BAD_MATCH, 10);

    pub const FLOW_MOD_UNKNOWN: OfpError = OfpError::new(err_type::FLOW_MOD_FAILED, 0);
    pub const TABLE_FULL: OfpError = OfpError::new(err_type::FLOW_MOD_FAILED, 1);
    pub const BAD_TABLE_ID: OfpError = OfpError::new(err_type::FLOW_MOD_FAILED, 2);
    pub const OVERLAP: OfpError = OfpError::new(err_type::FLOW_MOD_FAILED, 3);
    pub const BAD_COMMAND: OfpError = OfpError::new(err_type::FLOW_MOD_FAILED, 6);

    pub const TABLE_MOD_BAD_TABLE: OfpError = OfpError::new(err_type::TABLE_MOD_FAILED, 0);
    pub const TABLE_MOD_BAD_CONFIG: OfpError = OfpError::new(err_type::TABLE_MOD_FAILED, 1);

    pub const QUEUE_BAD_PORT: OfpError = OfpError::new(err_type::QUEUE_OP_FAILED, 0);
    pub const QUEUE_BAD_QUEUE: OfpError = OfpError::new(err_type::QUEUE_OP_FAILED, 1);

    pub const SWITCH_CONFIG_BAD_FLAGS: OfpError = OfpError::new(err_type::SWITCH_CONFIG_FAILED, 0);
}
