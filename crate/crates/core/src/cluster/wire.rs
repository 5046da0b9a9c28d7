//! Datagram format: `SHEN/1 PING <address> <epoch> <now>\n` in ASCII.

use std::net::Ipv4Addr;

use thiserror::Error;

use crate::payload::Millis;

pub const MAGIC: &str = "SHEN/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ping {
    pub address: Ipv4Addr,
    pub epoch: u64,
    pub now: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("unknown verb `{0}`")]
    UnknownVerb(String),
    #[error("malformed datagram: {0}")]
    Malformed(String),
}

pub fn encode_ping(address: Ipv4Addr, epoch: u64, now: Millis) -> Vec<u8> {
    format!("{MAGIC} PING {address} {epoch} {now}\n").into_bytes()
}

pub fn decode(bytes: &[u8]) -> Result<Ping, WireError> {
    let text = std::str::from_utf8(bytes).map_err(|_| WireError::Malformed("not ASCII".into()))?;
    let line = text
        .strip_suffix('\n')
        .ok_or_else(|| WireError::Malformed("missing newline".into()))?;
    let parts: Vec<&str> = line.split(' ').collect();
    match parts.as_slice() {
        [MAGIC, "PING", addr, epoch, now] => {
            let address = addr
                .parse()
                .map_err(|_| WireError::Malformed(format!("bad address `{addr}`")))?;
            let epoch = epoch
                .parse()
                .map_err(|_| WireError::Malformed(format!("bad epoch `{epoch}`")))?;
            let now = now
                .parse()
                .map_err(|_| WireError::Malformed(format!("bad time `{now}`")))?;
            Ok(Ping { address, epoch, now })
        }
        [MAGIC, verb, ..] => Err(WireError::UnknownVerb(verb.to_string())),
        _ => Err(WireError::Malformed(line.to_string())),
    }
}
