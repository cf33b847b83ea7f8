use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::trace::BlockAddr;

/// A vertex of a per-function graph. The derived ordering (head, blocks by
/// ascending address, tail) is the canonical node order used everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Head,
    Block(BlockAddr),
    Tail,
}

impl NodeId {
    pub fn block(addr: u64) -> Self {
        NodeId::Block(BlockAddr(addr))
    }

    pub fn is_block(&self) -> bool {
        matches!(self, NodeId::Block(_))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Head => f.write_str("head"),
            NodeId::Tail => f.write_str("tail"),
            NodeId::Block(addr) => addr.fmt(f),
        }
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "head" => Ok(NodeId::Head),
            "tail" => Ok(NodeId::Tail),
            _ => s.parse().map(NodeId::Block).map_err(|e| e.to_string()),
        }
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
