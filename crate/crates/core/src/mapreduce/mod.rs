//! Datasets, decomposable jobs, and the map and reduce engines.
//!
//! A job computes `Q` output functions, each decomposable over packets:
//! `phi_q(dataset) = r_q(m_q(W_1), ..., m_q(W_S))`. Intermediate values are
//! opaque byte strings so the shuffle can treat every job the same way.

mod dataset;
pub mod jobs;

use std::collections::BTreeMap;
use std::sync::Arc;

use itertools::Itertools;
use rayon::prelude::*;

use crate::planner::{AssignmentPlan, GroupId, NodeId, PacketIndex};
use crate::shuffle::codec;

pub use dataset::{Dataset, Record};
pub use jobs::{Job, JobRegistry};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MapReduceError {
    #[error("dataset too small: {records} records cannot fill {packets} nonempty packets")]
    DatasetTooSmall { records: usize, packets: usize },
    #[error("incomplete shuffle at node {node}: missing {}", .missing.iter().map(|p| p.to_string()).join(", "))]
    IncompleteShuffle { node: NodeId, missing: Vec<PacketIndex> },
    #[error("job {job}: malformed intermediate value: {reason}")]
    MalformedPayload { job: String, reason: String },
    #[error("unknown job {0:?}")]
    UnknownJob(String),
    #[error("reading dataset: {0}")]
    Io(String),
}

/// `W^q_{tau,sigma}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct IntermediateValue {
    pub q: usize,
    pub packet: PacketIndex,
    pub payload: Vec<u8>,
}

impl IntermediateValue {
    /// Channel symbols needed to carry this value, framing included.
    pub fn numeric_len(&self) -> usize {
        codec::frame_symbols(self.payload.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReduceOutput {
    pub q: usize,
    pub value: Vec<u8>,
}

/// Packet contents keyed by label; iteration follows canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketSplit {
    contents: BTreeMap<PacketIndex, Vec<Record>>,
}

impl PacketSplit {
    pub fn content(&self, packet: &PacketIndex) -> &[Record] {
        self.contents.get(packet).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PacketIndex, &[Record])> {
        self.contents.iter().map(|(p, r)| (p, r.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.contents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }
}

/// Contiguous split: the first `F mod S` packets in canonical order get one
/// extra record.
pub fn split_dataset(dataset: &Dataset, packets: &[PacketIndex]) -> Result<PacketSplit, MapReduceError> {
    let s = packets.len();
    let f = dataset.len();
    if f < s || s == 0 {
        return Err(MapReduceError::DatasetTooSmall { records: f, packets: s });
    }
    let mut ordered = packets.to_vec();
    ordered.sort();
    let (base, extra) = (f / s, f % s);
    let mut records = dataset.records().iter();
    let contents = ordered
        .into_iter()
        .enumerate()
        .map(|(idx, p)| {
            let take = base + usize::from(idx < extra);
            (p, records.by_ref().take(take).cloned().collect())
        })
        .collect();
    Ok(PacketSplit { contents })
}

/// Everything one group computed in the map phase. All members of the group
/// hold an identical copy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappedGroup {
    pub group: GroupId,
    values: BTreeMap<(usize, PacketIndex), Vec<u8>>,
}

impl MappedGroup {
    pub fn get(&self, q: usize, packet: &PacketIndex) -> Option<&[u8]> {
        self.values.get(&(q, packet.clone())).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = IntermediateValue> + '_ {
        self.values.iter().map(|((q, packet), payload)| IntermediateValue {
            q: *q,
            packet: packet.clone(),
            payload: payload.clone(),
        })
    }
}

/// Maps every packet of `M_group` under every function the plan's nodes
/// reduce (all of `[Q]` for a plain plan). `functions` is `Q`.
pub fn map_group(
    group: GroupId,
    plan: &AssignmentPlan,
    split: &PacketSplit,
    job: &dyn Job,
    functions: usize,
) -> MappedGroup {
    let mut values = BTreeMap::new();
    for packet in plan.packets_of(group) {
        let content = split.content(packet);
        for &q in plan.reducers() {
            values.insert((q, packet.clone()), job.map(q, functions, content));
        }
    }
    MappedGroup { group, values }
}

/// Map phase for all groups, run in parallel. Output is indexed by group id
/// minus one.
pub fn map_all(plan: &AssignmentPlan, split: &PacketSplit, job: &Arc<dyn Job>, functions: usize) -> Vec<MappedGroup> {
    (1..=plan.layout().group_count())
        .into_par_iter()
        .map(|g| map_group(g, plan, split, job.as_ref(), functions))
        .collect()
}

/// Reduce at `node`: local values for held packets, shuffled values for the
/// rest. Fails if any packet is unaccounted for.
pub fn reduce_node(
    node: NodeId,
    plan: &AssignmentPlan,
    local: &MappedGroup,
    shuffled: &[IntermediateValue],
    job: &dyn Job,
    functions: usize,
) -> Result<ReduceOutput, MapReduceError> {
    let q = plan.reducer_of(node);
    let received: BTreeMap<&PacketIndex, &[u8]> = shuffled
        .iter()
        .filter(|v| v.q == q)
        .map(|v| (&v.packet, v.payload.as_slice()))
        .collect();
    let mut missing = Vec::new();
    let mut inputs = Vec::with_capacity(plan.packet_count());
    for packet in plan.packets() {
        let value = if plan.holds(local.group, packet) {
            local.get(q, packet)
        } else {
            received.get(packet).copied()
        };
        match value {
            Some(v) => inputs.push(v),
            None => missing.push(packet.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(MapReduceError::IncompleteShuffle { node, missing });
    }
    Ok(ReduceOutput {
        q,
        value: job.reduce(q, functions, &inputs)?,
    })
}

/// Every `phi_q` evaluated directly on the whole dataset.
pub fn centralized_oracle(job: &dyn Job, dataset: &Dataset, functions: usize) -> Vec<ReduceOutput> {
    (1..=functions)
        .map(|q| ReduceOutput {
            q,
            value: job.centralized(q, functions, dataset),
        })
        .collect()
}
