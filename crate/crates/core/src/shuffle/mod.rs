//! Cooperative coded shuffle.
//!
//! For every subset `Q` of `K'gamma + 1` groups and every `i in Q`, the
//! members of `G_i` jointly send
//!
//! ```text
//! x = sum_{k' in Q \ {i}} H_{i,k'}^{-1} [W^{G_k'(1)}_{Q\{k'},i}, ..., W^{G_k'(L)}_{Q\{k'},i}]^T
//! ```
//!
//! with node `G_i(j)` emitting coordinate `j`. A receiver `G_p(j)` subtracts
//! the terms for the other groups (it mapped those packets itself) and the
//! ZF precoder leaves only its own value, since `h_{G_p(j)}^T` is row `j`
//! of `H_{i,p}`.

pub mod channel;
pub mod codec;
pub mod delay;
pub mod schedule;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigUint;
use num_complex::Complex64;

use crate::linalg;
use crate::mapreduce::{IntermediateValue, MappedGroup};
use crate::planner::{AssignmentPlan, GroupId, NodeId, PacketIndex, SystemParams};
use crate::ratio::{self, Rational};

pub use channel::{Channel, ChannelConfig, ChannelMode, Link};
pub use delay::DelayReport;
pub use schedule::{build_schedule, verify_coverage, CoverageReport, Schedule, TransmissionSlot};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShuffleError {
    #[error("no channel H_{{{tx},{rx}}} within the condition bound after {attempts} draws")]
    SingularChannel { tx: GroupId, rx: GroupId, attempts: usize },
    #[error("slot {slot}: node {node} failed to decode {packet}: {reason}")]
    DecodeFailure {
        slot: usize,
        node: NodeId,
        packet: PacketIndex,
        reason: codec::CodecError,
    },
    #[error("slot {slot}: group {group} has no mapped value for q = {q}, {packet}")]
    MissingValue {
        slot: usize,
        group: GroupId,
        q: usize,
        packet: PacketIndex,
    },
    #[error("node {node} received {packet} twice")]
    DuplicateDelivery { node: NodeId, packet: PacketIndex },
}

/// Payload streams of one receiving group: one symbol vector per member.
pub type GroupStreams = Vec<Vec<Complex64>>;

/// Raw payload of the value `G_{receiver}(m)` needs from this slot, read
/// from `source`.
fn slot_value<'a>(
    slot: &TransmissionSlot,
    plan: &AssignmentPlan,
    receiver: GroupId,
    member: NodeId,
    source: &'a MappedGroup,
) -> Result<&'a [u8], ShuffleError> {
    let packet = slot.packet_for(receiver);
    let q = plan.reducer_of(member);
    source.get(q, &packet).ok_or(ShuffleError::MissingValue {
        slot: slot.id,
        group: source.group,
        q,
        packet,
    })
}

/// Encoded, padded streams for every member of `receiver`.
pub fn group_streams(
    slot: &TransmissionSlot,
    plan: &AssignmentPlan,
    receiver: GroupId,
    source: &MappedGroup,
    padded_len: usize,
) -> Result<GroupStreams, ShuffleError> {
    plan.layout()
        .members(receiver)
        .iter()
        .map(|&m| slot_value(slot, plan, receiver, m, source).map(|v| codec::encode(v, padded_len)))
        .collect()
}

/// Symbols per stream in this slot: the longest framed value.
pub fn padded_len(
    slot: &TransmissionSlot,
    plan: &AssignmentPlan,
    transmitter: &MappedGroup,
) -> Result<usize, ShuffleError> {
    let mut longest = 0;
    for rx in slot.receivers() {
        for &m in plan.layout().members(rx) {
            longest = longest.max(codec::frame_symbols(slot_value(slot, plan, rx, m, transmitter)?.len()));
        }
    }
    Ok(longest)
}

/// ZF-precoded superposition, one `L`-vector per symbol position.
pub fn precode(
    links: &BTreeMap<GroupId, Arc<Link>>,
    streams: &BTreeMap<GroupId, GroupStreams>,
    padded_len: usize,
) -> Vec<Vec<Complex64>> {
    let l = links.values().next().map_or(0, |link| link.h.dim());
    let mut x = vec![vec![Complex64::new(0.0, 0.0); l]; padded_len];
    for (rx, group) in streams {
        let h_inv = &links[rx].h_inv;
        for (s, out) in x.iter_mut().enumerate() {
            let w: Vec<Complex64> = group.iter().map(|stream| stream[s]).collect();
            for (o, v) in out.iter_mut().zip(h_inv.mul_vec(&w)) {
                *o += v;
            }
        }
    }
    x
}

/// What node `G_p(j)` observes: `h^T x`, before noise.
pub fn observe(link: &Link, position: usize, x: &[Vec<Complex64>]) -> Vec<Complex64> {
    let h = link.h.row(position - 1);
    x.iter().map(|xs| linalg::dot(h, xs)).collect()
}

/// Removes the other receiving groups' terms from `received`, using values
/// rebuilt from the receiver's own map output.
pub fn cancel_interference(
    slot: &TransmissionSlot,
    plan: &AssignmentPlan,
    links: &BTreeMap<GroupId, Arc<Link>>,
    receiver: NodeId,
    received: &[Complex64],
    local: &MappedGroup,
) -> Result<Vec<Complex64>, ShuffleError> {
    let layout = plan.layout();
    let p = layout.group_of(receiver);
    let h = links[&p].h.row(layout.position_of(receiver) - 1).to_vec();
    let mut residual = received.to_vec();
    for other in slot.receivers().filter(|&g| g != p) {
        let known = group_streams(slot, plan, other, local, received.len())?;
        let g = links[&other].h_inv.left_mul_row(&h);
        for (s, r) in residual.iter_mut().enumerate() {
            *r -= g.iter().zip(&known).map(|(c, stream)| c * stream[s]).sum::<Complex64>();
        }
    }
    Ok(residual)
}

/// Interference cancellation followed by lattice decoding and checksum.
pub fn receive_and_decode(
    slot: &TransmissionSlot,
    plan: &AssignmentPlan,
    links: &BTreeMap<GroupId, Arc<Link>>,
    receiver: NodeId,
    received: &[Complex64],
    local: &MappedGroup,
) -> Result<IntermediateValue, ShuffleError> {
    let residual = cancel_interference(slot, plan, links, receiver, received, local)?;
    let packet = slot.packet_for(plan.layout().group_of(receiver));
    match codec::decode(&residual) {
        Ok(payload) => Ok(IntermediateValue {
            q: plan.reducer_of(receiver),
            packet,
            payload,
        }),
        Err(reason) => Err(ShuffleError::DecodeFailure {
            slot: slot.id,
            node: receiver,
            packet,
            reason,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ShuffleOptions {
    /// Count decode failures instead of aborting (noisy experiments).
    pub tolerate_decode_failures: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize)]
pub struct LinkStats {
    pub decoded: usize,
    pub symbol_errors: usize,
    pub checksum_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct DeliveredId {
    pub node: NodeId,
    pub q: usize,
    pub packet: String,
}

/// One line of the per-slot trace.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SlotTrace {
    pub slot: usize,
    pub subset: Vec<GroupId>,
    pub transmitter: GroupId,
    pub delivered: Vec<DeliveredId>,
    /// Symbols per stream, framing included.
    pub padded_len: usize,
    /// Longest raw payload in the slot, bytes.
    pub padded_payload_bytes: usize,
    /// Mean `|x|^2` per symbol position (recorded, not normalized).
    pub tx_power: f64,
}

impl SlotTrace {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

#[derive(Debug, Clone)]
pub struct ShuffleOutcome {
    /// Values received per node, indexed by node id minus one.
    pub delivered: Vec<Vec<IntermediateValue>>,
    pub report: DelayReport,
    pub trace: Vec<SlotTrace>,
    pub stats: LinkStats,
}

/// Mean raw length over the plan's intermediate values.
fn mean_value_len(plan: &AssignmentPlan, mapped: &[MappedGroup]) -> Rational {
    let mut total = 0usize;
    let functions = plan.reducers().len();
    for packet in plan.packets() {
        let holder = &mapped[packet.sigma - 1];
        for &q in plan.reducers() {
            total += holder.get(q, packet).map_or(0, <[u8]>::len);
        }
    }
    ratio::frac(total as u64, (functions * plan.packet_count()).max(1) as u64)
}

/// Runs every slot of `schedule` over `channel`. `mapped` is indexed by
/// group id minus one.
pub fn run_shuffle(
    params: &SystemParams,
    plan: &AssignmentPlan,
    schedule: &Schedule,
    channel: &mut Channel,
    mapped: &[MappedGroup],
    options: ShuffleOptions,
) -> Result<ShuffleOutcome, ShuffleError> {
    let layout = plan.layout();
    let mut delivered: Vec<BTreeMap<PacketIndex, IntermediateValue>> = vec![BTreeMap::new(); layout.node_count()];
    let mut trace = Vec::with_capacity(schedule.len());
    let mut stats = LinkStats::default();
    let mut padded_bytes = Vec::with_capacity(schedule.len());
    let amplitude = channel.amplitude();

    for slot in schedule.slots() {
        let tx_values = &mapped[slot.transmitter - 1];
        let receivers: Vec<GroupId> = slot.receivers().collect();
        let links = channel.links_for_slot(slot.transmitter, &receivers)?;
        let len = padded_len(slot, plan, tx_values)?;
        let streams: BTreeMap<GroupId, GroupStreams> = receivers
            .iter()
            .map(|&rx| group_streams(slot, plan, rx, tx_values, len).map(|s| (rx, s)))
            .collect::<Result<_, _>>()?;
        let x = precode(&links, &streams, len);
        let tx_power = if len == 0 {
            0.0
        } else {
            x.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() / len as f64
        };

        let mut ids = Vec::new();
        for &p in &receivers {
            for (m, &node) in layout.members(p).iter().enumerate() {
                let clean = observe(&links[&p], m + 1, &x);
                let received: Vec<Complex64> = clean
                    .into_iter()
                    .map(|y| (y * amplitude + channel.noise()) / amplitude)
                    .collect();
                let residual = cancel_interference(slot, plan, &links, node, &received, &mapped[p - 1])?;
                stats.symbol_errors += residual
                    .iter()
                    .zip(&streams[&p][m])
                    .filter(|(r, s)| codec::symbol_to_byte(**r) != codec::symbol_to_byte(**s))
                    .count();
                let packet = slot.packet_for(p);
                match codec::decode(&residual) {
                    Ok(payload) => {
                        stats.decoded += 1;
                        ids.push(DeliveredId {
                            node,
                            q: plan.reducer_of(node),
                            packet: packet.label(),
                        });
                        let value = IntermediateValue {
                            q: plan.reducer_of(node),
                            packet: packet.clone(),
                            payload,
                        };
                        if delivered[node - 1].insert(packet.clone(), value).is_some() {
                            return Err(ShuffleError::DuplicateDelivery { node, packet });
                        }
                    }
                    Err(reason) => {
                        stats.checksum_failures += 1;
                        if !options.tolerate_decode_failures {
                            return Err(ShuffleError::DecodeFailure {
                                slot: slot.id,
                                node,
                                packet,
                                reason,
                            });
                        }
                    }
                }
            }
        }
        let tx_max = len - codec::frame_symbols(0);
        padded_bytes.push(tx_max);
        trace.push(SlotTrace {
            slot: slot.id,
            subset: slot.subset.clone(),
            transmitter: slot.transmitter,
            delivered: ids,
            padded_len: len,
            padded_payload_bytes: tx_max,
            tx_power,
        });
    }

    let mut report = delay::coded_report(params, BigUint::from(schedule.len()));
    let mean = mean_value_len(plan, mapped);
    report.padded_delay = delay::padded_delay(&report.unit_slot, &padded_bytes, &mean);
    Ok(ShuffleOutcome {
        delivered: delivered.into_iter().map(|m| m.into_values().collect()).collect(),
        report,
        trace,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapreduce::{map_all, split_dataset, Dataset, JobRegistry};
    use crate::planner::plan;
    use crate::ratio::frac;
    use rand::SeedableRng;

    fn setup(
        k: usize,
        l: usize,
        t: usize,
        job: &str,
        records: usize,
    ) -> (SystemParams, AssignmentPlan, Vec<MappedGroup>) {
        let params = SystemParams::from_redundancy(k, l, t).unwrap();
        let plan = plan(&params);
        let data = Dataset::synthetic(records, 2, 11);
        let split = split_dataset(&data, plan.packets()).unwrap();
        let job = JobRegistry::with_builtins().get(job).unwrap();
        let mapped = map_all(&plan, &split, &job, k);
        (params, plan, mapped)
    }

    fn expected(plan: &AssignmentPlan, mapped: &[MappedGroup], node: NodeId, packet: &PacketIndex) -> Vec<u8> {
        mapped[packet.sigma - 1]
            .get(plan.reducer_of(node), packet)
            .unwrap()
            .to_vec()
    }

    #[test]
    fn identity_channel_is_plain_superposition() {
        let (_, plan, mapped) = setup(8, 2, 4, "word-count", 40);
        let slot = TransmissionSlot {
            id: 0,
            subset: vec![1, 2, 3],
            transmitter: 1,
        };
        let links: BTreeMap<GroupId, Arc<Link>> =
            [2, 3].into_iter().map(|g| (g, Arc::new(Link::identity(2)))).collect();
        let len = padded_len(&slot, &plan, &mapped[0]).unwrap();
        let streams: BTreeMap<_, _> = [2, 3]
            .into_iter()
            .map(|g| (g, group_streams(&slot, &plan, g, &mapped[0], len).unwrap()))
            .collect();
        let x = precode(&links, &streams, len);
        for s in 0..len {
            for j in 0..2 {
                assert_eq!(x[s][j], streams[&2][j][s] + streams[&3][j][s]);
            }
        }
    }

    #[test]
    fn single_receiver_group_is_one_zf_term() {
        // K'gamma = 1: Q has two groups
        let (_, plan, mapped) = setup(6, 2, 2, "sum", 12);
        let mut ch = Channel::new(ChannelConfig::new(ChannelMode::Wireless, 5), 3, 2).unwrap();
        let slot = TransmissionSlot {
            id: 0,
            subset: vec![1, 2],
            transmitter: 1,
        };
        let links = ch.links_for_slot(1, &[2]).unwrap();
        let len = padded_len(&slot, &plan, &mapped[0]).unwrap();
        let streams: BTreeMap<_, _> = [(2, group_streams(&slot, &plan, 2, &mapped[0], len).unwrap())].into();
        let x = precode(&links, &streams, len);
        let w: Vec<Complex64> = streams[&2].iter().map(|st| st[0]).collect();
        let direct = links[&2].h_inv.mul_vec(&w);
        for j in 0..2 {
            assert!((x[0][j] - direct[j]).norm() < 1e-12);
        }
        for node in [2, 5] {
            let y = observe(&links[&2], plan.layout().position_of(node), &x);
            let v = receive_and_decode(&slot, &plan, &links, node, &y, &mapped[1]).unwrap();
            assert_eq!(v.payload, expected(&plan, &mapped, node, &slot.packet_for(2)));
        }
    }

    #[test]
    fn scalar_channels_when_l_is_one() {
        let (params, plan, mapped) = setup(4, 1, 2, "word-count", 30);
        let schedule = build_schedule(&plan, &params);
        let mut ch = Channel::new(ChannelConfig::new(ChannelMode::Wireless, 2), 4, 1).unwrap();
        let out = run_shuffle(&params, &plan, &schedule, &mut ch, &mapped, ShuffleOptions::default()).unwrap();
        assert_eq!(out.report.even_delay, frac(1, 4));
        assert_eq!(out.report.slot_count, BigUint::from(12u32));
        for node in 1..=4 {
            assert_eq!(out.delivered[node - 1].len(), plan.needs_of(node).count());
        }
    }

    #[test]
    fn reference_slot_cancellation() {
        let (_, plan, mapped) = setup(32, 8, 16, "word-count", 240);
        let mut ch = Channel::new(ChannelConfig::new(ChannelMode::Wireless, 17), 4, 8).unwrap();
        let slot = TransmissionSlot {
            id: 0,
            subset: vec![1, 2, 3],
            transmitter: 1,
        };
        let links = ch.links_for_slot(1, &[2, 3]).unwrap();
        let len = padded_len(&slot, &plan, &mapped[0]).unwrap();
        let streams: BTreeMap<_, _> = [2, 3]
            .into_iter()
            .map(|g| (g, group_streams(&slot, &plan, g, &mapped[0], len).unwrap()))
            .collect();
        let x = precode(&links, &streams, len);
        for (j, &node) in plan.layout().members(2).iter().enumerate() {
            let y = observe(&links[&2], j + 1, &x);
            let v = receive_and_decode(&slot, &plan, &links, node, &y, &mapped[1]).unwrap();
            assert_eq!(v.packet, PacketIndex::new(vec![1, 3], 1));
            assert_eq!(v.payload, expected(&plan, &mapped, node, &v.packet));
        }
        // without cancellation the G_3 term corrupts G_2's reception
        let y = observe(&links[&2], 1, &x);
        let raw = codec::decode(&y);
        assert!(raw.is_err() || raw.unwrap() != expected(&plan, &mapped, 2, &PacketIndex::new(vec![1, 3], 1)));
    }

    #[test]
    fn zf_row_selection() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for l in [1, 2, 4, 8] {
            let h = channel::random_matrix(&mut rng, l);
            let inv = h.inverse().unwrap();
            for j in 0..l {
                let row = inv.left_mul_row(h.row(j));
                for (c, z) in row.iter().enumerate() {
                    let e = if c == j { 1.0 } else { 0.0 };
                    assert!((z - Complex64::new(e, 0.0)).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn receiver_missing_local_value_errors() {
        let (_, plan, mapped) = setup(8, 2, 4, "sum", 40);
        let slot = TransmissionSlot {
            id: 3,
            subset: vec![1, 2, 3],
            transmitter: 1,
        };
        let links: BTreeMap<GroupId, Arc<Link>> =
            [2, 3].into_iter().map(|g| (g, Arc::new(Link::identity(2)))).collect();
        // group 4's map output cannot cancel group 3's term
        let err =
            cancel_interference(&slot, &plan, &links, 2, &[Complex64::new(0.0, 0.0); 16], &mapped[3]).unwrap_err();
        assert!(matches!(err, ShuffleError::MissingValue { slot: 3, .. }));
    }

    #[test]
    fn heavy_noise_reports_failures() {
        let (params, plan, mapped) = setup(8, 2, 4, "word-count", 40);
        let schedule = build_schedule(&plan, &params);
        let config = ChannelConfig::new(ChannelMode::Wireless, 4).with_noise(25.0, 1.0);
        let mut ch = Channel::new(config.clone(), 4, 2).unwrap();
        let err = run_shuffle(&params, &plan, &schedule, &mut ch, &mapped, ShuffleOptions::default()).unwrap_err();
        assert!(matches!(err, ShuffleError::DecodeFailure { slot: 0, .. }));
        let mut ch = Channel::new(config, 4, 2).unwrap();
        let out = run_shuffle(
            &params,
            &plan,
            &schedule,
            &mut ch,
            &mapped,
            ShuffleOptions {
                tolerate_decode_failures: true,
            },
        )
        .unwrap();
        assert!(out.stats.checksum_failures > 0);
        assert!(out.stats.symbol_errors > 0);
    }

    #[test]
    fn trace_lines_are_json() {
        let (params, plan, mapped) = setup(8, 2, 4, "sum", 40);
        let schedule = build_schedule(&plan, &params);
        let mut ch = Channel::new(ChannelConfig::new(ChannelMode::Wired, 4), 4, 2).unwrap();
        let out = run_shuffle(&params, &plan, &schedule, &mut ch, &mapped, ShuffleOptions::default()).unwrap();
        assert_eq!(out.trace.len(), schedule.len());
        let v: serde_json::Value = serde_json::from_str(&out.trace[0].to_line()).unwrap();
        assert_eq!(v["subset"], serde_json::json!([1, 2, 3]));
        assert_eq!(v["delivered"].as_array().unwrap().len(), 4);
        // sum payloads are all 8 bytes: no padding loss
        assert_eq!(out.report.padded_delay, out.report.even_delay);
    }
}
