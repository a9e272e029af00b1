//! Multicast schedule over subsets `Q` of size `K'gamma + 1` and the
//! exactly-once coverage audit.

use std::collections::BTreeMap;

use itertools::Itertools;
use num_bigint::BigUint;

use crate::planner::{binomial, AssignmentPlan, GroupId, NodeId, PacketIndex, SystemParams};

/// One cooperative transmission: group `transmitter` serves every other
/// group of `subset` at once.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct TransmissionSlot {
    pub id: usize,
    pub subset: Vec<GroupId>,
    pub transmitter: GroupId,
}

impl TransmissionSlot {
    /// `Q \ {i}` in ascending order.
    pub fn receivers(&self) -> impl Iterator<Item = GroupId> + '_ {
        self.subset.iter().copied().filter(move |&g| g != self.transmitter)
    }

    /// Packet whose values group `receiver` gets here: `(Q \ {receiver}, i)`.
    pub fn packet_for(&self, receiver: GroupId) -> PacketIndex {
        PacketIndex {
            tau: self.subset.iter().copied().filter(|&g| g != receiver).collect(),
            sigma: self.transmitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schedule {
    slots: Vec<TransmissionSlot>,
}

impl Schedule {
    pub fn from_slots(slots: Vec<TransmissionSlot>) -> Self {
        Self { slots }
    }

    pub fn slots(&self) -> &[TransmissionSlot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Copy with slot `id` dropped.
    pub fn without_slot(&self, id: usize) -> Self {
        Self {
            slots: self.slots.iter().filter(|s| s.id != id).cloned().collect(),
        }
    }
}

/// Subsets `Q` in lexicographic order, transmitters ascending within each.
/// Full redundancy (`gamma = 1`) gives an empty schedule.
pub fn build_schedule(plan: &AssignmentPlan, params: &SystemParams) -> Schedule {
    let groups = plan.layout().group_count();
    debug_assert_eq!(groups, params.k_prime());
    let size = params.groups_per_packet() + 1;
    if size > groups {
        return Schedule::default();
    }
    let slots = (1..=groups)
        .combinations(size)
        .flat_map(|subset| subset.clone().into_iter().map(move |tx| (subset.clone(), tx)))
        .enumerate()
        .map(|(id, (subset, transmitter))| TransmissionSlot {
            id,
            subset,
            transmitter,
        })
        .collect();
    Schedule { slots }
}

/// `(K'gamma + 1) * C(K', K'gamma + 1)` without enumerating.
pub fn slot_count(params: &SystemParams) -> BigUint {
    let size = params.groups_per_packet() + 1;
    BigUint::from(size) * binomial(params.k_prime(), size)
}

/// A value some node must receive: node and the packet it lacks.
pub type Need = (NodeId, PacketIndex);

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoverageReport {
    /// Unique delivering slot per need.
    pub delivered_by: BTreeMap<Need, usize>,
    pub missing: Vec<Need>,
    pub duplicates: Vec<(Need, Vec<usize>)>,
    /// Deliveries of values the node already maps.
    pub unneeded: Vec<(Need, usize)>,
    /// Slots breaking the ownership rules (transmitter lacks the packet,
    /// receiver already has it, or a bystander cannot cancel it).
    pub invalid_slots: Vec<(usize, String)>,
}

impl CoverageReport {
    pub fn violation_count(&self) -> usize {
        self.missing.len() + self.duplicates.len() + self.unneeded.len() + self.invalid_slots.len()
    }

    pub fn is_clean(&self) -> bool {
        self.violation_count() == 0
    }
}

/// Audits that every needed value is delivered by exactly one slot.
pub fn verify_coverage(plan: &AssignmentPlan, schedule: &Schedule) -> CoverageReport {
    let layout = plan.layout();
    let mut report = CoverageReport::default();
    let mut seen: BTreeMap<Need, Vec<usize>> = BTreeMap::new();
    for slot in schedule.slots() {
        for rx in slot.receivers() {
            let packet = slot.packet_for(rx);
            if !plan.holds(slot.transmitter, &packet) {
                report
                    .invalid_slots
                    .push((slot.id, format!("transmitter {} lacks {packet}", slot.transmitter)));
            }
            if plan.holds(rx, &packet) {
                report
                    .invalid_slots
                    .push((slot.id, format!("receiver {rx} already holds {packet}")));
            }
            for other in slot.receivers().filter(|&g| g != rx) {
                if !plan.holds(other, &packet) {
                    report
                        .invalid_slots
                        .push((slot.id, format!("group {other} cannot cancel {packet}")));
                }
            }
            for &node in layout.members(rx) {
                seen.entry((node, packet.clone())).or_default().push(slot.id);
            }
        }
    }
    for node in 1..=layout.node_count() {
        for packet in plan.needs_of(node) {
            let need = (node, packet.clone());
            match seen.remove(&need) {
                None => report.missing.push(need),
                Some(ids) if ids.len() == 1 => {
                    report.delivered_by.insert(need, ids[0]);
                }
                Some(ids) => report.duplicates.push((need, ids)),
            }
        }
    }
    for (need, ids) in seen {
        for id in ids {
            report.unneeded.push((need.clone(), id));
        }
    }
    report
}
