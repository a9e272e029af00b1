//! Delay accounting. One slot moves one intermediate value over one link,
//! which takes `Tc / (K S)` since `Tc` covers all `Q S = K S` values.

use num_bigint::BigUint;
use num_traits::Zero;

use crate::planner::{self, AssignmentPlan, Scheme, SystemParams};
use crate::ratio::{self, Rational};

use super::schedule;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct DelayReport {
    #[serde(serialize_with = "ser_big")]
    pub slot_count: BigUint,
    #[serde(serialize_with = "ser_rat")]
    pub unit_slot: Rational,
    #[serde(serialize_with = "ser_rat")]
    pub even_delay: Rational,
    #[serde(serialize_with = "ser_rat")]
    pub padded_delay: Rational,
    #[serde(serialize_with = "ser_rat")]
    pub closed_form: Rational,
    pub nodes_served_per_slot: usize,
    /// Receivers that feed back a channel row per slot. Not part of the delay.
    pub csi_exchanges_per_slot: usize,
}

fn ser_rat<S: serde::Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&ratio::to_pq(r))
}

fn ser_big<S: serde::Serializer>(n: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&n.to_string())
}

impl DelayReport {
    pub fn reconciled(&self) -> bool {
        self.even_delay == self.closed_form
    }
}

/// `Tc / (K S)`.
pub fn unit_slot(params: &SystemParams) -> Rational {
    let values = BigUint::from(params.function_count()) * planner::subpacketization_of(params);
    params.tc() / ratio::from_biguint(&values)
}

/// `(1 - gamma) / (K gamma) * Tc`, the unconstrained coded delay. For a
/// batch it is the share of its `K` nodes in the `Q` of the whole system.
pub fn unconstrained_closed_form(params: &SystemParams) -> Rational {
    let full = planner::shuffle_delay_closed_form(Scheme::Gcmr, &params.clone().with_s_max(None))
        .expect("unconstrained delay is always defined");
    full * ratio::frac(params.k() as u64, params.function_count() as u64)
}

/// Report from a slot count alone (no payloads). Padded delay equals the
/// even delay.
pub fn coded_report(params: &SystemParams, slot_count: BigUint) -> DelayReport {
    let unit = unit_slot(params);
    let even = ratio::from_biguint(&slot_count) * &unit;
    let served = params.redundancy();
    DelayReport {
        slot_count,
        padded_delay: even.clone(),
        even_delay: even,
        unit_slot: unit,
        closed_form: unconstrained_closed_form(params),
        nodes_served_per_slot: if params.groups_per_packet() == params.k_prime() {
            0
        } else {
            served
        },
        csi_exchanges_per_slot: if params.groups_per_packet() == params.k_prime() {
            0
        } else {
            served
        },
    }
}

/// Coded report by enumerating the schedule.
pub fn coded_report_enumerated(plan: &AssignmentPlan, params: &SystemParams) -> DelayReport {
    let count = schedule::build_schedule(plan, params).len();
    coded_report(params, BigUint::from(count))
}

/// Coded report by the counting formula; usable at any size.
pub fn coded_report_counted(params: &SystemParams) -> DelayReport {
    coded_report(params, schedule::slot_count(params))
}

/// Uncoded baseline: each missing value is its own unicast slot.
pub fn uncoded_report(params: &SystemParams, unicasts: BigUint) -> DelayReport {
    let unit = unit_slot(params);
    let even = ratio::from_biguint(&unicasts) * &unit;
    let closed = planner::shuffle_delay_closed_form(Scheme::Uncoded, params).expect("uncoded delay is always defined");
    DelayReport {
        slot_count: unicasts,
        padded_delay: even.clone(),
        even_delay: even,
        unit_slot: unit,
        closed_form: closed,
        nodes_served_per_slot: 1,
        csi_exchanges_per_slot: 0,
    }
}

/// Unicast count by walking every node's needs.
pub fn uncoded_report_enumerated(plan: &AssignmentPlan, params: &SystemParams) -> DelayReport {
    let needs: usize = (1..=plan.layout().node_count()).map(|k| plan.needs_of(k).count()).sum();
    uncoded_report(params, BigUint::from(needs))
}

/// Unicast count `K (S - |M_i|)` with `|M_i| = K'gamma * C(K'-1, K'gamma-1)`.
pub fn uncoded_report_counted(params: &SystemParams) -> DelayReport {
    let per = params.groups_per_packet();
    let held = BigUint::from(per) * planner::binomial(params.k_prime() - 1, per - 1);
    let s = planner::subpacketization_of(params);
    uncoded_report(params, BigUint::from(params.k()) * (s - held))
}

/// Padded delay from per-slot padded lengths (bytes) measured against the
/// mean intermediate value length. All-empty payloads count as even.
pub fn padded_delay(unit: &Rational, padded_lengths: &[usize], mean_len: &Rational) -> Rational {
    if mean_len.is_zero() {
        return ratio::int(padded_lengths.len()) * unit;
    }
    let total: usize = padded_lengths.iter().sum();
    ratio::int(total) / mean_len * unit
}
