//! End-to-end run: assignment, map, coded shuffle, reduce, and checks
//! against the centralized oracle and the closed-form delay.
//!
//! When `S_max` is below the subpacketization of the full system, nodes are
//! cut into `K / K_bar_L` consecutive batches of `K_bar_L` nodes. Each batch
//! splits the whole dataset for itself and runs the coded scheme for its own
//! reduce functions; batches take turns on the medium. Nodes left over when
//! `K_bar_L` does not divide `K` map like group `idx mod K'_bar + 1` of the
//! first batch and receive the rest by unicast.

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::mapreduce::{self, centralized_oracle, map_all, split_dataset, Dataset, Job, MapReduceError, ReduceOutput};
use crate::planner::{self, NodeId, PlanError, Scheme, SystemParams};
use crate::ratio::{self, Rational};
use crate::shuffle::{
    self, delay, Channel, ChannelConfig, DelayReport, LinkStats, ShuffleError, ShuffleOptions, SlotTrace,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    MapReduce(#[from] MapReduceError),
    #[error(transparent)]
    Shuffle(#[from] ShuffleError),
}

pub struct RunSpec {
    pub params: SystemParams,
    pub job: Arc<dyn Job>,
    pub dataset: Dataset,
    pub channel: ChannelConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct BatchSummary {
    pub first_node: NodeId,
    pub node_count: usize,
    pub subpacketization: usize,
    pub slots: usize,
    /// Intermediate values computed, counted once per group.
    pub mapped_values: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleCheck {
    Matched,
    Mismatch(Vec<usize>),
    /// Noisy runs do not promise exact outputs.
    Skipped,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub batches: Vec<BatchSummary>,
    pub leftover_nodes: Vec<NodeId>,
    pub unicast_slots: usize,
    /// Slot counts and delays summed over batches and unicasts;
    /// `closed_form` is the scheme's formula under the configured `S_max`.
    pub coded: DelayReport,
    /// Delay the batching predicts: each full batch contributes
    /// `(1 - gamma) / (K gamma) Tc`, each leftover node `(1 - gamma) / K Tc`.
    pub expected_delay: Rational,
    pub uncoded_baseline: DelayReport,
    pub outputs: Vec<ReduceOutput>,
    pub reduce_failures: Vec<(NodeId, MapReduceError)>,
    pub oracle: OracleCheck,
    pub stats: LinkStats,
    pub trace: Vec<SlotTrace>,
}

impl RunOutcome {
    pub fn reconciled(&self) -> bool {
        self.coded.even_delay == self.expected_delay
    }
}

/// Nodes encoded over at a time.
pub fn batch_size(params: &SystemParams) -> Result<usize, PlanError> {
    if params.gamma().is_one() {
        return Ok(params.k());
    }
    Ok(planner::effective_speedup(params, true)?.k_bar)
}

pub fn run(spec: &RunSpec) -> Result<RunOutcome, PipelineError> {
    let params = &spec.params;
    let k = params.k();
    let functions = params.function_count();
    let job = &spec.job;
    let k_bar = batch_size(params)?;
    let full_batches = k / k_bar;
    let leftover_nodes: Vec<NodeId> = (full_batches * k_bar + 1..=k).collect();
    let noisy = spec.channel.is_noisy();
    let options = ShuffleOptions {
        tolerate_decode_failures: noisy,
    };

    let batch_params = params.batch(k_bar)?;
    let base_plan = planner::plan(&batch_params);
    let split = split_dataset(&spec.dataset, base_plan.packets())?;
    let mut channel = Channel::new(spec.channel.clone(), batch_params.k_prime(), batch_params.l())?;

    let mut batches = Vec::with_capacity(full_batches);
    let mut outputs = Vec::with_capacity(k);
    let mut reduce_failures = Vec::new();
    let mut trace = Vec::new();
    let mut stats = LinkStats::default();
    let mut slot_total = BigUint::zero();
    let mut even = Rational::zero();
    let mut padded = Rational::zero();
    let mut first_mean = None;

    for b in 0..full_batches {
        let offset = b * k_bar;
        let plan = base_plan.clone().with_reducer_offset(offset);
        let mapped = map_all(&plan, &split, job, functions);
        let schedule = shuffle::build_schedule(&plan, &batch_params);
        let out = shuffle::run_shuffle(&batch_params, &plan, &schedule, &mut channel, &mapped, options)?;
        if first_mean.is_none() {
            first_mean = Some(mean_len(&plan, &mapped));
        }
        for node in 1..=k_bar {
            let local = &mapped[plan.layout().group_of(node) - 1];
            match mapreduce::reduce_node(node, &plan, local, &out.delivered[node - 1], job.as_ref(), functions) {
                Ok(o) => outputs.push(o),
                Err(e) => reduce_failures.push((node + offset, e)),
            }
        }
        let slot_base = trace.len();
        trace.extend(out.trace.into_iter().map(|mut t| {
            t.slot += slot_base;
            for d in &mut t.delivered {
                d.node += offset;
            }
            t
        }));
        stats.decoded += out.stats.decoded;
        stats.symbol_errors += out.stats.symbol_errors;
        stats.checksum_failures += out.stats.checksum_failures;
        slot_total += &out.report.slot_count;
        even += &out.report.even_delay;
        padded += &out.report.padded_delay;
        batches.push(BatchSummary {
            first_node: offset + 1,
            node_count: k_bar,
            subpacketization: plan.packet_count(),
            slots: schedule.len(),
            mapped_values: mapped.iter().map(|m| m.len()).sum(),
        });
    }

    // leftover nodes: local map of one group's packets, unicast for the rest
    let unit = delay::unit_slot(&batch_params);
    let mean = first_mean.unwrap_or_else(Rational::zero);
    let mut unicast_slots = 0usize;
    for (idx, &node) in leftover_nodes.iter().enumerate() {
        let group = idx % batch_params.k_prime() + 1;
        let mut inputs = Vec::with_capacity(base_plan.packet_count());
        for packet in base_plan.packets() {
            let value = job.map(node, functions, split.content(packet));
            if !base_plan.holds(group, packet) {
                unicast_slots += 1;
                padded += if mean.is_zero() {
                    unit.clone()
                } else {
                    ratio::int(value.len()) / &mean * &unit
                };
            }
            inputs.push(value);
        }
        let refs: Vec<&[u8]> = inputs.iter().map(Vec::as_slice).collect();
        match job.reduce(node, functions, &refs) {
            Ok(value) => outputs.push(ReduceOutput { q: node, value }),
            Err(e) => reduce_failures.push((node, e)),
        }
    }
    slot_total += BigUint::from(unicast_slots);
    even += ratio::int(unicast_slots) * &unit;

    let one_minus_gamma = Rational::one() - params.gamma();
    let expected_delay = if params.gamma().is_one() {
        Rational::zero()
    } else {
        let per_batch = &one_minus_gamma * params.tc() / (params.gamma() * ratio::int(k));
        let per_leftover = &one_minus_gamma * params.tc() / ratio::int(k);
        per_batch * ratio::int(full_batches) + per_leftover * ratio::int(leftover_nodes.len())
    };
    let closed_form = planner::shuffle_delay_closed_form(Scheme::Gcmr, params)?;
    let served = if batch_params.groups_per_packet() == batch_params.k_prime() {
        0
    } else {
        batch_params.redundancy()
    };
    let coded = DelayReport {
        slot_count: slot_total,
        unit_slot: unit,
        even_delay: even,
        padded_delay: padded,
        closed_form,
        nodes_served_per_slot: served,
        csi_exchanges_per_slot: served,
    };

    outputs.sort_by_key(|o| o.q);
    let oracle = if noisy {
        OracleCheck::Skipped
    } else {
        let expected = centralized_oracle(job.as_ref(), &spec.dataset, functions);
        let mut bad: Vec<usize> = expected
            .iter()
            .filter(|e| outputs.iter().find(|o| o.q == e.q) != Some(*e))
            .map(|e| e.q)
            .collect();
        bad.dedup();
        if bad.is_empty() {
            OracleCheck::Matched
        } else {
            OracleCheck::Mismatch(bad)
        }
    };

    Ok(RunOutcome {
        batches,
        leftover_nodes,
        unicast_slots,
        coded,
        expected_delay,
        uncoded_baseline: delay::uncoded_report_counted(params),
        outputs,
        reduce_failures,
        oracle,
        stats,
        trace,
    })
}

fn mean_len(plan: &planner::AssignmentPlan, mapped: &[mapreduce::MappedGroup]) -> Rational {
    let mut total = 0usize;
    for packet in plan.packets() {
        for &q in plan.reducers() {
            total += mapped[packet.sigma - 1].get(q, packet).map_or(0, <[u8]>::len);
        }
    }
    ratio::frac(
        total as u64,
        (plan.reducers().len() * plan.packet_count()).max(1) as u64,
    )
}
