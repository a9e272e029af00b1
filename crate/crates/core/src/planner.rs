//! Combinatorics and closed-form analysis.
//!
//! Node and group ids are 1-based throughout the crate: nodes are `1..=K`
//! and groups are `1..=K'` with `K' = K / L`. Group `i` holds nodes
//! `{i, i+K', ..., i+(L-1)K'}`.
//!
//! Packets are indexed by `(tau, sigma)` where `tau` is a `K'gamma`-subset
//! of groups and `sigma` one of its members. Every group in `tau` maps the
//! packet, so each dataset element is mapped at `t = K gamma` nodes.
//!
//! Nothing in here touches floating point.

use std::fmt;

use itertools::Itertools;
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::ratio::{self, Rational};

pub type NodeId = usize;
pub type GroupId = usize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("infeasible: no admissible node count K'' <= {k} (L = {l}, gamma = {gamma}) has subpacketization <= S_max = {s_max}")]
    Infeasible {
        k: usize,
        l: usize,
        gamma: String,
        s_max: BigUint,
    },
}

/// The tuple `(K, L, gamma, S_max, Tc)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemParams {
    k: usize,
    l: usize,
    gamma: Rational,
    s_max: Option<BigUint>,
    tc: Rational,
    functions: Option<usize>,
}

impl SystemParams {
    /// Validates `L | K` and `gamma in {1/K', 2/K', ..., 1}`.
    pub fn new(k: usize, l: usize, gamma: Rational) -> Result<Self, PlanError> {
        if k == 0 {
            return Err(PlanError::InvalidParams("K must be positive".into()));
        }
        if l == 0 {
            return Err(PlanError::InvalidParams("L must be positive".into()));
        }
        if k % l != 0 {
            return Err(PlanError::InvalidParams(format!("L must divide K (K = {k}, L = {l})")));
        }
        if !ratio::is_unit_interval(&gamma) {
            return Err(PlanError::InvalidParams(format!(
                "gamma must lie in (0, 1], got {}",
                ratio::to_pq(&gamma)
            )));
        }
        let k_prime = k / l;
        let per_packet = &gamma * ratio::int(k_prime);
        if !per_packet.is_integer() {
            return Err(PlanError::InvalidParams(format!(
                "gamma must be a multiple of 1/K' = 1/{k_prime} (equivalently t = K*gamma must be a multiple of L = {l}), got gamma = {}",
                ratio::to_pq(&gamma)
            )));
        }
        Ok(Self {
            k,
            l,
            gamma,
            s_max: None,
            tc: Rational::one(),
            functions: None,
        })
    }

    /// Builds parameters from the integer redundancy `t = K gamma`.
    pub fn from_redundancy(k: usize, l: usize, t: usize) -> Result<Self, PlanError> {
        if k == 0 {
            return Err(PlanError::InvalidParams("K must be positive".into()));
        }
        if t == 0 || t > k {
            return Err(PlanError::InvalidParams(format!(
                "t must satisfy 1 <= t <= K (K = {k}, t = {t})"
            )));
        }
        Self::new(k, l, ratio::frac(t as u64, k as u64))
    }

    pub fn with_s_max(mut self, s_max: Option<BigUint>) -> Self {
        self.s_max = s_max;
        self
    }

    pub fn with_tc(mut self, tc: Rational) -> Self {
        self.tc = tc;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn gamma(&self) -> &Rational {
        &self.gamma
    }

    pub fn s_max(&self) -> Option<&BigUint> {
        self.s_max.as_ref()
    }

    pub fn tc(&self) -> &Rational {
        &self.tc
    }

    /// Number of groups, `K' = K / L`.
    pub fn k_prime(&self) -> usize {
        self.k / self.l
    }

    /// `K' gamma`: groups per packet, and receiving groups per coded slot.
    pub fn groups_per_packet(&self) -> usize {
        (&self.gamma * ratio::int(self.k_prime()))
            .to_integer()
            .to_usize()
            .expect("validated integer")
    }

    /// `t = K gamma`.
    pub fn redundancy(&self) -> usize {
        self.groups_per_packet() * self.l
    }

    /// Number of reduce functions in the whole job, `Q`. Equals `K` unless
    /// these parameters describe one batch of a larger system.
    pub fn function_count(&self) -> usize {
        self.functions.unwrap_or(self.k)
    }

    /// A batch of `k` nodes inside a system with `Q = self.function_count()`.
    pub fn batch(&self, k: usize) -> Result<Self, PlanError> {
        let mut batch = Self::new(k, self.l, self.gamma.clone())?.with_tc(self.tc.clone());
        batch.functions = Some(self.function_count());
        Ok(batch)
    }
}

/// `C(n, k)` with arbitrary precision.
pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// The groups `G_1, ..., G_K'`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    groups: Vec<Vec<NodeId>>,
}

impl GroupLayout {
    pub fn groups(&self) -> &[Vec<NodeId>] {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group_size(&self) -> usize {
        self.groups.first().map_or(0, Vec::len)
    }

    pub fn node_count(&self) -> usize {
        self.group_count() * self.group_size()
    }

    /// Members of group `g` (1-based), ascending.
    pub fn members(&self, g: GroupId) -> &[NodeId] {
        &self.groups[g - 1]
    }

    /// `G_g(j)`, with `j` 1-based.
    pub fn member(&self, g: GroupId, j: usize) -> NodeId {
        self.groups[g - 1][j - 1]
    }

    pub fn group_of(&self, node: NodeId) -> GroupId {
        (node - 1) % self.group_count() + 1
    }

    /// Position `j` (1-based) of `node` inside its group.
    pub fn position_of(&self, node: NodeId) -> usize {
        (node - 1) / self.group_count() + 1
    }
}

pub fn build_groups(params: &SystemParams) -> GroupLayout {
    let kp = params.k_prime();
    let groups = (1..=kp)
        .map(|i| (0..params.l()).map(|j| i + j * kp).collect())
        .collect();
    GroupLayout { groups }
}

/// Packet label `W_{tau, sigma}`. Ordering is lexicographic on `tau`, then
/// `sigma`, which is the canonical packet order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct PacketIndex {
    pub tau: Vec<GroupId>,
    pub sigma: GroupId,
}

impl PacketIndex {
    pub fn new(mut tau: Vec<GroupId>, sigma: GroupId) -> Self {
        tau.sort_unstable();
        debug_assert!(tau.contains(&sigma));
        Self { tau, sigma }
    }

    pub fn contains_group(&self, g: GroupId) -> bool {
        self.tau.binary_search(&g).is_ok()
    }

    /// Compact label, e.g. `12,1` for single digit group ids and `1.12,1`
    /// otherwise.
    pub fn label(&self) -> String {
        let sep = if self.tau.iter().all(|&g| g < 10) { "" } else { "." };
        format!("{},{}", self.tau.iter().join(sep), self.sigma)
    }
}

impl fmt::Display for PacketIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W_{{{}}}", self.label())
    }
}

/// All packet labels in canonical order (`tau` lexicographic, then
/// ascending `sigma`).
pub fn enumerate_packets(params: &SystemParams) -> Vec<PacketIndex> {
    let size = params.groups_per_packet();
    (1..=params.k_prime())
        .combinations(size)
        .flat_map(|tau| {
            tau.clone().into_iter().map(move |sigma| PacketIndex {
                tau: tau.clone(),
                sigma,
            })
        })
        .collect()
}

/// Dataset placement and reduce ownership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentPlan {
    layout: GroupLayout,
    packets: Vec<PacketIndex>,
    per_group: Vec<Vec<PacketIndex>>,
    reducer_of_node: Vec<usize>,
}

impl AssignmentPlan {
    pub fn layout(&self) -> &GroupLayout {
        &self.layout
    }

    /// Every packet, canonical order.
    pub fn packets(&self) -> &[PacketIndex] {
        &self.packets
    }

    pub fn packet_count(&self) -> usize {
        self.packets.len()
    }

    /// `M_{G_g}` in canonical order.
    pub fn packets_of(&self, g: GroupId) -> &[PacketIndex] {
        &self.per_group[g - 1]
    }

    pub fn holds(&self, g: GroupId, packet: &PacketIndex) -> bool {
        self.per_group[g - 1].binary_search(packet).is_ok()
    }

    /// Reduce function owned by `node`.
    pub fn reducer_of(&self, node: NodeId) -> usize {
        self.reducer_of_node[node - 1]
    }

    /// Reduce functions owned by this plan's nodes, by node.
    pub fn reducers(&self) -> &[usize] {
        &self.reducer_of_node
    }

    /// Shifts reduce ownership so node `k` owns `k + offset`; used when the
    /// plan covers one batch of a larger system.
    pub fn with_reducer_offset(mut self, offset: usize) -> Self {
        self.reducer_of_node = (1..=self.layout.node_count()).map(|k| k + offset).collect();
        self
    }

    /// Packets whose intermediate values `node` must receive.
    pub fn needs_of(&self, node: NodeId) -> impl Iterator<Item = &PacketIndex> + '_ {
        let g = self.layout.group_of(node);
        self.packets.iter().filter(move |p| !self.holds(g, p))
    }
}

/// `M_{G_i} = { W_{tau,sigma} : i in tau }`; node `k` reduces function `k`.
pub fn assign(layout: &GroupLayout, packets: &[PacketIndex]) -> AssignmentPlan {
    let per_group = (1..=layout.group_count())
        .map(|g| {
            let mut held: Vec<PacketIndex> = packets.iter().filter(|p| p.contains_group(g)).cloned().collect();
            held.sort();
            held
        })
        .collect();
    let mut sorted = packets.to_vec();
    sorted.sort();
    AssignmentPlan {
        layout: layout.clone(),
        packets: sorted,
        per_group,
        reducer_of_node: (1..=layout.node_count()).collect(),
    }
}

/// Convenience: layout, packets and assignment in one call.
pub fn plan(params: &SystemParams) -> AssignmentPlan {
    assign(&build_groups(params), &enumerate_packets(params))
}

/// `S = K'gamma * C(K', K'gamma)`.
pub fn subpacketization(k: usize, l: usize, gamma: &Rational) -> Result<BigUint, PlanError> {
    let params = SystemParams::new(k, l, gamma.clone())?;
    Ok(subpacketization_of(&params))
}

pub fn subpacketization_of(params: &SystemParams) -> BigUint {
    let per = params.groups_per_packet();
    BigUint::from(per) * binomial(params.k_prime(), per)
}

/// Largest admissible node count and the resulting effective speedup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Speedup {
    /// `K_bar_L`: nodes that can be encoded over at a time.
    pub k_bar: usize,
    /// `t_bar_L = gamma * K_bar_L`.
    pub t_bar: Rational,
}

/// Largest `K'' <= K` with `L | K''`, `K'' gamma / L` a positive integer and
/// subpacketization at most `s_max`.
pub fn feasible_speedup(k: usize, gamma: &Rational, l: usize, s_max: &BigUint) -> Result<Speedup, PlanError> {
    if l == 0 || k == 0 {
        return Err(PlanError::InvalidParams("K and L must be positive".into()));
    }
    if !ratio::is_unit_interval(gamma) {
        return Err(PlanError::InvalidParams(format!(
            "gamma must lie in (0, 1], got {}",
            ratio::to_pq(gamma)
        )));
    }
    let k_bar = (1..=k)
        .rev()
        .filter(|&kk| kk % l == 0)
        .filter_map(|kk| SystemParams::new(kk, l, gamma.clone()).ok())
        .find(|p| subpacketization_of(p) <= *s_max)
        .map(|p| p.k());
    match k_bar {
        Some(k_bar) => Ok(Speedup {
            k_bar,
            t_bar: gamma * ratio::int(k_bar),
        }),
        None => Err(PlanError::Infeasible {
            k,
            l,
            gamma: ratio::to_pq(gamma),
            s_max: s_max.clone(),
        }),
    }
}

/// Effective speedup for `params`, with or without grouping. Without a cap
/// the speedup is simply `K gamma`.
pub fn effective_speedup(params: &SystemParams, grouped: bool) -> Result<Speedup, PlanError> {
    let l = if grouped { params.l() } else { 1 };
    match params.s_max() {
        Some(cap) => feasible_speedup(params.k(), params.gamma(), l, cap),
        None => Ok(Speedup {
            k_bar: params.k(),
            t_bar: params.gamma() * ratio::int(params.k()),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Scheme {
    Uncoded,
    Cmr,
    Gcmr,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Uncoded, Scheme::Cmr, Scheme::Gcmr];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Uncoded => "uncoded",
            Scheme::Cmr => "cmr",
            Scheme::Gcmr => "gcmr",
        }
    }
}

/// Shuffle delay in absolute time (already multiplied by `Tc`).
pub fn shuffle_delay_closed_form(scheme: Scheme, params: &SystemParams) -> Result<Rational, PlanError> {
    let one_minus_gamma = Rational::one() - params.gamma();
    if one_minus_gamma.is_zero() {
        return Ok(Rational::zero());
    }
    let base = one_minus_gamma * params.tc();
    match scheme {
        Scheme::Uncoded => Ok(base),
        Scheme::Cmr => Ok(base / effective_speedup(params, false)?.t_bar),
        Scheme::Gcmr => Ok(base / effective_speedup(params, true)?.t_bar),
    }
}

/// `fixed + per_unit * x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineCost {
    pub fixed: Rational,
    pub per_unit: Rational,
}

impl AffineCost {
    pub fn new(fixed: Rational, per_unit: Rational) -> Self {
        Self { fixed, per_unit }
    }

    pub fn linear(per_unit: Rational) -> Self {
        Self::new(Rational::zero(), per_unit)
    }

    pub fn eval(&self, volume: &Rational) -> Rational {
        &self.fixed + &self.per_unit * volume
    }
}

/// `T_map(gamma F) + T_shuffle + T_red(F / K)` for the selected scheme.
pub fn total_execution_time(
    scheme: Scheme,
    params: &SystemParams,
    dataset_size: &Rational,
    map_cost: &AffineCost,
    reduce_cost: &AffineCost,
) -> Result<Rational, PlanError> {
    let map = map_cost.eval(&(params.gamma() * dataset_size));
    let reduce = reduce_cost.eval(&(dataset_size / ratio::int(params.k())));
    Ok(map + shuffle_delay_closed_form(scheme, params)? + reduce)
}

/// Everything the planner can say about a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanSummary {
    pub subpacketization: BigUint,
    pub cmr_subpacketization: BigUint,
    pub cmr: Result<Speedup, PlanError>,
    pub gcmr: Speedup,
    pub delay_uncoded: Rational,
    pub delay_cmr: Result<Rational, PlanError>,
    pub delay_gcmr: Rational,
}

/// Fails only if the grouped scheme itself is infeasible; an infeasible
/// ungrouped baseline is reported inside the summary.
pub fn summarize(params: &SystemParams) -> Result<PlanSummary, PlanError> {
    let gcmr = effective_speedup(params, true)?;
    let cmr_params = SystemParams::new(params.k(), 1, params.gamma().clone())?;
    Ok(PlanSummary {
        subpacketization: subpacketization_of(params),
        cmr_subpacketization: subpacketization_of(&cmr_params),
        cmr: effective_speedup(params, false),
        gcmr,
        delay_uncoded: shuffle_delay_closed_form(Scheme::Uncoded, params)?,
        delay_cmr: shuffle_delay_closed_form(Scheme::Cmr, params),
        delay_gcmr: shuffle_delay_closed_form(Scheme::Gcmr, params)?,
    })
}

/// All valid `gamma` for `(K, L)`: `1/K', 2/K', ..., 1`.
pub fn valid_gammas(k: usize, l: usize) -> Vec<Rational> {
    if l == 0 || k % l != 0 {
        return Vec::new();
    }
    let kp = k / l;
    (1..=kp).map(|m| ratio::frac(m as u64, kp as u64)).collect()
}
