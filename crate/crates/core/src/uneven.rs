//! Zero-padding losses from unevenly sized intermediate values.
//!
//! Coded slots combine several values into one transmission, so each slot
//! costs as much as its largest member. Unicast pays exactly the sum of what
//! is needed. Sizes are fractions of the dataset, so costs read directly as
//! multiples of `Tc`.
//!
//! Profile files are line oriented; `#` starts a comment:
//!
//! ```text
//! t 2                  # theoretical gain (optional)
//! 3 1 1/12             # size row: q, packet id, size as a fraction
//! slot 2:1 3:3         # a coded slot, members as q:packet
//! need 2:1             # values that must be delivered
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_traits::{One, Zero};

use crate::mapreduce::{split_dataset, Dataset, Job};
use crate::planner::{AssignmentPlan, SystemParams};
use crate::ratio::{self, Rational};
use crate::shuffle::Schedule;

/// The worked K = 3, t = 2 sorting example with skewed value sizes.
pub const TERASORT_K3_PROFILE: &str = include_str!("../fixtures/paper-terasort-k3.profile");

/// `(q, packet id)`.
pub type ValueId = (usize, String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UnevenError {
    #[error("slot has no members")]
    EmptySlot,
    #[error("coverage mismatch{}: {kind} {}:{}", .slot.map(|s| format!(" in slot {s}")).unwrap_or_default(), .value.0, .value.1)]
    CoverageMismatch {
        slot: Option<usize>,
        value: ValueId,
        kind: MismatchKind,
    },
    #[error("no size known for {}:{}", .0.0, .0.1)]
    UnknownValue(ValueId),
    #[error("nothing to shuffle: every needed value is empty")]
    NothingToShuffle,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    MapReduce(#[from] crate::mapreduce::MapReduceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MismatchKind {
    Missing,
    Duplicate,
    Unneeded,
}

impl std::fmt::Display for MismatchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MismatchKind::Missing => "need not covered by any slot",
            MismatchKind::Duplicate => "value delivered more than once",
            MismatchKind::Unneeded => "slot carries a value nobody needs",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSource {
    Explicit,
    Measured,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeProfile {
    sizes: BTreeMap<ValueId, Rational>,
    pub source: ProfileSource,
}

impl SizeProfile {
    pub fn new(source: ProfileSource) -> Self {
        Self {
            sizes: BTreeMap::new(),
            source,
        }
    }

    pub fn insert(&mut self, q: usize, packet: impl Into<String>, size: Rational) {
        assert!(size >= Rational::zero(), "sizes are nonnegative");
        self.sizes.insert((q, packet.into()), size);
    }

    pub fn size(&self, id: &ValueId) -> Result<&Rational, UnevenError> {
        self.sizes.get(id).ok_or_else(|| UnevenError::UnknownValue(id.clone()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ValueId, &Rational)> {
        self.sizes.iter()
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Total size of each packet's values.
    pub fn packet_volumes(&self) -> BTreeMap<&str, Rational> {
        let mut out: BTreeMap<&str, Rational> = BTreeMap::new();
        for ((_, packet), size) in &self.sizes {
            *out.entry(packet.as_str()).or_insert_with(Rational::zero) += size;
        }
        out
    }
}

/// Values combined into one transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedSlot {
    pub members: Vec<ValueId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GainReport {
    pub uncoded_delay: Rational,
    pub coded_delay_padded: Rational,
    pub effective_gain: Rational,
    pub theoretical_gain: Rational,
    /// Zero padding per slot: member count times cost, minus their sizes.
    pub slot_waste: Vec<Rational>,
}

/// Cost of a coded slot: its largest member.
pub fn padded_slot_cost(sizes: &[Rational]) -> Result<Rational, UnevenError> {
    sizes.iter().max().cloned().ok_or(UnevenError::EmptySlot)
}

/// Compares unicast delay (sum of needs) with the padded coded delay.
pub fn effective_gain(
    slots: &[CodedSlot],
    needs: &[ValueId],
    profile: &SizeProfile,
    theoretical_gain: Rational,
) -> Result<GainReport, UnevenError> {
    let mut remaining: BTreeSet<&ValueId> = BTreeSet::new();
    for need in needs {
        if !remaining.insert(need) {
            return Err(UnevenError::CoverageMismatch {
                slot: None,
                value: need.clone(),
                kind: MismatchKind::Duplicate,
            });
        }
    }
    let needed: BTreeSet<&ValueId> = remaining.clone();
    let mut coded = Rational::zero();
    let mut slot_waste = Vec::with_capacity(slots.len());
    for (idx, slot) in slots.iter().enumerate() {
        let mut sizes = Vec::with_capacity(slot.members.len());
        for member in &slot.members {
            if !remaining.remove(member) {
                let kind = if needed.contains(member) {
                    MismatchKind::Duplicate
                } else {
                    MismatchKind::Unneeded
                };
                return Err(UnevenError::CoverageMismatch {
                    slot: Some(idx),
                    value: member.clone(),
                    kind,
                });
            }
            sizes.push(profile.size(member)?.clone());
        }
        let cost = padded_slot_cost(&sizes)?;
        let useful: Rational = sizes.iter().sum();
        slot_waste.push(&cost * ratio::int(sizes.len()) - useful);
        coded += cost;
    }
    if let Some(missing) = remaining.into_iter().next() {
        return Err(UnevenError::CoverageMismatch {
            slot: None,
            value: missing.clone(),
            kind: MismatchKind::Missing,
        });
    }
    let mut uncoded = Rational::zero();
    for need in needs {
        uncoded += profile.size(need)?;
    }
    if coded.is_zero() {
        return Err(UnevenError::NothingToShuffle);
    }
    Ok(GainReport {
        effective_gain: &uncoded / &coded,
        uncoded_delay: uncoded,
        coded_delay_padded: coded,
        theoretical_gain,
        slot_waste,
    })
}

/// Coded slots of the grouped scheme: every receiving node of a slot gets one
/// value, all combined into one transmission.
pub fn gcmr_slots(plan: &AssignmentPlan, schedule: &Schedule) -> Vec<CodedSlot> {
    schedule
        .slots()
        .iter()
        .map(|slot| CodedSlot {
            members: slot
                .receivers()
                .flat_map(|rx| {
                    let label = slot.packet_for(rx).label();
                    plan.layout()
                        .members(rx)
                        .iter()
                        .map(move |&node| (plan.reducer_of(node), label.clone()))
                })
                .collect(),
        })
        .collect()
}

pub fn gcmr_needs(plan: &AssignmentPlan) -> Vec<ValueId> {
    (1..=plan.layout().node_count())
        .flat_map(|node| plan.needs_of(node).map(move |p| (plan.reducer_of(node), p.label())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasuredProfile {
    pub profile: SizeProfile,
    /// `max / mean` of each packet's value sizes, canonical packet order.
    pub per_packet_unevenness: Vec<(String, Rational)>,
    pub mean_unevenness: Rational,
}

/// Maps every packet under every function and records byte sizes as
/// fractions of the total mapped volume.
pub fn measure_profile(
    job: &dyn Job,
    dataset: &Dataset,
    plan: &AssignmentPlan,
) -> Result<MeasuredProfile, UnevenError> {
    let split = split_dataset(dataset, plan.packets())?;
    let functions = plan.layout().node_count();
    let mut raw: Vec<(String, Vec<(usize, usize)>)> = Vec::with_capacity(split.len());
    let mut total = 0usize;
    for (packet, content) in split.iter() {
        let sizes: Vec<(usize, usize)> = (1..=functions)
            .map(|q| (q, job.map(q, functions, content).len()))
            .collect();
        total += sizes.iter().map(|(_, s)| s).sum::<usize>();
        raw.push((packet.label(), sizes));
    }
    let mut profile = SizeProfile::new(ProfileSource::Measured);
    let mut per_packet = Vec::with_capacity(raw.len());
    for (label, sizes) in raw {
        let max = sizes.iter().map(|(_, s)| *s).max().unwrap_or(0);
        let sum: usize = sizes.iter().map(|(_, s)| s).sum();
        let unevenness = if sum == 0 {
            Rational::one()
        } else {
            ratio::frac((max * sizes.len()) as u64, sum as u64)
        };
        for (q, s) in sizes {
            let size = if total == 0 {
                Rational::zero()
            } else {
                ratio::frac(s as u64, total as u64)
            };
            profile.insert(q, label.clone(), size);
        }
        per_packet.push((label, unevenness));
    }
    let mean_unevenness = if per_packet.is_empty() {
        Rational::one()
    } else {
        per_packet.iter().map(|(_, u)| u).sum::<Rational>() / ratio::int(per_packet.len())
    };
    Ok(MeasuredProfile {
        profile,
        per_packet_unevenness: per_packet,
        mean_unevenness,
    })
}

/// Gain of the grouped scheme under a measured or explicit profile.
pub fn gcmr_gain(
    params: &SystemParams,
    plan: &AssignmentPlan,
    profile: &SizeProfile,
) -> Result<GainReport, UnevenError> {
    let schedule = crate::shuffle::build_schedule(plan, params);
    effective_gain(
        &gcmr_slots(plan, &schedule),
        &gcmr_needs(plan),
        profile,
        ratio::int(params.redundancy()),
    )
}

/// A parsed profile file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileDocument {
    pub profile: SizeProfile,
    pub theoretical_gain: Option<Rational>,
    pub slots: Vec<CodedSlot>,
    pub needs: Vec<ValueId>,
}

fn parse_value_id(tok: &str, line: usize) -> Result<ValueId, UnevenError> {
    let (q, packet) = tok.split_once(':').ok_or_else(|| UnevenError::Parse {
        line,
        msg: format!("expected q:packet, got {tok:?}"),
    })?;
    let q = q.parse().map_err(|_| UnevenError::Parse {
        line,
        msg: format!("bad function id {q:?}"),
    })?;
    Ok((q, packet.to_string()))
}

pub fn parse_profile(text: &str) -> Result<ProfileDocument, UnevenError> {
    let mut doc = ProfileDocument {
        profile: SizeProfile::new(ProfileSource::Explicit),
        theoretical_gain: None,
        slots: Vec::new(),
        needs: Vec::new(),
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks[0] {
            "t" => {
                let t = toks
                    .get(1)
                    .and_then(|s| ratio::parse(s))
                    .ok_or_else(|| UnevenError::Parse {
                        line,
                        msg: "t expects a number".into(),
                    })?;
                doc.theoretical_gain = Some(t);
            }
            "slot" => {
                let members = toks[1..]
                    .iter()
                    .map(|t| parse_value_id(t, line))
                    .collect::<Result<Vec<_>, _>>()?;
                if members.is_empty() {
                    return Err(UnevenError::Parse {
                        line,
                        msg: "empty slot".into(),
                    });
                }
                doc.slots.push(CodedSlot { members });
            }
            "need" => {
                for t in &toks[1..] {
                    doc.needs.push(parse_value_id(t, line)?);
                }
            }
            _ => {
                if toks.len() != 3 {
                    return Err(UnevenError::Parse {
                        line,
                        msg: format!("expected `q packet size`, got {content:?}"),
                    });
                }
                let q = toks[0].parse().map_err(|_| UnevenError::Parse {
                    line,
                    msg: format!("bad function id {:?}", toks[0]),
                })?;
                let size = ratio::parse(toks[2])
                    .filter(|s| *s >= Rational::zero())
                    .ok_or_else(|| UnevenError::Parse {
                        line,
                        msg: format!("bad size {:?}", toks[2]),
                    })?;
                doc.profile.insert(q, toks[1], size);
            }
        }
    }
    Ok(doc)
}

/// Size rows only, in key order.
pub fn profile_to_text(profile: &SizeProfile) -> String {
    let mut out = String::from("# q packet size\n");
    for ((q, packet), size) in profile.iter() {
        writeln!(out, "{q} {packet} {}", ratio::to_pq(size)).unwrap();
    }
    out
}
