//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use gcmr_core::linalg::dot;
use gcmr_core::mapreduce::{Dataset, JobRegistry};
use gcmr_core::pipeline::{self, OracleCheck, RunSpec};
use gcmr_core::planner::{self, build_groups, enumerate_packets, feasible_speedup, PacketIndex, Scheme, SystemParams};
use gcmr_core::ratio::{frac, int, to_pq, Rational};
use gcmr_core::shuffle::{build_schedule, delay, schedule, verify_coverage, Channel, ChannelConfig, ChannelMode};
use gcmr_core::uneven::{effective_gain, parse_profile};
use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{One, Zero};
use rayon::prelude::*;

type Check = Result<String, String>;
type Criterion = fn() -> Check;

const FIXTURE: &str = gcmr_core::uneven::TERASORT_K3_PROFILE;

/// Points above this many packets are checked by counting, not enumeration.
const ENUMERATE_UP_TO: u32 = 20_000;
/// Largest subpacketization moved end to end in criterion 5.
const TRANSPORT_UP_TO: u32 = 128;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

/// `(1 - gamma) / (K gamma) Tc`, straight from the parameters.
fn coded_target(params: &SystemParams) -> Rational {
    if params.gamma().is_one() {
        return Rational::zero();
    }
    (Rational::one() - params.gamma()) / (int(params.k()) * params.gamma()) * params.tc()
}

fn p(label: &str) -> PacketIndex {
    let (tau, sigma) = label.split_once(',').unwrap();
    PacketIndex::new(
        tau.bytes().map(|b| (b - b'0') as usize).collect(),
        sigma.parse().unwrap(),
    )
}

fn golden_instance() -> Check {
    let start = Instant::now();
    let params = SystemParams::from_redundancy(32, 8, 16).map_err(|e| e.to_string())?;
    let layout = build_groups(&params);
    let groups: Vec<Vec<usize>> = (1..=4).map(|g| (0..8).map(|j| g + 4 * j).collect()).collect();
    ensure(layout.groups() == groups.as_slice(), || {
        format!("groups {:?}", layout.groups())
    })?;
    ensure(layout.groups()[0] == [1, 5, 9, 13, 17, 21, 25, 29], || "G_1".into())?;

    let labels = [
        "12,1", "12,2", "13,1", "13,3", "14,1", "14,4", "23,2", "23,3", "24,2", "24,4", "34,3", "34,4",
    ];
    let expected: Vec<PacketIndex> = labels.iter().map(|l| p(l)).collect();
    let packets = enumerate_packets(&params);
    ensure(packets == expected, || format!("packets {packets:?}"))?;

    let plan = planner::plan(&params);
    let m = [
        ["12,1", "12,2", "13,1", "13,3", "14,1", "14,4"],
        ["12,1", "12,2", "23,2", "23,3", "24,2", "24,4"],
        ["13,1", "13,3", "23,2", "23,3", "34,3", "34,4"],
        ["14,1", "14,4", "24,2", "24,4", "34,3", "34,4"],
    ];
    for (g, row) in m.iter().enumerate() {
        let want: Vec<PacketIndex> = row.iter().map(|l| p(l)).collect();
        ensure(plan.packets_of(g + 1) == want.as_slice(), || format!("M_G{}", g + 1))?;
    }

    // (transmitter, receiver, packet) for the twelve listed transmissions
    let listing = [
        (1, [(2, "13,1"), (3, "12,1")]),
        (1, [(2, "14,1"), (4, "12,1")]),
        (1, [(3, "14,1"), (4, "13,1")]),
        (2, [(1, "23,2"), (3, "12,2")]),
        (2, [(1, "24,2"), (4, "12,2")]),
        (2, [(3, "24,2"), (4, "23,2")]),
        (3, [(1, "23,3"), (2, "13,3")]),
        (3, [(1, "34,3"), (4, "13,3")]),
        (3, [(2, "34,3"), (4, "23,3")]),
        (4, [(1, "24,4"), (2, "14,4")]),
        (4, [(1, "34,4"), (3, "14,4")]),
        (4, [(2, "34,4"), (3, "24,4")]),
    ];
    let want: BTreeSet<(usize, Vec<(usize, PacketIndex)>)> = listing
        .iter()
        .map(|(tx, rx)| (*tx, rx.iter().map(|(g, l)| (*g, p(l))).collect()))
        .collect();
    let sched = build_schedule(&plan, &params);
    let got: BTreeSet<(usize, Vec<(usize, PacketIndex)>)> = sched
        .slots()
        .iter()
        .map(|s| (s.transmitter, s.receivers().map(|g| (g, s.packet_for(g))).collect()))
        .collect();
    ensure(sched.len() == 12 && got == want, || {
        format!("schedule has {} slots, pattern differs", sched.len())
    })?;
    let served: BTreeSet<usize> = sched
        .slots()
        .iter()
        .map(|s| s.receivers().map(|g| layout.members(g).len()).sum())
        .collect();
    ensure(served == BTreeSet::from([16]), || format!("served per slot {served:?}"))?;
    let report = delay::coded_report_enumerated(&plan, &params);
    ensure(report.nodes_served_per_slot == 16, || "report served".into())?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "S=12, 4 groups, 12 slots, 16 served/slot in {:?}",
        start.elapsed()
    ))
}

fn reconciliation_grid() -> Check {
    let start = Instant::now();
    let points = common::grid(64);
    let mut enumerated = 0;
    for params in &points {
        let s = planner::subpacketization_of(params);
        let report = if s <= BigUint::from(ENUMERATE_UP_TO) {
            enumerated += 1;
            delay::coded_report_enumerated(&planner::plan(params), params)
        } else {
            delay::coded_report_counted(params)
        };
        let target = coded_target(params);
        ensure(report.even_delay == target, || {
            format!(
                "K={} L={} gamma={}: {} != {}",
                params.k(),
                params.l(),
                to_pq(params.gamma()),
                to_pq(&report.even_delay),
                to_pq(&target)
            )
        })?;
        ensure(report.closed_form == target, || "closed form".into())?;
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "{} points ({enumerated} enumerated) in {:?}",
        points.len(),
        start.elapsed()
    ))
}

fn uncoded_baseline() -> Check {
    let start = Instant::now();
    let points = common::grid(64);
    for params in &points {
        let s = planner::subpacketization_of(params);
        let report = if s <= BigUint::from(ENUMERATE_UP_TO) {
            delay::uncoded_report_enumerated(&planner::plan(params), params)
        } else {
            delay::uncoded_report_counted(params)
        };
        let target = (Rational::one() - params.gamma()) * params.tc();
        ensure(report.even_delay == target, || {
            format!(
                "K={} L={} gamma={}: {}",
                params.k(),
                params.l(),
                to_pq(params.gamma()),
                to_pq(&report.even_delay)
            )
        })?;
        // K (1 - gamma) S unicasts
        let unicasts = (int(params.k()) * (Rational::one() - params.gamma()) * int(s.clone())).to_integer();
        ensure(report.slot_count == unicasts.to_biguint().unwrap(), || {
            "unicast count".into()
        })?;
    }
    Ok(format!("{} points in {:?}", points.len(), start.elapsed()))
}

/// Largest admissible K'' <= K by exhaustive search with factorial binomials.
fn argmax_oracle(k: usize, gamma: &Rational, l: usize, cap: u64) -> Option<usize> {
    (1..=k)
        .filter(|&kk| kk % l == 0)
        .filter(|&kk| {
            let per = gamma * int(kk / l);
            per.is_integer() && per >= Rational::one()
        })
        .filter(|&kk| {
            let per = (gamma * int(kk / l)).to_integer();
            let per: usize = per.try_into().unwrap();
            BigUint::from(per) * common::choose(kk / l, per) <= BigUint::from(cap)
        })
        .max()
}

fn constrained_speedup() -> Check {
    let gamma = frac(1, 2);
    let cap = BigUint::from(12u32);
    let cmr = feasible_speedup(32, &gamma, 1, &cap).map_err(|e| e.to_string())?;
    let gcmr = feasible_speedup(32, &gamma, 8, &cap).map_err(|e| e.to_string())?;
    ensure(cmr.t_bar == int(2) && cmr.k_bar == 4, || format!("L=1: {cmr:?}"))?;
    ensure(gcmr.t_bar == int(16) && gcmr.k_bar == 32, || format!("L=8: {gcmr:?}"))?;
    ensure(Some(cmr.k_bar) == argmax_oracle(32, &gamma, 1, 12), || {
        "oracle L=1".into()
    })?;
    ensure(Some(gcmr.k_bar) == argmax_oracle(32, &gamma, 8, 12), || {
        "oracle L=8".into()
    })?;
    ensure(&gcmr.t_bar / &cmr.t_bar == int(8), || "gain".into())?;
    let params = SystemParams::new(32, 8, gamma.clone()).unwrap().with_s_max(Some(cap));
    let d_cmr = planner::shuffle_delay_closed_form(Scheme::Cmr, &params).map_err(|e| e.to_string())?;
    let d_gcmr = planner::shuffle_delay_closed_form(Scheme::Gcmr, &params).map_err(|e| e.to_string())?;
    ensure(d_cmr == frac(1, 4) && d_gcmr == frac(1, 32), || "delays".into())?;
    // same oracle over a wider sweep
    for k in 1..=40 {
        for l in [1, 2, 4, 8] {
            for g in planner::valid_gammas(k, l) {
                for cap in [1u64, 6, 12, 60, 500] {
                    let got = feasible_speedup(k, &g, l, &BigUint::from(cap)).ok().map(|s| s.k_bar);
                    ensure(got == argmax_oracle(k, &g, l, cap), || {
                        format!("K={k} L={l} gamma={g} cap={cap}")
                    })?;
                }
            }
        }
    }
    Ok("t_bar=2 (L=1), t_bar_L=16 (L=8), gain 8; argmax oracle agrees on sweep".into())
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let points: Vec<SystemParams> = common::small_points(32, TRANSPORT_UP_TO);
    let jobs = ["word-count", "sort-bucket", "sum"];
    let modes = [ChannelMode::Wireless, ChannelMode::Wired];
    let registry = JobRegistry::with_builtins();
    let mut cases = Vec::new();
    for (pi, params) in points.iter().enumerate() {
        for job in jobs {
            for mode in modes {
                for seed in 0..20u64 {
                    cases.push((pi, params, job, mode, seed));
                }
            }
        }
    }
    let failures: Vec<String> = cases
        .par_iter()
        .filter_map(|&(pi, params, job, mode, seed)| {
            let s: usize = planner::subpacketization_of(params).try_into().unwrap();
            let salt = (pi as u64) << 32 | seed;
            let records = s + (salt as usize * 7) % (3 * s + 5);
            let spec = RunSpec {
                params: params.clone(),
                job: registry.get(job).unwrap(),
                dataset: Dataset::synthetic(records, 1 + seed as usize % 6, salt),
                channel: ChannelConfig::new(mode, salt),
            };
            let tag = || {
                format!(
                    "K={} L={} gamma={} {job} {mode:?} seed {seed}",
                    params.k(),
                    params.l(),
                    to_pq(params.gamma())
                )
            };
            match pipeline::run(&spec) {
                Ok(out) if out.oracle == OracleCheck::Matched && out.reduce_failures.is_empty() => None,
                Ok(out) => Some(format!("{}: {:?}", tag(), out.oracle)),
                Err(e) => Some(format!("{}: {e}", tag())),
            }
        })
        .collect();
    ensure(failures.is_empty(), || {
        format!("{} mismatches, first: {}", failures.len(), failures[0])
    })?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "{} runs over {} points (S <= {TRANSPORT_UP_TO}) in {:?}",
        cases.len(),
        points.len(),
        start.elapsed()
    ))
}

fn zf_identity() -> Check {
    let mut worst = 0f64;
    let mut draws = 0;
    for l in 1..=8usize {
        let mut channel = Channel::new(ChannelConfig::new(ChannelMode::Wireless, 1000 + l as u64), 2, l)
            .map_err(|e| e.to_string())?;
        for _ in 0..125 {
            let link = channel.draw_link(1, 2).map_err(|e| e.to_string())?;
            let cond = link.h.norm_inf() * link.h_inv.norm_inf();
            ensure(cond <= 1e4, || format!("condition {cond}"))?;
            for j in 0..l {
                // h_{G_p(j)}^T H^{-1}, column by column
                for c in 0..l {
                    let col: Vec<Complex64> = (0..l).map(|r| link.h_inv[(r, c)]).collect();
                    let want = if c == j {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    let err = dot(link.h.row(j), &col) - want;
                    worst = worst.max(err.re.abs()).max(err.im.abs());
                }
            }
            draws += 1;
        }
    }
    ensure(draws == 1000 && worst < 1e-9, || {
        format!("max residual {worst:e} over {draws} draws")
    })?;
    Ok(format!("max residual {worst:.2e} over {draws} draws, L = 1..8"))
}

fn coverage() -> Check {
    let mut checked = 0;
    for kp in 1..=8usize {
        for l in [1usize, 2, 3] {
            for gamma in planner::valid_gammas(kp * l, l) {
                let params = SystemParams::new(kp * l, l, gamma).unwrap();
                let plan = planner::plan(&params);
                let sched = build_schedule(&plan, &params);
                let report = verify_coverage(&plan, &sched);
                ensure(report.is_clean(), || {
                    format!("K'={kp} L={l}: {} violations", report.violation_count())
                })?;
                // independent audit: replay every slot against raw tau membership
                let mut delivered: BTreeMap<(usize, PacketIndex), usize> = BTreeMap::new();
                for slot in sched.slots() {
                    for rx in slot.receivers() {
                        let packet = slot.packet_for(rx);
                        ensure(
                            packet.tau.contains(&slot.transmitter) && !packet.tau.contains(&rx),
                            || "ownership".into(),
                        )?;
                        for other in slot.receivers().filter(|&g| g != rx) {
                            ensure(packet.tau.contains(&other), || "bystander cannot cancel".into())?;
                        }
                        for j in 0..l {
                            *delivered.entry((rx + j * kp, packet.clone())).or_default() += 1;
                        }
                    }
                }
                let mut needs = BTreeSet::new();
                for node in 1..=kp * l {
                    let g = (node - 1) % kp + 1;
                    for packet in plan.packets() {
                        if !packet.tau.contains(&g) {
                            needs.insert((node, packet.clone()));
                        }
                    }
                }
                ensure(delivered.values().all(|&c| c == 1), || "duplicate delivery".into())?;
                ensure(delivered.keys().cloned().collect::<BTreeSet<_>>() == needs, || {
                    format!("K'={kp} L={l}: needs differ")
                })?;
                checked += 1;
            }
        }
    }
    // tamper check: deleting a slot with K' gamma = 1 leaves exactly L holes
    let params = SystemParams::new(12, 3, frac(1, 4)).unwrap();
    let plan = planner::plan(&params);
    let tampered = build_schedule(&plan, &params).without_slot(0);
    let report = verify_coverage(&plan, &tampered);
    ensure(report.missing.len() == 3 && report.violation_count() == 3, || {
        "tamper".into()
    })?;
    Ok(format!("{checked} configurations clean; tampered schedule flagged"))
}

fn terasort_fixture() -> Check {
    let doc = parse_profile(FIXTURE).map_err(|e| e.to_string())?;
    let t = doc.theoretical_gain.clone().ok_or("fixture lacks t")?;
    let report = effective_gain(&doc.slots, &doc.needs, &doc.profile, t).map_err(|e| e.to_string())?;
    ensure(report.uncoded_delay == frac(1, 3), || to_pq(&report.uncoded_delay))?;
    ensure(report.coded_delay_padded == frac(5, 24), || {
        to_pq(&report.coded_delay_padded)
    })?;
    ensure(report.effective_gain == frac(8, 5), || to_pq(&report.effective_gain))?;
    ensure(report.theoretical_gain == int(2), || "t".into())?;
    Ok("uncoded 1/3, coded 5/24, gain 8/5 vs t = 2".into())
}

fn degeneracy() -> Check {
    let mut checked = 0;
    for k in 1..=16usize {
        for gamma in planner::valid_gammas(k, 1) {
            let params = SystemParams::new(k, 1, gamma.clone()).unwrap();
            let t: usize = (&gamma * int(k)).to_integer().try_into().unwrap();
            let s = common::factorial(k) / (common::factorial(t) * common::factorial(k - t)) * BigUint::from(t);
            ensure(planner::subpacketization_of(&params) == s, || format!("K={k} t={t} S"))?;
            let plan = planner::plan(&params);
            ensure(BigUint::from(plan.packet_count()) == s, || "enumerated S".into())?;
            let slots = BigUint::from(build_schedule(&plan, &params).len());
            ensure(slots == schedule::slot_count(&params), || "slot count".into())?;
            let even = delay::coded_report(&params, slots).even_delay;
            ensure(even == coded_target(&params), || {
                format!("K={k} t={t}: {}", to_pq(&even))
            })?;
            let cmr = planner::shuffle_delay_closed_form(Scheme::Cmr, &params).map_err(|e| e.to_string())?;
            ensure(cmr == even, || "CMR closed form".into())?;
            checked += 1;
        }
    }
    Ok(format!("{checked} (K, t) pairs with K <= 16"))
}

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("golden instance", golden_instance),
        ("delay reconciliation", reconciliation_grid),
        ("uncoded baseline", uncoded_baseline),
        ("constrained speedup", constrained_speedup),
        ("end-to-end correctness", end_to_end),
        ("zero-forcing identity", zf_identity),
        ("exactly-once coverage", coverage),
        ("uneven sizes fixture", terasort_fixture),
        ("single-node groups", degeneracy),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
