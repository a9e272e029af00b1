use std::fmt::Write as _;
use std::sync::Arc;

use anyhow::Context;
use num_bigint::BigUint;
use num_traits::Zero;

use gcmr_core::mapreduce::{Dataset, JobRegistry, MapReduceError};
use gcmr_core::pipeline::{self, OracleCheck, PipelineError, RunSpec};
use gcmr_core::planner::{self, PlanSummary, SystemParams};
use gcmr_core::ratio::{self, pretty, to_f64, to_pq, Rational};
use gcmr_core::shuffle::{build_schedule, verify_coverage, ChannelConfig, ShuffleError};
use gcmr_core::uneven::{self, CodedSlot, GainReport, UnevenError};

use crate::config::{self, Settings};
use crate::Exit;

/// Runs above this subpacketization would not fit in memory.
const MAX_SIMULATED_PACKETS: u32 = 1_000_000;

pub const SWEEP_HEADER: &str = "K,L,gamma,S,K_bar_L,t_bar_L,delay_uncoded,delay_cmr,delay_gcmr,\
delay_uncoded_f64,delay_cmr_f64,delay_gcmr_f64,S_max";

fn write_file(path: &str, contents: &str) -> Result<(), Exit> {
    std::fs::write(path, contents).with_context(|| format!("writing {path}"))?;
    Ok(())
}

/// Prints the report and copies it to `--out` when given.
fn emit(s: &Settings, report: &str) -> Result<(), Exit> {
    print!("{report}");
    if let Some(path) = s.raw("out") {
        write_file(path, report)?;
    }
    Ok(())
}

fn smax_text(cap: Option<&BigUint>) -> String {
    cap.map_or_else(|| "inf".to_string(), BigUint::to_string)
}

fn plan_report(params: &SystemParams, summary: &PlanSummary) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "K = {}, L = {}, K' = {}, t = {}, gamma = {}",
        params.k(),
        params.l(),
        params.k_prime(),
        params.redundancy(),
        to_pq(params.gamma())
    )
    .unwrap();
    writeln!(
        out,
        "S_max = {}, Tc = {}",
        smax_text(params.s_max()),
        to_pq(params.tc())
    )
    .unwrap();
    writeln!(out, "S = {}", summary.subpacketization).unwrap();
    writeln!(out, "S without grouping = {}", summary.cmr_subpacketization).unwrap();
    match &summary.cmr {
        Ok(sp) => writeln!(out, "K_bar = {}, t_bar = {}", sp.k_bar, to_pq(&sp.t_bar)).unwrap(),
        Err(e) => writeln!(out, "K_bar: none ({e})").unwrap(),
    }
    writeln!(
        out,
        "K_bar_L = {}, t_bar_L = {}",
        summary.gcmr.k_bar,
        to_pq(&summary.gcmr.t_bar)
    )
    .unwrap();
    writeln!(out, "T_uncoded = {}", pretty(&summary.delay_uncoded)).unwrap();
    match &summary.delay_cmr {
        Ok(d) => writeln!(out, "T_CMR = {}", pretty(d)).unwrap(),
        Err(_) => writeln!(out, "T_CMR = infeasible").unwrap(),
    }
    writeln!(out, "T_GCMR = {}", pretty(&summary.delay_gcmr)).unwrap();
    out
}

pub fn plan(s: &Settings) -> Result<(), Exit> {
    let params = s.params()?;
    let summary = planner::summarize(&params).map_err(|e| Exit::config(e.to_string()))?;
    emit(s, &plan_report(&params, &summary))
}

fn load_dataset(s: &Settings, packets: usize) -> Result<Dataset, Exit> {
    if let Some(path) = s.raw("dataset") {
        return Dataset::from_path(path).map_err(|e| Exit::config(e.to_string()));
    }
    let (f, len) = match s.raw("synthetic") {
        Some(raw) => config::parse_synthetic(raw)?,
        None => (packets.max(1200), 8),
    };
    Ok(Dataset::synthetic(f, len, s.u64("seed")?))
}

fn pipeline_exit(e: PipelineError) -> Exit {
    match e {
        PipelineError::Plan(e) => Exit::config(e.to_string()),
        PipelineError::MapReduce(e @ MapReduceError::DatasetTooSmall { .. }) => Exit::config(e.to_string()),
        PipelineError::MapReduce(e) => Exit::new(Exit::DECODE, e.to_string()),
        PipelineError::Shuffle(e @ ShuffleError::DecodeFailure { .. }) => Exit::new(Exit::DECODE, e.to_string()),
        PipelineError::Shuffle(e) => Exit::new(1, e.to_string()),
    }
}

pub fn run(s: &Settings) -> Result<(), Exit> {
    let params = s.params()?;
    let k_bar = pipeline::batch_size(&params).map_err(|e| Exit::config(e.to_string()))?;
    let batch = params.batch(k_bar).map_err(|e| Exit::config(e.to_string()))?;
    let packets = planner::subpacketization_of(&batch);
    if packets > BigUint::from(MAX_SIMULATED_PACKETS) {
        return Err(Exit::config(format!(
            "subpacketization S = {packets} is too large to simulate; lower it with --smax"
        )));
    }
    let packets: usize = packets.try_into().expect("bounded above");

    let plan = planner::plan(&batch);
    let coverage = verify_coverage(&plan, &build_schedule(&plan, &batch));
    if !coverage.is_clean() {
        return Err(Exit::new(
            Exit::COVERAGE,
            format!(
                "schedule coverage audit found {} violations",
                coverage.violation_count()
            ),
        ));
    }

    let job = JobRegistry::with_builtins()
        .get(s.require("job")?)
        .map_err(|e| Exit::config(e.to_string()))?;
    let mut channel = ChannelConfig::new(s.mode()?, s.u64("seed")?);
    let noise = s.f64("noise")?;
    if noise > 0.0 {
        channel = channel.with_noise(noise, s.f64("power")?);
    }
    let spec = RunSpec {
        params: params.clone(),
        job: Arc::clone(&job),
        dataset: load_dataset(s, packets)?,
        channel,
    };
    let outcome = pipeline::run(&spec).map_err(pipeline_exit)?;

    let mut out = String::new();
    writeln!(
        out,
        "K = {}, L = {}, t = {}, gamma = {}, S_max = {}, job = {}, F = {}, mode = {}, seed = {}",
        params.k(),
        params.l(),
        params.redundancy(),
        to_pq(params.gamma()),
        smax_text(params.s_max()),
        job.name(),
        spec.dataset.len(),
        s.require("mode")?,
        s.require("seed")?
    )
    .unwrap();
    writeln!(
        out,
        "assign: S = {packets} per batch, {} batch(es) of {k_bar} nodes, {} leftover node(s)",
        outcome.batches.len(),
        outcome.leftover_nodes.len()
    )
    .unwrap();
    let mapped: usize = outcome.batches.iter().map(|b| b.mapped_values).sum();
    writeln!(out, "map: {mapped} intermediate values").unwrap();
    let report = &outcome.coded;
    writeln!(
        out,
        "shuffle: {} slots ({} unicast), {} nodes served per slot, {} CSI exchanges per slot",
        report.slot_count, outcome.unicast_slots, report.nodes_served_per_slot, report.csi_exchanges_per_slot
    )
    .unwrap();
    writeln!(out, "  even delay    = {}", pretty(&report.even_delay)).unwrap();
    writeln!(out, "  padded delay  = {}", pretty(&report.padded_delay)).unwrap();
    writeln!(out, "  closed form   = {}", pretty(&report.closed_form)).unwrap();
    writeln!(out, "  expected      = {}", pretty(&outcome.expected_delay)).unwrap();
    writeln!(
        out,
        "  reconciled    = {}",
        if outcome.reconciled() { "yes" } else { "no" }
    )
    .unwrap();
    writeln!(
        out,
        "  uncoded delay = {}",
        pretty(&outcome.uncoded_baseline.even_delay)
    )
    .unwrap();
    writeln!(
        out,
        "  decoded = {}, symbol errors = {}, checksum failures = {}",
        outcome.stats.decoded, outcome.stats.symbol_errors, outcome.stats.checksum_failures
    )
    .unwrap();
    writeln!(
        out,
        "reduce: {} outputs, {} incomplete node(s)",
        outcome.outputs.len(),
        outcome.reduce_failures.len()
    )
    .unwrap();
    let oracle = match &outcome.oracle {
        OracleCheck::Matched => "match".to_string(),
        OracleCheck::Mismatch(qs) => format!("MISMATCH for functions {qs:?}"),
        OracleCheck::Skipped => "skipped (noise enabled)".to_string(),
    };
    writeln!(out, "oracle: {oracle}").unwrap();
    emit(s, &out)?;

    if let Some(path) = s.raw("trace") {
        let lines: String = outcome.trace.iter().map(|t| t.to_line() + "\n").collect();
        write_file(path, &lines)?;
    }
    if outcome.oracle == OracleCheck::Skipped {
        eprintln!("warning: oracle check skipped because noise is enabled");
    }
    if let Some((node, e)) = outcome.reduce_failures.first() {
        return Err(Exit::new(
            Exit::DECODE,
            format!(
                "{} node(s) could not reduce; node {node}: {e}",
                outcome.reduce_failures.len()
            ),
        ));
    }
    if let OracleCheck::Mismatch(qs) = &outcome.oracle {
        return Err(Exit::new(
            Exit::ORACLE,
            format!("outputs differ from the oracle for functions {qs:?}"),
        ));
    }
    if !outcome.reconciled() {
        return Err(Exit::new(
            Exit::RECONCILE,
            format!(
                "even delay {} does not match expected {}",
                to_pq(&report.even_delay),
                to_pq(&outcome.expected_delay)
            ),
        ));
    }
    Ok(())
}

fn list<T>(
    s: &Settings,
    key: &str,
    default: Option<&str>,
    parse: impl Fn(&str) -> Result<T, Exit>,
) -> Result<Vec<T>, Exit> {
    let raw = match (s.raw(key), default) {
        (Some(r), _) => r,
        (None, Some(d)) => d,
        (None, None) => return Err(Exit::config(format!("missing required setting --{key}"))),
    };
    raw.split(',').map(|p| parse(p.trim())).collect()
}

fn parse_count(key: &'static str) -> impl Fn(&str) -> Result<usize, Exit> {
    move |raw| {
        raw.parse()
            .map_err(|_| Exit::config(format!("--{key} expects integers, got {raw:?}")))
    }
}

fn decimal(r: &Rational) -> String {
    format!("{:.6}", to_f64(r))
}

/// One CSV row, or `None` for inadmissible or infeasible points.
pub fn sweep_row(k: usize, l: usize, t: usize, cap: Option<BigUint>, tc: &Rational) -> Option<String> {
    let params = SystemParams::from_redundancy(k, l, t)
        .ok()?
        .with_s_max(cap)
        .with_tc(tc.clone());
    let summary = planner::summarize(&params).ok()?;
    let (cmr, cmr_f) = match &summary.delay_cmr {
        Ok(d) => (to_pq(d), decimal(d)),
        Err(_) => (String::new(), String::new()),
    };
    Some(format!(
        "{k},{l},{},{},{},{},{},{cmr},{},{},{cmr_f},{},{}",
        to_pq(params.gamma()),
        summary.subpacketization,
        summary.gcmr.k_bar,
        to_pq(&summary.gcmr.t_bar),
        to_pq(&summary.delay_uncoded),
        to_pq(&summary.delay_gcmr),
        decimal(&summary.delay_uncoded),
        decimal(&summary.delay_gcmr),
        smax_text(params.s_max()),
    ))
}

pub fn sweep(s: &Settings) -> Result<(), Exit> {
    let ks = list(s, "K", None, parse_count("K"))?;
    let ls = list(s, "L", Some("1"), parse_count("L"))?;
    let ts = list(s, "t", None, parse_count("t"))?;
    let caps = list(s, "smax", Some("inf"), config::parse_smax)?;
    let tc = s.rational("tc")?;
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    let mut rows = 0;
    for &k in &ks {
        for &l in &ls {
            for &t in &ts {
                for cap in &caps {
                    if let Some(row) = sweep_row(k, l, t, cap.clone(), &tc) {
                        csv.push_str(&row);
                        csv.push('\n');
                        rows += 1;
                    }
                }
            }
        }
    }
    if rows == 0 {
        return Err(Exit::config("sweep has no admissible parameter points"));
    }
    match s.raw("csv") {
        Some(path) => write_file(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn uneven_exit(e: UnevenError) -> Exit {
    match e {
        e @ UnevenError::CoverageMismatch { .. } => Exit::new(Exit::COVERAGE, e.to_string()),
        e => Exit::config(e.to_string()),
    }
}

fn slot_csv(slots: &[CodedSlot], report: &GainReport, profile: &uneven::SizeProfile) -> Result<String, Exit> {
    let mut csv = String::from("slot,members,cost,waste\n");
    for (idx, (slot, waste)) in slots.iter().zip(&report.slot_waste).enumerate() {
        let sizes = slot
            .members
            .iter()
            .map(|m| profile.size(m).cloned())
            .collect::<Result<Vec<_>, _>>()
            .map_err(uneven_exit)?;
        let cost = uneven::padded_slot_cost(&sizes).map_err(uneven_exit)?;
        let members: Vec<String> = slot.members.iter().map(|(q, p)| format!("{q}:{p}")).collect();
        writeln!(
            csv,
            "{},{},{},{}",
            idx + 1,
            members.join(" "),
            to_pq(&cost),
            to_pq(waste)
        )
        .unwrap();
    }
    Ok(csv)
}

pub fn uneven(s: &Settings) -> Result<(), Exit> {
    let tc = s.rational("tc")?;
    let mut out = String::new();
    let (slots, profile, report) = if s.raw("dataset").is_some() || s.raw("synthetic").is_some() {
        let params = s.params()?;
        let job = JobRegistry::with_builtins()
            .get(s.require("job")?)
            .map_err(|e| Exit::config(e.to_string()))?;
        let packets: usize = planner::subpacketization_of(&params)
            .try_into()
            .ok()
            .filter(|&n| n <= MAX_SIMULATED_PACKETS as usize)
            .ok_or_else(|| Exit::config("subpacketization too large to measure"))?;
        let dataset = load_dataset(s, packets)?;
        let plan = planner::plan(&params);
        let measured = uneven::measure_profile(job.as_ref(), &dataset, &plan).map_err(uneven_exit)?;
        writeln!(out, "source = measured ({}, F = {})", job.name(), dataset.len()).unwrap();
        writeln!(out, "mean unevenness = {}", pretty(&measured.mean_unevenness)).unwrap();
        if let Some(path) = s.raw("out") {
            write_file(path, &uneven::profile_to_text(&measured.profile))?;
        }
        let slots = uneven::gcmr_slots(&plan, &build_schedule(&plan, &params));
        let report = uneven::gcmr_gain(&params, &plan, &measured.profile).map_err(uneven_exit)?;
        (slots, measured.profile, report)
    } else {
        let (label, text) = match s.raw("profile") {
            Some(path) => (
                path.to_string(),
                std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?,
            ),
            None => (
                "bundled paper-terasort-k3.profile".to_string(),
                uneven::TERASORT_K3_PROFILE.to_string(),
            ),
        };
        let doc = uneven::parse_profile(&text).map_err(uneven_exit)?;
        writeln!(out, "source = {label}").unwrap();
        let (slots, report) = if doc.slots.is_empty() {
            let params = s.params()?;
            let plan = planner::plan(&params);
            let slots = uneven::gcmr_slots(&plan, &build_schedule(&plan, &params));
            let report = uneven::gcmr_gain(&params, &plan, &doc.profile).map_err(uneven_exit)?;
            (slots, report)
        } else {
            let t = match doc.theoretical_gain.clone() {
                Some(t) => t,
                None => ratio::int(s.usize("t")?),
            };
            let report = uneven::effective_gain(&doc.slots, &doc.needs, &doc.profile, t).map_err(uneven_exit)?;
            (doc.slots, report)
        };
        (slots, doc.profile, report)
    };
    writeln!(out, "values = {}, coded slots = {}", profile.len(), slots.len()).unwrap();
    writeln!(out, "uncoded delay = {}", pretty(&(&report.uncoded_delay * &tc))).unwrap();
    writeln!(
        out,
        "padded coded delay = {}",
        pretty(&(&report.coded_delay_padded * &tc))
    )
    .unwrap();
    writeln!(out, "effective gain = {}", pretty(&report.effective_gain)).unwrap();
    writeln!(out, "theoretical gain = {}", pretty(&report.theoretical_gain)).unwrap();
    let waste: Rational = report.slot_waste.iter().sum();
    if !waste.is_zero() {
        writeln!(out, "zero padding = {}", pretty(&(waste * &tc))).unwrap();
    }
    print!("{out}");
    if let Some(path) = s.raw("csv") {
        write_file(path, &slot_csv(&slots, &report, &profile)?)?;
    }
    Ok(())
}
