//! Settings from defaults, a flat `key = value` file, and flags, in rising
//! precedence.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use num_bigint::BigUint;

use gcmr_core::planner::SystemParams;
use gcmr_core::ratio::{self, Rational};
use gcmr_core::shuffle::ChannelMode;

use crate::Exit;

pub const KEYS: &[&str] = &[
    "K",
    "L",
    "t",
    "smax",
    "tc",
    "job",
    "dataset",
    "synthetic",
    "seed",
    "mode",
    "noise",
    "power",
    "out",
    "csv",
    "trace",
    "profile",
];

const DEFAULTS: &[(&str, &str)] = &[
    ("L", "1"),
    ("tc", "1"),
    ("job", "word-count"),
    ("seed", "0"),
    ("mode", "wireless"),
    ("noise", "0"),
    ("power", "1"),
];

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn resolve(file: Option<&Path>, flags: &[(&str, Option<String>)]) -> Result<Self, Exit> {
        let mut values: BTreeMap<String, String> =
            DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))
                .map_err(|e| Exit::config(format!("{e:#}")))?;
            values.extend(parse_file(&text)?);
        }
        for (key, value) in flags {
            if let Some(v) = value {
                values.insert(key.to_string(), v.clone());
            }
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, Exit> {
        self.raw(key)
            .ok_or_else(|| Exit::config(format!("missing required setting --{key}")))
    }

    pub fn usize(&self, key: &str) -> Result<usize, Exit> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Exit::config(format!("--{key} expects a nonnegative integer, got {raw:?}")))
    }

    pub fn u64(&self, key: &str) -> Result<u64, Exit> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Exit::config(format!("--{key} expects a nonnegative integer, got {raw:?}")))
    }

    pub fn f64(&self, key: &str) -> Result<f64, Exit> {
        let raw = self.require(key)?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
            _ => Err(Exit::config(format!(
                "--{key} expects a nonnegative number, got {raw:?}"
            ))),
        }
    }

    pub fn rational(&self, key: &str) -> Result<Rational, Exit> {
        let raw = self.require(key)?;
        ratio::parse(raw)
            .filter(|r| *r > Rational::from_integer(0.into()))
            .ok_or_else(|| {
                Exit::config(format!(
                    "--{key} expects a positive number or fraction p/q, got {raw:?}"
                ))
            })
    }

    pub fn smax(&self) -> Result<Option<BigUint>, Exit> {
        match self.raw("smax") {
            None => Ok(None),
            Some(raw) => parse_smax(raw),
        }
    }

    pub fn mode(&self) -> Result<ChannelMode, Exit> {
        let raw = self.require("mode")?;
        raw.parse().map_err(|e: String| Exit::config(format!("--mode: {e}")))
    }

    /// `K`, `L`, `t`, `smax` and `tc` as validated parameters.
    pub fn params(&self) -> Result<SystemParams, Exit> {
        let params = SystemParams::from_redundancy(self.usize("K")?, self.usize("L")?, self.usize("t")?)
            .map_err(|e| Exit::config(e.to_string()))?;
        Ok(params.with_s_max(self.smax()?).with_tc(self.rational("tc")?))
    }
}

pub fn parse_smax(raw: &str) -> Result<Option<BigUint>, Exit> {
    if raw.eq_ignore_ascii_case("inf") || raw.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    match raw.parse::<BigUint>() {
        Ok(n) if n > BigUint::from(0u32) => Ok(Some(n)),
        _ => Err(Exit::config(format!(
            "--smax expects a positive integer or inf, got {raw:?}"
        ))),
    }
}

fn parse_file(text: &str) -> Result<BTreeMap<String, String>, Exit> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Exit::config(format!("config line {}: expected key = value", idx + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Exit::config(format!("config line {}: unknown key {key:?}", idx + 1)));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

/// `F=<n>,len=<n>`.
pub fn parse_synthetic(raw: &str) -> Result<(usize, usize), Exit> {
    let bad = || Exit::config(format!("--synthetic expects \"F=<n>,len=<n>\", got {raw:?}"));
    let mut f = None;
    let mut len = None;
    for part in raw.split(',') {
        let (k, v) = part.split_once('=').ok_or_else(bad)?;
        let v: usize = v.trim().parse().map_err(|_| bad())?;
        match k.trim() {
            "F" => f = Some(v),
            "len" => len = Some(v),
            _ => return Err(bad()),
        }
    }
    Ok((f.ok_or_else(bad)?, len.unwrap_or(8)))
}
