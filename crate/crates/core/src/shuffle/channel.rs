//! Simulated group-to-group channels.
//!
//! `H_{i,p}` is the `L x L` matrix whose row `j` is the channel from the
//! members of transmitting group `G_i` to node `G_p(j)`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ShuffleError;
use crate::linalg::CMatrix;
use crate::planner::GroupId;

pub const DEFAULT_CONDITION_BOUND: f64 = 1e4;
const MAX_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    /// Fresh fading matrices for every slot.
    Wireless,
    /// Network-coding coefficients drawn once per run.
    Wired,
    /// `H = I` for every pair.
    Identity,
}

impl std::str::FromStr for ChannelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wireless" => Ok(Self::Wireless),
            "wired" => Ok(Self::Wired),
            "identity" => Ok(Self::Identity),
            other => Err(format!(
                "unknown channel mode {other:?} (expected wireless, wired or identity)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    pub seed: u64,
    pub noise_variance: f64,
    pub power: f64,
    pub condition_bound: f64,
}

impl ChannelConfig {
    pub fn new(mode: ChannelMode, seed: u64) -> Self {
        Self {
            mode,
            seed,
            noise_variance: 0.0,
            power: 1.0,
            condition_bound: DEFAULT_CONDITION_BOUND,
        }
    }

    pub fn with_noise(mut self, noise_variance: f64, power: f64) -> Self {
        self.noise_variance = noise_variance;
        self.power = power;
        self
    }

    pub fn is_noisy(&self) -> bool {
        self.noise_variance > 0.0
    }
}

/// A channel matrix together with its ZF precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub h: CMatrix,
    pub h_inv: CMatrix,
}

impl Link {
    pub fn identity(l: usize) -> Self {
        Self {
            h: CMatrix::identity(l),
            h_inv: CMatrix::identity(l),
        }
    }
}

/// Owns the run RNG; all channel and noise randomness flows from the seed.
#[derive(Debug)]
pub struct Channel {
    config: ChannelConfig,
    l: usize,
    rng: ChaCha8Rng,
    fixed: BTreeMap<(GroupId, GroupId), Arc<Link>>,
}

impl Channel {
    pub fn new(config: ChannelConfig, group_count: usize, l: usize) -> Result<Self, ShuffleError> {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut channel = Self {
            config,
            l,
            rng,
            fixed: BTreeMap::new(),
        };
        if channel.config.mode == ChannelMode::Wired {
            for i in 1..=group_count {
                for p in (1..=group_count).filter(|&p| p != i) {
                    let link = channel.draw_link(i, p)?;
                    channel.fixed.insert((i, p), Arc::new(link));
                }
            }
        }
        Ok(channel)
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn group_size(&self) -> usize {
        self.l
    }

    /// Unit-variance circularly-symmetric complex Gaussian matrix, redrawn
    /// until its condition number is within the bound.
    pub fn draw_link(&mut self, tx: GroupId, rx: GroupId) -> Result<Link, ShuffleError> {
        let bound = self.config.condition_bound;
        for _ in 0..MAX_DRAWS {
            let h = random_matrix(&mut self.rng, self.l);
            if let Some(h_inv) = h.inverse() {
                if h.norm_inf() * h_inv.norm_inf() <= bound {
                    return Ok(Link { h, h_inv });
                }
            }
        }
        Err(ShuffleError::SingularChannel {
            tx,
            rx,
            attempts: MAX_DRAWS,
        })
    }

    /// Links `H_{tx,p}` for every receiving group of a slot.
    pub fn links_for_slot(
        &mut self,
        tx: GroupId,
        receivers: &[GroupId],
    ) -> Result<BTreeMap<GroupId, Arc<Link>>, ShuffleError> {
        let mut out = BTreeMap::new();
        for &p in receivers {
            let link = match self.config.mode {
                ChannelMode::Identity => Arc::new(Link::identity(self.l)),
                ChannelMode::Wired => {
                    self.fixed
                        .get(&(tx, p))
                        .cloned()
                        .ok_or(ShuffleError::SingularChannel { tx, rx: p, attempts: 0 })?
                }
                ChannelMode::Wireless => Arc::new(self.draw_link(tx, p)?),
            };
            out.insert(p, link);
        }
        Ok(out)
    }

    /// One AWGN sample, zero when noise is disabled.
    pub fn noise(&mut self) -> Complex64 {
        if !self.config.is_noisy() {
            return Complex64::new(0.0, 0.0);
        }
        let s = (self.config.noise_variance / 2.0).sqrt();
        let re: f64 = StandardNormal.sample(&mut self.rng);
        let im: f64 = StandardNormal.sample(&mut self.rng);
        Complex64::new(re * s, im * s)
    }

    /// Amplitude applied to transmitted vectors. Only meaningful with noise.
    pub fn amplitude(&self) -> f64 {
        if self.config.is_noisy() {
            self.config.power.sqrt()
        } else {
            1.0
        }
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, l: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let rows = (0..l)
        .map(|_| {
            (0..l)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    Complex64::new(re * s, im * s)
                })
                .collect()
        })
        .collect();
    CMatrix::from_rows(rows)
}
