//! Surgery configuration and its `key = value` text format.
//!
//! ```text
//! # comments start with '#'
//! base_lr = 0.1
//! lr_policy = inv
//! lr_gamma = 0.0001
//! lr_power = 0.75
//! max_iter = 16000
//! batch_size = 64
//! trigger_gamma = 0.0001
//! trigger_power = 1
//! trigger_stop_iter = 12000
//! seed = 7
//! c = 0.5
//! c.fc1 = 2.0
//! phases = conv1+conv2:8000, fc1+fc2:8000
//! ```
//!
//! Phase groups name layers joined by `+`, or use `all`, `conv` or `fc`.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::{LayerKind, Network};
use crate::surgery::mask::{DEFAULT_BAND_HI, DEFAULT_BAND_LO};
use crate::surgery::schedule::{LrPolicy, TriggerSchedule};

/// Which learnable layers a phase operates on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerGroup {
    All,
    Convolutional,
    FullyConnected,
    Named(Vec<String>),
}

impl LayerGroup {
    fn contains(&self, name: &str, kind: LayerKind) -> bool {
        match self {
            LayerGroup::All => true,
            LayerGroup::Convolutional => matches!(kind, LayerKind::Convolution(_)),
            LayerGroup::FullyConnected => matches!(kind, LayerKind::FullyConnected { .. }),
            LayerGroup::Named(names) => names.iter().any(|n| n == name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase {
    pub layers: LayerGroup,
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurgeryConfig {
    pub base_lr: f64,
    pub lr_policy: LrPolicy,
    pub max_iter: usize,
    pub batch_size: usize,
    pub trigger: TriggerSchedule,
    /// Default std multiplier for thresholds.
    pub c: f64,
    pub c_overrides: BTreeMap<String, f64>,
    pub band_lo: f64,
    pub band_hi: f64,
    /// Empty means one phase over every non-exempt layer for `max_iter`.
    pub phases: Vec<Phase>,
    /// Layers whose masks are never updated.
    pub exempt: Vec<String>,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for SurgeryConfig {
    fn default() -> Self {
        SurgeryConfig {
            base_lr: 0.01,
            lr_policy: LrPolicy::Fixed,
            max_iter: 0,
            batch_size: 64,
            trigger: TriggerSchedule {
                gamma: 1e-4,
                power: 1.0,
                stop_iter: usize::MAX,
            },
            c: 0.0,
            c_overrides: BTreeMap::new(),
            band_lo: DEFAULT_BAND_LO,
            band_hi: DEFAULT_BAND_HI,
            phases: Vec::new(),
            exempt: Vec::new(),
            seed: 0,
            log_every: 100,
        }
    }
}

impl SurgeryConfig {
    pub fn c_for(&self, layer: &str) -> f64 {
        self.c_overrides.get(layer).copied().unwrap_or(self.c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return Err(Error::config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every must be at least 1"));
        }
        if !(0.0 <= self.band_lo && self.band_lo <= self.band_hi) {
            return Err(Error::config(format!(
                "need 0 <= band_lo <= band_hi, got {} and {}",
                self.band_lo, self.band_hi
            )));
        }
        self.lr_policy.validate()?;
        self.trigger.validate()?;
        if !self.phases.is_empty() {
            let total: usize = self.phases.iter().map(|p| p.iters).sum();
            if total != self.max_iter {
                return Err(Error::config(format!(
                    "phase budgets sum to {total}, max_iter is {}",
                    self.max_iter
                )));
            }
        }
        Ok(())
    }

    /// Binds the configuration to a network's learnable layers.
    pub fn plan(&self, net: &Network) -> Result<SurgeryPlan> {
        self.validate()?;
        let names = net.learnable_names();
        let kinds = net.learnable_kinds();
        let known = |n: &str| names.iter().any(|m| *m == n);
        for n in self.c_overrides.keys().chain(&self.exempt) {
            if !known(n) {
                return Err(Error::config(format!("unknown learnable layer {n:?}")));
            }
        }
        let default_phase = [Phase {
            layers: LayerGroup::All,
            iters: self.max_iter,
        }];
        let phases = if self.phases.is_empty() {
            &default_phase[..]
        } else {
            &self.phases[..]
        };
        let mut resolved = Vec::with_capacity(phases.len());
        let mut covered = vec![false; names.len()];
        for p in phases {
            if let LayerGroup::Named(list) = &p.layers {
                if let Some(bad) = list.iter().find(|n| !known(n)) {
                    return Err(Error::config(format!("phase names unknown learnable layer {bad:?}")));
                }
            }
            let active: Vec<bool> = names
                .iter()
                .zip(&kinds)
                .map(|(n, &k)| p.layers.contains(n, k) && !self.exempt.iter().any(|e| e == n))
                .collect();
            for (c, &a) in covered.iter_mut().zip(&active) {
                *c |= a;
            }
            resolved.push(PlannedPhase {
                active,
                iters: p.iters,
            });
        }
        // Only meaningful when surgery actually runs.
        if self.max_iter > 0 {
            for (i, n) in names.iter().enumerate() {
                if !covered[i] && !self.exempt.iter().any(|e| e == n) {
                    return Err(Error::config(format!(
                        "layer {n:?} is in no phase and not declared exempt"
                    )));
                }
            }
        }
        Ok(SurgeryPlan {
            base_lr: self.base_lr,
            lr_policy: self.lr_policy,
            max_iter: self.max_iter,
            trigger: self.trigger,
            c: names.iter().map(|n| self.c_for(n)).collect(),
            band_lo: self.band_lo,
            band_hi: self.band_hi,
            phases: resolved,
        })
    }

    /// Parses the `key = value` format. Unknown keys are an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SurgeryConfig::default();
        for (key, value) in parse_pairs(text)? {
            if !cfg.apply(&key, &value)? {
                return Err(Error::config(format!("unknown configuration key {key:?}")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one setting; returns `false` if the key is not a surgery key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "base_lr" => self.base_lr = num(key, value)?,
            "lr_policy" => {
                self.lr_policy = match value {
                    "fixed" => LrPolicy::Fixed,
                    "step" => LrPolicy::Step {
                        gamma: 0.1,
                        stepsize: 10_000,
                    },
                    "inv" => LrPolicy::Inv {
                        gamma: 1e-4,
                        power: 0.75,
                    },
                    other => return Err(Error::config(format!("unknown lr_policy {other:?}"))),
                }
            }
            "lr_gamma" => match &mut self.lr_policy {
                LrPolicy::Step { gamma, .. } | LrPolicy::Inv { gamma, .. } => *gamma = num(key, value)?,
                LrPolicy::Fixed => return Err(Error::config("lr_gamma needs lr_policy step or inv set first")),
            },
            "lr_power" => match &mut self.lr_policy {
                LrPolicy::Inv { power, .. } => *power = num(key, value)?,
                _ => return Err(Error::config("lr_power needs lr_policy inv set first")),
            },
            "lr_stepsize" => match &mut self.lr_policy {
                LrPolicy::Step { stepsize, .. } => *stepsize = num(key, value)?,
                _ => return Err(Error::config("lr_stepsize needs lr_policy step set first")),
            },
            "max_iter" => self.max_iter = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "trigger_gamma" => self.trigger.gamma = num(key, value)?,
            "trigger_power" => self.trigger.power = num(key, value)?,
            "trigger_stop_iter" => self.trigger.stop_iter = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "c" => self.c = num(key, value)?,
            "band_lo" => self.band_lo = num(key, value)?,
            "band_hi" => self.band_hi = num(key, value)?,
            "log_every" => self.log_every = num(key, value)?,
            "phases" => self.phases = parse_phases(value)?,
            "exempt" => {
                self.exempt = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            _ => {
                if let Some(layer) = key.strip_prefix("c.") {
                    if layer.is_empty() {
                        return Err(Error::config("empty layer name in c. override"));
                    }
                    self.c_overrides.insert(layer.to_string(), num(key, value)?);
                } else {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Splits config text into `(key, value)` pairs, rejecting duplicates.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::config(format!("line {}: empty key or value", lineno + 1)));
        }
        if !seen.insert(k.to_string()) {
            return Err(Error::config(format!("line {}: duplicate key {k:?}", lineno + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub(crate) fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_phases(value: &str) -> Result<Vec<Phase>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|group| {
            let (layers, iters) = group
                .rsplit_once(':')
                .ok_or_else(|| Error::config(format!("phase {group:?} is not `layers:iters`")))?;
            let layers = match layers.trim() {
                "all" => LayerGroup::All,
                "conv" => LayerGroup::Convolutional,
                "fc" => LayerGroup::FullyConnected,
                names => {
                    let list: Vec<String> = names
                        .split('+')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect();
                    if list.is_empty() {
                        return Err(Error::config(format!("phase {group:?} names no layers")));
                    }
                    LayerGroup::Named(list)
                }
            };
            Ok(Phase {
                layers,
                iters: num("phases", iters.trim())?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPhase {
    /// Per learnable slot: whether its mask may be updated in this phase.
    pub active: Vec<bool>,
    pub iters: usize,
}

/// A [`SurgeryConfig`] resolved against a particular network.
#[derive(Debug, Clone, PartialEq)]
pub struct SurgeryPlan {
    pub base_lr: f64,
    pub lr_policy: LrPolicy,
    pub max_iter: usize,
    pub trigger: TriggerSchedule,
    /// Threshold multiplier per learnable slot.
    pub c: Vec<f64>,
    pub band_lo: f64,
    pub band_hi: f64,
    pub phases: Vec<PlannedPhase>,
}

impl SurgeryPlan {
    /// Phase index and iteration offset within it. The trigger schedule is
    /// evaluated at the offset, so every phase starts at probability one.
    pub fn phase_at(&self, iter: usize) -> Option<(usize, usize)> {
        let mut start = 0;
        for (i, p) in self.phases.iter().enumerate() {
            if iter < start + p.iters {
                return Some((i, iter - start));
            }
            start += p.iters;
        }
        None
    }

    pub fn lr_at(&self, iter: usize) -> f64 {
        self.lr_policy.rate(self.base_lr, iter)
    }
}
