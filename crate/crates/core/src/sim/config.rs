//! Scenario files.
//!
//! Scenarios are TOML. Densities are written in nW/cm² and transmit powers in
//! mW; both are converted to W/cm² and W on load. Every other quantity is SI.
//! The exceptions are the slot counts: `duration`, `release`, `epoch`,
//! `adapt_every` and `sample_every`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::emac::CyclePolicy;
use crate::energy::{ChargeCurve, Interpolation, DEFAULT_SENSITIVITY_FLOOR, NW_PER_CM2};
use crate::routing::TopologyTrace;

const MW: f64 = 1e-3;

/// A rejected key and why.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{} invalid key(s):\n{}", .0.len(), .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Issue>),
}

impl ConfigError {
    pub fn issues(&self) -> &[Issue] {
        match self {
            ConfigError::Invalid(issues) => issues,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    /// Shielded enclosure: only access points supply energy.
    Closed,
    /// Ambient RF plus any access points.
    Open,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TierSpec {
    pub access: Access,
    /// Animals per m².
    pub stocking_density: f64,
    /// m².
    pub area: f64,
    pub biosensors_per_ban: usize,
    /// Biosensor distance from the body center when no trace is given (m).
    pub body_radius: f64,
    /// Body-frame movement of every BAN, with its sink label.
    pub trace: Option<BanTrace>,
}

impl TierSpec {
    pub fn animal_count(&self) -> usize {
        (self.stocking_density * self.area).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanTrace {
    pub path: PathBuf,
    pub trace: TopologyTrace,
    pub sink_label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitNode {
    pub name: String,
    pub x: f64,
    pub y: f64,
    /// Initial residual (J); `None` uses the node defaults.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub id: u32,
    pub source: usize,
    pub destination: usize,
    /// Slot at which the packets enter the source queue.
    pub release: u64,
    pub packets: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Tiers(TierSpec),
    Explicit { nodes: Vec<ExplicitNode>, flows: Vec<FlowSpec> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbientParams {
    /// W/cm².
    pub min: f64,
    pub max: f64,
    /// Mean seconds between level changes.
    pub mean_dwell: f64,
}

impl Default for AmbientParams {
    fn default() -> Self {
        AmbientParams {
            min: 0.18 * NW_PER_CM2,
            max: 84.0 * NW_PER_CM2,
            mean_dwell: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpec {
    pub ambient: AmbientParams,
    /// W/cm².
    pub sensitivity_floor: f64,
    /// Integration steps per slot.
    pub harvest_substeps: u32,
}

/// A dedicated RF source, optionally also an access point that accepts
/// uplink packets from sinks.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// W.
    pub power: f64,
    pub gain: f64,
    pub access_point: bool,
    /// Mean seconds blocked; 0 disables blockage.
    pub blockage_mean_on: f64,
    /// Mean seconds unblocked.
    pub blockage_mean_off: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub capacity: f64,
    pub initial_fraction: f64,
    pub dead_threshold: f64,
    /// cm².
    pub aperture: f64,
    pub curve: ChargeCurve,
    /// W.
    pub tx_power: f64,
    pub tx_cost: f64,
    pub sense_cost: f64,
    pub idle_power: f64,
    pub comm_range: f64,
    pub queue_capacity: usize,
    pub sink_tx_power: f64,
    pub sink_tx_cost: f64,
    pub sink_range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacSpec {
    pub policy: CyclePolicy,
    pub persistence: f64,
    /// Slots between duty-ratio adaptations; 0 disables adaptation.
    pub adapt_every: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrafficKind {
    /// One reading every `period` seconds.
    Periodic { period: f64 },
    /// Event-driven readings at `rate` per second.
    Poisson { rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    pub kind: TrafficKind,
    /// Biosensor indices within each BAN; empty means all.
    pub sensors: Vec<usize>,
}

impl TrafficSpec {
    pub fn applies_to(&self, sensor: usize) -> bool {
        self.sensors.is_empty() || self.sensors.contains(&sensor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanningSpec {
    pub energy_step: f64,
    pub overhead: f64,
    /// Slots per planning interval.
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration: u64,
    pub slot_length: f64,
    pub seed: u64,
    pub topology: Topology,
    pub energy: EnergySpec,
    pub sources: Vec<SourceSpec>,
    pub node: NodeSpec,
    pub mac: MacSpec,
    pub traffic: Vec<TrafficSpec>,
    pub planning: Option<PlanningSpec>,
    pub sample_every: u64,
}

impl ScenarioConfig {
    pub fn access(&self) -> Access {
        match &self.topology {
            Topology::Tiers(t) => t.access,
            Topology::Explicit { .. } => Access::Open,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    duration: Option<i64>,
    slot_length: Option<f64>,
    seed: Option<i64>,
    tier: Option<RawTier>,
    node: Option<RawNode>,
    #[serde(default)]
    station: Vec<RawExplicitNode>,
    #[serde(default)]
    flow: Vec<RawFlow>,
    energy: Option<RawEnergy>,
    #[serde(default)]
    source: Vec<RawSource>,
    mac: Option<RawMac>,
    #[serde(default)]
    traffic: Vec<RawTraffic>,
    planning: Option<RawPlanning>,
    metrics: Option<RawMetrics>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTier {
    access: Option<String>,
    stocking_density: Option<f64>,
    area: Option<f64>,
    biosensors_per_ban: Option<i64>,
    body_radius: Option<f64>,
    trace: Option<String>,
    sink_label: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExplicitNode {
    name: String,
    x: f64,
    y: f64,
    residual: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    id: Option<i64>,
    source: String,
    destination: String,
    release: Option<i64>,
    packets: Option<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnergy {
    ambient_min: Option<f64>,
    ambient_max: Option<f64>,
    ambient_mean_dwell: Option<f64>,
    sensitivity_floor: Option<f64>,
    harvest_substeps: Option<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    id: Option<String>,
    x: Option<f64>,
    y: Option<f64>,
    power_mw: Option<f64>,
    gain: Option<f64>,
    access_point: Option<bool>,
    blockage_mean_on: Option<f64>,
    blockage_mean_off: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    capacity: Option<f64>,
    initial_fraction: Option<f64>,
    dead_threshold: Option<f64>,
    aperture: Option<f64>,
    curve: Option<String>,
    interpolation: Option<String>,
    tx_power_mw: Option<f64>,
    tx_cost: Option<f64>,
    sense_cost: Option<f64>,
    idle_power: Option<f64>,
    comm_range: Option<f64>,
    queue_capacity: Option<i64>,
    sink_tx_power_mw: Option<f64>,
    sink_tx_cost: Option<f64>,
    sink_range: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMac {
    target_energy_fraction: Option<f64>,
    persistence: Option<f64>,
    adaptation_gain: Option<f64>,
    reference_busy: Option<f64>,
    min_fraction: Option<f64>,
    max_fraction: Option<f64>,
    adapt_every: Option<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraffic {
    kind: Option<String>,
    period: Option<f64>,
    rate: Option<f64>,
    #[serde(default)]
    sensors: Vec<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlanning {
    enabled: Option<bool>,
    energy_step: Option<f64>,
    overhead: Option<f64>,
    epoch: Option<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetrics {
    sample_every: Option<i64>,
}

#[derive(Default)]
struct Checker {
    issues: Vec<Issue>,
}

impl Checker {
    fn fail(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            key: key.into(),
            message: message.into(),
        });
    }

    fn required<T>(&mut self, key: &str, value: Option<T>) -> Option<T> {
        if value.is_none() {
            self.fail(key, "missing required key");
        }
        value
    }

    fn check_f64(&mut self, key: &str, value: f64, ok: bool, rule: &str) -> f64 {
        if !value.is_finite() || !ok {
            self.fail(key, format!("{value} must be {rule}"));
        }
        value
    }

    fn positive(&mut self, key: &str, value: f64) -> f64 {
        self.check_f64(key, value, value > 0.0, "positive")
    }

    fn non_negative(&mut self, key: &str, value: f64) -> f64 {
        self.check_f64(key, value, value >= 0.0, "non-negative")
    }

    fn unit(&mut self, key: &str, value: f64) -> f64 {
        self.check_f64(key, value, (0.0..=1.0).contains(&value), "within [0, 1]")
    }

    fn count(&mut self, key: &str, value: i64, min: i64) -> u64 {
        if value < min {
            self.fail(key, format!("{value} must be at least {min}"));
            return min.max(0) as u64;
        }
        value as u64
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parses and validates scenario text. Relative file references resolve
/// against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    let mut c = Checker::default();

    let name = raw.name.unwrap_or_else(|| "scenario".to_string());
    let duration = c.required("duration", raw.duration).map_or(1, |d| c.count("duration", d, 1));
    let slot_length = raw.slot_length.map_or(0.01, |v| c.positive("slot_length", v));
    let seed = raw.seed.map_or(0, |s| c.count("seed", s, 0));

    let energy = {
        let e = raw.energy.as_ref();
        let get = |f: fn(&RawEnergy) -> Option<f64>| e.and_then(f);
        let min = get(|e| e.ambient_min).map_or(0.18, |v| c.non_negative("energy.ambient_min", v));
        let max = get(|e| e.ambient_max).map_or(84.0, |v| c.non_negative("energy.ambient_max", v));
        if min > max {
            c.fail("energy.ambient_max", format!("ambient range [{min}, {max}] is inverted"));
        }
        let mean_dwell = get(|e| e.ambient_mean_dwell).map_or(1.0, |v| c.positive("energy.ambient_mean_dwell", v));
        let floor = get(|e| e.sensitivity_floor)
            .map_or(DEFAULT_SENSITIVITY_FLOOR, |v| c.non_negative("energy.sensitivity_floor", v) * NW_PER_CM2);
        let substeps = e
            .and_then(|e| e.harvest_substeps)
            .map_or(1, |v| c.count("energy.harvest_substeps", v, 1) as u32);
        EnergySpec {
            ambient: AmbientParams {
                min: min * NW_PER_CM2,
                max: max * NW_PER_CM2,
                mean_dwell,
            },
            sensitivity_floor: floor,
            harvest_substeps: substeps,
        }
    };

    let mut sources = Vec::new();
    for (i, s) in raw.source.iter().enumerate() {
        let key = |k: &str| format!("source[{i}].{k}");
        let id = c.required(&key("id"), s.id.clone()).unwrap_or_default();
        if sources.iter().any(|o: &SourceSpec| o.id == id) {
            c.fail(key("id"), format!("duplicate source id `{id}`"));
        }
        let x = c.required(&key("x"), s.x).unwrap_or(0.0);
        let y = c.required(&key("y"), s.y).unwrap_or(0.0);
        let power = c.required(&key("power_mw"), s.power_mw).map_or(0.0, |v| c.non_negative(&key("power_mw"), v));
        let gain = s.gain.map_or(1.0, |v| c.check_f64(&key("gain"), v, v >= 1.0, "at least 1"));
        let on = s.blockage_mean_on.map_or(0.0, |v| c.non_negative(&key("blockage_mean_on"), v));
        let off = s.blockage_mean_off.map_or(1.0, |v| c.positive(&key("blockage_mean_off"), v));
        sources.push(SourceSpec {
            id,
            x,
            y,
            power: power * MW,
            gain,
            access_point: s.access_point.unwrap_or(false),
            blockage_mean_on: on,
            blockage_mean_off: off,
        });
    }

    let node = parse_node(&mut c, raw.node.as_ref(), slot_length, base_dir);
    let explicit_nodes = (!raw.station.is_empty()).then_some(raw.station);

    let mac = {
        let m = raw.mac.as_ref();
        let d = CyclePolicy::default();
        let f = |c: &mut Checker, k: &str, v: Option<f64>, dv: f64| v.map_or(dv, |v| c.unit(&format!("mac.{k}"), v));
        let policy = CyclePolicy {
            target_energy_fraction: f(&mut c, "target_energy_fraction", m.and_then(|m| m.target_energy_fraction), d.target_energy_fraction),
            adaptation_gain: m
                .and_then(|m| m.adaptation_gain)
                .map_or(d.adaptation_gain, |v| c.non_negative("mac.adaptation_gain", v)),
            reference_busy: f(&mut c, "reference_busy", m.and_then(|m| m.reference_busy), d.reference_busy),
            min_fraction: f(&mut c, "min_fraction", m.and_then(|m| m.min_fraction), d.min_fraction),
            max_fraction: f(&mut c, "max_fraction", m.and_then(|m| m.max_fraction), d.max_fraction),
        };
        if let Err(e) = policy.validate() {
            c.fail("mac", e.to_string());
        }
        let persistence = m
            .and_then(|m| m.persistence)
            .map_or(0.5, |v| c.check_f64("mac.persistence", v, v > 0.0 && v <= 1.0, "within (0, 1]"));
        let adapt_every = m.and_then(|m| m.adapt_every).map_or(100, |v| c.count("mac.adapt_every", v, 0));
        MacSpec {
            policy,
            persistence,
            adapt_every,
        }
    };

    let mut traffic = Vec::new();
    for (i, t) in raw.traffic.iter().enumerate() {
        let key = |k: &str| format!("traffic[{i}].{k}");
        let kind = match t.kind.as_deref() {
            Some("periodic") => {
                let period = c.required(&key("period"), t.period).map_or(1.0, |v| c.positive(&key("period"), v));
                Some(TrafficKind::Periodic { period })
            }
            Some("poisson") => {
                let rate = c.required(&key("rate"), t.rate).map_or(1.0, |v| c.positive(&key("rate"), v));
                Some(TrafficKind::Poisson { rate })
            }
            Some(other) => {
                c.fail(key("kind"), format!("unknown traffic kind `{other}` (expected periodic or poisson)"));
                None
            }
            None => {
                c.fail(key("kind"), "missing required key");
                None
            }
        };
        let mut sensors = Vec::new();
        for &s in &t.sensors {
            if s < 0 {
                c.fail(key("sensors"), format!("sensor index {s} is negative"));
            } else {
                sensors.push(s as usize);
            }
        }
        if let Some(kind) = kind {
            traffic.push(TrafficSpec { kind, sensors });
        }
    }

    let planning = match &raw.planning {
        Some(p) if p.enabled.unwrap_or(true) => {
            let energy_step = c
                .required("planning.energy_step", p.energy_step)
                .map_or(1.0, |v| c.positive("planning.energy_step", v));
            let overhead = p.overhead.map_or(0.0, |v| c.non_negative("planning.overhead", v));
            let epoch = p.epoch.map_or(100, |v| c.count("planning.epoch", v, 1));
            Some(PlanningSpec {
                energy_step,
                overhead,
                epoch,
            })
        }
        _ => None,
    };

    let sample_every = raw
        .metrics
        .as_ref()
        .and_then(|m| m.sample_every)
        .map_or(100, |v| c.count("metrics.sample_every", v, 1));

    let topology = match (raw.tier, explicit_nodes) {
        (Some(_), Some(_)) => {
            c.fail("station", "explicit stations cannot be combined with [tier]");
            None
        }
        (Some(tier), None) => {
            if !raw.flow.is_empty() {
                c.fail("flow", "flows require explicit [[station]] entries");
            }
            parse_tier(&mut c, &tier, base_dir).map(Topology::Tiers)
        }
        (None, Some(list)) => {
            if !traffic.is_empty() {
                c.fail("traffic", "traffic generators apply to generated tiers; use [[flow]] with explicit nodes");
            }
            if planning.is_some() {
                c.fail("planning", "charge planning applies to generated tiers");
            }
            parse_explicit(&mut c, list, &raw.flow, duration)
        }
        (None, None) => {
            c.fail("tier", "missing required section (or explicit [[station]] entries)");
            None
        }
    };

    match (topology, node) {
        (Some(topology), Some(node)) if c.issues.is_empty() => Ok(ScenarioConfig {
            name,
            duration,
            slot_length,
            seed,
            topology,
            energy,
            sources,
            node,
            mac,
            traffic,
            planning,
            sample_every,
        }),
        _ => {
            if c.issues.is_empty() {
                c.fail("node", "missing required section");
            }
            Err(ConfigError::Invalid(c.issues))
        }
    }
}

fn parse_node(c: &mut Checker, n: Option<&RawNode>, slot_length: f64, base_dir: &Path) -> Option<NodeSpec> {
    let Some(n) = n else {
        c.fail("node", "missing required section");
        return None;
    };
    let capacity = c.required("node.capacity", n.capacity).map(|v| c.positive("node.capacity", v));
    let cap = capacity.unwrap_or(1.0);
    let initial_fraction = n.initial_fraction.map_or(0.5, |v| c.unit("node.initial_fraction", v));
    let dead_threshold = n.dead_threshold.map_or(0.1 * cap, |v| c.non_negative("node.dead_threshold", v));
    if dead_threshold > cap {
        c.fail("node.dead_threshold", format!("{dead_threshold} exceeds capacity {cap}"));
    }
    let aperture = n.aperture.map_or(2.0, |v| c.positive("node.aperture", v));
    let interpolation = match n.interpolation.as_deref().map(str::parse::<Interpolation>) {
        None => Interpolation::Linear,
        Some(Ok(i)) => i,
        Some(Err(e)) => {
            c.fail("node.interpolation", e.to_string());
            Interpolation::Linear
        }
    };
    let curve = match n.curve.as_deref() {
        None | Some("default") => ChargeCurve::default().with_interpolation(interpolation),
        Some(file) => match ChargeCurve::load(base_dir.join(file)) {
            Ok(curve) if n.interpolation.is_some() => curve.with_interpolation(interpolation),
            Ok(curve) => curve,
            Err(e) => {
                c.fail("node.curve", e.to_string());
                ChargeCurve::default()
            }
        },
    };
    let tx_power = n.tx_power_mw.map_or(0.1, |v| c.non_negative("node.tx_power_mw", v)) * MW;
    let tx_cost = n.tx_cost.map_or(tx_power * slot_length, |v| c.positive("node.tx_cost", v));
    let sense_cost = n.sense_cost.map_or(0.0, |v| c.non_negative("node.sense_cost", v));
    let idle_power = n.idle_power.map_or(0.0, |v| c.non_negative("node.idle_power", v));
    let comm_range = n.comm_range.map_or(0.3, |v| c.positive("node.comm_range", v));
    let queue_capacity = n.queue_capacity.map_or(16, |v| c.count("node.queue_capacity", v, 1) as usize);
    let sink_tx_power = n.sink_tx_power_mw.map_or(10.0, |v| c.non_negative("node.sink_tx_power_mw", v)) * MW;
    let sink_tx_cost = n.sink_tx_cost.map_or(sink_tx_power * slot_length, |v| c.positive("node.sink_tx_cost", v));
    let sink_range = n.sink_range.map_or(10.0, |v| c.positive("node.sink_range", v));
    if !(tx_cost > 0.0) {
        c.fail("node.tx_cost", "must be positive (set tx_cost or a positive tx_power_mw)");
    }
    if !(sink_tx_cost > 0.0) {
        c.fail("node.sink_tx_cost", "must be positive (set sink_tx_cost or a positive sink_tx_power_mw)");
    }
    Some(NodeSpec {
        capacity: capacity?,
        initial_fraction,
        dead_threshold,
        aperture,
        curve,
        tx_power,
        tx_cost,
        sense_cost,
        idle_power,
        comm_range,
        queue_capacity,
        sink_tx_power,
        sink_tx_cost,
        sink_range,
    })
}

fn parse_tier(c: &mut Checker, t: &RawTier, base_dir: &Path) -> Option<TierSpec> {
    let access = match t.access.as_deref() {
        Some("closed") => Some(Access::Closed),
        Some("open") => Some(Access::Open),
        Some(other) => {
            c.fail("tier.access", format!("`{other}` is not one of closed, open"));
            None
        }
        None => {
            c.fail("tier.access", "missing required key");
            None
        }
    };
    let stocking_density = c
        .required("tier.stocking_density", t.stocking_density)
        .map(|v| c.positive("tier.stocking_density", v));
    let area = c.required("tier.area", t.area).map(|v| c.positive("tier.area", v));
    let body_radius = t.body_radius.map_or(0.1, |v| c.positive("tier.body_radius", v));
    let sink_label = t.sink_label.clone().unwrap_or_else(|| "S".to_string());
    let trace = match &t.trace {
        None => None,
        Some(file) => {
            let path = base_dir.join(file);
            match TopologyTrace::load(&path) {
                Ok(trace) if trace.id_of(&sink_label).is_none() => {
                    c.fail("tier.sink_label", format!("trace {file} has no node `{sink_label}`"));
                    None
                }
                Ok(trace) => Some(BanTrace {
                    path,
                    trace,
                    sink_label: sink_label.clone(),
                }),
                Err(e) => {
                    c.fail("tier.trace", e.to_string());
                    None
                }
            }
        }
    };
    let biosensors_per_ban = match (&trace, t.biosensors_per_ban) {
        (Some(tr), None) => Some(tr.trace.node_count() - 1),
        (Some(tr), Some(n)) if n as usize != tr.trace.node_count() - 1 => {
            c.fail(
                "tier.biosensors_per_ban",
                format!("{n} disagrees with the {} biosensors in the trace", tr.trace.node_count() - 1),
            );
            None
        }
        (_, Some(n)) => Some(c.count("tier.biosensors_per_ban", n, 0) as usize),
        (None, None) => {
            c.fail("tier.biosensors_per_ban", "missing required key");
            None
        }
    };
    if t.trace.is_some() && trace.is_none() {
        return None;
    }
    Some(TierSpec {
        access: access?,
        stocking_density: stocking_density?,
        area: area?,
        biosensors_per_ban: biosensors_per_ban?,
        body_radius,
        trace,
    })
}

fn parse_explicit(c: &mut Checker, list: Vec<RawExplicitNode>, flows: &[RawFlow], duration: u64) -> Option<Topology> {
    let mut nodes: Vec<ExplicitNode> = Vec::new();
    for (i, n) in list.into_iter().enumerate() {
        if nodes.iter().any(|o| o.name == n.name) {
            c.fail(format!("station[{i}].name"), format!("duplicate station name `{}`", n.name));
        }
        if let Some(r) = n.residual {
            c.non_negative(&format!("station[{i}].residual"), r);
        }
        nodes.push(ExplicitNode {
            name: n.name,
            x: n.x,
            y: n.y,
            residual: n.residual,
        });
    }
    let index = |name: &str| nodes.iter().position(|n| n.name == name);
    let mut out = Vec::new();
    for (i, f) in flows.iter().enumerate() {
        let key = |k: &str| format!("flow[{i}].{k}");
        let source = index(&f.source);
        let destination = index(&f.destination);
        if source.is_none() {
            c.fail(key("source"), format!("unknown station `{}`", f.source));
        }
        if destination.is_none() {
            c.fail(key("destination"), format!("unknown station `{}`", f.destination));
        }
        if source.is_some() && source == destination {
            c.fail(key("destination"), "equals the source");
        }
        let id = f.id.map_or(i as u64 + 1, |v| c.count(&key("id"), v, 0)) as u32;
        if out.iter().any(|o: &FlowSpec| o.id == id) {
            c.fail(key("id"), format!("duplicate flow id {id}"));
        }
        let release = f.release.map_or(0, |v| c.count(&key("release"), v, 0));
        if release >= duration {
            c.fail(key("release"), format!("slot {release} is past the end of the run"));
        }
        let packets = f.packets.map_or(1, |v| c.count(&key("packets"), v, 1)) as u32;
        if let (Some(source), Some(destination)) = (source, destination) {
            out.push(FlowSpec {
                id,
                source,
                destination,
                release,
                packets,
            });
        }
    }
    if nodes.is_empty() {
        c.fail("station", "explicit topology has no stations");
    }
    Some(Topology::Explicit { nodes, flows: out })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text, path.parent().unwrap_or(Path::new(".")))
}
