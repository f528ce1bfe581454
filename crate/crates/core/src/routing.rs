//! Network-layer path selection over time-varying topologies.
//!
//! Body movement makes the intra-body topology periodic; battery depletion and
//! recharge make nodes drop out and come back. [`topology_at`] turns a
//! keyframed [`TopologyTrace`] plus battery states into a [`LinkGraph`], and
//! [`shortest_route`] finds minimum-hop paths over the live part of it.
//!
//! Because every transmission also charges the nodes around it, the route one
//! flow takes changes which relays are usable by the next flow.
//! [`joint_route_select`] searches flow combinations with that coupling
//! simulated; [`sequential_greedy_select`] is the flow-by-flow baseline.

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use thiserror::Error;

use crate::emac::{overheard_charge, HarvestSettings, Neighbor};
use crate::energy::{Battery, ChargeCurve, NEAR_FIELD_LIMIT};

pub type NodeId = u32;

/// Exact joint search is limited to this many flows.
pub const JOINT_MAX_FLOWS: usize = 2;
/// Exact joint search is limited to graphs of this many nodes.
pub const JOINT_MAX_NODES: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("trace has no keyframes")]
    EmptyTrace,
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("{expected} nodes in graph but {found} {what} supplied")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("flow {flow} has identical source and destination")]
    DegenerateFlow { flow: u32 },
    #[error("no feasible route combination: flow {flow} is blocked")]
    Infeasible { flow: u32 },
    #[error("invalid transmission parameters: {0}")]
    InvalidTx(String),
    #[error("log is not ordered by time at entry {index}")]
    UnorderedLog { index: usize },
}

/// Node positions at one instant of a periodic movement pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    /// Seconds from the start of the period.
    pub time: f64,
    /// Meters, indexed by node id.
    pub positions: Vec<(f64, f64)>,
}

/// Periodic keyframed movement of the nodes carried by one animal.
///
/// Node ids are the indices of the labels in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyTrace {
    labels: Vec<String>,
    pub period: f64,
    pub comm_range: f64,
    keyframes: Vec<Keyframe>,
}

impl TopologyTrace {
    pub fn new(
        labels: Vec<String>,
        period: f64,
        comm_range: f64,
        keyframes: Vec<Keyframe>,
    ) -> Result<Self, RouteError> {
        if keyframes.is_empty() {
            return Err(RouteError::EmptyTrace);
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(RouteError::InvalidTrace(format!("period {period} must be positive")));
        }
        if !(comm_range > 0.0) || !comm_range.is_finite() {
            return Err(RouteError::InvalidTrace(format!("comm_range {comm_range} must be positive")));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != labels {
            return Err(RouteError::InvalidTrace("labels must be unique and sorted".into()));
        }
        for (i, k) in keyframes.iter().enumerate() {
            if !(0.0..period).contains(&k.time) {
                return Err(RouteError::InvalidTrace(format!(
                    "keyframe {i} time {} outside [0, {period})",
                    k.time
                )));
            }
            if i > 0 && k.time <= keyframes[i - 1].time {
                return Err(RouteError::InvalidTrace(format!("keyframe {i} time is not increasing")));
            }
            if k.positions.len() != labels.len() {
                return Err(RouteError::InvalidTrace(format!(
                    "keyframe {i} has {} positions for {} nodes",
                    k.positions.len(),
                    labels.len()
                )));
            }
        }
        Ok(TopologyTrace {
            labels,
            period,
            comm_range,
            keyframes,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn id_of(&self, label: &str) -> Option<NodeId> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok().map(|i| i as NodeId)
    }

    pub fn label_of(&self, id: NodeId) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    /// Positions at time `t`, interpolating linearly between the keyframes
    /// around `t mod period` (wrapping from the last keyframe to the first).
    pub fn positions_at(&self, t: f64) -> Result<Vec<(f64, f64)>, RouteError> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(RouteError::NegativeTime(t));
        }
        let tau = t.rem_euclid(self.period);
        let n = self.keyframes.len();
        let next = self.keyframes.partition_point(|k| k.time <= tau);
        let (a, a_time, b, b_time) = if next == 0 {
            let last = &self.keyframes[n - 1];
            (last, last.time - self.period, &self.keyframes[0], self.keyframes[0].time)
        } else if next == n {
            let last = &self.keyframes[n - 1];
            (last, last.time, &self.keyframes[0], self.keyframes[0].time + self.period)
        } else {
            let prev = &self.keyframes[next - 1];
            (prev, prev.time, &self.keyframes[next], self.keyframes[next].time)
        };
        if tau == a_time || std::ptr::eq(a, b) {
            return Ok(a.positions.clone());
        }
        let w = (tau - a_time) / (b_time - a_time);
        Ok(a.positions
            .iter()
            .zip(&b.positions)
            .map(|(p, q)| (p.0 + w * (q.0 - p.0), p.1 + w * (q.1 - p.1)))
            .collect())
    }

    /// Line-oriented trace format:
    ///
    /// ```text
    /// period 0.6
    /// comm_range 0.3
    /// keyframe 0.0
    /// A 0.00 0.00
    /// S 1.00 0.00
    /// keyframe 0.2
    /// ...
    /// ```
    pub fn parse(text: &str) -> Result<Self, RouteError> {
        let mut period = None;
        let mut comm_range = None;
        let mut frames: Vec<(f64, Vec<(String, f64, f64)>)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let number = |s: &str| {
                s.parse::<f64>().map_err(|e| RouteError::Parse {
                    line: line_no,
                    message: format!("`{s}`: {e}"),
                })
            };
            let arity = |n: usize| {
                if fields.len() == n {
                    Ok(())
                } else {
                    Err(RouteError::Parse {
                        line: line_no,
                        message: format!("expected {n} fields, got {}", fields.len()),
                    })
                }
            };
            match fields[0] {
                "period" => {
                    arity(2)?;
                    period = Some(number(fields[1])?);
                }
                "comm_range" => {
                    arity(2)?;
                    comm_range = Some(number(fields[1])?);
                }
                "keyframe" => {
                    arity(2)?;
                    frames.push((number(fields[1])?, Vec::new()));
                }
                label => {
                    arity(3)?;
                    let frame = frames.last_mut().ok_or_else(|| RouteError::Parse {
                        line: line_no,
                        message: "node position before the first keyframe".into(),
                    })?;
                    frame.1.push((label.to_string(), number(fields[1])?, number(fields[2])?));
                }
            }
        }
        let period = period.ok_or_else(|| RouteError::InvalidTrace("missing `period`".into()))?;
        let comm_range = comm_range.ok_or_else(|| RouteError::InvalidTrace("missing `comm_range`".into()))?;
        let first = frames.first().ok_or(RouteError::EmptyTrace)?;
        let mut labels: Vec<String> = first.1.iter().map(|(l, _, _)| l.clone()).collect();
        labels.sort();
        labels.dedup();
        let mut keyframes = Vec::with_capacity(frames.len());
        for (time, entries) in frames {
            let mut positions = vec![None; labels.len()];
            for (label, x, y) in entries {
                let Ok(i) = labels.binary_search(&label) else {
                    return Err(RouteError::InvalidTrace(format!(
                        "node `{label}` at keyframe {time} is absent from the first keyframe"
                    )));
                };
                if positions[i].replace((x, y)).is_some() {
                    return Err(RouteError::InvalidTrace(format!(
                        "node `{label}` listed twice at keyframe {time}"
                    )));
                }
            }
            let positions = positions
                .into_iter()
                .enumerate()
                .map(|(i, p)| {
                    p.ok_or_else(|| {
                        RouteError::InvalidTrace(format!("node `{}` missing at keyframe {time}", labels[i]))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            keyframes.push(Keyframe { time, positions });
        }
        TopologyTrace::new(labels, period, comm_range, keyframes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RouteError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RouteError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        TopologyTrace::parse(&text)
    }
}

fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Undirected unit-disk graph with per-node alive flags.
///
/// `in_range` keeps the geometric adjacency regardless of battery state, so
/// callers can ask which dead nodes could come back into play.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGraph {
    positions: Vec<(f64, f64)>,
    alive: Vec<bool>,
    in_range: Vec<Vec<NodeId>>,
    comm_range: f64,
}

impl LinkGraph {
    pub fn from_positions(positions: Vec<(f64, f64)>, comm_range: f64, alive: Vec<bool>) -> Result<Self, RouteError> {
        if alive.len() != positions.len() {
            return Err(RouteError::SizeMismatch {
                what: "alive flags",
                expected: positions.len(),
                found: alive.len(),
            });
        }
        let n = positions.len();
        let mut in_range = vec![Vec::new(); n];
        for u in 0..n {
            for v in (u + 1)..n {
                if distance(positions[u], positions[v]) <= comm_range {
                    in_range[u].push(v as NodeId);
                    in_range[v].push(u as NodeId);
                }
            }
        }
        for list in &mut in_range {
            list.sort_unstable();
        }
        Ok(LinkGraph {
            positions,
            alive,
            in_range,
            comm_range,
        })
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn comm_range(&self) -> f64 {
        self.comm_range
    }

    pub fn position(&self, id: NodeId) -> (f64, f64) {
        self.positions[id as usize]
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.alive[id as usize]
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        distance(self.positions[a as usize], self.positions[b as usize])
    }

    fn check(&self, id: NodeId) -> Result<(), RouteError> {
        if (id as usize) < self.positions.len() {
            Ok(())
        } else {
            Err(RouteError::UnknownNode(id))
        }
    }

    /// Nodes within range regardless of alive flags, ascending.
    pub fn in_range(&self, id: NodeId) -> &[NodeId] {
        &self.in_range[id as usize]
    }

    /// Live neighbors of a live node, ascending.
    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let alive = self.alive[id as usize];
        self.in_range[id as usize]
            .iter()
            .copied()
            .filter(move |&v| alive && self.alive[v as usize])
    }

    /// Edges between live nodes as `(low, high)` pairs.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for u in 0..self.positions.len() as NodeId {
            out.extend(self.neighbors(u).filter(|&v| v > u).map(|v| (u, v)));
        }
        out
    }
}

/// Link graph of `trace` at time `t`. Without batteries every node is alive.
pub fn topology_at(trace: &TopologyTrace, t: f64, batteries: Option<&[Battery]>) -> Result<LinkGraph, RouteError> {
    let positions = trace.positions_at(t)?;
    let alive = match batteries {
        None => vec![true; positions.len()],
        Some(b) if b.len() == positions.len() => b.iter().map(Battery::is_alive).collect(),
        Some(b) => {
            return Err(RouteError::SizeMismatch {
                what: "batteries",
                expected: positions.len(),
                found: b.len(),
            })
        }
    };
    LinkGraph::from_positions(positions, trace.comm_range, alive)
}

/// A path as the sequence of visited nodes, endpoints included.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Route {
    pub nodes: Vec<NodeId>,
}

impl Route {
    pub fn hop_count(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn next_hop(&self) -> Option<NodeId> {
        self.nodes.get(1).copied()
    }
}

fn bfs_distances(n: usize, from: NodeId, neighbors: impl Fn(NodeId) -> Vec<NodeId>) -> Vec<Option<usize>> {
    let mut dist = vec![None; n];
    dist[from as usize] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u as usize].expect("queued nodes have a distance");
        for v in neighbors(u) {
            if dist[v as usize].is_none() {
                dist[v as usize] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Minimum-hop path over live links. Among equally short paths the
/// lexicographically smallest node sequence wins. `Ok(None)` means
/// unreachable.
pub fn shortest_route(graph: &LinkGraph, src: NodeId, dst: NodeId) -> Result<Option<Route>, RouteError> {
    graph.check(src)?;
    graph.check(dst)?;
    if src == dst {
        return Ok(Some(Route { nodes: vec![src] }));
    }
    let dist = bfs_distances(graph.node_count(), dst, |u| graph.neighbors(u).collect());
    let Some(mut remaining) = dist[src as usize] else {
        return Ok(None);
    };
    let mut nodes = vec![src];
    let mut at = src;
    while remaining > 0 {
        at = graph
            .neighbors(at)
            .find(|&v| dist[v as usize] == Some(remaining - 1))
            .expect("a BFS predecessor exists on every shortest path");
        nodes.push(at);
        remaining -= 1;
    }
    Ok(Some(Route { nodes }))
}

/// Shortest-route table toward one sink for one keyframe.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteTable {
    pub keyframe: usize,
    pub sink: NodeId,
    /// `routes[node]`, `None` when the sink is unreachable.
    pub routes: Vec<Option<Route>>,
}

/// Route tables for every keyframe of `trace`, assuming all nodes alive.
/// Keyframes are processed in parallel; results come back in keyframe order.
pub fn route_tables(trace: &TopologyTrace, sink: NodeId) -> Result<Vec<RouteTable>, RouteError> {
    if sink as usize >= trace.node_count() {
        return Err(RouteError::UnknownNode(sink));
    }
    trace
        .keyframes()
        .par_iter()
        .enumerate()
        .map(|(keyframe, k)| {
            let graph = LinkGraph::from_positions(k.positions.clone(), trace.comm_range, vec![true; k.positions.len()])?;
            let routes = (0..graph.node_count() as NodeId)
                .map(|src| shortest_route(&graph, src, sink))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(RouteTable { keyframe, sink, routes })
        })
        .collect()
}

/// Precomputed route tables keyed by trace name and keyframe index.
#[derive(Debug, Default)]
pub struct RouteCache {
    tables: HashMap<(String, usize), RouteTable>,
}

impl RouteCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Computes and stores every keyframe table of `trace` under `name`.
    pub fn insert_trace(&mut self, name: &str, trace: &TopologyTrace, sink: NodeId) -> Result<(), RouteError> {
        for table in route_tables(trace, sink)? {
            self.tables.insert((name.to_string(), table.keyframe), table);
        }
        Ok(())
    }

    pub fn get(&self, name: &str, keyframe: usize) -> Option<&RouteTable> {
        self.tables.get(&(name.to_string(), keyframe))
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}

/// Data a source wants delivered.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRequest {
    pub id: u32,
    pub source: NodeId,
    pub destination: NodeId,
    /// Flows are served in ascending release order, ties by id.
    pub release_order: u32,
    pub packets: u32,
}

/// Per-transmission radio and harvesting parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxParams {
    /// Radiated power (W).
    pub tx_power: f64,
    /// Seconds on air per packet.
    pub airtime: f64,
    /// Battery drain per transmitted packet (J).
    pub tx_cost: f64,
    /// Receiver effective aperture (cm²).
    pub aperture: f64,
    pub harvest: HarvestSettings,
}

impl TxParams {
    pub fn validate(&self) -> Result<(), RouteError> {
        let checks = [
            (self.tx_power >= 0.0 && self.tx_power.is_finite(), "tx_power must be non-negative"),
            (self.airtime > 0.0 && self.airtime.is_finite(), "airtime must be positive"),
            (self.tx_cost >= 0.0 && self.tx_cost.is_finite(), "tx_cost must be non-negative"),
            (self.aperture > 0.0 && self.aperture.is_finite(), "aperture must be positive"),
            (self.harvest.step > 0.0, "harvest step must be positive"),
            (self.harvest.sensitivity_floor >= 0.0, "sensitivity floor must be non-negative"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(RouteError::InvalidTx((*msg).into())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteSelection {
    /// Paths in service order (see `order`).
    pub paths: Vec<Route>,
    /// Flow ids in the order they were served.
    pub order: Vec<u32>,
    pub total_hops: usize,
    /// `false` when the instance was too large and the greedy fallback ran.
    pub exact: bool,
    /// Some flows shared a release order and were ordered by id.
    pub tied_release: bool,
    /// Battery states after all flows.
    pub batteries: Vec<Battery>,
}

impl RouteSelection {
    pub fn path_of(&self, flow: u32) -> Option<&Route> {
        self.order.iter().position(|&f| f == flow).map(|i| &self.paths[i])
    }
}

struct FlowContext<'a> {
    graph: &'a LinkGraph,
    curves: &'a [ChargeCurve],
    tx: TxParams,
    /// Hop distance to each destination over `in_range`, ignoring energy.
    range_dist: HashMap<NodeId, Vec<Option<usize>>>,
}

impl<'a> FlowContext<'a> {
    fn new(
        graph: &'a LinkGraph,
        flows: &[FlowRequest],
        batteries: &[Battery],
        curves: &'a [ChargeCurve],
        tx: TxParams,
    ) -> Result<Self, RouteError> {
        tx.validate()?;
        let n = graph.node_count();
        if batteries.len() != n {
            return Err(RouteError::SizeMismatch {
                what: "batteries",
                expected: n,
                found: batteries.len(),
            });
        }
        if curves.len() != n {
            return Err(RouteError::SizeMismatch {
                what: "charge curves",
                expected: n,
                found: curves.len(),
            });
        }
        let mut range_dist = HashMap::new();
        for f in flows {
            graph.check(f.source)?;
            graph.check(f.destination)?;
            if f.source == f.destination {
                return Err(RouteError::DegenerateFlow { flow: f.id });
            }
            range_dist
                .entry(f.destination)
                .or_insert_with(|| bfs_distances(n, f.destination, |u| graph.in_range(u).to_vec()));
        }
        Ok(FlowContext {
            graph,
            curves,
            tx,
            range_dist,
        })
    }

    fn lower_bound(&self, flow: &FlowRequest) -> Option<usize> {
        self.range_dist[&flow.destination][flow.source as usize]
    }

    /// Replays `flow` along `path` packet by packet. Every transmission
    /// drains the sender and charges every other node. Returns `None` when a
    /// sender lacks energy or a hop endpoint is dead at its turn.
    fn simulate(&self, state: &[Battery], path: &[NodeId], flow: &FlowRequest) -> Option<Vec<Battery>> {
        let mut batteries = state.to_vec();
        for _ in 0..flow.packets {
            for hop in path.windows(2) {
                let (u, v) = (hop[0] as usize, hop[1] as usize);
                let sender = batteries[u];
                if sender.is_dead() || sender.residual() < self.tx.tx_cost || batteries[v].is_dead() {
                    return None;
                }
                batteries[u] = sender.consume(self.tx.tx_cost).ok()?;
                self.credit_overheard(&mut batteries, hop[0]);
            }
        }
        Some(batteries)
    }

    fn credit_overheard(&self, batteries: &mut [Battery], tx: NodeId) {
        let neighbors: Vec<Neighbor<'_>> = (0..batteries.len() as NodeId)
            .filter(|&w| w != tx)
            .map(|w| Neighbor {
                id: w,
                distance: self.graph.distance(tx, w).max(NEAR_FIELD_LIMIT),
                battery: batteries[w as usize],
                curve: &self.curves[w as usize],
                aperture: self.tx.aperture,
            })
            .collect();
        let charged = overheard_charge(tx, self.tx.tx_power, self.tx.airtime, &neighbors, self.tx.harvest)
            .expect("transmission parameters validated");
        for c in charged {
            batteries[c.id as usize] = c.battery;
        }
    }

    /// Visits simple paths of exactly `hops` hops from the flow's source to
    /// its destination over geometric adjacency, in lexicographic order,
    /// until `visit` returns `true`.
    fn paths_of_length(&self, flow: &FlowRequest, hops: usize, visit: &mut dyn FnMut(&[NodeId]) -> bool) -> bool {
        let dist = &self.range_dist[&flow.destination];
        let mut on_path = vec![false; self.graph.node_count()];
        let mut path = vec![flow.source];
        on_path[flow.source as usize] = true;
        self.extend(&mut path, &mut on_path, hops, flow.destination, dist, visit)
    }

    fn extend(
        &self,
        path: &mut Vec<NodeId>,
        on_path: &mut [bool],
        hops: usize,
        dst: NodeId,
        dist: &[Option<usize>],
        visit: &mut dyn FnMut(&[NodeId]) -> bool,
    ) -> bool {
        let at = *path.last().expect("path starts at the source");
        let used = path.len() - 1;
        if at == dst {
            return used == hops && visit(path);
        }
        for &v in self.graph.in_range(at) {
            if on_path[v as usize] {
                continue;
            }
            match dist[v as usize] {
                Some(d) if used + 1 + d <= hops => {}
                _ => continue,
            }
            path.push(v);
            on_path[v as usize] = true;
            let stop = self.extend(path, on_path, hops, dst, dist, visit);
            on_path[v as usize] = false;
            path.pop();
            if stop {
                return true;
            }
        }
        false
    }

    /// Shortest path that is energy-feasible from `state`, lexicographic
    /// among equals, plus the battery states it leaves behind.
    fn shortest_feasible(&self, state: &[Battery], flow: &FlowRequest) -> Option<(Route, Vec<Battery>)> {
        let min = self.lower_bound(flow)?;
        for hops in min..self.graph.node_count() {
            let mut found = None;
            self.paths_of_length(flow, hops, &mut |p| {
                if let Some(after) = self.simulate(state, p, flow) {
                    found = Some((Route { nodes: p.to_vec() }, after));
                    true
                } else {
                    false
                }
            });
            if found.is_some() {
                return found;
            }
        }
        None
    }
}

fn service_order(flows: &[FlowRequest]) -> (Vec<FlowRequest>, bool) {
    let mut ordered = flows.to_vec();
    ordered.sort_by_key(|f| (f.release_order, f.id));
    let tied = ordered.windows(2).any(|w| w[0].release_order == w[1].release_order);
    (ordered, tied)
}

/// Each flow, in release order, takes its own shortest feasible path given
/// the energy left (and delivered) by the flows before it.
pub fn sequential_greedy_select(
    graph: &LinkGraph,
    flows: &[FlowRequest],
    batteries: &[Battery],
    curves: &[ChargeCurve],
    tx: TxParams,
) -> Result<RouteSelection, RouteError> {
    let ctx = FlowContext::new(graph, flows, batteries, curves, tx)?;
    let (ordered, tied_release) = service_order(flows);
    let mut state = batteries.to_vec();
    let mut paths = Vec::with_capacity(ordered.len());
    for flow in &ordered {
        let (route, after) = ctx
            .shortest_feasible(&state, flow)
            .ok_or(RouteError::Infeasible { flow: flow.id })?;
        paths.push(route);
        state = after;
    }
    Ok(RouteSelection {
        total_hops: paths.iter().map(Route::hop_count).sum(),
        order: ordered.iter().map(|f| f.id).collect(),
        paths,
        exact: true,
        tied_release,
        batteries: state,
    })
}

struct JointSearch<'a, 'b> {
    ctx: &'b FlowContext<'a>,
    flows: &'b [FlowRequest],
    /// Sum of geometric lower bounds of flows `i..`.
    tail_bound: Vec<usize>,
    best: Option<(usize, Vec<Route>, Vec<Battery>)>,
    deepest_block: usize,
}

impl JointSearch<'_, '_> {
    fn search(&mut self, i: usize, state: &[Battery], prefix: &mut Vec<Route>, hops_so_far: usize) {
        let ctx = self.ctx;
        let flow = &self.flows[i];
        let last = i + 1 == self.flows.len();
        if last {
            match ctx.shortest_feasible(state, flow) {
                Some((route, after)) => {
                    let total = hops_so_far + route.hop_count();
                    if self.best.as_ref().is_none_or(|b| total < b.0) {
                        let mut paths = prefix.clone();
                        paths.push(route);
                        self.best = Some((total, paths, after));
                    }
                }
                None => self.deepest_block = self.deepest_block.max(i),
            }
            return;
        }
        let Some(min) = ctx.lower_bound(flow) else {
            self.deepest_block = self.deepest_block.max(i);
            return;
        };
        let mut any = false;
        for hops in min..ctx.graph.node_count() {
            let bound = hops_so_far + hops + self.tail_bound[i + 1];
            if self.best.as_ref().is_some_and(|b| bound >= b.0) {
                break;
            }
            let mut candidates = Vec::new();
            ctx.paths_of_length(flow, hops, &mut |p| {
                if let Some(after) = ctx.simulate(state, p, flow) {
                    candidates.push((p.to_vec(), after));
                }
                false
            });
            for (nodes, after) in candidates {
                any = true;
                prefix.push(Route { nodes });
                self.search(i + 1, &after, prefix, hops_so_far + hops);
                prefix.pop();
            }
        }
        if !any {
            self.deepest_block = self.deepest_block.max(i);
        }
    }
}

/// Route selection that accounts for energy delivered by earlier flows.
///
/// For up to [`JOINT_MAX_FLOWS`] flows on graphs of at most
/// [`JOINT_MAX_NODES`] nodes this is an exact search over path
/// combinations: each candidate path of an earlier flow is replayed
/// (draining senders and charging everyone else) before the later flows are
/// routed. Larger instances fall back to [`sequential_greedy_select`].
pub fn joint_route_select(
    graph: &LinkGraph,
    flows: &[FlowRequest],
    batteries: &[Battery],
    curves: &[ChargeCurve],
    tx: TxParams,
) -> Result<RouteSelection, RouteError> {
    if flows.len() > JOINT_MAX_FLOWS || graph.node_count() > JOINT_MAX_NODES {
        warn!(
            "joint route selection limited to {JOINT_MAX_FLOWS} flows / {JOINT_MAX_NODES} nodes; \
             falling back to sequential greedy for {} flows / {} nodes",
            flows.len(),
            graph.node_count()
        );
        let mut fallback = sequential_greedy_select(graph, flows, batteries, curves, tx)?;
        fallback.exact = false;
        return Ok(fallback);
    }
    let ctx = FlowContext::new(graph, flows, batteries, curves, tx)?;
    let (ordered, tied_release) = service_order(flows);
    if ordered.is_empty() {
        return Ok(RouteSelection {
            paths: Vec::new(),
            order: Vec::new(),
            total_hops: 0,
            exact: true,
            tied_release,
            batteries: batteries.to_vec(),
        });
    }
    let mut tail_bound = vec![0usize; ordered.len() + 1];
    for i in (0..ordered.len()).rev() {
        let Some(lb) = ctx.lower_bound(&ordered[i]) else {
            return Err(RouteError::Infeasible { flow: ordered[i].id });
        };
        tail_bound[i] = tail_bound[i + 1] + lb;
    }
    let mut search = JointSearch {
        ctx: &ctx,
        flows: &ordered,
        tail_bound,
        best: None,
        deepest_block: 0,
    };
    search.search(0, batteries, &mut Vec::new(), 0);
    let (total_hops, paths, after) = search.best.ok_or(RouteError::Infeasible {
        flow: ordered[search.deepest_block].id,
    })?;
    Ok(RouteSelection {
        paths,
        order: ordered.iter().map(|f| f.id).collect(),
        total_hops,
        exact: true,
        tied_release,
        batteries: after,
    })
}

/// Alive flag of one node at one sampled slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AliveSample {
    pub slot: u64,
    pub node: NodeId,
    pub alive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Died,
    Revived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnectivityEvent {
    pub slot: u64,
    pub node: NodeId,
    pub transition: Transition,
}

/// One event per alive-flag change. Nodes are taken to be alive before the
/// first sample, so a node first seen dead yields a `Died` event.
pub fn connectivity_events(log: &[AliveSample]) -> Result<Vec<ConnectivityEvent>, RouteError> {
    let mut state: HashMap<NodeId, bool> = HashMap::new();
    let mut events = Vec::new();
    for (index, s) in log.iter().enumerate() {
        if index > 0 && s.slot < log[index - 1].slot {
            return Err(RouteError::UnorderedLog { index });
        }
        let previous = state.insert(s.node, s.alive).unwrap_or(true);
        if previous != s.alive {
            events.push(ConnectivityEvent {
                slot: s.slot,
                node: s.node,
                transition: if s.alive { Transition::Revived } else { Transition::Died },
            });
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_trace() -> TopologyTrace {
        TopologyTrace::parse(
            "period 2.0\ncomm_range 1.0\nkeyframe 0.0\nA 0 0\nB 1 0\nC 2 0\nkeyframe 1.0\nA 0 0\nB 0 1\nC 0 2\n",
        )
        .unwrap()
    }

    #[test]
    fn positions_at_keyframes_and_midpoints() {
        let t = line_trace();
        assert_eq!(t.positions_at(0.0).unwrap(), vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert_eq!(t.positions_at(2.0).unwrap(), t.positions_at(0.0).unwrap());
        let mid = t.positions_at(0.5).unwrap();
        assert_eq!(mid, vec![(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]);
        // wrapping segment from the last keyframe back to the first
        let wrap = t.positions_at(1.5).unwrap();
        assert_eq!(wrap[2], (1.0, 1.0));
        assert!(t.positions_at(-1.0).is_err());
    }

    #[test]
    fn trace_validation() {
        assert!(matches!(
            TopologyTrace::parse("period 1\ncomm_range 1\n"),
            Err(RouteError::EmptyTrace)
        ));
        assert!(TopologyTrace::parse("period 1\ncomm_range 1\nkeyframe 0.5\nA 0 0\nkeyframe 0.2\nA 1 1\n").is_err());
        assert!(TopologyTrace::parse("period 1\ncomm_range 1\nkeyframe 1.5\nA 0 0\n").is_err());
        assert!(TopologyTrace::parse("period 1\ncomm_range 1\nkeyframe 0\nA 0 0\nkeyframe 0.5\nB 0 0\n").is_err());
        assert!(matches!(
            TopologyTrace::parse("period 1\ncomm_range 1\nkeyframe 0\nA 0\n"),
            Err(RouteError::Parse { line: 4, .. })
        ));
    }

    #[test]
    fn dead_nodes_drop_out() {
        let t = line_trace();
        let live = Battery::new(1.0, 2.0, 0.5).unwrap();
        let dead = Battery::new(0.1, 2.0, 0.5).unwrap();
        let g = topology_at(&t, 0.0, Some(&[live, dead, live])).unwrap();
        assert_eq!(g.edges(), vec![]);
        assert_eq!(g.in_range(1), &[0, 2]);
        assert_eq!(shortest_route(&g, 0, 2).unwrap(), None);
        let g = topology_at(&t, 0.0, None).unwrap();
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(shortest_route(&g, 0, 2).unwrap().unwrap().nodes, vec![0, 1, 2]);
    }

    #[test]
    fn route_to_self_and_unknown_ids() {
        let g = topology_at(&line_trace(), 0.0, None).unwrap();
        let r = shortest_route(&g, 1, 1).unwrap().unwrap();
        assert_eq!(r.hop_count(), 0);
        assert_eq!(shortest_route(&g, 0, 9), Err(RouteError::UnknownNode(9)));
    }

    #[test]
    fn lexicographic_tie_break() {
        // square 0-1-3, 0-2-3: both two hops, 0-1-3 wins
        let g = LinkGraph::from_positions(vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)], 1.0, vec![true; 4])
            .unwrap();
        assert_eq!(shortest_route(&g, 0, 3).unwrap().unwrap().nodes, vec![0, 1, 3]);
        assert_eq!(shortest_route(&g, 3, 0).unwrap().unwrap().nodes, vec![3, 1, 0]);
    }

    #[test]
    fn route_tables_per_keyframe() {
        let t = line_trace();
        let tables = route_tables(&t, 2).unwrap();
        assert_eq!(tables.len(), 2);
        assert_eq!(tables[0].routes[0].as_ref().unwrap().hop_count(), 2);
        let mut cache = RouteCache::new();
        cache.insert_trace("line", &t, 2).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get("line", 1), Some(&tables[1]));
    }

    #[test]
    fn connectivity_transitions() {
        let s = |slot, node, alive| AliveSample { slot, node, alive };
        assert!(connectivity_events(&[s(0, 0, true), s(1, 0, true)]).unwrap().is_empty());
        let events = connectivity_events(&[s(0, 0, true), s(1, 0, false), s(2, 0, false), s(3, 0, true)]).unwrap();
        assert_eq!(
            events,
            vec![
                ConnectivityEvent { slot: 1, node: 0, transition: Transition::Died },
                ConnectivityEvent { slot: 3, node: 0, transition: Transition::Revived },
            ]
        );
        assert_eq!(
            connectivity_events(&[s(2, 0, true), s(1, 0, true)]),
            Err(RouteError::UnorderedLog { index: 1 })
        );
    }
}
