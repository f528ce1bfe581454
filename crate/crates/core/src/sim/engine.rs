//! Slotted discrete-event engine.
//!
//! Events are ordered by `(slot, ordinal)`. Exogenous events for a slot
//! (blockage toggles, packet arrivals, charge requests) run before that
//! slot's tick. A tick runs the fixed pipeline: fields, cycle decisions in
//! ascending node id, per-domain arbitration, transmissions, energy
//! settlement, then duty-ratio adaptation. Metric samples follow the tick
//! that closes their boundary.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::config::{Access, ScenarioConfig, Topology, TrafficKind};
use super::fields::{dedicated_source_field, AmbientProcess, BlockageProcess};
use super::metrics::{self as series, Metrics};
use super::rng::{stream_rng, StreamKind};
use super::tiers::{generate_tiers, Network, Role};
use super::SimError;
use crate::emac::{adapt_ratio, arbitrate_channel, next_cycle, ChannelOutcome, Cycle, CyclePolicy, HarvestSettings, NodeLinkState};
use crate::energy::{harvest_with_floor, power_density_at, Battery, IncidentField, NEAR_FIELD_LIMIT};
use crate::planner::{build_graph, build_tunnel, plan_optimal, DemandSchedule};
use crate::routing::{shortest_route, AliveSample, FlowRequest, LinkGraph, NodeId, TxParams};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    /// BAN packet heading for its sink.
    Sink(NodeId),
    /// At a sink, heading for any access point.
    AccessPoint,
    /// Explicit-topology packet heading for a station.
    Station(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Packet {
    origin: NodeId,
    created: u64,
    target: Target,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Hop {
    Node(NodeId),
    AccessPoint(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    SlotTick,
    /// Reading from traffic generator `generator`, due at `time` seconds.
    PacketArrival { generator: usize, time: f64 },
    /// All packets of an explicit flow.
    FlowRelease { flow: usize },
    ChargeRequest { node: NodeId, amount: f64 },
    BlockageToggle { source: usize },
    /// Samples state at `boundary` (the end of slot `boundary - 1`).
    MetricSample { boundary: u64 },
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time: u64,
    pub ordinal: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    /// Reversed so that `BinaryHeap` pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.ordinal).cmp(&(self.time, self.ordinal))
    }
}

#[derive(Debug, Default)]
struct EventQueue {
    heap: BinaryHeap<Event>,
    next_ordinal: u64,
    last: Option<(u64, u64)>,
}

impl EventQueue {
    fn push(&mut self, time: u64, kind: EventKind) {
        if let Some((now, _)) = self.last {
            assert!(time >= now, "event scheduled in the past: {time} < {now}");
        }
        self.heap.push(Event {
            time,
            ordinal: self.next_ordinal,
            kind,
        });
        self.next_ordinal += 1;
    }

    fn pop(&mut self) -> Option<Event> {
        let e = self.heap.pop()?;
        let key = (e.time, e.ordinal);
        assert!(self.last.is_none_or(|last| last < key), "events out of order");
        self.last = Some(key);
        Some(e)
    }
}

struct Generator {
    node: NodeId,
    kind: TrafficKind,
    rng: ChaCha8Rng,
}

impl Generator {
    fn next_after(&mut self, time: f64) -> f64 {
        match self.kind {
            TrafficKind::Periodic { period } => time + period,
            TrafficKind::Poisson { rate } => time + Exp::new(rate).expect("validated rate").sample(&mut self.rng),
        }
    }
}

struct NodeState {
    battery: Battery,
    queue: VecDeque<Packet>,
    policy: CyclePolicy,
    cycle: Cycle,
    mac_rng: ChaCha8Rng,
    ambient: Option<AmbientProcess<ChaCha8Rng>>,
    harvested: f64,
    consumed: f64,
}

#[derive(Default)]
struct Counters {
    generated: u64,
    delivered: u64,
    dropped: u64,
    collisions: u64,
    radiated: f64,
}

struct Engine<'a> {
    config: &'a ScenarioConfig,
    network: Network,
    nodes: Vec<NodeState>,
    blockage: Vec<BlockageProcess<ChaCha8Rng>>,
    generators: Vec<Generator>,
    arbitration_rng: Vec<ChaCha8Rng>,
    domain_busy: Vec<bool>,
    busy_slots: Vec<u64>,
    queue: EventQueue,
    counters: Counters,
    metrics: Metrics,
    positions: Vec<(f64, f64)>,
}

fn domain_count(network: &Network) -> usize {
    if network.animals.is_empty() {
        1
    } else {
        network.animals.len() + 1
    }
}

impl<'a> Engine<'a> {
    fn new(config: &'a ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        let network = generate_tiers(config, &mut stream_rng(seed, StreamKind::Placement, 0))?;
        let open = network.access == Access::Open;
        let nodes = network
            .nodes
            .iter()
            .map(|n| {
                let ambient = if open {
                    let rng = stream_rng(seed, StreamKind::Ambient, n.id as u64);
                    Some(AmbientProcess::new(config.energy.ambient, rng).map_err(|e| SimError::Setup(e.to_string()))?)
                } else {
                    None
                };
                Ok(NodeState {
                    battery: n.battery,
                    queue: VecDeque::new(),
                    policy: config.mac.policy,
                    cycle: Cycle::Energy,
                    mac_rng: stream_rng(seed, StreamKind::Mac, n.id as u64),
                    ambient,
                    harvested: 0.0,
                    consumed: 0.0,
                })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        let blockage = config
            .sources
            .iter()
            .enumerate()
            .map(|(i, s)| {
                BlockageProcess::for_source(s, stream_rng(seed, StreamKind::Blockage, i as u64))
                    .map_err(|e| SimError::Setup(e.to_string()))
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        let mut generators = Vec::new();
        for n in &network.nodes {
            if let Role::Biosensor { index, .. } = n.role {
                for t in config.traffic.iter().filter(|t| t.applies_to(index)) {
                    let rng = stream_rng(seed, StreamKind::Traffic, generators.len() as u64);
                    generators.push(Generator {
                        node: n.id,
                        kind: t.kind,
                        rng,
                    });
                }
            }
        }
        let domains = domain_count(&network);
        let positions = (0..network.nodes.len() as NodeId).map(|id| network.position(id, 0.0)).collect();
        Ok(Engine {
            config,
            nodes,
            blockage,
            generators,
            arbitration_rng: (0..domains)
                .map(|d| stream_rng(seed, StreamKind::Arbitration, d as u64))
                .collect(),
            domain_busy: vec![false; domains],
            busy_slots: vec![0; domains],
            queue: EventQueue::default(),
            counters: Counters::default(),
            metrics: Metrics {
                scenario: config.name.clone(),
                seed,
                slots: config.duration,
                slot_length: config.slot_length,
                node_count: network.nodes.len(),
                records: Vec::new(),
            },
            positions,
            network,
        })
    }

    fn slot_of(&self, time: f64) -> u64 {
        (time / self.config.slot_length).floor().max(0.0) as u64
    }

    fn domain(&self, id: NodeId) -> usize {
        match self.network.nodes[id as usize].role {
            Role::Biosensor { animal, .. } => animal,
            Role::Sink { .. } => self.network.animals.len(),
            Role::Station => 0,
        }
    }

    fn schedule_initial(&mut self) -> Result<(), SimError> {
        let slot = self.config.slot_length;
        for i in 0..self.blockage.len() {
            if let Some(dwell) = self.blockage[i].current_dwell() {
                let at = ((dwell / slot).round() as u64).max(1);
                if at < self.config.duration {
                    self.queue.push(at, EventKind::BlockageToggle { source: i });
                }
            }
        }
        for g in 0..self.generators.len() {
            let first = match self.generators[g].kind {
                TrafficKind::Periodic { period } => self.generators[g].rng.random_range(0.0..period),
                TrafficKind::Poisson { .. } => self.generators[g].next_after(0.0),
            };
            let at = self.slot_of(first);
            if at < self.config.duration {
                self.queue.push(at, EventKind::PacketArrival { generator: g, time: first });
            }
        }
        if let Topology::Explicit { flows, .. } = &self.config.topology {
            for (i, f) in flows.iter().enumerate() {
                self.queue.push(f.release, EventKind::FlowRelease { flow: i });
            }
        }
        self.plan_charging()?;
        self.queue.push(0, EventKind::SlotTick);
        Ok(())
    }

    /// Plans AP charge deliveries for every biosensor from its expected
    /// consumption and schedules them as events.
    fn plan_charging(&mut self) -> Result<(), SimError> {
        let Some(planning) = &self.config.planning else {
            return Ok(());
        };
        let spec = &self.config.node;
        let epochs = self.config.duration.div_ceil(planning.epoch) as usize;
        let epoch_seconds = planning.epoch as f64 * self.config.slot_length;
        for n in &self.network.nodes {
            let Role::Biosensor { index, .. } = n.role else { continue };
            let rate: f64 = self
                .config
                .traffic
                .iter()
                .filter(|t| t.applies_to(index))
                .map(|t| match t.kind {
                    TrafficKind::Periodic { period } => 1.0 / period,
                    TrafficKind::Poisson { rate } => rate,
                })
                .sum();
            let per_second = rate * (spec.sense_cost + n.tx_cost) + spec.idle_power;
            let demand = (0..=epochs).map(|e| per_second * epoch_seconds * e as f64).collect();
            let plan_err = |source| SimError::Plan { node: n.id, source };
            let demand = DemandSchedule::new(demand).map_err(plan_err)?;
            let tunnel = build_tunnel(&demand, spec.capacity - spec.dead_threshold).map_err(plan_err)?;
            let graph = build_graph(&tunnel, planning.energy_step, planning.overhead, &spec.curve).map_err(plan_err)?;
            let plan = plan_optimal(&graph).map_err(plan_err)?;
            self.metrics.push(series::PLAN_COST, 0, Some(n.id), plan.total_cost);
            self.metrics.push(series::PLAN_REQUESTS, 0, Some(n.id), plan.requests.len() as f64);
            for r in &plan.requests {
                let at = r.slot as u64 * planning.epoch;
                if at < self.config.duration {
                    self.queue.push(at, EventKind::ChargeRequest { node: n.id, amount: r.amount });
                }
            }
        }
        Ok(())
    }

    fn run(mut self) -> Result<Metrics, SimError> {
        self.sample(0);
        self.schedule_initial()?;
        while let Some(event) = self.queue.pop() {
            let t = event.time;
            match event.kind {
                EventKind::SlotTick => {
                    self.tick(t)?;
                    let boundary = t + 1;
                    if boundary % self.config.sample_every == 0 || boundary == self.config.duration {
                        self.queue.push(t, EventKind::MetricSample { boundary });
                    }
                    if boundary < self.config.duration {
                        self.queue.push(boundary, EventKind::SlotTick);
                    }
                }
                EventKind::MetricSample { boundary } => self.sample(boundary),
                EventKind::BlockageToggle { source } => {
                    self.blockage[source].toggle();
                    if let Some(dwell) = self.blockage[source].current_dwell() {
                        let at = t + ((dwell / self.config.slot_length).round() as u64).max(1);
                        if at < self.config.duration {
                            self.queue.push(at, EventKind::BlockageToggle { source });
                        }
                    }
                }
                EventKind::PacketArrival { generator, time } => self.arrivals(t, generator, time),
                EventKind::FlowRelease { flow } => self.release(t, flow),
                EventKind::ChargeRequest { node, amount } => {
                    let state = &mut self.nodes[node as usize];
                    let (battery, stored) = state.battery.credit(amount).map_err(|e| SimError::Module {
                        slot: t,
                        node: Some(node),
                        message: e.to_string(),
                    })?;
                    state.battery = battery;
                    state.harvested += stored;
                    if stored < amount {
                        self.metrics.push(series::CLAMPED, t, Some(node), amount - stored);
                    }
                }
            }
        }
        Ok(self.metrics)
    }

    fn arrivals(&mut self, slot: u64, generator: usize, time: f64) {
        let node = self.generators[generator].node;
        let mut next = time;
        loop {
            self.sense(node, slot);
            next = self.generators[generator].next_after(next);
            if self.slot_of(next) != slot {
                break;
            }
        }
        let at = self.slot_of(next).max(slot + 1);
        if at < self.config.duration {
            self.queue.push(at, EventKind::PacketArrival { generator, time: next });
        }
    }

    fn sense(&mut self, node: NodeId, slot: u64) {
        self.counters.generated += 1;
        let cost = self.config.node.sense_cost;
        let capacity = self.config.node.queue_capacity;
        let sink = match self.network.nodes[node as usize].role {
            Role::Biosensor { animal, .. } => self.network.animals[animal].sink,
            _ => unreachable!("only biosensors sense"),
        };
        let state = &mut self.nodes[node as usize];
        if state.battery.is_dead() || state.battery.residual() < cost || state.queue.len() >= capacity {
            self.counters.dropped += 1;
            return;
        }
        let before = state.battery.residual();
        state.battery = state.battery.consume(cost).expect("non-negative cost");
        state.consumed += before - state.battery.residual();
        state.queue.push_back(Packet {
            origin: node,
            created: slot,
            target: Target::Sink(sink),
        });
    }

    fn release(&mut self, slot: u64, flow: usize) {
        let Topology::Explicit { flows, .. } = &self.config.topology else {
            unreachable!("flows only exist in explicit topologies")
        };
        let f = &flows[flow];
        let capacity = self.config.node.queue_capacity;
        let state = &mut self.nodes[f.source];
        for _ in 0..f.packets {
            self.counters.generated += 1;
            if state.queue.len() >= capacity {
                self.counters.dropped += 1;
                continue;
            }
            state.queue.push_back(Packet {
                origin: f.source as NodeId,
                created: slot,
                target: Target::Station(f.destination as NodeId),
            });
        }
    }

    fn group_graph(&self, members: &[NodeId]) -> LinkGraph {
        let positions = members.iter().map(|&m| self.positions[m as usize]).collect();
        let alive = members.iter().map(|&m| self.nodes[m as usize].battery.is_alive()).collect();
        LinkGraph::from_positions(positions, self.config.node.comm_range, alive).expect("matching lengths")
    }

    fn next_hop(&self, id: NodeId, graphs: &mut BTreeMap<usize, (Vec<NodeId>, LinkGraph)>) -> Option<Hop> {
        let packet = self.nodes[id as usize].queue.front()?;
        let (group, dst) = match packet.target {
            Target::AccessPoint => {
                let p = self.positions[id as usize];
                return self
                    .config
                    .sources
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.access_point)
                    .map(|(i, s)| (i, ((s.x - p.0).powi(2) + (s.y - p.1).powi(2)).sqrt()))
                    .filter(|&(_, d)| d <= self.config.node.sink_range)
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| Hop::AccessPoint(i));
            }
            Target::Sink(sink) => match self.network.nodes[id as usize].role {
                Role::Biosensor { animal, .. } => (animal, sink),
                _ => return None,
            },
            Target::Station(dst) => (0, dst),
        };
        let (members, graph) = graphs.entry(group).or_insert_with(|| {
            let members = if self.network.animals.is_empty() {
                (0..self.network.nodes.len() as NodeId).collect()
            } else {
                self.network.animals[group].members.clone()
            };
            let graph = self.group_graph(&members);
            (members, graph)
        });
        let local = |n: NodeId| members.binary_search(&n).expect("node belongs to its group") as NodeId;
        let route = shortest_route(graph, local(id), local(dst)).ok()??;
        route.next_hop().map(|h| Hop::Node(members[h as usize]))
    }

    fn tick(&mut self, slot: u64) -> Result<(), SimError> {
        let cfg = self.config;
        let t = slot as f64 * cfg.slot_length;
        let n = self.nodes.len();
        if self.network.trace.is_some() {
            for id in 0..n as NodeId {
                self.positions[id as usize] = self.network.position(id, t);
            }
        }

        // Fields.
        let mut base = vec![0.0; n];
        for (id, b) in base.iter_mut().enumerate() {
            if let Some(ambient) = &mut self.nodes[id].ambient {
                *b += ambient.density_at(t).map_err(|e| SimError::Module {
                    slot,
                    node: Some(id as NodeId),
                    message: e.to_string(),
                })?;
            }
            for (s, source) in cfg.sources.iter().enumerate() {
                *b += dedicated_source_field(source, self.positions[id], self.blockage[s].is_blocked()).map_err(|e| {
                    SimError::Module {
                        slot,
                        node: Some(id as NodeId),
                        message: e.to_string(),
                    }
                })?;
            }
        }

        // Cycle decisions in ascending id.
        let mut graphs = BTreeMap::new();
        let mut hops = vec![None; n];
        let mut contenders: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
        for id in 0..n as NodeId {
            let hop = self.next_hop(id, &mut graphs);
            hops[id as usize] = hop;
            let node = &self.network.nodes[id as usize];
            let domain = self.domain(id);
            let state = &mut self.nodes[id as usize];
            let link = NodeLinkState {
                queue_length: if hop.is_some() { state.queue.len() } else { 0 },
                battery: state.battery,
                current_cycle: state.cycle,
                packet_tx_cost: node.tx_cost,
                packet_tx_power: node.tx_power,
                slot_length: cfg.slot_length,
            };
            state.cycle = next_cycle(&link, self.domain_busy[domain], &state.policy, &mut state.mac_rng);
            if state.cycle == Cycle::Data {
                contenders.entry(domain).or_default().push(id);
            }
        }

        // Arbitration and transmissions.
        let mut transmitting = vec![false; n];
        let mut winners = Vec::new();
        let mut busy = vec![false; self.domain_busy.len()];
        for (&domain, ids) in &contenders {
            let outcome = arbitrate_channel(ids, cfg.mac.persistence, &mut self.arbitration_rng[domain])
                .map_err(|e| SimError::Module {
                    slot,
                    node: None,
                    message: e.to_string(),
                })?;
            match &outcome {
                ChannelOutcome::Idle => {}
                ChannelOutcome::Winner(w) => winners.push(*w),
                ChannelOutcome::Collision(_) => self.counters.collisions += 1,
            }
            for id in outcome.transmitters() {
                busy[domain] = true;
                let node = &self.network.nodes[id as usize];
                let state = &mut self.nodes[id as usize];
                if state.battery.is_dead() || state.battery.residual() < node.tx_cost {
                    return Err(SimError::Invariant {
                        slot,
                        node: id,
                        message: format!(
                            "transmitting with residual {} below packet cost {}",
                            state.battery.residual(),
                            node.tx_cost
                        ),
                    });
                }
                let before = state.battery.residual();
                state.battery = state.battery.consume(node.tx_cost).expect("positive cost");
                state.consumed += before - state.battery.residual();
                self.counters.radiated += node.tx_power * cfg.slot_length;
                transmitting[id as usize] = true;
            }
        }
        for w in winners {
            self.deliver(slot, w, hops[w as usize].expect("winners have a next hop"));
        }

        // Energy settlement.
        let settings = HarvestSettings {
            step: cfg.slot_length / cfg.energy.harvest_substeps as f64,
            sensitivity_floor: cfg.energy.sensitivity_floor,
        };
        let radiating: Vec<NodeId> = (0..n as NodeId).filter(|&u| transmitting[u as usize]).collect();
        for id in 0..n {
            let state = &self.nodes[id];
            if state.cycle == Cycle::Energy {
                let mut density = base[id];
                for &u in &radiating {
                    let (a, b) = (self.positions[id], self.positions[u as usize]);
                    let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt().max(NEAR_FIELD_LIMIT);
                    density += power_density_at(self.network.nodes[u as usize].tx_power, d, 1.0).expect("clamped distance");
                }
                let field = IncidentField::new(density, String::new(), cfg.node.aperture).map_err(|e| SimError::Module {
                    slot,
                    node: Some(id as NodeId),
                    message: e.to_string(),
                })?;
                let out = harvest_with_floor(
                    &state.battery,
                    &cfg.node.curve,
                    &field,
                    cfg.slot_length,
                    settings.step,
                    settings.sensitivity_floor,
                )
                .map_err(|e| SimError::Module {
                    slot,
                    node: Some(id as NodeId),
                    message: e.to_string(),
                })?;
                let state = &mut self.nodes[id];
                state.battery = out.battery;
                state.harvested += out.harvested;
            }
            let state = &mut self.nodes[id];
            if cfg.node.idle_power > 0.0 && state.battery.is_alive() {
                let before = state.battery.residual();
                state.battery = state.battery.consume(cfg.node.idle_power * cfg.slot_length).expect("non-negative drain");
                state.consumed += before - state.battery.residual();
            }
        }

        // Busy flags and duty-ratio adaptation.
        for (d, b) in busy.iter().enumerate() {
            self.domain_busy[d] = *b;
            self.busy_slots[d] += *b as u64;
        }
        let window = cfg.mac.adapt_every;
        if window > 0 && (slot + 1) % window == 0 {
            for id in 0..n as NodeId {
                let observed = self.busy_slots[self.domain(id)] as f64 / window as f64;
                let state = &mut self.nodes[id as usize];
                state.policy = adapt_ratio(&state.policy, observed).map_err(|e| SimError::Module {
                    slot,
                    node: Some(id),
                    message: e.to_string(),
                })?;
            }
            self.busy_slots.iter_mut().for_each(|b| *b = 0);
        }
        Ok(())
    }

    /// Hands the head packet of `from` to `hop`. Fails silently (the packet
    /// stays queued) when the receiver cannot take it.
    fn deliver(&mut self, slot: u64, from: NodeId, hop: Hop) {
        let packet = *self.nodes[from as usize].queue.front().expect("winners have a packet");
        let delivered = match hop {
            Hop::AccessPoint(_) => true,
            Hop::Node(v) => {
                let receiver = &self.nodes[v as usize];
                if receiver.battery.is_dead() || receiver.cycle == Cycle::Data {
                    return;
                }
                match packet.target {
                    Target::Station(dst) if dst == v => true,
                    _ if receiver.queue.len() >= self.config.node.queue_capacity => return,
                    Target::Sink(sink) if sink == v => {
                        self.nodes[v as usize].queue.push_back(Packet {
                            target: Target::AccessPoint,
                            ..packet
                        });
                        false
                    }
                    _ => {
                        self.nodes[v as usize].queue.push_back(packet);
                        false
                    }
                }
            }
        };
        self.nodes[from as usize].queue.pop_front();
        if delivered {
            self.counters.delivered += 1;
            self.metrics
                .push(series::DELAY, slot, Some(packet.origin), (slot + 1 - packet.created) as f64);
        }
    }

    fn sample(&mut self, boundary: u64) {
        for (id, s) in self.nodes.iter().enumerate() {
            let id = Some(id as NodeId);
            self.metrics.push(series::RESIDUAL, boundary, id, s.battery.residual());
            self.metrics.push(series::HARVESTED, boundary, id, s.harvested);
            self.metrics.push(series::CONSUMED, boundary, id, s.consumed);
            self.metrics.push(series::QUEUE, boundary, id, s.queue.len() as f64);
            self.metrics.push(series::ALIVE, boundary, id, s.battery.is_alive() as u8 as f64);
        }
        let c = &self.counters;
        let network = [
            (series::GENERATED, c.generated as f64),
            (series::DELIVERED, c.delivered as f64),
            (series::DROPPED, c.dropped as f64),
            (series::COLLISIONS, c.collisions as f64),
            (series::RADIATED, c.radiated),
        ];
        for (name, value) in network {
            self.metrics.push(name, boundary, None, value);
        }
    }
}

/// Runs `config` with its own seed or `seed` when given.
pub fn run(config: &ScenarioConfig, seed: Option<u64>) -> Result<Metrics, SimError> {
    Engine::new(config, seed.unwrap_or(config.seed))?.run()
}

/// Alive flags from a run, ordered by slot then node.
pub fn alive_log(metrics: &Metrics) -> Vec<AliveSample> {
    metrics
        .series(series::ALIVE)
        .filter_map(|r| {
            r.node.map(|node| AliveSample {
                slot: r.slot,
                node,
                alive: r.value > 0.0,
            })
        })
        .collect()
}

/// Route-selection inputs of an explicit scenario: the station graph at its
/// initial energy state plus the flows and their transmission parameters.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    pub labels: Vec<String>,
    pub graph: LinkGraph,
    pub flows: Vec<FlowRequest>,
    pub batteries: Vec<Battery>,
    pub curves: Vec<crate::energy::ChargeCurve>,
    pub tx: TxParams,
}

pub fn flow_problem(config: &ScenarioConfig) -> Result<FlowProblem, SimError> {
    let Topology::Explicit { flows, .. } = &config.topology else {
        return Err(SimError::Setup("route selection needs explicit stations and flows".into()));
    };
    let mut rng = stream_rng(config.seed, StreamKind::Placement, 0);
    let network = generate_tiers(config, &mut rng)?;
    let batteries: Vec<Battery> = network.nodes.iter().map(|n| n.battery).collect();
    let positions = (0..network.nodes.len() as NodeId).map(|id| network.position(id, 0.0)).collect();
    let alive = batteries.iter().map(Battery::is_alive).collect();
    let graph = LinkGraph::from_positions(positions, config.node.comm_range, alive).expect("matching lengths");
    Ok(FlowProblem {
        labels: network.nodes.iter().map(|n| n.label.clone()).collect(),
        graph,
        flows: flows
            .iter()
            .map(|f| FlowRequest {
                id: f.id,
                source: f.source as NodeId,
                destination: f.destination as NodeId,
                release_order: f.release as u32,
                packets: f.packets,
            })
            .collect(),
        curves: vec![config.node.curve.clone(); batteries.len()],
        batteries,
        tx: TxParams {
            tx_power: config.node.tx_power,
            airtime: config.slot_length,
            tx_cost: config.node.tx_cost,
            aperture: config.node.aperture,
            harvest: HarvestSettings {
                step: config.slot_length / config.energy.harvest_substeps as f64,
                sensitivity_floor: config.energy.sensitivity_floor,
            },
        },
    })
}
