//! Optimal energy requests from a dedicated source.
//!
//! A node that knows how much energy it must have consumed by each slot
//! boundary (its cumulative least-required energy) can only keep its
//! cumulative received energy inside a band: below the demand it starves,
//! more than one battery capacity above it the storage overflows. That band
//! is the [`EnergyTunnel`].
//!
//! The tunnel is discretized into a grid of vertices `(slot, level)` where
//! `level * energy_step` is the cumulative energy received. Moving right
//! (next slot) is free; moving up by `k` levels inside one slot is a single
//! request that costs a constant overhead plus the energy the source has to
//! radiate, `k * energy_step / efficiency(residual fraction)`. Paths can only
//! move right or up, so the grid is a DAG and the cheapest path is found by
//! a slot-major dynamic program.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::energy::ChargeCurve;

/// Relative slack applied when snapping tunnel bounds to the grid.
const GRID_EPS: f64 = 1e-9;

/// Refuse exhaustive enumeration above this many slot-level cells.
pub const BRUTE_FORCE_LIMIT: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("demand schedule is empty")]
    EmptyDemand,
    #[error("demand schedule must start at 0, starts at {0}")]
    NonZeroStart(f64),
    #[error("demand decreases or is not finite at slot {slot}")]
    DecreasingDemand { slot: usize },
    #[error("capacity must be positive, got {0}")]
    InvalidCapacity(f64),
    #[error("energy step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("energy step {step} exceeds capacity {capacity}")]
    StepExceedsCapacity { step: f64, capacity: f64 },
    #[error("overhead must be non-negative, got {0}")]
    NegativeOverhead(f64),
    #[error("tunnel is infeasible: the lower bound at slot {slot} cannot be reached")]
    Infeasible { slot: usize },
    #[error("destination level {level} is outside the final slot of the tunnel")]
    DestinationUnreachable { level: usize },
    #[error("graph has {slots} slots x {levels} levels, above the brute-force limit of {BRUTE_FORCE_LIMIT}")]
    TooLarge { slots: usize, levels: usize },
    #[error("trajectory has {found} entries, tunnel has {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Cumulative least-required energy at each slot boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSchedule {
    least_required: Vec<f64>,
}

impl DemandSchedule {
    pub fn new(least_required: Vec<f64>) -> Result<Self, PlanError> {
        let first = *least_required.first().ok_or(PlanError::EmptyDemand)?;
        if first != 0.0 {
            return Err(PlanError::NonZeroStart(first));
        }
        for (slot, w) in least_required.windows(2).enumerate() {
            if !(w[1] >= w[0]) || !w[1].is_finite() {
                return Err(PlanError::DecreasingDemand { slot: slot + 1 });
            }
        }
        Ok(DemandSchedule { least_required })
    }

    /// Number of slots (one fewer than the number of boundaries).
    pub fn slots(&self) -> usize {
        self.least_required.len() - 1
    }

    pub fn least_required(&self) -> &[f64] {
        &self.least_required
    }

    /// One cumulative joule value per line; blank lines and `#` comments are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self, PlanError> {
        let mut values = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v = line.parse::<f64>().map_err(|e| PlanError::Parse {
                line: idx + 1,
                message: format!("`{line}`: {e}"),
            })?;
            values.push(v);
        }
        DemandSchedule::new(values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PlanError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PlanError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        DemandSchedule::parse(&text)
    }
}

/// Lower and upper bounds on cumulative received energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTunnel {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub capacity: f64,
}

impl EnergyTunnel {
    pub fn slots(&self) -> usize {
        self.lower.len() - 1
    }
}

pub fn build_tunnel(demand: &DemandSchedule, capacity: f64) -> Result<EnergyTunnel, PlanError> {
    if !(capacity > 0.0) || !capacity.is_finite() {
        return Err(PlanError::InvalidCapacity(capacity));
    }
    let lower = demand.least_required.clone();
    let upper = lower.iter().map(|l| l + capacity).collect();
    Ok(EnergyTunnel { lower, upper, capacity })
}

/// Where a plan has to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Destination {
    /// Cheapest vertex of the final slot.
    #[default]
    AnyFinal,
    /// A fixed level of the final slot.
    Level(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeKind {
    /// `(slot, level) -> (slot + 1, level)`
    Horizontal,
    /// `(slot, level) -> (slot, level + levels)`
    Jump { levels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub slot: usize,
    pub level: usize,
    pub kind: EdgeKind,
    pub cost: f64,
}

/// Grid over an energy tunnel. Edges are generated on demand.
#[derive(Debug, Clone)]
pub struct TunnelGraph {
    energy_step: f64,
    overhead: f64,
    capacity: f64,
    lower: Vec<f64>,
    lowest_level: Vec<usize>,
    highest_level: Vec<usize>,
    curve: ChargeCurve,
    destination: Destination,
}

pub fn build_graph(
    tunnel: &EnergyTunnel,
    energy_step: f64,
    overhead: f64,
    curve: &ChargeCurve,
) -> Result<TunnelGraph, PlanError> {
    if !(energy_step > 0.0) || !energy_step.is_finite() {
        return Err(PlanError::InvalidStep(energy_step));
    }
    if energy_step > tunnel.capacity {
        return Err(PlanError::StepExceedsCapacity {
            step: energy_step,
            capacity: tunnel.capacity,
        });
    }
    if !(overhead >= 0.0) || !overhead.is_finite() {
        return Err(PlanError::NegativeOverhead(overhead));
    }
    // Lower bounds snap up and upper bounds snap down so that every grid
    // vertex is a valid energy state.
    let lowest_level = tunnel
        .lower
        .iter()
        .map(|l| ((l / energy_step) - GRID_EPS).ceil().max(0.0) as usize)
        .collect();
    let highest_level = tunnel
        .upper
        .iter()
        .map(|u| ((u / energy_step) + GRID_EPS).floor().max(0.0) as usize)
        .collect();
    Ok(TunnelGraph {
        energy_step,
        overhead,
        capacity: tunnel.capacity,
        lower: tunnel.lower.clone(),
        lowest_level,
        highest_level,
        curve: curve.clone(),
        destination: Destination::AnyFinal,
    })
}

impl TunnelGraph {
    pub fn with_destination(mut self, destination: Destination) -> Self {
        self.destination = destination;
        self
    }

    pub fn destination(&self) -> Destination {
        self.destination
    }

    pub fn slots(&self) -> usize {
        self.lower.len() - 1
    }

    pub fn energy_step(&self) -> f64 {
        self.energy_step
    }

    pub fn overhead(&self) -> f64 {
        self.overhead
    }

    /// Inclusive level range of the vertices at `slot`.
    pub fn level_range(&self, slot: usize) -> (usize, usize) {
        (self.lowest_level[slot], self.highest_level[slot])
    }

    /// Number of distinct energy levels spanned by the grid.
    pub fn level_count(&self) -> usize {
        self.highest_level.iter().copied().max().unwrap_or(0) + 1
    }

    pub fn contains(&self, slot: usize, level: usize) -> bool {
        slot < self.lower.len() && (self.lowest_level[slot]..=self.highest_level[slot]).contains(&level)
    }

    pub fn level_energy(&self, level: usize) -> f64 {
        level as f64 * self.energy_step
    }

    /// Residual fraction at a vertex: distance above the lower bound over
    /// capacity.
    pub fn residual_fraction(&self, slot: usize, level: usize) -> f64 {
        ((self.level_energy(level) - self.lower[slot]) / self.capacity).clamp(0.0, 1.0)
    }

    /// Cost of one request of `levels` grid units made at `(slot, level)`;
    /// `None` when the curve gives zero efficiency there.
    pub fn jump_cost(&self, slot: usize, level: usize, levels: usize) -> Option<f64> {
        let efficiency = self.curve.eval(self.residual_fraction(slot, level));
        if efficiency <= 0.0 {
            return None;
        }
        Some(self.overhead + (levels as f64 * self.energy_step) / efficiency)
    }

    /// Every edge of the grid, slot-major then level-major.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for slot in 0..self.lower.len() {
            let (lo, hi) = self.level_range(slot);
            for level in lo..=hi {
                for levels in 1..=(hi - level) {
                    if let Some(cost) = self.jump_cost(slot, level, levels) {
                        out.push(Edge {
                            slot,
                            level,
                            kind: EdgeKind::Jump { levels },
                            cost,
                        });
                    }
                }
                if slot < self.slots() && self.contains(slot + 1, level) {
                    out.push(Edge {
                        slot,
                        level,
                        kind: EdgeKind::Horizontal,
                        cost: 0.0,
                    });
                }
            }
        }
        out
    }

    /// First slot whose vertices cannot be reached from the start.
    pub fn check_feasible(&self) -> Result<(), PlanError> {
        if self.lowest_level[0] > 0 || self.highest_level[0] < self.lowest_level[0] {
            return Err(PlanError::Infeasible { slot: 0 });
        }
        for slot in 1..self.lower.len() {
            if self.lowest_level[slot] > self.highest_level[slot - 1]
                || self.lowest_level[slot] > self.highest_level[slot]
            {
                return Err(PlanError::Infeasible { slot });
            }
        }
        if let Destination::Level(level) = self.destination {
            if !self.contains(self.slots(), level) {
                return Err(PlanError::DestinationUnreachable { level });
            }
        }
        Ok(())
    }

    fn accepts_final(&self, level: usize) -> bool {
        match self.destination {
            Destination::AnyFinal => true,
            Destination::Level(d) => d == level,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeRequest {
    pub slot: usize,
    /// Joules delivered to the node.
    pub amount: f64,
    /// Cost of this request at the source.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargePlan {
    pub requests: Vec<ChargeRequest>,
    pub total_cost: f64,
    /// Cumulative received energy at each slot boundary, after that slot's
    /// requests.
    pub trajectory: Vec<f64>,
    /// Grid levels matching `trajectory`.
    pub levels: Vec<usize>,
}

impl ChargePlan {
    pub fn final_level(&self) -> usize {
        *self.levels.last().expect("plans cover at least one slot boundary")
    }

    pub fn total_requested(&self) -> f64 {
        self.requests.iter().fold(0.0, |acc, r| acc + r.amount)
    }

    /// Human-readable table followed by `key=value` machine lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# charge plan: {} request(s), total cost {:.6e}",
            self.requests.len(),
            self.total_cost
        );
        let _ = writeln!(out, "{:>6}  {:>14}  {:>16}", "slot", "amount_J", "cumulative_cost");
        let mut cumulative = 0.0;
        for r in &self.requests {
            cumulative += r.cost;
            let _ = writeln!(out, "{:>6}  {:>14.6e}  {:>16.6e}", r.slot, r.amount, cumulative);
        }
        let _ = writeln!(
            out,
            "plan requests={} total_cost={} final_energy={}",
            self.requests.len(),
            self.total_cost,
            self.trajectory.last().copied().unwrap_or(0.0)
        );
        let mut cumulative = 0.0;
        for r in &self.requests {
            cumulative += r.cost;
            let _ = writeln!(
                out,
                "request slot={} amount={} cost={} cumulative_cost={}",
                r.slot, r.amount, r.cost, cumulative
            );
        }
        for (slot, e) in self.trajectory.iter().enumerate() {
            let _ = writeln!(out, "trajectory slot={slot} energy={e}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Label {
    cost: f64,
    requests: usize,
}

impl Label {
    const UNREACHED: Label = Label {
        cost: f64::INFINITY,
        requests: usize::MAX,
    };

    fn better_than(&self, other: &Label) -> bool {
        self.cost < other.cost || (self.cost == other.cost && self.requests < other.requests)
    }

    fn reached(&self) -> bool {
        self.cost.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pred {
    Start,
    /// Entered from the previous slot at the same level.
    Left,
    /// Jumped up from this level within the same slot.
    Below(usize),
}

/// Minimum-cost monotone path through the grid.
///
/// Ties are broken towards fewer requests, then a lower final level.
pub fn plan_optimal(graph: &TunnelGraph) -> Result<ChargePlan, PlanError> {
    graph.check_feasible()?;
    let columns = graph.lower.len();
    // labels[slot][level - lo], preds likewise
    let mut labels: Vec<Vec<Label>> = Vec::with_capacity(columns);
    let mut preds: Vec<Vec<Pred>> = Vec::with_capacity(columns);

    for slot in 0..columns {
        let (lo, hi) = graph.level_range(slot);
        let width = hi - lo + 1;
        let mut best = vec![Label::UNREACHED; width];
        let mut pred = vec![Pred::Start; width];
        if slot == 0 {
            best[0] = Label { cost: 0.0, requests: 0 };
        } else {
            let (plo, phi) = graph.level_range(slot - 1);
            for level in lo.max(plo)..=hi.min(phi) {
                let from = labels[slot - 1][level - plo];
                if from.reached() {
                    best[level - lo] = from;
                    pred[level - lo] = Pred::Left;
                }
            }
        }
        for level in lo..=hi {
            for below in lo..level {
                let from = best[below - lo];
                if !from.reached() {
                    continue;
                }
                let Some(edge) = graph.jump_cost(slot, below, level - below) else {
                    continue;
                };
                let cand = Label {
                    cost: from.cost + edge,
                    requests: from.requests + 1,
                };
                if cand.better_than(&best[level - lo]) {
                    best[level - lo] = cand;
                    pred[level - lo] = Pred::Below(below);
                }
            }
        }
        if !best.iter().any(Label::reached) {
            return Err(PlanError::Infeasible { slot });
        }
        labels.push(best);
        preds.push(pred);
    }

    let last = columns - 1;
    let (lo, hi) = graph.level_range(last);
    let mut end: Option<(usize, Label)> = None;
    for level in lo..=hi {
        let label = labels[last][level - lo];
        if !label.reached() || !graph.accepts_final(level) {
            continue;
        }
        if end.is_none_or(|(_, e)| label.better_than(&e)) {
            end = Some((level, label));
        }
    }
    let (final_level, label) = end.ok_or(match graph.destination {
        Destination::Level(level) => PlanError::DestinationUnreachable { level },
        Destination::AnyFinal => PlanError::Infeasible { slot: last },
    })?;

    // Walk predecessors back to the start.
    let mut levels = vec![0usize; columns];
    let mut requests = Vec::new();
    let (mut slot, mut level) = (last, final_level);
    levels[last] = final_level;
    loop {
        let lo = graph.level_range(slot).0;
        match preds[slot][level - lo] {
            Pred::Start => break,
            Pred::Left => {
                slot -= 1;
                levels[slot] = level;
            }
            Pred::Below(below) => {
                let cost = graph.jump_cost(slot, below, level - below).expect("edge existed during search");
                requests.push(ChargeRequest {
                    slot,
                    amount: (level - below) as f64 * graph.energy_step,
                    cost,
                });
                level = below;
            }
        }
    }
    requests.reverse();
    Ok(ChargePlan {
        requests,
        total_cost: label.cost,
        trajectory: levels.iter().map(|&l| graph.level_energy(l)).collect(),
        levels,
    })
}

/// Exhaustive enumeration of every monotone path; a cross-check for
/// [`plan_optimal`] on small grids.
pub fn brute_force_plan(graph: &TunnelGraph) -> Result<ChargePlan, PlanError> {
    let slots = graph.slots();
    let levels = graph.level_count();
    if slots * levels > BRUTE_FORCE_LIMIT {
        return Err(PlanError::TooLarge { slots, levels });
    }
    graph.check_feasible()?;

    struct Search<'a> {
        graph: &'a TunnelGraph,
        path: Vec<(usize, usize, usize)>,
        best: Option<(f64, usize, usize, Vec<(usize, usize, usize)>)>,
    }

    impl Search<'_> {
        fn visit(&mut self, slot: usize, level: usize, cost: f64) {
            let g = self.graph;
            if slot == g.slots() && g.accepts_final(level) {
                let requests = self.path.len();
                let better = match &self.best {
                    None => true,
                    Some((c, r, l, _)) => (cost, requests, level) < (*c, *r, *l),
                };
                if better {
                    self.best = Some((cost, requests, level, self.path.clone()));
                }
            }
            let (_, hi) = g.level_range(slot);
            for up in 1..=(hi - level) {
                if let Some(edge) = g.jump_cost(slot, level, up) {
                    self.path.push((slot, level, up));
                    self.visit(slot, level + up, cost + edge);
                    self.path.pop();
                }
            }
            if slot < g.slots() && g.contains(slot + 1, level) {
                self.visit(slot + 1, level, cost);
            }
        }
    }

    let mut search = Search {
        graph,
        path: Vec::new(),
        best: None,
    };
    search.visit(0, graph.level_range(0).0, 0.0);
    let (total_cost, _, _, path) = search.best.ok_or(PlanError::Infeasible { slot: slots })?;

    let mut levels_at = vec![0usize; slots + 1];
    let mut requests = Vec::with_capacity(path.len());
    let mut current = graph.level_range(0).0;
    let mut jumps = path.iter().peekable();
    for (slot, entry) in levels_at.iter_mut().enumerate() {
        while let Some(&&(s, from, up)) = jumps.peek() {
            if s != slot {
                break;
            }
            requests.push(ChargeRequest {
                slot,
                amount: up as f64 * graph.energy_step,
                cost: graph.jump_cost(slot, from, up).expect("edge existed during search"),
            });
            current = from + up;
            jumps.next();
        }
        *entry = current;
    }
    Ok(ChargePlan {
        requests,
        total_cost,
        trajectory: levels_at.iter().map(|&l| graph.level_energy(l)).collect(),
        levels: levels_at,
    })
}

/// Outcome of checking a trajectory against its tunnel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanCheck {
    Ok,
    /// Cumulative energy below the lower bound.
    Starvation { slot: usize },
    /// Cumulative energy above the upper bound.
    Overflow { slot: usize },
}

pub fn validate_plan(plan: &ChargePlan, tunnel: &EnergyTunnel) -> Result<PlanCheck, PlanError> {
    if plan.trajectory.len() != tunnel.lower.len() {
        return Err(PlanError::LengthMismatch {
            expected: tunnel.lower.len(),
            found: plan.trajectory.len(),
        });
    }
    let slack = GRID_EPS * tunnel.capacity;
    for (slot, &e) in plan.trajectory.iter().enumerate() {
        if e < tunnel.lower[slot] - slack {
            return Ok(PlanCheck::Starvation { slot });
        }
        if e > tunnel.upper[slot] + slack {
            return Ok(PlanCheck::Overflow { slot });
        }
    }
    Ok(PlanCheck::Ok)
}
