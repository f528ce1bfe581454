//! Network instances: animals placed in the enclosure, each carrying a BAN of
//! biosensors rooted at a sink, or an explicit list of stations.

use rand::Rng;

use super::config::{Access, ScenarioConfig, Topology};
use super::SimError;
use crate::energy::Battery;
use crate::routing::{NodeId, TopologyTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Biosensor { animal: usize, index: usize },
    /// Worn by the animal; relays the BAN's data to an access point.
    Sink { animal: usize },
    /// A node of an explicit topology.
    Station,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    /// Absolute position (m).
    Fixed((f64, f64)),
    /// Body-frame offset from the animal center (m).
    Body { animal: usize, offset: (f64, f64) },
    /// Position taken from the BAN trace, node `local` of the trace.
    Traced { animal: usize, local: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimNode {
    pub id: NodeId,
    pub label: String,
    pub role: Role,
    pub placement: Placement,
    pub battery: Battery,
    /// W while transmitting.
    pub tx_power: f64,
    /// J per transmitted packet.
    pub tx_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Animal {
    pub center: (f64, f64),
    /// Offset into the trace period (s), so animals do not move in lockstep.
    pub phase: f64,
    pub sink: NodeId,
    /// All BAN members, sink included, ascending.
    pub members: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub nodes: Vec<SimNode>,
    pub animals: Vec<Animal>,
    pub trace: Option<TopologyTrace>,
    pub access: Access,
}

impl Network {
    /// Position of `id` at `t` seconds.
    pub fn position(&self, id: NodeId, t: f64) -> (f64, f64) {
        match self.nodes[id as usize].placement {
            Placement::Fixed(p) => p,
            Placement::Body { animal, offset } => {
                let c = self.animals[animal].center;
                (c.0 + offset.0, c.1 + offset.1)
            }
            Placement::Traced { animal, local } => {
                let a = &self.animals[animal];
                let trace = self.trace.as_ref().expect("traced nodes come with a trace");
                let p = trace.positions_at(t + a.phase).expect("non-negative time")[local];
                (a.center.0 + p.0, a.center.1 + p.1)
            }
        }
    }

    /// Mean distance from each animal to its nearest neighbor (m); `None`
    /// with fewer than two animals.
    pub fn mean_nearest_neighbor_spacing(&self) -> Option<f64> {
        if self.animals.len() < 2 {
            return None;
        }
        let total: f64 = self
            .animals
            .iter()
            .enumerate()
            .map(|(i, a)| {
                self.animals
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, b)| ((a.center.0 - b.center.0).powi(2) + (a.center.1 - b.center.1).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        Some(total / self.animals.len() as f64)
    }
}

/// Builds the node population of `config`. Animal placement and trace phase
/// come from `rng`; nothing else is random.
pub fn generate_tiers<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Network, SimError> {
    let spec = &config.node;
    let battery = |residual: f64| {
        Battery::new(residual, spec.capacity, spec.dead_threshold).map_err(|e| SimError::Setup(e.to_string()))
    };
    match &config.topology {
        Topology::Explicit { nodes, .. } => {
            let nodes = nodes
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    Ok(SimNode {
                        id: i as NodeId,
                        label: n.name.clone(),
                        role: Role::Station,
                        placement: Placement::Fixed((n.x, n.y)),
                        battery: battery(n.residual.unwrap_or(spec.initial_fraction * spec.capacity))?,
                        tx_power: spec.tx_power,
                        tx_cost: spec.tx_cost,
                    })
                })
                .collect::<Result<Vec<_>, SimError>>()?;
            Ok(Network {
                nodes,
                animals: Vec::new(),
                trace: None,
                access: Access::Open,
            })
        }
        Topology::Tiers(tier) => {
            let count = tier.animal_count();
            if count == 0 {
                return Err(SimError::EmptyNetwork);
            }
            let side = tier.area.sqrt();
            let initial = spec.initial_fraction * spec.capacity;
            let mut nodes = Vec::new();
            let mut animals = Vec::with_capacity(count);
            for a in 0..count {
                let center = (rng.random_range(0.0..side), rng.random_range(0.0..side));
                let phase = match &tier.trace {
                    Some(t) => rng.random_range(0.0..t.trace.period),
                    None => 0.0,
                };
                let mut members = Vec::new();
                let mut sink = None;
                let mut push = |label: String, role: Role, placement: Placement, nodes: &mut Vec<SimNode>| {
                    let id = nodes.len() as NodeId;
                    let (tx_power, tx_cost) = match role {
                        Role::Sink { .. } => (spec.sink_tx_power, spec.sink_tx_cost),
                        _ => (spec.tx_power, spec.tx_cost),
                    };
                    nodes.push(SimNode {
                        id,
                        label,
                        role,
                        placement,
                        battery: battery(initial)?,
                        tx_power,
                        tx_cost,
                    });
                    members.push(id);
                    Ok::<NodeId, SimError>(id)
                };
                match &tier.trace {
                    Some(t) => {
                        let mut index = 0;
                        for (local, label) in t.trace.labels().iter().enumerate() {
                            let placement = Placement::Traced { animal: a, local };
                            if *label == t.sink_label {
                                sink = Some(push(format!("a{a}.{label}"), Role::Sink { animal: a }, placement, &mut nodes)?);
                            } else {
                                let role = Role::Biosensor { animal: a, index };
                                push(format!("a{a}.{label}"), role, placement, &mut nodes)?;
                                index += 1;
                            }
                        }
                    }
                    None => {
                        let n = tier.biosensors_per_ban;
                        for index in 0..n {
                            let angle = std::f64::consts::TAU * index as f64 / n as f64;
                            let offset = (tier.body_radius * angle.cos(), tier.body_radius * angle.sin());
                            let placement = Placement::Body { animal: a, offset };
                            push(format!("a{a}.b{index}"), Role::Biosensor { animal: a, index }, placement, &mut nodes)?;
                        }
                        let placement = Placement::Body {
                            animal: a,
                            offset: (0.0, 0.0),
                        };
                        sink = Some(push(format!("a{a}.sink"), Role::Sink { animal: a }, placement, &mut nodes)?);
                    }
                }
                animals.push(Animal {
                    center,
                    phase,
                    sink: sink.expect("every BAN has a sink"),
                    members,
                });
            }
            Ok(Network {
                nodes,
                animals,
                trace: tier.trace.as_ref().map(|t| t.trace.clone()),
                access: tier.access,
            })
        }
    }
}
