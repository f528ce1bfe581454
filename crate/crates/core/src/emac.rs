//! Energy and medium access control.
//!
//! A single-antenna node spends each slot either harvesting (energy cycle)
//! or communicating (data cycle). The long-run share of energy cycles is
//! set by a [`CyclePolicy`] and adapted to how often the channel is found
//! busy. Contention among nodes in data cycle is resolved by slotted
//! p-persistent access, and every transmission, successful or not, radiates
//! energy that neighbours in energy cycle can harvest.

use rand::Rng;
use thiserror::Error;

use crate::energy::{
    harvest_with_floor, power_density_at, Battery, ChargeCurve, EnergyError, IncidentField,
    DEFAULT_SENSITIVITY_FLOOR,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MacError {
    #[error("invalid cycle policy: {0}")]
    InvalidPolicy(String),
    #[error("busy fraction {0} is outside [0, 1]")]
    BusyFractionOutOfRange(f64),
    #[error("persistence {0} is outside (0, 1]")]
    InvalidPersistence(f64),
    #[error("invalid link state: {0}")]
    InvalidState(String),
    #[error("neighbor {id}: {source}")]
    Energy {
        id: u32,
        #[source]
        source: EnergyError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cycle {
    Energy,
    Data,
}

/// Target share of energy cycles and how it reacts to channel load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclePolicy {
    pub target_energy_fraction: f64,
    pub adaptation_gain: f64,
    /// Busy fraction at which the target is left unchanged.
    pub reference_busy: f64,
    pub min_fraction: f64,
    pub max_fraction: f64,
}

impl Default for CyclePolicy {
    fn default() -> Self {
        CyclePolicy {
            target_energy_fraction: 0.8,
            adaptation_gain: 0.1,
            reference_busy: 0.2,
            min_fraction: 0.5,
            max_fraction: 0.95,
        }
    }
}

impl CyclePolicy {
    pub fn validate(&self) -> Result<(), MacError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(in_unit(self.min_fraction) && in_unit(self.max_fraction) && self.min_fraction <= self.max_fraction) {
            return Err(MacError::InvalidPolicy(format!(
                "bounds [{}, {}] must be ordered within [0, 1]",
                self.min_fraction, self.max_fraction
            )));
        }
        if !(self.min_fraction..=self.max_fraction).contains(&self.target_energy_fraction) {
            return Err(MacError::InvalidPolicy(format!(
                "target {} outside bounds [{}, {}]",
                self.target_energy_fraction, self.min_fraction, self.max_fraction
            )));
        }
        if !(self.adaptation_gain >= 0.0) || !self.adaptation_gain.is_finite() {
            return Err(MacError::InvalidPolicy(format!(
                "adaptation gain {} must be non-negative",
                self.adaptation_gain
            )));
        }
        if !in_unit(self.reference_busy) {
            return Err(MacError::InvalidPolicy(format!(
                "reference busy fraction {} outside [0, 1]",
                self.reference_busy
            )));
        }
        Ok(())
    }
}

/// What a node knows when picking its cycle for the coming slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeLinkState {
    pub queue_length: usize,
    pub battery: Battery,
    pub current_cycle: Cycle,
    /// Energy drawn from the battery per transmitted packet (J).
    pub packet_tx_cost: f64,
    /// Radiated power while transmitting (W).
    pub packet_tx_power: f64,
    /// Seconds.
    pub slot_length: f64,
}

impl NodeLinkState {
    pub fn validate(&self) -> Result<(), MacError> {
        if !(self.packet_tx_cost > 0.0) {
            return Err(MacError::InvalidState(format!(
                "packet tx cost {} must be positive",
                self.packet_tx_cost
            )));
        }
        if !(self.packet_tx_power >= 0.0) || !(self.slot_length > 0.0) {
            return Err(MacError::InvalidState("tx power and slot length must be positive".into()));
        }
        Ok(())
    }

    /// Could this node transmit right now if the channel were idle?
    pub fn can_transmit(&self) -> bool {
        self.queue_length > 0 && self.battery.is_alive() && self.battery.residual() >= self.packet_tx_cost
    }
}

/// Picks the cycle for the next slot.
///
/// A data cycle needs a queued packet, enough energy for one transmission and
/// an idle channel. Eligible slots become data cycles with probability
/// `1 - target_energy_fraction`.
pub fn next_cycle<R: Rng + ?Sized>(
    state: &NodeLinkState,
    channel_busy: bool,
    policy: &CyclePolicy,
    rng: &mut R,
) -> Cycle {
    if !state.can_transmit() || channel_busy {
        return Cycle::Energy;
    }
    let p_data = (1.0 - policy.target_energy_fraction).clamp(0.0, 1.0);
    if rng.random_bool(p_data) {
        Cycle::Data
    } else {
        Cycle::Energy
    }
}

/// Linear load feedback: a busier channel lowers the energy share so that
/// data cycles lost to contention are made up.
pub fn adapt_ratio(policy: &CyclePolicy, observed_busy_fraction: f64) -> Result<CyclePolicy, MacError> {
    if !(0.0..=1.0).contains(&observed_busy_fraction) {
        return Err(MacError::BusyFractionOutOfRange(observed_busy_fraction));
    }
    let target = policy.target_energy_fraction
        - policy.adaptation_gain * (observed_busy_fraction - policy.reference_busy);
    Ok(CyclePolicy {
        target_energy_fraction: target.clamp(policy.min_fraction, policy.max_fraction),
        ..*policy
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelOutcome {
    Idle,
    Winner(u32),
    /// Every listed node transmitted; all packets are lost.
    Collision(Vec<u32>),
}

impl ChannelOutcome {
    /// Nodes that radiated this slot.
    pub fn transmitters(&self) -> Vec<u32> {
        match self {
            ChannelOutcome::Idle => Vec::new(),
            ChannelOutcome::Winner(id) => vec![*id],
            ChannelOutcome::Collision(ids) => ids.clone(),
        }
    }
}

/// Slotted p-persistent contention. Each contender (in ascending id order)
/// transmits with probability `persistence`.
pub fn arbitrate_channel<R: Rng + ?Sized>(
    contenders: &[u32],
    persistence: f64,
    rng: &mut R,
) -> Result<ChannelOutcome, MacError> {
    if !(persistence > 0.0 && persistence <= 1.0) {
        return Err(MacError::InvalidPersistence(persistence));
    }
    let mut ordered = contenders.to_vec();
    ordered.sort_unstable();
    ordered.dedup();
    let transmitting: Vec<u32> = ordered
        .into_iter()
        .filter(|_| rng.random_bool(persistence))
        .collect();
    Ok(match transmitting.len() {
        0 => ChannelOutcome::Idle,
        1 => ChannelOutcome::Winner(transmitting[0]),
        _ => ChannelOutcome::Collision(transmitting),
    })
}

/// A node within earshot of a transmission.
#[derive(Debug, Clone)]
pub struct Neighbor<'a> {
    pub id: u32,
    /// Meters from the transmitter.
    pub distance: f64,
    pub battery: Battery,
    pub curve: &'a ChargeCurve,
    /// Effective aperture in cm².
    pub aperture: f64,
}

/// Integration settings for overheard charging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestSettings {
    pub step: f64,
    pub sensitivity_floor: f64,
}

impl HarvestSettings {
    pub fn single_step(duration: f64) -> Self {
        HarvestSettings {
            step: duration,
            sensitivity_floor: DEFAULT_SENSITIVITY_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheardCharge {
    pub id: u32,
    /// W/cm² seen by this neighbor.
    pub density: f64,
    pub harvested: f64,
    pub battery: Battery,
}

/// Energy each neighbor collects from one transmission of `duration`
/// seconds at `tx_power` watts.
pub fn overheard_charge(
    tx_id: u32,
    tx_power: f64,
    duration: f64,
    neighbors: &[Neighbor<'_>],
    settings: HarvestSettings,
) -> Result<Vec<OverheardCharge>, MacError> {
    let mut out = Vec::with_capacity(neighbors.len());
    for n in neighbors.iter().filter(|n| n.id != tx_id) {
        let wrap = |source| MacError::Energy { id: n.id, source };
        let density = power_density_at(tx_power, n.distance, 1.0).map_err(wrap)?;
        let field = IncidentField::new(density, format!("node-{tx_id}"), n.aperture).map_err(wrap)?;
        let step = settings.step.min(duration);
        let outcome = if duration > 0.0 {
            harvest_with_floor(&n.battery, n.curve, &field, duration, step, settings.sensitivity_floor)
                .map_err(wrap)?
        } else {
            crate::energy::HarvestOutcome {
                harvested: 0.0,
                battery: n.battery,
            }
        };
        out.push(OverheardCharge {
            id: n.id,
            density,
            harvested: outcome.harvested,
            battery: outcome.battery,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::NW_PER_CM2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(queue: usize, residual: f64) -> NodeLinkState {
        NodeLinkState {
            queue_length: queue,
            battery: Battery::new(residual, 1e-5, 1e-7).unwrap(),
            current_cycle: Cycle::Energy,
            packet_tx_cost: 1e-6,
            packet_tx_power: 1e-4,
            slot_length: 0.01,
        }
    }

    #[test]
    fn empty_queue_harvests() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = CyclePolicy {
            target_energy_fraction: 0.0,
            min_fraction: 0.0,
            ..CyclePolicy::default()
        };
        assert_eq!(next_cycle(&state(0, 5e-6), false, &p, &mut rng), Cycle::Energy);
    }

    #[test]
    fn degenerate_policy_always_sends() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = CyclePolicy {
            target_energy_fraction: 0.0,
            min_fraction: 0.0,
            ..CyclePolicy::default()
        };
        for _ in 0..100 {
            assert_eq!(next_cycle(&state(8, 5e-6), false, &p, &mut rng), Cycle::Data);
        }
        // busy channel or too little energy forces an energy cycle
        assert_eq!(next_cycle(&state(8, 5e-6), true, &p, &mut rng), Cycle::Energy);
        assert_eq!(next_cycle(&state(8, 0.5e-6), false, &p, &mut rng), Cycle::Energy);
    }

    #[test]
    fn ratio_follows_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = CyclePolicy::default();
        let s = state(4, 5e-6);
        let energy = (0..10_000)
            .filter(|_| next_cycle(&s, false, &p, &mut rng) == Cycle::Energy)
            .count();
        let fraction = energy as f64 / 10_000.0;
        assert!((fraction - 0.8).abs() <= 0.05, "{fraction}");
    }

    #[test]
    fn adaptation_fixed_point_and_step() {
        let p = CyclePolicy::default();
        assert_eq!(adapt_ratio(&p, p.reference_busy).unwrap(), p);
        let q = adapt_ratio(&p, 1.0).unwrap();
        let expected = 0.8 - 0.1 * (1.0 - 0.2);
        assert!((q.target_energy_fraction - expected).abs() < 1e-12);
        assert!(adapt_ratio(&p, 1.5).is_err());
        assert!(adapt_ratio(&p, -0.1).is_err());
    }

    #[test]
    fn adaptation_converges_within_bounds() {
        for observed in [0.0, 0.1, 0.2, 0.7, 1.0] {
            let mut p = CyclePolicy::default();
            let mut steps = 0;
            loop {
                let next = adapt_ratio(&p, observed).unwrap();
                assert!((p.min_fraction..=p.max_fraction).contains(&next.target_energy_fraction));
                if next == p {
                    break;
                }
                p = next;
                steps += 1;
                assert!(steps < 1000, "no fixpoint for {observed}");
            }
            if observed > p.reference_busy {
                assert_eq!(p.target_energy_fraction, p.min_fraction);
            } else if observed < p.reference_busy {
                assert_eq!(p.target_energy_fraction, p.max_fraction);
            }
        }
    }

    #[test]
    fn policy_validation() {
        assert!(CyclePolicy::default().validate().is_ok());
        let bad = CyclePolicy {
            min_fraction: 0.9,
            max_fraction: 0.5,
            ..CyclePolicy::default()
        };
        assert!(bad.validate().is_err());
        let bad = CyclePolicy {
            target_energy_fraction: 0.99,
            ..CyclePolicy::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn arbitration_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(arbitrate_channel(&[], 0.5, &mut rng).unwrap(), ChannelOutcome::Idle);
        assert_eq!(arbitrate_channel(&[7], 1.0, &mut rng).unwrap(), ChannelOutcome::Winner(7));
        assert_eq!(
            arbitrate_channel(&[9, 3], 1.0, &mut rng).unwrap(),
            ChannelOutcome::Collision(vec![3, 9])
        );
        assert!(arbitrate_channel(&[1], 0.0, &mut rng).is_err());
    }

    #[test]
    fn overheard_density_at_quarter_meter() {
        let curve = ChargeCurve::default();
        let b = Battery::new(1e-6, 1e-5, 0.0).unwrap();
        let neighbors = [
            Neighbor { id: 2, distance: 0.25, battery: b, curve: &curve, aperture: 1.0 },
            Neighbor { id: 3, distance: 0.25, battery: b, curve: &curve, aperture: 1.0 },
            Neighbor { id: 1, distance: 0.25, battery: b, curve: &curve, aperture: 1.0 },
        ];
        let out = overheard_charge(1, 1e-4, 0.01, &neighbors, HarvestSettings::single_step(0.01)).unwrap();
        assert_eq!(out.len(), 2, "transmitter gets nothing");
        assert!((out[0].density / NW_PER_CM2 - 12.7).abs() < 0.05);
        assert!(out[0].harvested > 0.0);
        assert_eq!(out[0].harvested, out[1].harvested);
        assert!(overheard_charge(1, 1e-4, 0.01, &[], HarvestSettings::single_step(0.01)).unwrap().is_empty());
    }

    #[test]
    fn overheard_rejects_bad_distance() {
        let curve = ChargeCurve::default();
        let b = Battery::new(1e-6, 1e-5, 0.0).unwrap();
        let n = [Neighbor { id: 2, distance: 0.0, battery: b, curve: &curve, aperture: 1.0 }];
        assert!(matches!(
            overheard_charge(1, 1e-4, 0.01, &n, HarvestSettings::single_step(0.01)),
            Err(MacError::Energy { id: 2, .. })
        ));
    }
}
