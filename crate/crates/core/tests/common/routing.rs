//! Brute-force oracle for two-flow route selection.

use ehsn_core::emac::HarvestSettings;
use ehsn_core::energy::{harvest_with_floor, power_density_at, Battery, ChargeCurve, IncidentField, NEAR_FIELD_LIMIT};
use ehsn_core::routing::{FlowRequest, LinkGraph, NodeId, TxParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent replay: packet by packet, hop by hop, every other node
/// harvests the transmission.
fn replay(
    g: &LinkGraph,
    state: &mut [Battery],
    curves: &[ChargeCurve],
    tx: &TxParams,
    path: &[NodeId],
    packets: u32,
) -> bool {
    for _ in 0..packets {
        for hop in path.windows(2) {
            let (u, v) = (hop[0] as usize, hop[1] as usize);
            if !state[u].is_alive() || state[u].residual() < tx.tx_cost || !state[v].is_alive() {
                return false;
            }
            state[u] = state[u].consume(tx.tx_cost).unwrap();
            for w in 0..state.len() {
                if w == u {
                    continue;
                }
                let d = g.distance(u as NodeId, w as NodeId).max(NEAR_FIELD_LIMIT);
                let field = IncidentField::new(power_density_at(tx.tx_power, d, 1.0).unwrap(), "x", tx.aperture).unwrap();
                let out = harvest_with_floor(
                    &state[w],
                    &curves[w],
                    &field,
                    tx.airtime,
                    tx.harvest.step,
                    tx.harvest.sensitivity_floor,
                )
                .unwrap();
                state[w] = out.battery;
            }
        }
    }
    true
}

fn all_simple_paths(g: &LinkGraph, src: NodeId, dst: NodeId) -> Vec<Vec<NodeId>> {
    fn go(g: &LinkGraph, path: &mut Vec<NodeId>, dst: NodeId, out: &mut Vec<Vec<NodeId>>) {
        let at = *path.last().unwrap();
        if at == dst {
            out.push(path.clone());
            return;
        }
        for &v in g.in_range(at) {
            if !path.contains(&v) {
                path.push(v);
                go(g, path, dst, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(g, &mut vec![src], dst, &mut out);
    out
}

/// Minimum total hops over every pair of simple paths, flows in order.
pub fn brute_force_total(
    g: &LinkGraph,
    flows: &[FlowRequest],
    batteries: &[Battery],
    curves: &[ChargeCurve],
    tx: &TxParams,
) -> Option<usize> {
    let mut p1 = all_simple_paths(g, flows[0].source, flows[0].destination);
    let mut p2 = all_simple_paths(g, flows[1].source, flows[1].destination);
    // shortest first, so that pairs that cannot beat the best total are skipped
    p1.sort_by_key(Vec::len);
    p2.sort_by_key(Vec::len);
    let shortest2 = p2.first().map_or(0, Vec::len);
    let mut best: Option<usize> = None;
    for a in &p1 {
        if best.is_some_and(|x| a.len() + shortest2 - 2 >= x) {
            break;
        }
        let mut s1 = batteries.to_vec();
        if !replay(g, &mut s1, curves, tx, a, flows[0].packets) {
            continue;
        }
        for b in &p2 {
            if best.is_some_and(|x| a.len() + b.len() - 2 >= x) {
                break;
            }
            let mut s2 = s1.clone();
            if replay(g, &mut s2, curves, tx, b, flows[1].packets) {
                let total = a.len() + b.len() - 2;
                best = Some(best.map_or(total, |x: usize| x.min(total)));
            }
        }
    }
    best
}

pub fn small_instance(seed: u64) -> (LinkGraph, Vec<FlowRequest>, Vec<Battery>, Vec<ChargeCurve>, TxParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 10;
    // a strip, so that routes need several hops
    let positions: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(0.0..0.9), rng.random_range(0.0..0.35))).collect();
    let d = (0..n).max_by(|&a, &b| positions[a].0.total_cmp(&positions[b].0)).unwrap() as NodeId;
    let mut pick = |avoid: &[NodeId]| loop {
        let v = rng.random_range(0..n as NodeId);
        if !avoid.contains(&v) {
            break v;
        }
    };
    let s1 = pick(&[d]);
    let s2 = pick(&[d, s1]);
    let batteries: Vec<Battery> = (0..n as NodeId)
        .map(|v| {
            let endpoint = v == d || v == s1 || v == s2;
            let r = if !endpoint && rng.random_bool(0.3) {
                2e-6 - rng.random_range(1e-12..4e-10)
            } else {
                rng.random_range(2e-6..8e-6)
            };
            Battery::new(r, 1e-5, 2e-6).unwrap()
        })
        .collect();
    let alive = batteries.iter().map(Battery::is_alive).collect();
    let g = LinkGraph::from_positions(positions, 0.3, alive).unwrap();
    let flows = vec![
        FlowRequest { id: 1, source: s1, destination: d, release_order: 0, packets: 2 },
        FlowRequest { id: 2, source: s2, destination: d, release_order: 1, packets: 1 },
    ];
    let tx = TxParams {
        tx_power: 1e-4,
        airtime: 0.01,
        tx_cost: 1.5e-6,
        aperture: 2.0,
        harvest: HarvestSettings::single_step(0.01),
    };
    (g, flows, batteries, vec![ChargeCurve::default(); n], tx)
}

