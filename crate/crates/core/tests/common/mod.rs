//! Oracles and generators shared by the integration suites.

#![allow(dead_code)]

pub mod routing;

use ehsn_core::energy::{harvest, Battery, ChargeCurve, IncidentField, Interpolation, NW_PER_CM2};
use ehsn_core::planner::{DemandSchedule, EnergyTunnel};
use rand::Rng;

/// Piecewise-linear interpolation through `knots`, endpoints held.
pub fn knot_interp(knots: &[(f64, f64)], f: f64) -> f64 {
    let f = f.clamp(0.0, 1.0);
    if f <= knots[0].0 {
        return knots[0].1;
    }
    if f >= knots[knots.len() - 1].0 {
        return knots[knots.len() - 1].1;
    }
    let k = knots.windows(2).position(|w| f <= w[1].0).expect("inside the knot range");
    let ((x0, y0), (x1, y1)) = (knots[k], knots[k + 1]);
    y0 + (y1 - y0) * (f - x0) / (x1 - x0)
}

/// Classical RK4 for `dE/dt = power * eff(E / capacity)` in `steps` equal
/// steps, clamped at capacity after each one.
pub fn rk4_reference(
    eff: impl Fn(f64) -> f64,
    start: f64,
    capacity: f64,
    power: f64,
    duration: f64,
    steps: usize,
) -> f64 {
    let rate = |e: f64| power * eff(e / capacity);
    let h = duration / steps as f64;
    let mut e = start;
    for _ in 0..steps {
        if e >= capacity {
            break;
        }
        let k1 = rate(e);
        let k2 = rate(e + 0.5 * h * k1);
        let k3 = rate(e + 0.5 * h * k2);
        let k4 = rate(e + h * k3);
        e = (e + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).min(capacity);
    }
    e
}

/// Knots of a random concave curve with an interior peak, all efficiencies
/// in `[0.05, 1]`.
pub fn random_concave_knots<R: Rng>(rng: &mut R) -> Vec<(f64, f64)> {
    let n = rng.random_range(3..=8);
    let mut xs: Vec<f64> = (0..n - 2).map(|_| rng.random_range(0.02..0.98)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    xs.insert(0, 0.0);
    xs.push(1.0);
    let n = xs.len();
    let peak = rng.random_range(1..n - 1);
    // slopes: positive and shrinking up to the peak, then negative and steepening
    let mut slopes = Vec::with_capacity(n - 1);
    let mut s: f64 = rng.random_range(0.2..1.5);
    for k in 0..n - 1 {
        if k == peak {
            s = -rng.random_range(0.01..0.3);
        } else if k > 0 {
            s -= rng.random_range(0.0..0.6);
        }
        if k < peak {
            s = s.max(0.001 * (peak - k) as f64);
        }
        slopes.push(s);
    }
    let mut ys = vec![0.0];
    for k in 0..n - 1 {
        ys.push(ys[k] + slopes[k] * (xs[k + 1] - xs[k]));
    }
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // affine map into [0.05, 0.95]; a positive scale keeps the shape
    let scale = if hi - lo > 0.9 { 0.9 / (hi - lo) } else { 1.0 };
    xs.into_iter().zip(ys).map(|(x, y)| (x, 0.05 + (y - lo) * scale)).collect()
}

pub struct TunnelCase {
    pub demand: DemandSchedule,
    pub capacity: f64,
    pub step: f64,
    pub overhead: f64,
    pub curve: ChargeCurve,
}

/// A random instance with at most `max_slots` slots whose grid spans at most
/// `max_levels` levels. Roughly one in `infeasible_odds` instances gets a
/// demand jump larger than the capacity.
pub fn random_tunnel<R: Rng>(rng: &mut R, max_slots: usize, max_levels: usize, infeasible_odds: u32) -> TunnelCase {
    let step = rng.random_range(1e-7..1e-5);
    let slots = rng.random_range(1..=max_slots);
    let cap_levels = rng.random_range(1..max_levels) as f64 + rng.random_range(0.0..0.99);
    let headroom = (max_levels as f64 - 1.0 - cap_levels).max(0.0);
    let mut lower = vec![0.0];
    for _ in 0..slots {
        let last = *lower.last().unwrap();
        let inc = if headroom > 0.0 { rng.random_range(0.0..=headroom / slots as f64) } else { 0.0 };
        lower.push(last + inc);
    }
    if infeasible_odds > 0 && rng.random_ratio(1, infeasible_odds) {
        let at = rng.random_range(1..=slots);
        let jump = cap_levels + rng.random_range(1.0..3.0);
        for l in lower.iter_mut().skip(at) {
            *l += jump;
        }
    }
    let curve = if rng.random_bool(0.5) {
        ChargeCurve::default()
    } else {
        ChargeCurve::new(&random_concave_knots(rng), Default::default()).expect("generated knots are valid")
    };
    TunnelCase {
        demand: DemandSchedule::new(lower.iter().map(|l| l * step).collect()).unwrap(),
        capacity: cap_levels * step,
        step,
        overhead: rng.random_range(0.0..3.0) * step,
        curve,
    }
}

/// Inclusive grid range of every slot boundary.
pub fn grid_ranges(tunnel: &EnergyTunnel, step: f64) -> Vec<(i64, i64)> {
    tunnel
        .lower
        .iter()
        .zip(&tunnel.upper)
        .map(|(l, u)| (((l / step) - 1e-9).ceil().max(0.0) as i64, ((u / step) + 1e-9).floor() as i64))
        .collect()
}

/// First boundary that no monotone grid trajectory starting at level 0 can
/// reach, found by tracking the reachable level interval.
pub fn first_blocked_slot(tunnel: &EnergyTunnel, step: f64) -> Option<usize> {
    let ranges = grid_ranges(tunnel, step);
    if ranges[0].0 > 0 || ranges[0].1 < 0 {
        return Some(0);
    }
    let mut reach = (0i64, ranges[0].1);
    for s in 1..ranges.len() {
        let lo = reach.0.max(ranges[s].0);
        let enter_hi = reach.1.min(ranges[s].1);
        if lo > enter_hi {
            return Some(s);
        }
        reach = (lo, ranges[s].1);
    }
    None
}

/// Cheapest path cost by enumerating every monotone path through the grid.
/// Costs accumulate in path order.
pub fn enumerate_min_cost(tunnel: &EnergyTunnel, step: f64, overhead: f64, curve: &ChargeCurve) -> Option<f64> {
    let ranges = grid_ranges(tunnel, step);
    let last = ranges.len() - 1;
    let jump = |slot: usize, level: i64, k: i64| {
        let fraction = ((level as f64 * step - tunnel.lower[slot]) / tunnel.capacity).clamp(0.0, 1.0);
        let eff = curve.eval(fraction);
        (eff > 0.0).then(|| overhead + (k as f64 * step) / eff)
    };
    fn walk(
        slot: usize,
        level: i64,
        cost: f64,
        ranges: &[(i64, i64)],
        last: usize,
        jump: &dyn Fn(usize, i64, i64) -> Option<f64>,
        best: &mut Option<f64>,
    ) {
        if slot == last && best.is_none_or(|b| cost < b) {
            *best = Some(cost);
        }
        for k in 1..=(ranges[slot].1 - level) {
            if let Some(c) = jump(slot, level, k) {
                walk(slot, level + k, cost + c, ranges, last, jump, best);
            }
        }
        if slot < last && (ranges[slot + 1].0..=ranges[slot + 1].1).contains(&level) {
            walk(slot + 1, level, cost, ranges, last, jump, best);
        }
    }
    if ranges[0].0 > 0 {
        return None;
    }
    let mut best = None;
    walk(0, 0, 0.0, &ranges, last, &jump, &mut best);
    best
}

/// Checks non-increasing divided slopes at the knots, a strictly interior
/// maximum and, for linear curves, concave samples between the outer knots.
pub fn curve_shape(curve: &ChargeCurve) -> Result<(), String> {
    let knots: Vec<(f64, f64)> = curve.points().collect();
    let slopes: Vec<f64> = knots.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    if slopes.windows(2).any(|w| w[1] - w[0] > 1e-12) {
        return Err(format!("slopes increase: {slopes:?}"));
    }
    let (first, last) = (knots[0], knots[knots.len() - 1]);
    let (peak_x, peak_y) = curve.peak();
    if !(peak_x > first.0 && peak_x < last.0 && peak_y > first.1 && peak_y > last.1) {
        return Err(format!("peak ({peak_x}, {peak_y}) is not interior"));
    }
    if curve.interpolation() == Interpolation::Linear {
        // endpoint values are held outside the knots, so sample inside them
        let samples: Vec<f64> = (0..=400).map(|i| curve.eval(first.0 + (last.0 - first.0) * i as f64 / 400.0)).collect();
        if samples.windows(3).any(|w| w[2] - 2.0 * w[1] + w[0] > 1e-12) {
            return Err("sampled second difference is positive".into());
        }
    }
    Ok(())
}

/// One random harvesting run: `(library result, RK4 at a tenth of the step)`
/// in joules stored.
pub fn harvest_case<R: Rng>(rng: &mut R) -> (f64, f64) {
    let knots = random_concave_knots(rng);
    let curve = ChargeCurve::new(&knots, Interpolation::Linear).unwrap();
    let capacity = rng.random_range(1e-7..1e-4);
    let battery = Battery::new(rng.random_range(0.0..0.9) * capacity, capacity, 0.0).unwrap();
    let field = IncidentField::new(rng.random_range(0.18..84.0) * NW_PER_CM2, "src", rng.random_range(0.5..4.0)).unwrap();
    // long enough to move the residual by up to about half the capacity
    let span = 0.5 * capacity / (field.power() * 0.6);
    let duration = rng.random_range(0.05..1.0) * span;
    let steps = rng.random_range(5..40);
    let got = harvest(&battery, &curve, &field, duration, duration / steps as f64).unwrap().harvested;
    let end = rk4_reference(|x| knot_interp(&knots, x), battery.residual(), capacity, field.power(), duration, steps * 10);
    (got, end - battery.residual())
}
