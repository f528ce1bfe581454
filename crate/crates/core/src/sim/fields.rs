//! Energy arrival processes: ambient RF and dedicated sources.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use super::config::{AmbientParams, SourceSpec};
use crate::energy::{power_density_at, EnergyError, NEAR_FIELD_LIMIT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("ambient range [{min}, {max}] W/cm² is inverted or not finite")]
    InvalidRange { min: f64, max: f64 },
    #[error("mean dwell must be positive, got {0} s")]
    InvalidDwell(f64),
    #[error("ambient process queried at {t} s after {last} s")]
    TimeReversed { t: f64, last: f64 },
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Piecewise-constant ambient density. Level changes arrive as a Poisson
/// process with mean spacing `mean_dwell`; each new level is uniform over
/// `[min, max]`.
#[derive(Debug, Clone)]
pub struct AmbientProcess<R> {
    params: AmbientParams,
    dwell: Exp<f64>,
    level: f64,
    next_change: f64,
    last_query: f64,
    rng: R,
}

impl<R: Rng> AmbientProcess<R> {
    pub fn new(params: AmbientParams, mut rng: R) -> Result<Self, FieldError> {
        if !(params.min >= 0.0 && params.min <= params.max && params.max.is_finite()) {
            return Err(FieldError::InvalidRange {
                min: params.min,
                max: params.max,
            });
        }
        let dwell = Exp::new(1.0 / params.mean_dwell)
            .ok()
            .filter(|_| params.mean_dwell > 0.0 && params.mean_dwell.is_finite())
            .ok_or(FieldError::InvalidDwell(params.mean_dwell))?;
        let level = draw_level(&params, &mut rng);
        let next_change = dwell.sample(&mut rng);
        Ok(AmbientProcess {
            params,
            dwell,
            level,
            next_change,
            last_query: 0.0,
            rng,
        })
    }

    /// Density (W/cm²) at time `t`. Queries must not go back in time.
    pub fn density_at(&mut self, t: f64) -> Result<f64, FieldError> {
        if t < self.last_query {
            return Err(FieldError::TimeReversed {
                t,
                last: self.last_query,
            });
        }
        self.last_query = t;
        while self.next_change <= t {
            self.level = draw_level(&self.params, &mut self.rng);
            self.next_change += self.dwell.sample(&mut self.rng);
        }
        Ok(self.level)
    }
}

fn draw_level<R: Rng>(params: &AmbientParams, rng: &mut R) -> f64 {
    if params.min == params.max {
        params.min
    } else {
        rng.random_range(params.min..=params.max)
    }
}

/// Two-state blockage of a directional source with exponential dwell times.
#[derive(Debug, Clone)]
pub struct BlockageProcess<R> {
    blocked: bool,
    on: Option<Exp<f64>>,
    off: Exp<f64>,
    rng: R,
}

impl<R: Rng> BlockageProcess<R> {
    /// Starts unblocked. A zero `mean_on` never blocks.
    pub fn new(mean_on: f64, mean_off: f64, rng: R) -> Result<Self, FieldError> {
        let exp = |mean: f64| {
            if mean > 0.0 && mean.is_finite() {
                Ok(Exp::new(1.0 / mean).expect("positive rate"))
            } else {
                Err(FieldError::InvalidDwell(mean))
            }
        };
        let on = if mean_on == 0.0 { None } else { Some(exp(mean_on)?) };
        Ok(BlockageProcess {
            blocked: false,
            on,
            off: exp(mean_off)?,
            rng,
        })
    }

    pub fn for_source(source: &SourceSpec, rng: R) -> Result<Self, FieldError> {
        Self::new(source.blockage_mean_on, source.blockage_mean_off, rng)
    }

    pub fn is_blocked(&self) -> bool {
        self.blocked
    }

    pub fn ever_blocks(&self) -> bool {
        self.on.is_some()
    }

    /// Seconds the current state lasts. `None` when the source is never
    /// blocked.
    pub fn current_dwell(&mut self) -> Option<f64> {
        let on = self.on?;
        Some(if self.blocked {
            on.sample(&mut self.rng)
        } else {
            self.off.sample(&mut self.rng)
        })
    }

    pub fn toggle(&mut self) {
        self.blocked = !self.blocked;
    }
}

/// Density a dedicated source puts on a point, or 0 while blocked.
/// Distances below the near-field limit are clamped to it.
pub fn dedicated_source_field(source: &SourceSpec, position: (f64, f64), blocked: bool) -> Result<f64, FieldError> {
    if blocked {
        return Ok(0.0);
    }
    let d = ((source.x - position.0).powi(2) + (source.y - position.1).powi(2)).sqrt();
    Ok(power_density_at(source.power, d.max(NEAR_FIELD_LIMIT), source.gain)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::NW_PER_CM2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn source(blockage_mean_on: f64) -> SourceSpec {
        SourceSpec {
            id: "ap".into(),
            x: 0.0,
            y: 0.0,
            power: 1e-4,
            gain: 1.0,
            access_point: true,
            blockage_mean_on,
            blockage_mean_off: 1.0,
        }
    }

    #[test]
    fn degenerate_range_is_constant() {
        let p = AmbientParams {
            min: 5.0 * NW_PER_CM2,
            max: 5.0 * NW_PER_CM2,
            mean_dwell: 0.1,
        };
        let mut a = AmbientProcess::new(p, rng(1)).unwrap();
        for k in 0..100 {
            assert_eq!(a.density_at(k as f64 * 0.05).unwrap(), 5.0 * NW_PER_CM2);
        }
    }

    #[test]
    fn inverted_range_and_time_reversal_rejected() {
        let p = AmbientParams {
            min: 2.0,
            max: 1.0,
            mean_dwell: 1.0,
        };
        assert!(matches!(AmbientProcess::new(p, rng(1)), Err(FieldError::InvalidRange { .. })));
        let mut a = AmbientProcess::new(AmbientParams::default(), rng(1)).unwrap();
        a.density_at(1.0).unwrap();
        assert!(a.density_at(0.5).is_err());
    }

    #[test]
    fn mean_level_matches_uniform_midpoint() {
        let p = AmbientParams {
            mean_dwell: 0.01,
            ..AmbientParams::default()
        };
        let mut a = AmbientProcess::new(p, rng(9)).unwrap();
        let n = 100_000;
        let mean = (0..n).map(|k| a.density_at(k as f64).unwrap()).sum::<f64>() / n as f64;
        let expected = (p.min + p.max) / 2.0;
        assert!((mean - expected).abs() < 0.02 * expected, "{mean} vs {expected}");
    }

    #[test]
    fn unblocked_source_is_free_space() {
        let d = dedicated_source_field(&source(0.0), (0.25, 0.0), false).unwrap();
        assert_eq!(d, power_density_at(1e-4, 0.25, 1.0).unwrap());
        assert_eq!(dedicated_source_field(&source(0.0), (0.25, 0.0), true).unwrap(), 0.0);
        let near = dedicated_source_field(&source(0.0), (0.0, 0.0), false).unwrap();
        assert_eq!(near, power_density_at(1e-4, NEAR_FIELD_LIMIT, 1.0).unwrap());
    }

    #[test]
    fn symmetric_blockage_halves_mean_density() {
        let mut b = BlockageProcess::for_source(&source(1.0), rng(4)).unwrap();
        let (mut open, mut total) = (0.0, 0.0);
        for _ in 0..20_000 {
            let dwell = b.current_dwell().unwrap();
            if !b.is_blocked() {
                open += dwell;
            }
            total += dwell;
            b.toggle();
        }
        let unblocked = dedicated_source_field(&source(1.0), (0.5, 0.0), false).unwrap();
        let mean = unblocked * open / total;
        assert!((mean / unblocked - 0.5).abs() < 0.02, "{}", mean / unblocked);
        let mut never = BlockageProcess::for_source(&source(0.0), rng(4)).unwrap();
        assert!(!never.ever_blocks());
        assert_eq!(never.current_dwell(), None);
    }
}
