//! Residual-dependent harvesting efficiency.
//!
//! A [`ChargeCurve`] maps the battery's residual-energy fraction to the
//! fraction of incident RF power that actually ends up stored. Real
//! rectifier/supercapacitor front ends are least efficient when nearly empty
//! and when nearly full, so valid curves are concave with a peak strictly
//! inside `(0, 1)`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

/// Tolerance used when checking the discrete concavity of a curve.
const SHAPE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("a charge curve needs at least 3 points, got {found}")]
    TooFewPoints { found: usize },
    #[error("residual fractions must be strictly increasing (point {index})")]
    NonIncreasingFractions { index: usize },
    #[error("point {index} is outside [0, 1] or not finite")]
    OutOfRange { index: usize },
    #[error("curve is not concave at point {index}")]
    NotConcave { index: usize },
    #[error("curve has no interior maximum (it is monotone)")]
    NoInteriorMaximum,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read curve file {path}: {message}")]
    Io { path: String, message: String },
}

/// Rule used to evaluate the curve between knots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Piecewise linear. Preserves both monotonicity and concavity of the knots.
    #[default]
    Linear,
    /// Monotone piecewise cubic Hermite (Fritsch-Carlson tangents).
    MonotoneCubic,
}

impl FromStr for Interpolation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Interpolation::Linear),
            "pchip" | "monotone_cubic" => Ok(Interpolation::MonotoneCubic),
            other => Err(format!("unknown interpolation `{other}`")),
        }
    }
}

impl fmt::Display for Interpolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Interpolation::Linear => f.write_str("linear"),
            Interpolation::MonotoneCubic => f.write_str("pchip"),
        }
    }
}

/// Harvesting efficiency as a function of residual-energy fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeCurve {
    fractions: Vec<f64>,
    efficiencies: Vec<f64>,
    tangents: Vec<f64>,
    interpolation: Interpolation,
}

/// Knots of the bundled curve: `(residual_fraction, efficiency)`.
pub const DEFAULT_CURVE_POINTS: [(f64, f64); 7] = [
    (0.0, 0.20),
    (0.2, 0.42),
    (0.35, 0.53),
    (0.5, 0.60),
    (0.65, 0.55),
    (0.8, 0.42),
    (1.0, 0.15),
];

impl Default for ChargeCurve {
    fn default() -> Self {
        ChargeCurve::new(&DEFAULT_CURVE_POINTS, Interpolation::Linear)
            .expect("bundled curve satisfies the shape invariants")
    }
}

impl ChargeCurve {
    /// Builds a curve after validating its knots.
    pub fn new(points: &[(f64, f64)], interpolation: Interpolation) -> Result<Self, CurveError> {
        if points.len() < 3 {
            return Err(CurveError::TooFewPoints { found: points.len() });
        }
        for (index, &(x, y)) in points.iter().enumerate() {
            if !(x.is_finite() && y.is_finite() && (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
                return Err(CurveError::OutOfRange { index });
            }
            if index > 0 && x <= points[index - 1].0 {
                return Err(CurveError::NonIncreasingFractions { index });
            }
        }
        let fractions: Vec<f64> = points.iter().map(|p| p.0).collect();
        let efficiencies: Vec<f64> = points.iter().map(|p| p.1).collect();
        check_shape(&fractions, &efficiencies)?;
        let tangents = match interpolation {
            Interpolation::Linear => Vec::new(),
            Interpolation::MonotoneCubic => pchip_tangents(&fractions, &efficiencies),
        };
        Ok(ChargeCurve {
            fractions,
            efficiencies,
            tangents,
            interpolation,
        })
    }

    /// Same knots, different interpolation rule.
    pub fn with_interpolation(&self, interpolation: Interpolation) -> Self {
        let points: Vec<(f64, f64)> = self.points().collect();
        ChargeCurve::new(&points, interpolation).expect("knots were already validated")
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.fractions.iter().copied().zip(self.efficiencies.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    /// The knot with the highest efficiency.
    pub fn peak(&self) -> (f64, f64) {
        self.points()
            .fold((0.0, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best })
    }

    /// Lowest efficiency anywhere on `[0, 1]`.
    ///
    /// Both interpolation rules stay between neighbouring knot values, so the
    /// minimum over the knots is the global minimum.
    pub fn min_efficiency(&self) -> f64 {
        self.efficiencies.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Efficiency at `fraction`, rejecting values outside `[0, 1]`.
    pub fn efficiency_at(&self, fraction: f64) -> Result<f64, super::EnergyError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(super::EnergyError::FractionOutOfRange(fraction));
        }
        Ok(self.eval(fraction))
    }

    /// Efficiency at `fraction` clamped into `[0, 1]`. Outside the outermost
    /// knots the endpoint value is held.
    pub fn eval(&self, fraction: f64) -> f64 {
        let xs = &self.fractions;
        let ys = &self.efficiencies;
        let last = xs.len() - 1;
        let x = fraction.clamp(0.0, 1.0);
        if x <= xs[0] {
            return ys[0];
        }
        if x >= xs[last] {
            return ys[last];
        }
        // index of the interval [xs[k], xs[k+1]] containing x
        let k = xs.partition_point(|&v| v <= x) - 1;
        if x == xs[k] {
            return ys[k];
        }
        let h = xs[k + 1] - xs[k];
        let t = (x - xs[k]) / h;
        let value = match self.interpolation {
            Interpolation::Linear => ys[k] + t * (ys[k + 1] - ys[k]),
            Interpolation::MonotoneCubic => {
                let t2 = t * t;
                let t3 = t2 * t;
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + t;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                h00 * ys[k] + h10 * h * self.tangents[k] + h01 * ys[k + 1] + h11 * h * self.tangents[k + 1]
            }
        };
        value.clamp(0.0, 1.0)
    }

    /// Parses the line-oriented curve format: one `residual_fraction efficiency`
    /// pair per line. `#` starts a comment; an optional `interpolation <rule>`
    /// directive selects the rule.
    pub fn parse(text: &str) -> Result<Self, CurveError> {
        let mut points = Vec::new();
        let mut interpolation = Interpolation::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "interpolation" {
                let rule = fields.get(1).ok_or_else(|| CurveError::Parse {
                    line: line_no,
                    message: "missing interpolation rule".into(),
                })?;
                interpolation = rule.parse().map_err(|message| CurveError::Parse { line: line_no, message })?;
                continue;
            }
            if fields.len() != 2 {
                return Err(CurveError::Parse {
                    line: line_no,
                    message: format!("expected `residual_fraction efficiency`, got {} fields", fields.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| CurveError::Parse {
                    line: line_no,
                    message: format!("`{s}`: {e}"),
                })
            };
            points.push((parse(fields[0])?, parse(fields[1])?));
        }
        ChargeCurve::new(&points, interpolation)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CurveError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CurveError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        ChargeCurve::parse(&text)
    }
}

impl fmt::Display for ChargeCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "interpolation {}", self.interpolation)?;
        for (x, y) in self.points() {
            writeln!(f, "{x} {y}")?;
        }
        Ok(())
    }
}

/// Turns measured `(residual_fraction, efficiency)` samples into a curve
/// passing through every sample.
pub fn fit_charge_curve(samples: &[(f64, f64)]) -> Result<ChargeCurve, CurveError> {
    ChargeCurve::new(samples, Interpolation::Linear)
}

/// Checks concavity (non-increasing divided slopes) and that the maximum lies
/// strictly inside the knot range.
pub fn check_shape(fractions: &[f64], efficiencies: &[f64]) -> Result<(), CurveError> {
    let n = fractions.len();
    if n < 3 {
        return Err(CurveError::TooFewPoints { found: n });
    }
    let slope = |k: usize| (efficiencies[k + 1] - efficiencies[k]) / (fractions[k + 1] - fractions[k]);
    for k in 1..n - 1 {
        if slope(k) - slope(k - 1) > SHAPE_EPS {
            return Err(CurveError::NotConcave { index: k });
        }
    }
    let max = efficiencies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > efficiencies[0] && max > efficiencies[n - 1]) {
        return Err(CurveError::NoInteriorMaximum);
    }
    Ok(())
}

// Fritsch-Carlson tangents with the three-point edge rule.
fn pchip_tangents(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = pchip_edge(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = pchip_edge(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn pchip_edge(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_curve_is_valid_and_peaks_in_the_middle() {
        let curve = ChargeCurve::default();
        assert_eq!(curve.len(), 7);
        assert_eq!(curve.peak(), (0.5, 0.60));
        let fitted = fit_charge_curve(&DEFAULT_CURVE_POINTS).unwrap();
        assert_eq!(fitted, curve);
    }

    #[test]
    fn knots_are_reproduced_exactly() {
        for interp in [Interpolation::Linear, Interpolation::MonotoneCubic] {
            let curve = ChargeCurve::default().with_interpolation(interp);
            for (x, y) in DEFAULT_CURVE_POINTS {
                assert_eq!(curve.efficiency_at(x).unwrap(), y, "{interp} at {x}");
            }
        }
    }

    #[test]
    fn peak_dominates_endpoints() {
        let curve = ChargeCurve::default();
        let peak = curve.efficiency_at(0.5).unwrap();
        assert!(peak >= curve.efficiency_at(0.0).unwrap());
        assert!(peak >= curve.efficiency_at(1.0).unwrap());
    }

    #[test]
    fn midpoints_match_independent_interpolants() {
        // frozen from numpy.interp and scipy.interpolate.PchipInterpolator
        let expected = [
            (0.1, 0.31, 0.3209456424079066),
            (0.275, 0.475, 0.4806498951781971),
            (0.425, 0.565, 0.5756944444444445),
            (0.575, 0.575, 0.5840277777777778),
            (0.725, 0.485, 0.495562052130089),
            (0.9, 0.285, 0.29953498869427286),
        ];
        let linear = ChargeCurve::default();
        let cubic = linear.with_interpolation(Interpolation::MonotoneCubic);
        for (x, lin, pchip) in expected {
            assert!((linear.efficiency_at(x).unwrap() - lin).abs() < 1e-12, "linear at {x}");
            assert!((cubic.efficiency_at(x).unwrap() - pchip).abs() < 1e-12, "pchip at {x}");
        }
        // between-neighbours property for every interval midpoint
        for w in DEFAULT_CURVE_POINTS.windows(2) {
            let mid = 0.5 * (w[0].0 + w[1].0);
            let (lo, hi) = (w[0].1.min(w[1].1), w[0].1.max(w[1].1));
            for c in [&linear, &cubic] {
                let v = c.eval(mid);
                assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
            }
        }
    }

    #[test]
    fn out_of_range_fraction_is_rejected() {
        let curve = ChargeCurve::default();
        assert!(curve.efficiency_at(-0.01).is_err());
        assert!(curve.efficiency_at(1.01).is_err());
        assert!(curve.efficiency_at(f64::NAN).is_err());
    }

    #[test]
    fn fit_reports_distinct_error_kinds() {
        assert_eq!(
            fit_charge_curve(&[(0.0, 0.1), (1.0, 0.2)]),
            Err(CurveError::TooFewPoints { found: 2 })
        );
        assert_eq!(
            fit_charge_curve(&[(0.0, 0.1), (0.5, 0.3), (0.4, 0.2)]),
            Err(CurveError::NonIncreasingFractions { index: 2 })
        );
        assert_eq!(
            fit_charge_curve(&[(0.0, 0.1), (0.5, 0.3), (1.0, 0.4)]),
            Err(CurveError::NoInteriorMaximum)
        );
        assert_eq!(
            fit_charge_curve(&[(0.0, 0.3), (0.3, 0.1), (0.6, 0.5), (1.0, 0.2)]),
            Err(CurveError::NotConcave { index: 1 })
        );
        assert_eq!(
            fit_charge_curve(&[(0.0, 0.3), (0.5, 1.5), (1.0, 0.2)]),
            Err(CurveError::OutOfRange { index: 1 })
        );
    }

    #[test]
    fn parses_curve_files() {
        let text = "# bench curve\ninterpolation pchip\n0.0 0.1\n0.5 0.5 # peak\n\n1.0 0.0\n";
        let curve = ChargeCurve::parse(text).unwrap();
        assert_eq!(curve.interpolation(), Interpolation::MonotoneCubic);
        assert_eq!(curve.len(), 3);
        let round = ChargeCurve::parse(&curve.to_string()).unwrap();
        assert_eq!(round, curve);

        let err = ChargeCurve::parse("0.0 0.1\n0.5 x\n").unwrap_err();
        assert!(matches!(err, CurveError::Parse { line: 2, .. }));
    }
}
