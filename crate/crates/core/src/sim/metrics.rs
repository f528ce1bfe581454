//! Run output: line-oriented records and an aggregate summary.
//!
//! Rows format, after `#` header lines, has one record per line:
//!
//! ```text
//! series=residual slot=100 node=3 value=0.0000042
//! series=delivered slot=100 node=- value=12
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! `f64`, so a summary computed from a parsed file equals one computed in
//! memory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Per-node series sampled at every boundary.
pub const RESIDUAL: &str = "residual";
pub const HARVESTED: &str = "harvested";
pub const CONSUMED: &str = "consumed";
pub const QUEUE: &str = "queue";
pub const ALIVE: &str = "alive";
/// Network series sampled at every boundary (cumulative counts and joules).
pub const GENERATED: &str = "generated";
pub const DELIVERED: &str = "delivered";
pub const DROPPED: &str = "dropped";
pub const COLLISIONS: &str = "collisions";
pub const RADIATED: &str = "radiated";
/// Event records.
pub const DELAY: &str = "delay";
pub const CLAMPED: &str = "clamped";
pub const PLAN_COST: &str = "plan_cost";
pub const PLAN_REQUESTS: &str = "plan_requests";

const MAGIC: &str = "# ehsn metrics v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub series: String,
    pub slot: u64,
    pub node: Option<u32>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub slots: u64,
    pub slot_length: f64,
    pub node_count: usize,
    pub records: Vec<Record>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsFormat {
    Rows,
    Summary,
}

impl Metrics {
    pub fn push(&mut self, series: &str, slot: u64, node: Option<u32>, value: f64) {
        self.records.push(Record {
            series: series.to_string(),
            slot,
            node,
            value,
        });
    }

    /// Records of one series, in emission order.
    pub fn series<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Record> + 'a {
        self.records.iter().filter(move |r| r.series == name)
    }

    /// `(slot, value)` samples of a per-node series.
    pub fn node_series(&self, name: &str, node: u32) -> Vec<(u64, f64)> {
        self.series(name)
            .filter(|r| r.node == Some(node))
            .map(|r| (r.slot, r.value))
            .collect()
    }

    pub fn render_rows(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        let _ = writeln!(
            out,
            "# scenario={} seed={} slots={} slot_length={} nodes={}",
            self.scenario, self.seed, self.slots, self.slot_length, self.node_count
        );
        for r in &self.records {
            let _ = match r.node {
                Some(n) => writeln!(out, "series={} slot={} node={} value={}", r.series, r.slot, n, r.value),
                None => writeln!(out, "series={} slot={} node=- value={}", r.series, r.slot, r.value),
            };
        }
        out
    }

    pub fn parse(text: &str) -> Result<Metrics, MetricsError> {
        let mut m = Metrics::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| MetricsError::Parse { line, message };
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed == MAGIC {
                continue;
            }
            let (body, header) = match trimmed.strip_prefix('#') {
                Some(rest) => (rest.trim(), true),
                None => (trimmed, false),
            };
            let mut fields = BTreeMap::new();
            for pair in body.split_whitespace() {
                let (k, v) = pair.split_once('=').ok_or_else(|| err(format!("`{pair}` is not key=value")))?;
                fields.insert(k, v);
            }
            let get = |k: &str| fields.get(k).copied().ok_or_else(|| err(format!("missing `{k}`")));
            let num = |k: &str| -> Result<f64, MetricsError> {
                let v = get(k)?;
                v.parse().map_err(|_| err(format!("`{k}={v}` is not a number")))
            };
            let int = |k: &str| -> Result<u64, MetricsError> {
                let v = get(k)?;
                v.parse().map_err(|_| err(format!("`{k}={v}` is not a count")))
            };
            if header {
                if fields.contains_key("scenario") {
                    m.scenario = get("scenario")?.to_string();
                    m.seed = int("seed")?;
                    m.slots = int("slots")?;
                    m.slot_length = num("slot_length")?;
                    m.node_count = int("nodes")? as usize;
                }
                continue;
            }
            let node = match get("node")? {
                "-" => None,
                v => Some(v.parse().map_err(|_| err(format!("`node={v}` is not a node id")))?),
            };
            m.records.push(Record {
                series: get("series")?.to_string(),
                slot: int("slot")?,
                node,
                value: num("value")?,
            });
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Metrics, MetricsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MetricsError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Metrics::parse(&text)
    }
}

/// Aggregates recomputed from the records.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub nodes: usize,
    pub slots: u64,
    pub final_slot: Option<u64>,
    pub mean_residual: f64,
    pub min_residual: f64,
    pub alive: usize,
    pub total_harvested: f64,
    pub total_consumed: f64,
    pub generated: f64,
    pub delivered: f64,
    pub dropped: f64,
    pub collisions: f64,
    pub radiated: f64,
    /// `None` when nothing was generated.
    pub delivery_ratio: Option<f64>,
    /// Slots; `None` when nothing was delivered.
    pub mean_delay: Option<f64>,
    pub plan_cost: f64,
    pub plan_requests: f64,
    pub clamped: f64,
}

impl Summary {
    pub fn from_metrics(m: &Metrics) -> Summary {
        let final_slot = m.series(RESIDUAL).map(|r| r.slot).max();
        let at_final = |name: &str| -> Vec<f64> {
            match final_slot {
                Some(s) => m.series(name).filter(|r| r.slot == s && r.node.is_some()).map(|r| r.value).collect(),
                None => Vec::new(),
            }
        };
        let last_network = |name: &str| m.series(name).filter(|r| r.node.is_none()).last().map_or(0.0, |r| r.value);
        let residuals = at_final(RESIDUAL);
        let delays: Vec<f64> = m.series(DELAY).map(|r| r.value).collect();
        let generated = last_network(GENERATED);
        let delivered = last_network(DELIVERED);
        Summary {
            nodes: m.node_count,
            slots: m.slots,
            final_slot,
            mean_residual: if residuals.is_empty() {
                0.0
            } else {
                total(residuals.iter().copied()) / residuals.len() as f64
            },
            min_residual: residuals.iter().copied().reduce(f64::min).unwrap_or(0.0),
            alive: at_final(ALIVE).iter().filter(|&&v| v > 0.0).count(),
            total_harvested: total(at_final(HARVESTED)),
            total_consumed: total(at_final(CONSUMED)),
            generated,
            delivered,
            dropped: last_network(DROPPED),
            collisions: last_network(COLLISIONS),
            radiated: last_network(RADIATED),
            delivery_ratio: (generated > 0.0).then(|| delivered / generated),
            mean_delay: (!delays.is_empty()).then(|| total(delays.iter().copied()) / delays.len() as f64),
            plan_cost: total(m.series(PLAN_COST).map(|r| r.value)),
            plan_requests: total(m.series(PLAN_REQUESTS).map(|r| r.value)),
            clamped: total(m.series(CLAMPED).map(|r| r.value)),
        }
    }

    pub fn render(&self, m: &Metrics) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| v.to_string());
        let rows: Vec<(&str, String)> = vec![
            ("nodes", self.nodes.to_string()),
            ("slots", self.slots.to_string()),
            ("final_slot", self.final_slot.map_or_else(|| "n/a".to_string(), |s| s.to_string())),
            ("mean_residual_j", self.mean_residual.to_string()),
            ("min_residual_j", if self.final_slot.is_some() { self.min_residual.to_string() } else { "n/a".into() }),
            ("alive", self.alive.to_string()),
            ("total_harvested_j", self.total_harvested.to_string()),
            ("total_consumed_j", self.total_consumed.to_string()),
            ("generated", self.generated.to_string()),
            ("delivered", self.delivered.to_string()),
            ("dropped", self.dropped.to_string()),
            ("collisions", self.collisions.to_string()),
            ("radiated_j", self.radiated.to_string()),
            ("delivery_ratio", opt(self.delivery_ratio)),
            ("mean_delay_slots", opt(self.mean_delay)),
            ("plan_cost", self.plan_cost.to_string()),
            ("plan_requests", self.plan_requests.to_string()),
            ("clamped_j", self.clamped.to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = format!("# summary scenario={} seed={}\n", m.scenario, m.seed);
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}

/// Sum starting from `+0.0`, so that an empty series renders as `0`.
fn total(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |a, b| a + b)
}

/// Writes `metrics` to `path` in the requested format.
pub fn emit_metrics(metrics: &Metrics, format: MetricsFormat, path: impl AsRef<Path>) -> Result<(), MetricsError> {
    let path = path.as_ref();
    let text = match format {
        MetricsFormat::Rows => metrics.render_rows(),
        MetricsFormat::Summary => Summary::from_metrics(metrics).render(metrics),
    };
    std::fs::write(path, text).map_err(|e| MetricsError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Metrics {
        let mut m = Metrics {
            scenario: "t".into(),
            seed: 3,
            slots: 20,
            slot_length: 0.01,
            node_count: 1,
            records: Vec::new(),
        };
        for (slot, v) in [(0, 1.0e-6), (10, 1.5e-6), (20, 0.1 + 0.2)] {
            m.push(RESIDUAL, slot, Some(0), v);
        }
        m.push(DELIVERED, 20, None, 2.0);
        m
    }

    #[test]
    fn empty_metrics_render_header_only() {
        let text = Metrics::default().render_rows();
        assert!(text.lines().all(|l| l.starts_with('#')), "{text}");
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn rows_round_trip_in_order() {
        let m = sample();
        let text = m.render_rows();
        let lines: Vec<&str> = text.lines().filter(|l| l.starts_with("series=residual")).collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], "series=residual slot=20 node=0 value=0.30000000000000004");
        assert_eq!(Metrics::parse(&text).unwrap(), m);
        assert_eq!(m.node_series(RESIDUAL, 0).len(), 3);
    }

    #[test]
    fn malformed_rows_report_lines() {
        let err = Metrics::parse("# ehsn metrics v1\nseries=x slot=1 node=- value=abc\n").unwrap_err();
        assert!(matches!(err, MetricsError::Parse { line: 2, .. }));
    }

    #[test]
    fn write_errors_name_the_path() {
        let err = emit_metrics(&sample(), MetricsFormat::Rows, "/nonexistent/dir/m.txt").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/m.txt"));
    }
}
