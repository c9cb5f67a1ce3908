//! Latency and energy accounting over execution traces.
//!
//! Costs are integers: cycles and femtojoules. Array-local events on
//! different sub-arrays overlap, so their cycle count is the slowest
//! sub-array's; shared units (DPU, sensor) are serial.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{EventClass, TraceEvent};
use crate::net::OpCount;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum PerfError {
    #[error("no cost entry for event class `{0}`")]
    UnknownEventClass(String),
    #[error("division by zero: {0}")]
    DivByZero(&'static str),
    #[error("invalid cost table: {0}")]
    InvalidTable(String),
    #[error("comparison needs at least two reports")]
    TooFewReports,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = PerfError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCost {
    pub latency_cycles: u64,
    /// Per event; per byte for data loads.
    pub energy_fj: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCostTable {
    pub frequency_hz: u64,
    pub supply: String,
    /// Buffer transfer width; a data load takes one latency per beat.
    pub beat_bytes: u32,
    pub classes: BTreeMap<EventClass, ClassCost>,
    /// Classes whose events count `size` bit operations toward TOPS/W.
    #[serde(default = "default_counted")]
    pub counted: Vec<EventClass>,
}

fn default_counted() -> Vec<EventClass> {
    vec![EventClass::InArray, EventClass::DpuBitcount, EventClass::DpuShiftAdd, EventClass::DpuActivation]
}

impl Default for OpCostTable {
    /// The shipped calibration; see `configs/default.json`.
    fn default() -> Self {
        use EventClass::*;
        let c = |latency_cycles, energy_fj| ClassCost { latency_cycles, energy_fj };
        OpCostTable {
            frequency_hz: 1_250_000_000,
            supply: "1.1V".into(),
            beat_bytes: 32,
            classes: BTreeMap::from([
                (InArray, c(1, 6845)),
                (RowRead, c(1, 1900)),
                (RowWrite, c(1, 2400)),
                (DpuBitcount, c(1, 640)),
                (DpuShiftAdd, c(1, 180)),
                (DpuActivation, c(1, 320)),
                (Fusion, c(1, 1100)),
                (PixelConversion, c(1, 1500)),
                (DataLoad, c(1, 55)),
            ]),
            counted: default_counted(),
        }
    }
}

impl OpCostTable {
    pub fn validate(&self) -> Result<()> {
        if self.frequency_hz == 0 {
            return Err(PerfError::InvalidTable("frequency must be positive".into()));
        }
        if self.beat_bytes == 0 {
            return Err(PerfError::InvalidTable("beat width must be positive".into()));
        }
        Ok(())
    }

    pub fn cost(&self, class: EventClass) -> Result<ClassCost> {
        self.classes.get(&class).copied().ok_or_else(|| PerfError::UnknownEventClass(class.name().into()))
    }

    /// Cycles and energy of one event.
    pub fn price(&self, e: &TraceEvent) -> Result<(u64, u64)> {
        let c = self.cost(e.class)?;
        Ok(match e.class {
            EventClass::DataLoad => {
                (data_load_beats(u64::from(e.size), self.beat_bytes) * c.latency_cycles, u64::from(e.size) * c.energy_fj)
            }
            _ => (c.latency_cycles, c.energy_fj),
        })
    }

    /// Every energy multiplied by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        let mut t = self.clone();
        for c in t.classes.values_mut() {
            c.energy_fj *= k;
        }
        t
    }
}

fn data_load_beats(bytes: u64, beat: u32) -> u64 {
    bytes.div_ceil(u64::from(beat))
}

/// Cycles to stream `bytes` from the buffer.
pub fn data_load_time(bytes: u64, table: &OpCostTable) -> Result<u64> {
    Ok(data_load_beats(bytes, table.beat_bytes) * table.cost(EventClass::DataLoad)?.latency_cycles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub frequency_hz: u64,
    pub supply: String,
    pub events: u64,
    pub total_cycles: u64,
    /// Slowest sub-array.
    pub array_cycles: u64,
    /// Serial shared-unit cycles.
    pub shared_cycles: u64,
    pub wall_time_s: f64,
    pub total_energy_fj: u64,
    pub energy_by_class: BTreeMap<EventClass, u64>,
    /// Keyed by layer index; untagged events under `-`.
    pub energy_by_layer: BTreeMap<String, u64>,
    pub mac_energy_fj: u64,
    pub cmp_energy_fj: u64,
    pub bit_ops: u64,
    pub ops_per_second: f64,
    pub tops_per_watt: f64,
}

/// Ops that belong to the multiply-accumulate path (MLP layers).
pub const MAC_OPS: [&str; 5] = ["carry", "read_product", "bitcount", "shift_add", "activate"];
/// Ops that belong to the comparison path (LBP layers).
pub const CMP_OPS: [&str; 7] = ["cmp", "search", "read_result", "read_pivot", "write_lbp", "fuse_read", "fuse_write"];

pub fn layer_key(layer: Option<u32>) -> String {
    layer.map_or_else(|| "-".to_string(), |l| l.to_string())
}

pub fn account(trace: &[TraceEvent], table: &OpCostTable) -> Result<Report> {
    table.validate()?;
    let mut per_array: HashMap<u32, u64> = HashMap::new();
    let mut shared = 0u64;
    let mut energy = 0u64;
    let mut by_class = BTreeMap::new();
    let mut by_layer = BTreeMap::new();
    let (mut mac, mut cmp, mut bit_ops) = (0u64, 0u64, 0u64);
    for e in trace {
        let (cycles, fj) = table.price(e)?;
        match e.sub_array {
            Some(id) => *per_array.entry(id).or_default() += cycles,
            None => shared += cycles,
        }
        energy += fj;
        *by_class.entry(e.class).or_default() += fj;
        *by_layer.entry(layer_key(e.layer)).or_default() += fj;
        if MAC_OPS.contains(&e.op.as_str()) {
            mac += fj;
        } else if CMP_OPS.contains(&e.op.as_str()) {
            cmp += fj;
        }
        if table.counted.contains(&e.class) {
            bit_ops += u64::from(e.size);
        }
    }
    let array_cycles = per_array.values().copied().max().unwrap_or(0);
    Ok(finish(table, trace.len() as u64, array_cycles, shared, energy, by_class, by_layer, mac, cmp, bit_ops))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    table: &OpCostTable,
    events: u64,
    array_cycles: u64,
    shared_cycles: u64,
    energy: u64,
    energy_by_class: BTreeMap<EventClass, u64>,
    energy_by_layer: BTreeMap<String, u64>,
    mac: u64,
    cmp: u64,
    bit_ops: u64,
) -> Report {
    let total_cycles = array_cycles + shared_cycles;
    let wall = total_cycles as f64 / table.frequency_hz as f64;
    let mut r = Report {
        schema: REPORT_SCHEMA,
        frequency_hz: table.frequency_hz,
        supply: table.supply.clone(),
        events,
        total_cycles,
        array_cycles,
        shared_cycles,
        wall_time_s: wall,
        total_energy_fj: energy,
        energy_by_class,
        energy_by_layer,
        mac_energy_fj: mac,
        cmp_energy_fj: cmp,
        bit_ops,
        ops_per_second: if wall > 0.0 { bit_ops as f64 / wall } else { 0.0 },
        tops_per_watt: 0.0,
    };
    r.tops_per_watt = tops_per_watt(&r).unwrap_or(0.0);
    r
}

/// Bit operations per joule, in units of 10^12.
pub fn tops_per_watt(report: &Report) -> Result<f64> {
    if report.total_energy_fj == 0 {
        return Err(PerfError::DivByZero("no energy"));
    }
    if report.total_cycles == 0 {
        return Err(PerfError::DivByZero("no time"));
    }
    // ops / (fJ * 1e-15) / 1e12
    Ok(report.bit_ops as f64 * 1e3 / report.total_energy_fj as f64)
}

/// Energy of an operation tally: reads as row reads, comparisons as
/// in-array cycles, writes as row writes.
pub fn op_count_energy(ops: OpCount, table: &OpCostTable) -> Result<u64> {
    Ok(ops.reads * table.cost(EventClass::RowRead)?.energy_fj
        + ops.comparisons * table.cost(EventClass::InArray)?.energy_fj
        + ops.writes * table.cost(EventClass::RowWrite)?.energy_fj)
}

/// Report for an analytical tally, one cycle per operation, all
/// comparison-path energy.
pub fn report_from_ops(ops: OpCount, table: &OpCostTable) -> Result<Report> {
    table.validate()?;
    let mut by_class = BTreeMap::new();
    let read = ops.reads * table.cost(EventClass::RowRead)?.energy_fj;
    let cmp = ops.comparisons * table.cost(EventClass::InArray)?.energy_fj;
    let write = ops.writes * table.cost(EventClass::RowWrite)?.energy_fj;
    by_class.insert(EventClass::RowRead, read);
    by_class.insert(EventClass::InArray, cmp);
    by_class.insert(EventClass::RowWrite, write);
    let energy = read + cmp + write;
    let by_layer = BTreeMap::from([(layer_key(None), energy)]);
    Ok(finish(table, ops.total(), ops.total(), 0, energy, by_class, by_layer, 0, energy, ops.comparisons))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub numerator: String,
    pub denominator: String,
    pub energy_ratio: f64,
    pub delay_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub name: String,
    pub total_energy_fj: u64,
    pub mac_energy_fj: u64,
    pub cmp_energy_fj: u64,
    pub total_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema: u32,
    pub ratios: Vec<RatioRow>,
    pub breakdown: Vec<Breakdown>,
}

fn ratio(a: u64, b: u64) -> f64 {
    match (a, b) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        _ => a as f64 / b as f64,
    }
}

/// Ratios for every ordered pair of distinct reports.
pub fn compare_networks(reports: &[(String, Report)]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(PerfError::TooFewReports);
    }
    let mut ratios = Vec::new();
    for (i, (na, a)) in reports.iter().enumerate() {
        for (j, (nb, b)) in reports.iter().enumerate() {
            if i != j {
                ratios.push(RatioRow {
                    numerator: na.clone(),
                    denominator: nb.clone(),
                    energy_ratio: ratio(a.total_energy_fj, b.total_energy_fj),
                    delay_ratio: ratio(a.total_cycles, b.total_cycles),
                });
            }
        }
    }
    let breakdown = reports
        .iter()
        .map(|(n, r)| Breakdown {
            name: n.clone(),
            total_energy_fj: r.total_energy_fj,
            mac_energy_fj: r.mac_energy_fj,
            cmp_energy_fj: r.cmp_energy_fj,
            total_cycles: r.total_cycles,
        })
        .collect();
    Ok(Comparison { schema: REPORT_SCHEMA, ratios, breakdown })
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `metric,value` rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "value"])?;
        let scalar = [
            ("schema", self.schema.to_string()),
            ("frequency_hz", self.frequency_hz.to_string()),
            ("supply", self.supply.clone()),
            ("events", self.events.to_string()),
            ("total_cycles", self.total_cycles.to_string()),
            ("array_cycles", self.array_cycles.to_string()),
            ("shared_cycles", self.shared_cycles.to_string()),
            ("wall_time_s", format!("{:e}", self.wall_time_s)),
            ("total_energy_fj", self.total_energy_fj.to_string()),
            ("mac_energy_fj", self.mac_energy_fj.to_string()),
            ("cmp_energy_fj", self.cmp_energy_fj.to_string()),
            ("bit_ops", self.bit_ops.to_string()),
            ("ops_per_second", format!("{:e}", self.ops_per_second)),
            ("tops_per_watt", format!("{:.4}", self.tops_per_watt)),
        ];
        for (k, v) in scalar {
            w.write_record([k, v.as_str()])?;
        }
        for (c, v) in &self.energy_by_class {
            w.write_record([format!("energy_fj.class.{}", c.name()), v.to_string()])?;
        }
        for (l, v) in &self.energy_by_layer {
            w.write_record([format!("energy_fj.layer.{l}"), v.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| PerfError::InvalidTable(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

impl Comparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["numerator", "denominator", "energy_ratio", "delay_ratio"])?;
        for r in &self.ratios {
            w.write_record([r.numerator.clone(), r.denominator.clone(), format!("{:.6}", r.energy_ratio), format!("{:.6}", r.delay_ratio)])?;
        }
        let bytes = w.into_inner().map_err(|e| PerfError::InvalidTable(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// `n` single-cycle in-array `sum` events on full 256-column rows.
pub fn saturating_microbenchmark(n: u64) -> Vec<TraceEvent> {
    (0..n).map(|c| TraceEvent::new(c, Some(0), "sum", 256, EventClass::InArray)).collect()
}

/// Sets the in-array energy so the saturating microbenchmark reaches
/// `target_tops_w`; other entries are left alone.
pub fn calibrate(table: &OpCostTable, target_tops_w: f64) -> Result<OpCostTable> {
    if target_tops_w <= 0.0 {
        return Err(PerfError::DivByZero("target efficiency must be positive"));
    }
    let mut t = table.clone();
    let entry = t.classes.entry(EventClass::InArray).or_insert(ClassCost { latency_cycles: 1, energy_fj: 0 });
    entry.energy_fj = (256.0 * 1e3 / target_tops_w).round() as u64;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace() {
        let r = account(&[], &OpCostTable::default()).unwrap();
        assert_eq!((r.total_cycles, r.total_energy_fj, r.bit_ops), (0, 0, 0));
        assert!(matches!(tops_per_watt(&r), Err(PerfError::DivByZero(_))));
    }

    #[test]
    fn identical_events() {
        let t = OpCostTable::default();
        let r = account(&saturating_microbenchmark(10), &t).unwrap();
        assert_eq!(r.total_cycles, 10);
        assert_eq!(r.total_energy_fj, 10 * 6845);
    }

    #[test]
    fn shipped_operating_point() {
        let t = OpCostTable::default();
        let r = account(&saturating_microbenchmark(1000), &t).unwrap();
        assert_eq!(r.frequency_hz, 1_250_000_000);
        assert!((r.tops_per_watt - 37.4).abs() < 0.01, "{}", r.tops_per_watt);
        let doubled = account(&saturating_microbenchmark(1000), &t.scaled(2)).unwrap();
        assert!((doubled.tops_per_watt * 2.0 - r.tops_per_watt).abs() < 1e-9);
    }

    #[test]
    fn three_event_trace_by_hand() {
        let t = OpCostTable::default();
        let trace = vec![
            TraceEvent::new(0, Some(0), "sum", 256, EventClass::InArray),
            TraceEvent::new(0, Some(1), "cmp", 64, EventClass::InArray),
            TraceEvent::new(0, None, "bitcount", 64, EventClass::DpuBitcount),
        ];
        let r = account(&trace, &t).unwrap();
        assert_eq!(r.total_cycles, 2);
        assert_eq!(r.total_energy_fj, 6845 * 2 + 640);
        assert_eq!(r.bit_ops, 384);
        let expected = 384.0 * 1e3 / (6845.0 * 2.0 + 640.0);
        assert!((tops_per_watt(&r).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn data_load_beats() {
        let t = OpCostTable::default();
        assert_eq!(data_load_time(0, &t).unwrap(), 0);
        assert_eq!(data_load_time(32, &t).unwrap(), 1);
        assert_eq!(data_load_time(33, &t).unwrap(), 2);
    }

    #[test]
    fn missing_class_is_reported() {
        let mut t = OpCostTable::default();
        t.classes.remove(&EventClass::Fusion);
        let trace = [TraceEvent::new(0, None, "fuse_read", 1, EventClass::Fusion)];
        assert!(matches!(account(&trace, &t), Err(PerfError::UnknownEventClass(c)) if c == "fusion"));
    }

    #[test]
    fn calibration_hits_target() {
        let t = calibrate(&OpCostTable::default(), 20.0).unwrap();
        let r = account(&saturating_microbenchmark(10), &t).unwrap();
        assert!((r.tops_per_watt - 20.0).abs() < 0.01);
    }

    #[test]
    fn csv_and_json() {
        let r = account(&saturating_microbenchmark(3), &OpCostTable::default()).unwrap();
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with("metric,value\n"));
        assert!(csv.contains("energy_fj.class.in_array,20535"));
        let back: Report = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn comparison_needs_two() {
        let r = account(&saturating_microbenchmark(3), &OpCostTable::default()).unwrap();
        assert!(matches!(compare_networks(&[("a".into(), r.clone())]), Err(PerfError::TooFewReports)));
        let c = compare_networks(&[("a".into(), r.clone()), ("b".into(), r)]).unwrap();
        assert!(c.ratios.iter().all(|x| x.energy_ratio == 1.0 && x.delay_ratio == 1.0));
    }
}
