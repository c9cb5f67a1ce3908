use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{IsaError, Result};

/// Cost category of an event; the performance model prices each class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    /// One activate-and-sense cycle with write-back.
    InArray,
    RowRead,
    RowWrite,
    DpuBitcount,
    DpuShiftAdd,
    DpuActivation,
    /// Projection-map read or write while fusing channel codes.
    Fusion,
    PixelConversion,
    /// Buffer-to-array transfer; `size` is in bytes.
    DataLoad,
}

impl EventClass {
    pub const ALL: [EventClass; 9] = [
        EventClass::InArray,
        EventClass::RowRead,
        EventClass::RowWrite,
        EventClass::DpuBitcount,
        EventClass::DpuShiftAdd,
        EventClass::DpuActivation,
        EventClass::Fusion,
        EventClass::PixelConversion,
        EventClass::DataLoad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventClass::InArray => "in_array",
            EventClass::RowRead => "row_read",
            EventClass::RowWrite => "row_write",
            EventClass::DpuBitcount => "dpu_bitcount",
            EventClass::DpuShiftAdd => "dpu_shift_add",
            EventClass::DpuActivation => "dpu_activation",
            EventClass::Fusion => "fusion",
            EventClass::PixelConversion => "pixel_conversion",
            EventClass::DataLoad => "data_load",
        }
    }

    /// Events issued inside a sub-array rather than by shared units.
    pub fn is_array_local(self) -> bool {
        matches!(self, EventClass::InArray | EventClass::RowRead | EventClass::RowWrite)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    /// `None` for shared units (DPU, sensor, buffer).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_array: Option<u32>,
    pub op: String,
    /// Active columns, vector width, or bytes for data loads.
    pub size: u32,
    pub class: EventClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<u32>,
}

impl TraceEvent {
    pub fn new(cycle: u64, sub_array: Option<u32>, op: impl Into<String>, size: u32, class: EventClass) -> Self {
        TraceEvent { cycle, sub_array, op: op.into(), size, class, layer: None }
    }

    pub fn with_layer(mut self, layer: Option<u32>) -> Self {
        self.layer = layer;
        self
    }
}

/// Orders events by `(cycle, sub_array)`, shared units last within a cycle.
/// The sort is stable, so each source keeps its own order.
pub fn merge_traces(traces: impl IntoIterator<Item = Vec<TraceEvent>>) -> Vec<TraceEvent> {
    let mut all: Vec<TraceEvent> = traces.into_iter().flatten().collect();
    all.sort_by_key(|e| (e.cycle, e.sub_array.map_or(u64::MAX, u64::from)));
    all
}

pub fn write_jsonl<W: Write>(events: &[TraceEvent], mut w: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TraceEvent>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| IsaError::Trace(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| IsaError::Trace(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let events = vec![
            TraceEvent::new(0, Some(1), "sum", 256, EventClass::InArray),
            TraceEvent::new(3, None, "bitcount", 64, EventClass::DpuBitcount).with_layer(Some(2)),
        ];
        let mut buf = Vec::new();
        write_jsonl(&events, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"class\":\"in_array\""));
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), events);
        assert!(read_jsonl("{\"bad\":1}".as_bytes()).is_err());
    }

    #[test]
    fn merge_is_deterministic() {
        let a = vec![TraceEvent::new(0, Some(1), "x", 1, EventClass::InArray), TraceEvent::new(1, Some(1), "y", 1, EventClass::InArray)];
        let b = vec![TraceEvent::new(0, Some(0), "z", 1, EventClass::InArray), TraceEvent::new(1, None, "d", 1, EventClass::DpuBitcount)];
        let m1 = merge_traces([a.clone(), b.clone()]);
        let m2 = merge_traces([b, a]);
        assert_eq!(m1, m2);
        assert_eq!(m1.iter().map(|e| e.op.as_str()).collect::<Vec<_>>(), ["z", "x", "y", "d"]);
    }
}
