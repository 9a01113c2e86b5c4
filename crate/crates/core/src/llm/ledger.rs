use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::Stage;

/// One completed gateway call.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallRecord {
    pub stage: Stage,
    pub prompt_hash: String,
    pub cached: bool,
    pub input_chars: usize,
    pub output_chars: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub calls: usize,
    pub cached: usize,
    pub network: usize,
}

/// Append-only call log, safe for concurrent appends.
#[derive(Debug, Default)]
pub struct Ledger {
    records: Mutex<Vec<CallRecord>>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<CallRecord>) -> Self {
        Ledger {
            records: Mutex::new(records),
        }
    }

    pub fn append(&self, record: CallRecord) {
        self.records.lock().expect("ledger poisoned").push(record);
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("ledger poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records in canonical order, independent of completion order.
    pub fn sorted_records(&self) -> Vec<CallRecord> {
        let mut r = self.records.lock().expect("ledger poisoned").clone();
        r.sort();
        r
    }

    pub fn count(&self, stage: Stage) -> StageCounts {
        ledger_report(self)[&stage]
    }
}

/// Per-stage call totals. Every stage is present, zero or not.
pub fn ledger_report(ledger: &Ledger) -> BTreeMap<Stage, StageCounts> {
    let mut out: BTreeMap<Stage, StageCounts> = Stage::ALL.iter().map(|s| (*s, StageCounts::default())).collect();
    for r in ledger.records.lock().expect("ledger poisoned").iter() {
        let c = out.get_mut(&r.stage).expect("all stages present");
        c.calls += 1;
        if r.cached {
            c.cached += 1;
        } else {
            c.network += 1;
        }
    }
    out
}
