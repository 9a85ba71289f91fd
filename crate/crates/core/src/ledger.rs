//! Query-cost ledger. Each simulated quantum subroutine charges the counter
//! its cost formula names, with hidden constants set to 1 and logs base 2.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// The resource being counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Counter {
    MatrixQueries,
    KpReads,
    ControlledUCalls,
    ElementaryGates,
}

impl Counter {
    pub const ALL: [Counter; 4] = [
        Counter::MatrixQueries,
        Counter::KpReads,
        Counter::ControlledUCalls,
        Counter::ElementaryGates,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Counter::MatrixQueries => "matrix_queries",
            Counter::KpReads => "kp_reads",
            Counter::ControlledUCalls => "controlled_U_calls",
            Counter::ElementaryGates => "elementary_gates",
        }
    }
}

/// Identifier of a closed-form charge formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Formula {
    /// 2⌈log₂ d⌉ tree reads per emulated state preparation.
    KpStatePrep,
    /// ⌈s·log₂(s/δ)⌉ controlled-U calls for one Gaussian phase estimation.
    GpeRun,
    /// ⌈√(d·√d)·log₂(d/δ)⌉ entry queries to locate the large entries of a row.
    IpeFind,
    /// ⌈d^{1/4}/ζ⌉ entry queries for the phase-estimated small-entry part.
    IpeSmallPart,
    /// ⌈M·log₂(1/δ)⌉ unitary calls for amplitude estimation.
    AmpEstimate,
    /// Copies used by computational-basis tomography.
    BasisTomography,
    /// 2n conditional samples for unbiased tomography.
    UnbiasedTomography,
    /// ⌈log₂(d/δ)/r⌉ oracle calls per copy of a refinement residual state.
    RefinedStatePrep,
    /// r·M controlled e^{iπA/2} applications per use of the thresholded phase-estimation unitary.
    PhaseEstimationSweep,
    /// ⌈log₂(1/ε_be)/γ⌉·⌈√d⌉ entry queries per use of a projector block-encoding.
    ProjectorBlockEncoding,
    /// Amplitude-amplification rounds, each one projector use.
    FixedPointRounds,
    /// Classical post-processing, counted as elementary gates.
    Classical,
}

impl Formula {
    pub fn describe(self) -> &'static str {
        match self {
            Formula::KpStatePrep => "2*ceil(log2 d) tree reads",
            Formula::GpeRun => "ceil(s*log2(s/delta)) controlled-U calls",
            Formula::IpeFind => "ceil(sqrt(d*sqrt d)*log2(d/delta)) queries",
            Formula::IpeSmallPart => "ceil(d^0.25/zeta) queries",
            Formula::AmpEstimate => "ceil(M*log2(1/delta)) unitary calls",
            Formula::BasisTomography => "n copies",
            Formula::UnbiasedTomography => "2n conditional samples",
            Formula::RefinedStatePrep => "copies*ceil(log2(d/delta)/r) oracle calls",
            Formula::PhaseEstimationSweep => "r*M simulation calls per W use",
            Formula::ProjectorBlockEncoding => "ceil(log2(1/eps_be)/gamma)*ceil(sqrt d) queries",
            Formula::FixedPointRounds => "ceil(sqrt d*log2(1/eps)) rounds",
            Formula::Classical => "classical operations",
        }
    }
}

/// One ledger entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Charge {
    pub subroutine: String,
    pub formula: Formula,
    pub counter: Counter,
    pub amount: u64,
}

/// Per-worker cost ledger; shards merge by summation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryLedger {
    totals: BTreeMap<Counter, u64>,
    log: Vec<Charge>,
    /// When false only totals are kept; the per-charge log is dropped to save memory.
    #[serde(default)]
    keep_log: bool,
}

/// One aggregated row of [`QueryLedger::report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub subroutine: String,
    pub formula: Formula,
    pub formula_text: String,
    pub counter: Counter,
    pub charges: u64,
    pub total: u64,
}

impl QueryLedger {
    pub fn new() -> Self {
        QueryLedger {
            totals: BTreeMap::new(),
            log: Vec::new(),
            keep_log: true,
        }
    }

    /// A ledger that keeps totals and an aggregated log but not every charge.
    pub fn compact() -> Self {
        QueryLedger {
            totals: BTreeMap::new(),
            log: Vec::new(),
            keep_log: false,
        }
    }

    /// Charges `amount` (rounded up) to `counter`.
    pub fn charge(&mut self, subroutine: &str, formula: Formula, counter: Counter, amount: f64) -> Result<()> {
        if amount.is_nan() || amount < 0.0 {
            return Err(invalid(format!("negative ledger charge {amount} for {subroutine}")));
        }
        let amount = amount.ceil() as u64;
        *self.totals.entry(counter).or_insert(0) += amount;
        self.absorb(Charge {
            subroutine: subroutine.to_string(),
            formula,
            counter,
            amount,
        });
        Ok(())
    }

    fn absorb(&mut self, charge: Charge) {
        if !self.keep_log {
            if let Some(row) = self.log.iter_mut().find(|r| {
                r.subroutine == charge.subroutine && r.formula == charge.formula && r.counter == charge.counter
            }) {
                row.amount += charge.amount;
                return;
            }
        }
        self.log.push(charge);
    }

    pub fn total(&self, counter: Counter) -> u64 {
        self.totals.get(&counter).copied().unwrap_or(0)
    }

    /// Sum of all charges to `counter` made by `subroutine`.
    pub fn subroutine_total(&self, subroutine: &str, counter: Counter) -> u64 {
        self.log
            .iter()
            .filter(|c| c.subroutine == subroutine && c.counter == counter)
            .map(|c| c.amount)
            .sum()
    }

    pub fn entries(&self) -> &[Charge] {
        &self.log
    }

    pub fn merge(&mut self, other: &QueryLedger) {
        for (k, v) in &other.totals {
            *self.totals.entry(*k).or_insert(0) += v;
        }
        for c in &other.log {
            self.absorb(c.clone());
        }
    }

    /// Per-(subroutine, formula, counter) totals in deterministic order.
    pub fn report(&self) -> Vec<ReportRow> {
        let mut agg: BTreeMap<(String, Formula, Counter), (u64, u64)> = BTreeMap::new();
        for c in &self.log {
            let e = agg
                .entry((c.subroutine.clone(), c.formula, c.counter))
                .or_insert((0, 0));
            e.0 += 1;
            e.1 += c.amount;
        }
        agg.into_iter()
            .map(|((subroutine, formula, counter), (charges, total))| ReportRow {
                subroutine,
                formula,
                formula_text: formula.describe().to_string(),
                counter,
                charges,
                total,
            })
            .collect()
    }

    /// Totals keyed by counter name, for JSON output.
    pub fn totals_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for c in Counter::ALL {
            map.insert(c.name().to_string(), serde_json::Value::from(self.total(c)));
        }
        serde_json::Value::Object(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_ledger_is_zero() {
        let l = QueryLedger::new();
        for c in Counter::ALL {
            assert_eq!(l.total(c), 0);
        }
        assert!(l.report().is_empty());
    }

    #[test]
    fn single_charge() {
        let mut l = QueryLedger::new();
        l.charge("ipe", Formula::IpeFind, Counter::MatrixQueries, 5.0).unwrap();
        assert_eq!(l.total(Counter::MatrixQueries), 5);
        assert_eq!(l.report()[0].total, 5);
    }

    #[test]
    fn negative_charge_rejected() {
        let mut l = QueryLedger::new();
        assert!(l
            .charge("x", Formula::Classical, Counter::ElementaryGates, -1.0)
            .is_err());
        assert_eq!(l.total(Counter::ElementaryGates), 0);
    }

    #[test]
    fn report_totals_match_counters() {
        let mut a = QueryLedger::compact();
        let mut b = QueryLedger::new();
        for i in 0..10 {
            a.charge("gpe", Formula::GpeRun, Counter::ControlledUCalls, i as f64 + 0.5)
                .unwrap();
            b.charge("ipe", Formula::IpeFind, Counter::MatrixQueries, 3.0).unwrap();
        }
        a.merge(&b);
        for c in Counter::ALL {
            let from_report: u64 = a.report().iter().filter(|r| r.counter == c).map(|r| r.total).sum();
            assert_eq!(from_report, a.total(c));
        }
    }
}
