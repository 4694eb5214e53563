//! Per-sample diagnostics records collected during a run.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::grid::CellBox;

/// Summary of one discrete support set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSummary {
    pub cells: usize,
    pub bbox: Option<CellBox>,
}

/// Value attached to an unordered species pair `(i, j)`, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairValue {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SampleRecord {
    pub time: f64,
    pub step: usize,
    pub masses: Vec<f64>,
    pub max_norm: f64,
    pub supports: Vec<SupportSummary>,
    pub norm_support: Option<SupportSummary>,
    pub pair_distances: Vec<PairValue>,
    /// Smallest face slack of the discrete Cauchy–Schwarz inequality in the step leaving this sample.
    pub cs_slack_min: Option<f64>,
    /// Largest one-sided residual of `|u|` against the porous medium operator.
    pub subsolution_max: Option<f64>,
    /// Cells of the `|u|` support present at the previous sample and missing now.
    pub support_lost: usize,
    pub ratio_defect: Option<f64>,
    pub barenblatt_l1: Vec<f64>,
    pub barenblatt_linf: Vec<f64>,
    pub sync_defects: Vec<PairValue>,
    pub extras: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub records: Vec<SampleRecord>,
    pub initial_masses: Vec<f64>,
    pub steps: usize,
    /// Steps taken with a dt above the stability bound.
    pub cfl_violations: usize,
}

impl DiagnosticsReport {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn last(&self) -> Option<&SampleRecord> {
        self.records.last()
    }

    /// Largest relative per-species mass change against the initial masses over all samples.
    pub fn max_mass_drift(&self) -> f64 {
        self.records.iter().map(|r| relative_drift(&r.masses, &self.initial_masses)).fold(0.0, f64::max)
    }

    /// Relative mismatch between the final masses and `initial + inflow`, for runs
    /// whose boundary supplies mass.
    pub fn mass_balance_defect(&self, inflow: &[f64]) -> f64 {
        let expected: Vec<f64> = self.initial_masses.iter().zip(inflow).map(|(a, b)| a + b).collect();
        self.records.last().map_or(0.0, |r| relative_drift(&r.masses, &expected))
    }

    pub fn min_cs_slack(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.cs_slack_min).reduce(f64::min)
    }

    pub fn max_subsolution_residual(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.subsolution_max).reduce(f64::max)
    }

    pub fn max_support_lost(&self) -> usize {
        self.records.iter().map(|r| r.support_lost).max().unwrap_or(0)
    }

    pub fn max_ratio_defect(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.ratio_defect).reduce(f64::max)
    }

    /// `t,<columns>` table with one row per sample. Columns present in any record are emitted.
    pub fn to_csv(&self) -> String {
        let k = self.initial_masses.len();
        let mut header = vec!["t".to_string(), "step".into()];
        header.extend((0..k).map(|i| format!("mass_{}", i + 1)));
        header.push("max_norm".into());
        header.extend((0..k).map(|i| format!("support_cells_{}", i + 1)));
        let pairs: Vec<(usize, usize)> =
            self.records.first().map(|r| r.pair_distances.iter().map(|p| (p.i, p.j)).collect()).unwrap_or_default();
        header.extend(pairs.iter().map(|(i, j)| format!("distance_{}_{}", i + 1, j + 1)));
        header.extend(["cs_slack_min", "subsolution_max", "support_lost", "ratio_defect"].map(String::from));
        let bb = self.records.iter().map(|r| r.barenblatt_l1.len()).max().unwrap_or(0);
        header.extend((0..bb).map(|i| format!("barenblatt_l1_{}", i + 1)));
        header.extend((0..bb).map(|i| format!("barenblatt_linf_{}", i + 1)));
        let sync: Vec<(usize, usize)> = self
            .records
            .iter()
            .find(|r| !r.sync_defects.is_empty())
            .map(|r| r.sync_defects.iter().map(|p| (p.i, p.j)).collect())
            .unwrap_or_default();
        header.extend(sync.iter().map(|(i, j)| format!("sync_defect_{}_{}", i + 1, j + 1)));
        let mut extra_keys: Vec<&String> = self.records.iter().flat_map(|r| r.extras.keys()).collect();
        extra_keys.sort();
        extra_keys.dedup();
        header.extend(extra_keys.iter().map(|s| s.to_string()));

        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = header.join(",");
        out.push('\n');
        for r in &self.records {
            let mut row: Vec<String> = vec![r.time.to_string(), r.step.to_string()];
            row.extend(r.masses.iter().map(f64::to_string));
            row.push(r.max_norm.to_string());
            row.extend(r.supports.iter().map(|s| s.cells.to_string()));
            row.extend(r.pair_distances.iter().map(|p| p.value.to_string()));
            row.push(opt(r.cs_slack_min));
            row.push(opt(r.subsolution_max));
            row.push(r.support_lost.to_string());
            row.push(opt(r.ratio_defect));
            for i in 0..bb {
                row.push(opt(r.barenblatt_l1.get(i).copied()));
            }
            for i in 0..bb {
                row.push(opt(r.barenblatt_linf.get(i).copied()));
            }
            for (i, j) in &sync {
                row.push(opt(r.sync_defects.iter().find(|p| p.i == *i && p.j == *j).map(|p| p.value)));
            }
            for key in &extra_keys {
                row.push(opt(r.extras.get(*key).copied()));
            }
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

fn relative_drift(masses: &[f64], reference: &[f64]) -> f64 {
    masses
        .iter()
        .zip(reference)
        .map(|(&m, &r)| {
            let scale = r.abs().max(f64::MIN_POSITIVE);
            (m - r).abs() / scale
        })
        .fold(0.0, f64::max)
}
