//! Error tables of refinement ladders and observed orders.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub h: f64,
    /// Errors summed over species.
    pub l1: f64,
    pub linf: f64,
    pub l1_species: Vec<f64>,
    pub linf_species: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn push(&mut self, row: ErrorRow) {
        self.rows.push(row);
    }

    /// `ln(e_coarse/e_fine) / ln(h_coarse/h_fine)` for consecutive rows (L¹).
    pub fn orders(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| (w[0].l1 / w[1].l1).ln() / (w[0].h / w[1].h).ln()).collect()
    }

    pub fn min_order(&self) -> Option<f64> {
        self.orders().into_iter().reduce(f64::min)
    }

    /// Errors that fail to decrease under refinement make the observed order meaningless.
    pub fn inconclusive(&self) -> bool {
        self.rows.len() < 2 || self.rows.windows(2).any(|w| !(w[1].l1 < w[0].l1))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,L1,Linf,order_estimate\n");
        let orders = self.orders();
        for (j, r) in self.rows.iter().enumerate() {
            let order = if j == 0 { String::new() } else { orders[j - 1].to_string() };
            let _ = writeln!(out, "{},{},{},{}", r.h, r.l1, r.linf, order);
        }
        out
    }
}
