//! Result emission: the JSON record schema shared by all estimation
//! experiments, and the long-form CSV layout for correlation matrices.

use multiport_core::estimation::CorrelationMatrix;
use serde::{Deserialize, Serialize};

/// One estimated entangled link. `f_err` is absent for exact statistics,
/// `theta` only applies to swapped states, `certified_k` to witness runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub gate: String,
    /// Distribution channel, 1-based, as the source side counts them.
    pub channel: usize,
    /// User pair in alphabetical order, e.g. "A1B1".
    pub users: String,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "F_err")]
    pub f_err: Option<f64>,
    pub certified_k: Option<usize>,
    pub theta: Option<f64>,
}

/// Idler-side users are A (source 1) and H (source 2); circuit-side users are
/// B (output port 1) and G (output port 2). Subscripts count channels from 1.
/// Pairs read alphabetically, matching the published table ordering.
pub fn pair_label(in_port: usize, in_ch: usize, out_port: usize, out_ch: usize) -> String {
    let idler = format!("{}{}", ['A', 'H'][in_port], in_ch + 1);
    let circuit = format!("{}{}", ['B', 'G'][out_port], out_ch + 1);
    let (first, second) = if idler < circuit {
        (idler, circuit)
    } else {
        (circuit, idler)
    };
    format!("{first}{second}")
}

/// Swapped links connect the two idler-side users of one channel.
pub fn swap_pair_label(ch: usize) -> String {
    format!("A{}H{}", ch + 1, ch + 1)
}

/// Long-form correlation rows: one row per (gate, pair, basis, outcome pair).
#[derive(Debug, Default)]
pub struct CorrelationCsv {
    rows: Vec<String>,
}

impl CorrelationCsv {
    pub fn push(&mut self, gate: &str, users: &str, corr: &CorrelationMatrix) {
        let d = corr.dim();
        for a in 0..d {
            for b in 0..d {
                self.rows.push(format!(
                    "{gate},{users},{},{a},{b},{:.17e}",
                    corr.basis,
                    corr.probs[(a, b)]
                ));
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("gate,users,basis,outcome_a,outcome_b,probability\n");
        for row in &self.rows {
            out.push_str(row);
            out.push('\n');
        }
        out
    }
}

pub fn records_json(records: &[ResultRecord]) -> String {
    let mut text = serde_json::to_string_pretty(records).expect("records serialize");
    text.push('\n');
    text
}
