//! Agreement between network cores and portfolio holdings.
//!
//! Centralities and portfolio weights are each turned into a bit-string with
//! the same threshold rule, then compared by Hamming distance. `D = 1` means
//! every core sector is left out of the portfolio and every periphery sector
//! is held.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::centrality::{threshold_flags, ThetaFormula};
use crate::error::{Error, Result};
use crate::ingest::csv_error;
use crate::model::SectorId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitStringPair {
    pub sectors: Vec<SectorId>,
    pub evc_bits: Vec<bool>,
    pub pwt_bits: Vec<bool>,
    pub n_pct: f64,
    pub theta_e: f64,
    pub theta_p: f64,
    pub theta_formula: ThetaFormula,
    pub warnings: Vec<String>,
}

impl BitStringPair {
    pub fn distance(&self) -> f64 {
        // lengths agree by construction
        hamming_distance(&self.evc_bits, &self.pwt_bits).unwrap_or(f64::NAN)
    }
}

pub fn make_bitstrings(
    sectors: &[SectorId],
    x: &[f64],
    w: &[f64],
    n_pct: f64,
    formula: ThetaFormula,
) -> Result<BitStringPair> {
    if x.len() != w.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: w.len(),
        });
    }
    if sectors.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: sectors.len(),
            right: x.len(),
        });
    }
    let evc = threshold_flags(x, n_pct, formula)?;
    let pwt = threshold_flags(w, n_pct, formula)?;
    let mut warnings = Vec::new();
    if evc.degenerate {
        warnings.push("centrality vector has no dispersion; EVC string is all zeros".to_string());
    }
    if pwt.degenerate {
        warnings.push("weight vector has no dispersion; PWT string is all zeros".to_string());
    }
    Ok(BitStringPair {
        sectors: sectors.to_vec(),
        evc_bits: evc.flags,
        pwt_bits: pwt.flags,
        n_pct,
        theta_e: evc.theta,
        theta_p: pwt.theta,
        theta_formula: formula,
        warnings,
    })
}

/// Number of positions where the strings differ.
pub fn hamming_count(a: &[bool], b: &[bool]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).filter(|(p, q)| p != q).count())
}

/// Hamming distance divided by the string length.
pub fn hamming_distance(a: &[bool], b: &[bool]) -> Result<f64> {
    let count = hamming_count(a, b)?;
    if a.is_empty() {
        return Err(Error::EmptyInput("hamming distance of empty strings"));
    }
    Ok(count as f64 / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HammingNorm {
    /// Divide by N.
    #[default]
    Normalized,
    /// Raw count of differing positions.
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: f64,
    #[serde(rename = "D")]
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub points: Vec<SweepPoint>,
    pub norm: HammingNorm,
    /// Smallest `n` attaining the largest `D`.
    pub argmax_n: f64,
    pub max_d: f64,
}

pub fn sweep_n(
    sectors: &[SectorId],
    x: &[f64],
    w: &[f64],
    n_values: &[f64],
    formula: ThetaFormula,
    norm: HammingNorm,
) -> Result<Sweep> {
    if n_values.is_empty() {
        return Err(Error::EmptyInput("sweep needs at least one n value"));
    }
    let mut points = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let pair = make_bitstrings(sectors, x, w, n, formula)?;
        let d = match norm {
            HammingNorm::Normalized => hamming_distance(&pair.evc_bits, &pair.pwt_bits)?,
            HammingNorm::Count => hamming_count(&pair.evc_bits, &pair.pwt_bits)? as f64,
        };
        points.push(SweepPoint { n, d });
    }
    let best = points
        .iter()
        .copied()
        .reduce(|best, p| if p.d > best.d || (p.d == best.d && p.n < best.n) { p } else { best })
        .expect("non-empty");
    Ok(Sweep {
        points,
        norm,
        argmax_n: best.n,
        max_d: best.d,
    })
}

pub fn write_sweep_csv<W: Write>(sweep: &Sweep, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "D"]).map_err(csv_error)?;
    for p in &sweep.points {
        w.write_record([format!("{:?}", p.n), format!("{:?}", p.d)]).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))
}
