//! Reference transport cost from a general-purpose LP solver.
//!
//! This path shares nothing with the min-cost-flow solver except the cost
//! matrix, so the two can check each other.

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};

use crate::error::{Error, Result};
use crate::histogram::HsvHistogram;
use crate::transport::GroundDistance;

/// Largest combined support (nonzero bins of both histograms) the oracle accepts.
pub const ORACLE_MAX_BINS: usize = 64;

/// Optimal transport cost between `supply` and `demand` under the row-major
/// cost matrix, solved as a dense LP.
pub fn transport_lp(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<f64> {
    let (ns, nt) = (supply.len(), demand.len());
    if cost.len() != ns * nt {
        return Err(Error::DimensionMismatch("cost matrix shape".into()));
    }
    if ns == 0 || nt == 0 {
        return Ok(0.0);
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = cost.iter().map(|&c| lp.add_var(c, (0.0, f64::INFINITY))).collect();
    for (i, &s) in supply.iter().enumerate() {
        let mut row = LinearExpr::empty();
        for j in 0..nt {
            row.add(vars[i * nt + j], 1.0);
        }
        lp.add_constraint(row, ComparisonOp::Eq, s);
    }
    // the last demand constraint is implied by the others (balanced totals)
    for (j, &d) in demand.iter().enumerate().take(nt - 1) {
        let mut col = LinearExpr::empty();
        for i in 0..ns {
            col.add(vars[i * nt + j], 1.0);
        }
        lp.add_constraint(col, ComparisonOp::Eq, d);
    }
    let solution = lp.solve().map_err(|e| Error::Oracle(e.to_string()))?;
    Ok(solution.objective())
}

/// EMD between two normalized histograms via [`transport_lp`].
pub fn emd_oracle(p: &HsvHistogram, q: &HsvHistogram, g: &GroundDistance) -> Result<f64> {
    p.require_normalized()?;
    q.require_normalized()?;
    let (rows, supply): (Vec<usize>, Vec<f64>) = p.nonzero().unzip();
    let (cols, demand): (Vec<usize>, Vec<f64>) = q.nonzero().unzip();
    let bins = rows.len() + cols.len();
    if bins > ORACLE_MAX_BINS {
        return Err(Error::OracleTooLarge(bins, ORACLE_MAX_BINS));
    }
    if g.len() != p.len() || g.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "ground distance over {} bins, histograms over {} and {}",
            g.len(),
            p.len(),
            q.len()
        )));
    }
    transport_lp(&supply, &demand, &g.submatrix(&rows, &cols))
}
