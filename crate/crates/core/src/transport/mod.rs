//! Distances between histograms.
//!
//! [`emd`] is the exact earth mover's distance over a [`GroundDistance`],
//! [`emd_oracle`] recomputes it with a generic LP solver for small
//! instances, and [`quadratic_chi`] is the cross-bin Quadratic-Chi distance
//! used for the palette-to-image scalar.

mod flow;
mod ground;
mod oracle;
mod qc;

use serde::Serialize;

pub use flow::{min_cost_transport, SolverOptions, TransportSolution};
pub use ground::{GroundDistance, SimilarityMatrix};
pub use oracle::{emd_oracle, transport_lp, ORACLE_MAX_BINS};
pub use qc::{quadratic_chi, DEFAULT_QC_EXPONENT};

use crate::error::{Error, Result};
use crate::histogram::HsvHistogram;
use crate::palette::{palette_to_histogram_with, Palette};

/// Witness for an EMD value: mass moved from source bin to target bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    pub flows: Vec<(usize, usize, f64)>,
    pub total_cost: f64,
}

impl TransportPlan {
    /// Row and column sums of the plan over `n` bins.
    pub fn marginals(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rows = vec![0.0; n];
        let mut cols = vec![0.0; n];
        for &(i, j, f) in &self.flows {
            rows[i] += f;
            cols[j] += f;
        }
        (rows, cols)
    }
}

fn check_shapes(p: &HsvHistogram, q: &HsvHistogram, g: &GroundDistance) -> Result<()> {
    if p.dims() != q.dims() || g.len() != p.len() {
        return Err(Error::DimensionMismatch(format!(
            "histograms over {} and {} bins, ground distance over {}",
            p.len(),
            q.len(),
            g.len()
        )));
    }
    Ok(())
}

/// Exact EMD between normalized histograms, with the optimal plan.
pub fn emd(p: &HsvHistogram, q: &HsvHistogram, g: &GroundDistance) -> Result<(f64, TransportPlan)> {
    emd_with(p, q, g, SolverOptions::default())
}

pub fn emd_with(
    p: &HsvHistogram,
    q: &HsvHistogram,
    g: &GroundDistance,
    options: SolverOptions,
) -> Result<(f64, TransportPlan)> {
    p.require_normalized()?;
    q.require_normalized()?;
    check_shapes(p, q, g)?;
    // Solve in a canonical argument order so that swapping the arguments
    // yields the transposed plan and a bit-identical cost.
    if canonical_order(q, p) {
        let (cost, plan) = solve(q, p, g, options);
        let flows = plan.flows.into_iter().map(|(i, j, f)| (j, i, f)).collect();
        return Ok((
            cost,
            TransportPlan {
                flows,
                total_cost: cost,
            },
        ));
    }
    Ok(solve(p, q, g, options))
}

/// True if `a` sorts strictly before `b` by sparse (bin, mass bits).
fn canonical_order(a: &HsvHistogram, b: &HsvHistogram) -> bool {
    a.nonzero()
        .map(|(i, m)| (i, m.to_bits()))
        .lt(b.nonzero().map(|(i, m)| (i, m.to_bits())))
}

fn solve(p: &HsvHistogram, q: &HsvHistogram, g: &GroundDistance, options: SolverOptions) -> (f64, TransportPlan) {
    let (rows, supply): (Vec<usize>, Vec<f64>) = p.nonzero().unzip();
    let (cols, demand): (Vec<usize>, Vec<f64>) = q.nonzero().unzip();
    let cost = g.submatrix(&rows, &cols);
    let solution = min_cost_transport(&supply, &demand, &cost, options);
    let plan = TransportPlan {
        flows: solution
            .flows
            .into_iter()
            .map(|(i, j, f)| (rows[i], cols[j], f))
            .collect(),
        total_cost: solution.cost,
    };
    (solution.cost, plan)
}

/// Quadratic-Chi distance between a palette's sparse histogram and an image
/// histogram, with similarities `1 − cost` from `g`.
pub fn palette_image_distance(p: &Palette, image_hist: &HsvHistogram, g: &GroundDistance, m: f64) -> Result<f64> {
    let palette_hist = palette_to_histogram_with(image_hist.dims(), p);
    quadratic_chi(&palette_hist, image_hist, &SimilarityMatrix::from_ground(g), m)
}
