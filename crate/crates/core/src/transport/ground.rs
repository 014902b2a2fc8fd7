use std::sync::Arc;

use rayon::prelude::*;

use crate::colorspace::{thresholded_distance, ColorLab, DistanceParams};
use crate::error::{Error, Result};
use crate::histogram::Dims;

/// Bin-to-bin cost in `[0, 1]` from clipped CIEDE2000 between bin centers.
///
/// Costs are computed on demand from cached bin-center Lab colors unless the
/// matrix has been materialized. Both forms give bit-identical costs.
#[derive(Debug, Clone)]
pub struct GroundDistance {
    params: Option<DistanceParams>,
    storage: Storage,
}

#[derive(Debug, Clone)]
enum Storage {
    Lazy { centers: Arc<Vec<ColorLab>> },
    Dense { n: usize, cost: Arc<Vec<f64>> },
}

impl GroundDistance {
    pub fn new(params: DistanceParams, dims: Dims) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params: Some(params),
            storage: Storage::Lazy {
                centers: Arc::new(dims.centers_lab()),
            },
        })
    }

    /// Ground distance over the standard `34 × 12 × 10` grid.
    pub fn standard(params: DistanceParams) -> Result<Self> {
        Self::new(params, Dims::STANDARD)
    }

    /// Ground distance over arbitrary Lab points (e.g. pixel colors).
    pub fn over_points(params: DistanceParams, points: Vec<ColorLab>) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params: Some(params),
            storage: Storage::Lazy {
                centers: Arc::new(points),
            },
        })
    }

    /// An explicit row-major `n × n` cost matrix. It must be symmetric with a
    /// zero diagonal and entries in `[0, 1]`.
    pub fn from_matrix(n: usize, cost: Vec<f64>) -> Result<Self> {
        if cost.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {n}x{n} cost matrix",
                cost.len()
            )));
        }
        for i in 0..n {
            if cost[i * n + i] != 0.0 {
                return Err(Error::InvalidParameter(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let c = cost[i * n + j];
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::InvalidParameter(format!("cost {c} at ({i},{j}) outside [0,1]")));
                }
                if c != cost[j * n + i] {
                    return Err(Error::InvalidParameter(format!("asymmetric cost at ({i},{j})")));
                }
            }
        }
        Ok(Self {
            params: None,
            storage: Storage::Dense {
                n,
                cost: Arc::new(cost),
            },
        })
    }

    /// Precomputes the full matrix (in parallel). For the standard grid this
    /// is 4080² doubles, about 133 MB.
    pub fn materialize(&self) -> Self {
        match &self.storage {
            Storage::Dense { .. } => self.clone(),
            Storage::Lazy { .. } => {
                let n = self.len();
                let mut cost = vec![0.0; n * n];
                cost.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                    for (j, c) in row.iter_mut().enumerate() {
                        *c = self.cost(i, j);
                    }
                });
                Self {
                    params: self.params,
                    storage: Storage::Dense {
                        n,
                        cost: Arc::new(cost),
                    },
                }
            }
        }
    }

    pub fn params(&self) -> Option<&DistanceParams> {
        self.params.as_ref()
    }

    pub fn len(&self) -> usize {
        match &self.storage {
            Storage::Lazy { centers } => centers.len(),
            Storage::Dense { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cost(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense { n, cost } => cost[i * n + j],
            Storage::Lazy { centers } => {
                if i == j {
                    return 0.0;
                }
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                let params = self.params.as_ref().expect("lazy ground distance carries params");
                thresholded_distance(centers[a], centers[b], params)
            }
        }
    }

    /// Row-major `rows.len() × cols.len()` block of the cost matrix.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; rows.len() * cols.len()];
        if out.is_empty() {
            return out;
        }
        out.par_chunks_mut(cols.len())
            .zip(rows.par_iter())
            .for_each(|(row, &i)| {
                for (c, &j) in row.iter_mut().zip(cols) {
                    *c = self.cost(i, j);
                }
            });
        out
    }
}

/// Bin similarities for the Quadratic-Chi distance.
#[derive(Debug, Clone)]
pub enum SimilarityMatrix {
    /// `A_ij = 1 − cost_ij`.
    FromGround(GroundDistance),
    /// Explicit row-major `n × n` similarities.
    Dense { n: usize, a: Vec<f64> },
    /// `A = I`, which reduces Quadratic-Chi to a weighted Euclidean norm.
    Identity(usize),
}

impl SimilarityMatrix {
    pub fn from_ground(g: &GroundDistance) -> Self {
        Self::FromGround(g.clone())
    }

    pub fn from_matrix(n: usize, a: Vec<f64>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {n}x{n} similarity matrix",
                a.len()
            )));
        }
        Ok(Self::Dense { n, a })
    }

    pub fn identity(n: usize) -> Self {
        Self::Identity(n)
    }

    pub fn len(&self) -> usize {
        match self {
            Self::FromGround(g) => g.len(),
            Self::Dense { n, .. } | Self::Identity(n) => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::FromGround(g) => 1.0 - g.cost(i, j),
            Self::Dense { n, a } => a[i * n + j],
            Self::Identity(_) => f64::from(u8::from(i == j)),
        }
    }

    pub fn submatrix(&self, idx: &[usize]) -> Vec<f64> {
        match self {
            Self::FromGround(g) => g.submatrix(idx, idx).into_iter().map(|c| 1.0 - c).collect(),
            Self::Dense { .. } | Self::Identity(_) => idx
                .iter()
                .flat_map(|&i| idx.iter().map(move |&j| (i, j)))
                .map(|(i, j)| self.get(i, j))
                .collect(),
        }
    }
}
