use std::collections::HashMap;
use std::hash::Hash;
use std::sync::Arc;

use super::RegressError;

#[derive(Debug, PartialEq)]
struct Layout {
    n: usize,
    label: Vec<usize>,
    blocks: Vec<Vec<usize>>,
}

/// Partition of observations into clusters. Cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct Clusters {
    inner: Arc<Layout>,
}

impl Clusters {
    /// Clusters from arbitrary per-observation labels. Cluster order follows
    /// first appearance; members keep their observation order.
    pub fn from_labels<T: Hash + Eq>(labels: &[T]) -> Self {
        let mut index: HashMap<&T, usize> = HashMap::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut label = Vec::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            let id = *index.entry(l).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[id].push(i);
            label.push(id);
        }
        Self {
            inner: Arc::new(Layout {
                n: labels.len(),
                label,
                blocks,
            }),
        }
    }

    /// Every observation in its own cluster.
    pub fn singletons(n: usize) -> Self {
        Self::from_labels(&(0..n).collect::<Vec<_>>())
    }

    pub fn n_obs(&self) -> usize {
        self.inner.n
    }

    pub fn n_clusters(&self) -> usize {
        self.inner.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.inner.blocks
    }

    /// Dense cluster id per observation.
    pub fn labels(&self) -> &[usize] {
        &self.inner.label
    }

    pub fn max_size(&self) -> usize {
        self.inner.blocks.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// True when at least one cluster has two or more members.
    pub fn has_correlation(&self) -> bool {
        self.max_size() >= 2
    }

    /// Restriction to a subset of observations, renumbered in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let labels: Vec<usize> = rows.iter().map(|&i| self.inner.label[i]).collect();
        Self::from_labels(&labels)
    }

    /// Search interval for the compound-symmetric correlation, inset from the
    /// positive-definite boundary `(-1/(m-1), 1)`.
    pub fn rho_bounds(&self) -> (f64, f64) {
        let m = self.max_size();
        let lower = if m >= 2 { -1.0 / (m as f64 - 1.0) } else { -1.0 };
        (lower + 1e-4, 1.0 - 1e-4)
    }
}

/// Compound-symmetric correlation within clusters, independence across them.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCorrelation {
    clusters: Clusters,
    rho: f64,
}

impl ClusterCorrelation {
    pub fn new(clusters: Clusters, rho: f64) -> Result<Self, RegressError> {
        let m = clusters.max_size();
        let lower = if m >= 2 { -1.0 / (m as f64 - 1.0) } else { -1.0 };
        if !(rho > lower && rho < 1.0) {
            return Err(RegressError::InvalidCorrelation { rho, lower });
        }
        Ok(Self { clusters, rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn clusters(&self) -> &Clusters {
        &self.clusters
    }

    pub fn cholesky(&self) -> CholFactor {
        CholFactor::new(&self.clusters, self.rho)
    }
}

/// Lower Cholesky factor of one compound-symmetric block.
///
/// Every entry below the diagonal in column `j` equals `off[j]`, so the block
/// is stored in O(m).
#[derive(Debug, Clone, PartialEq)]
struct BlockFactor {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl BlockFactor {
    fn new(m: usize, rho: f64) -> Self {
        let mut diag = Vec::with_capacity(m);
        let mut off = Vec::with_capacity(m);
        let mut acc: f64 = 0.0;
        for _ in 0..m {
            let d = (1.0 - acc).sqrt();
            let c = (rho - acc) / d;
            diag.push(d);
            off.push(c);
            acc += c * c;
        }
        Self { diag, off }
    }
}

/// Block-diagonal Cholesky factor `C(rho)` with `Sigma(rho) = C C^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    clusters: Clusters,
    rho: f64,
    // indexed by block size
    factors: Vec<Option<BlockFactor>>,
    log_det: f64,
}

impl CholFactor {
    pub fn new(clusters: &Clusters, rho: f64) -> Self {
        let mut factors: Vec<Option<BlockFactor>> = vec![None; clusters.max_size() + 1];
        let mut log_det = 0.0;
        for b in clusters.blocks() {
            let m = b.len();
            let f = factors[m].get_or_insert_with(|| BlockFactor::new(m, rho));
            log_det += f.diag.iter().map(|d| d.ln()).sum::<f64>();
        }
        Self {
            clusters: clusters.clone(),
            rho,
            factors,
            log_det,
        }
    }

    /// Identity factor over `n` independent observations.
    pub fn identity(n: usize) -> Self {
        Self::new(&Clusters::singletons(n), 0.0)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn clusters(&self) -> &Clusters {
        &self.clusters
    }

    pub fn n_obs(&self) -> usize {
        self.clusters.n_obs()
    }

    /// `log |C(rho)|`, half the log-determinant of `Sigma(rho)`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `C^{-1} v` by block forward substitution.
    pub fn whiten(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_obs());
        let mut out = vec![0.0; v.len()];
        for b in self.clusters.blocks() {
            let f = self.factors[b.len()].as_ref().expect("factor for block size");
            let mut acc = 0.0;
            for (j, &i) in b.iter().enumerate() {
                let z = (v[i] - acc) / f.diag[j];
                out[i] = z;
                acc += f.off[j] * z;
            }
        }
        out
    }

    /// `C v`.
    pub fn unwhiten(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_obs());
        let mut out = vec![0.0; v.len()];
        for b in self.clusters.blocks() {
            let f = self.factors[b.len()].as_ref().expect("factor for block size");
            let mut acc = 0.0;
            for (j, &i) in b.iter().enumerate() {
                out[i] = acc + f.diag[j] * v[i];
                acc += f.off[j] * v[i];
            }
        }
        out
    }

    /// Dense lower-triangular factor of a block of size `m`, for inspection.
    pub fn block_dense(&self, m: usize) -> Vec<Vec<f64>> {
        let f = BlockFactor::new(m, self.rho);
        (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| match i.cmp(&j) {
                        std::cmp::Ordering::Less => 0.0,
                        std::cmp::Ordering::Equal => f.diag[j],
                        std::cmp::Ordering::Greater => f.off[j],
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_factor_reconstructs_compound_symmetry() {
        for &rho in &[-0.2, 0.0, 0.25, 0.5, 0.9] {
            for m in 1..6 {
                let c = CholFactor::new(&Clusters::singletons(1), rho).block_dense(m);
                for i in 0..m {
                    assert!(c[i][i] > 0.0);
                    for j in 0..m {
                        let s: f64 = (0..m).map(|l| c[i][l] * c[j][l]).sum();
                        let e = if i == j { 1.0 } else { rho };
                        assert!((s - e).abs() < 1e-12, "m={m} rho={rho} ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn whiten_unwhiten_inverse_and_log_det() {
        let clusters = Clusters::from_labels(&["a", "b", "a", "c", "b", "a", "d"]);
        let chol = CholFactor::new(&clusters, 0.4);
        let v = vec![1.0, -2.0, 0.5, 3.0, 0.25, -1.5, 2.0];
        let back = chol.unwhiten(&chol.whiten(&v));
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
        // det of CS block: (1 - rho)^(m-1) (1 + (m-1) rho)
        let det = |m: f64| (0.6f64).powf(m - 1.0) * (1.0 + (m - 1.0) * 0.4);
        let expect = 0.5 * (det(3.0).ln() + det(2.0).ln());
        assert!((chol.log_det() - expect).abs() < 1e-12);
    }

    #[test]
    fn bounds_and_validation() {
        let c = Clusters::from_labels(&[1, 1, 1, 2, 2]);
        let (lo, hi) = c.rho_bounds();
        assert!((lo - (-0.5 + 1e-4)).abs() < 1e-15);
        assert!((hi - (1.0 - 1e-4)).abs() < 1e-15);
        assert!(ClusterCorrelation::new(c.clone(), -0.6).is_err());
        assert!(ClusterCorrelation::new(c, 0.3).is_ok());
    }

    #[test]
    fn identity_is_noop() {
        let chol = CholFactor::identity(4);
        let v = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(chol.whiten(&v), v);
        assert_eq!(chol.log_det(), 0.0);
    }
}
