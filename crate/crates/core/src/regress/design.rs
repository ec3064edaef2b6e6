use crate::linalg::Matrix;

use super::RegressError;

/// How the group columns of a design were coded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    /// 0/1 dummies, at most one 1 per row.
    Indicator,
    /// Group-membership probabilities.
    Probability,
}

/// Intercept column followed by `k - 1` group columns.
///
/// The omitted (reference) group gets the remaining probability mass
/// `1 - sum_j x_ji`, which must itself lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: Matrix,
    labels: Vec<String>,
    kind: DesignKind,
}

const MASS_TOL: f64 = 1e-9;

impl DesignMatrix {
    /// Builds the design from per-row group entries (without the intercept).
    /// `labels` names the reference group first, then one label per group column.
    pub fn new(group_rows: &[Vec<f64>], labels: Vec<String>) -> Result<Self, RegressError> {
        let n = group_rows.len();
        let groups = labels.len().saturating_sub(1);
        if groups == 0 {
            return Err(RegressError::InvalidDesign(
                "need a reference label and at least one group column".into(),
            ));
        }
        let p = groups + 1;
        if n <= p {
            return Err(RegressError::InvalidDesign(format!(
                "{n} observations for {p} design columns"
            )));
        }
        let mut data = Vec::with_capacity(n * p);
        let mut indicator = true;
        for (i, row) in group_rows.iter().enumerate() {
            if row.len() != groups {
                return Err(RegressError::InvalidDesign(format!(
                    "row {i} has {} group entries, expected {groups}",
                    row.len()
                )));
            }
            let mut mass = 0.0;
            for &v in row {
                if !(-MASS_TOL..=1.0 + MASS_TOL).contains(&v) || v.is_nan() {
                    return Err(RegressError::InvalidDesign(format!(
                        "row {i} has group entry {v} outside [0, 1]"
                    )));
                }
                if v != 0.0 && v != 1.0 {
                    indicator = false;
                }
                mass += v;
            }
            if mass > 1.0 + MASS_TOL {
                return Err(RegressError::InvalidDesign(format!(
                    "row {i} group probabilities sum to {mass} > 1"
                )));
            }
            data.push(1.0);
            data.extend_from_slice(row);
        }
        Ok(Self {
            x: Matrix::from_row_major(n, p, data),
            labels,
            kind: if indicator {
                DesignKind::Indicator
            } else {
                DesignKind::Probability
            },
        })
    }

    /// Indicator design from 0-based group labels in `0..k`; group 0 is the reference.
    pub fn from_groups(groups: &[usize], k: usize) -> Result<Self, RegressError> {
        let rows: Vec<Vec<f64>> = groups
            .iter()
            .map(|&g| (1..k).map(|j| if g == j { 1.0 } else { 0.0 }).collect())
            .collect();
        if let Some(&bad) = groups.iter().find(|&&g| g >= k) {
            return Err(RegressError::InvalidDesign(format!(
                "group label {bad} not below k = {k}"
            )));
        }
        Self::new(&rows, (0..k).map(|j| format!("g{j}")).collect())
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    /// Number of groups, `ncols()`.
    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn matrix(&self) -> &Matrix {
        &self.x
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.x.row(i)
    }

    /// Group labels: the reference group, then one per group column.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Column names, `intercept` first.
    pub fn column_labels(&self) -> Vec<String> {
        std::iter::once("intercept".to_string())
            .chain(self.labels[1..].iter().cloned())
            .collect()
    }

    /// For indicator designs, the group of row `i` (0 = reference).
    pub fn group_of(&self, i: usize) -> Option<usize> {
        if self.kind != DesignKind::Indicator {
            return None;
        }
        let row = self.x.row(i);
        Some(row[1..].iter().position(|&v| v == 1.0).map_or(0, |j| j + 1))
    }

    /// Group index per row for indicator designs.
    pub fn groups(&self) -> Option<Vec<usize>> {
        (0..self.nrows()).map(|i| self.group_of(i)).collect()
    }

    /// Restriction to the given rows.
    pub fn subset(&self, rows: &[usize]) -> Result<Self, RegressError> {
        let group_rows: Vec<Vec<f64>> = rows.iter().map(|&i| self.x.row(i)[1..].to_vec()).collect();
        Self::new(&group_rows, self.labels.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_row_layout() {
        // genotype probabilities (p0, p1, p2) = (0.25, 0.42, 0.33)
        let d = DesignMatrix::new(
            &[vec![0.42, 0.33], vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            vec!["0".into(), "1".into(), "2".into()],
        )
        .unwrap();
        assert_eq!(d.row(0), &[1.0, 0.42, 0.33]);
        assert_eq!(d.kind(), DesignKind::Probability);
        assert_eq!(d.column_labels(), vec!["intercept", "1", "2"]);
    }

    #[test]
    fn indicator_groups_round_trip() {
        let g = vec![0, 1, 2, 2, 1, 0];
        let d = DesignMatrix::from_groups(&g, 3).unwrap();
        assert_eq!(d.kind(), DesignKind::Indicator);
        assert_eq!(d.groups().unwrap(), g);
    }

    #[test]
    fn rejects_bad_rows() {
        let labels = vec!["a".to_string(), "b".into(), "c".into()];
        let too_much = vec![vec![0.7, 0.6]; 5];
        assert!(DesignMatrix::new(&too_much, labels.clone()).is_err());
        let negative = vec![vec![-0.2, 0.6]; 5];
        assert!(DesignMatrix::new(&negative, labels.clone()).is_err());
        let short = vec![vec![0.2, 0.6]; 3];
        assert!(DesignMatrix::new(&short, labels).is_err());
    }
}
