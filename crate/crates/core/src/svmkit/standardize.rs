use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column means and population standard deviations of a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl StandardizationStats {
    pub fn dimension(&self) -> usize {
        self.means.len()
    }

    /// z-scores of one row. Columns with zero spread map to 0.
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }
}

pub fn standardize_fit(rows: &[Vec<f64>]) -> Result<StandardizationStats> {
    if rows.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "standardization needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let d = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != d) {
        return Err(Error::InvalidFeature(format!("row {bad} has length {} not {d}", rows[bad].len())));
    }
    let n = rows.len() as f64;
    let mut means = vec![0.0; d];
    for r in rows {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut sds = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in sds.iter_mut().zip(r).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    sds.iter_mut().for_each(|s| *s = (*s / n).sqrt());
    Ok(StandardizationStats { means, sds })
}

pub fn standardize_apply(rows: &[Vec<f64>], stats: &StandardizationStats) -> Vec<Vec<f64>> {
    rows.iter().map(|r| stats.apply(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_column() {
        let rows = vec![vec![1.0], vec![2.0], vec![3.0]];
        let s = standardize_fit(&rows).unwrap();
        assert_eq!(s.means, vec![2.0]);
        assert!((s.sds[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let z = standardize_apply(&rows, &s);
        assert!((z[0][0] + 1.224744871391589).abs() < 1e-12);
        assert_eq!(z[1][0], 0.0);
        assert!((z[2][0] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let rows = vec![vec![5.0, 1.0], vec![5.0, 2.0]];
        let s = standardize_fit(&rows).unwrap();
        assert!(standardize_apply(&rows, &s).iter().all(|r| r[0] == 0.0));
    }

    #[test]
    fn needs_two_rows() {
        assert!(standardize_fit(&[vec![1.0]]).is_err());
    }
}
