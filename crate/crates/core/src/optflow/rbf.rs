//! Gaussian RBF densification of sparse motion vectors.
//!
//! Each component is interpolated with
//! `s(p) = c + Σ w_i exp(-(|p - p_i| / ε)²)` subject to `Σ w_i = 0`,
//! a constant polynomial tail that makes a single site (or identical data)
//! yield a constant field.

use nalgebra::{DMatrix, DVector};

use super::{FlowField, FlowParams, RbfWidth, SparseFlow};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RbfModel {
    sites: Vec<(f64, f64)>,
    epsilon: f64,
    weights_u: Vec<f64>,
    weights_v: Vec<f64>,
    const_u: f64,
    const_v: f64,
}

pub fn median_pairwise_distance(sites: &[(f64, f64)]) -> Option<f64> {
    let mut d = Vec::with_capacity(sites.len() * sites.len().saturating_sub(1) / 2);
    for (i, a) in sites.iter().enumerate() {
        for b in &sites[i + 1..] {
            d.push(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt());
        }
    }
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    Some(if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    })
}

#[inline]
fn kernel(r2: f64, eps: f64) -> f64 {
    (-r2 / (eps * eps)).exp()
}

impl RbfModel {
    pub fn fit(sparse: &SparseFlow, params: &FlowParams) -> Result<Self> {
        let n = sparse.entries.len();
        if n == 0 {
            return Err(Error::EmptySparse);
        }
        let sites: Vec<(f64, f64)> = sparse.entries.iter().map(|e| (e.x, e.y)).collect();
        let epsilon = match params.rbf_width {
            RbfWidth::MedianPairwise => median_pairwise_distance(&sites)
                .filter(|&d| d > 0.0)
                .unwrap_or(1.0),
            RbfWidth::Fixed(e) => e,
        };

        // [K + ridge I, 1; 1ᵀ, 0]
        let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                let r2 = (sites[i].0 - sites[j].0).powi(2) + (sites[i].1 - sites[j].1).powi(2);
                a[(i, j)] = kernel(r2, epsilon);
            }
            a[(i, i)] += params.rbf_ridge;
            a[(i, n)] = 1.0;
            a[(n, i)] = 1.0;
        }
        let lu = a.lu();

        // Centre the data; the constant term absorbs the mean, and identical
        // vectors then give exactly zero weights.
        let solve = |vals: Vec<f64>| -> Result<(Vec<f64>, f64)> {
            let mean = vals.iter().sum::<f64>() / n as f64;
            let mut rhs = DVector::<f64>::zeros(n + 1);
            for (i, v) in vals.iter().enumerate() {
                rhs[i] = v - mean;
            }
            let sol = lu.solve(&rhs).ok_or(Error::SingularSystem)?;
            if sol.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularSystem);
            }
            Ok((sol.as_slice()[..n].to_vec(), sol[n] + mean))
        };
        let (weights_u, const_u) = solve(sparse.entries.iter().map(|e| e.u).collect())?;
        let (weights_v, const_v) = solve(sparse.entries.iter().map(|e| e.v).collect())?;
        Ok(RbfModel {
            sites,
            epsilon,
            weights_u,
            weights_v,
            const_u,
            const_v,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let (mut u, mut v) = (self.const_u, self.const_v);
        for (i, &(sx, sy)) in self.sites.iter().enumerate() {
            let k = kernel((x - sx).powi(2) + (y - sy).powi(2), self.epsilon);
            u += self.weights_u[i] * k;
            v += self.weights_v[i] * k;
        }
        (u, v)
    }
}

pub fn rbf_interpolate(
    sparse: &SparseFlow,
    height: usize,
    width: usize,
    params: &FlowParams,
) -> Result<FlowField> {
    let model = RbfModel::fit(sparse, params)?;
    let mut u = Vec::with_capacity(height * width);
    let mut v = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let (a, b) = model.eval(c as f64, r as f64);
            u.push(a);
            v.push(b);
        }
    }
    FlowField::new(height, width, u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optflow::FlowVector;

    fn sparse(entries: &[(f64, f64, f64, f64)]) -> SparseFlow {
        SparseFlow {
            entries: entries
                .iter()
                .enumerate()
                .map(|(i, &(x, y, u, v))| FlowVector {
                    feature: i,
                    x,
                    y,
                    u,
                    v,
                })
                .collect(),
            rejected_count: 0,
        }
    }

    /// Plain Gaussian elimination with partial pivoting on the augmented
    /// system, written independently of the nalgebra path.
    fn oracle_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
            x[row] = (b[row] - s) / a[row][row];
        }
        x
    }

    #[test]
    fn single_feature_gives_constant_field() {
        let s = sparse(&[(5.0, 7.0, 1.25, -0.5)]);
        let f = rbf_interpolate(&s, 6, 9, &FlowParams::default()).unwrap();
        assert!(f.u.iter().all(|&u| u == 1.25));
        assert!(f.v.iter().all(|&v| v == -0.5));
    }

    #[test]
    fn shared_vector_gives_constant_field() {
        let pts = [
            (3.0, 4.0),
            (20.0, 5.0),
            (11.0, 17.0),
            (25.0, 25.0),
            (2.0, 28.0),
        ];
        let entries: Vec<_> = pts.iter().map(|&(x, y)| (x, y, 3.0, -1.0)).collect();
        let s = sparse(&entries);
        let params = FlowParams::default();
        let f = rbf_interpolate(&s, 30, 30, &params).unwrap();
        assert!(f.u.iter().all(|&u| (u - 3.0).abs() < 1e-6));
        assert!(f.v.iter().all(|&v| (v + 1.0).abs() < 1e-6));

        // oracle: the uncentred augmented system gives w = 0, c = 3
        let eps = median_pairwise_distance(&pts).unwrap();
        let n = pts.len();
        let mut a = vec![vec![0.0; n + 1]; n + 1];
        for i in 0..n {
            for j in 0..n {
                let r2 = (pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2);
                a[i][j] = (-r2 / (eps * eps)).exp();
            }
            a[i][i] += params.rbf_ridge;
            a[i][n] = 1.0;
            a[n][i] = 1.0;
        }
        let mut rhs = vec![3.0; n];
        rhs.push(0.0);
        let sol = oracle_solve(a, rhs);
        assert!(sol[..n].iter().all(|w| w.abs() < 1e-6));
        assert!((sol[n] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn reproduces_data_at_sites() {
        let s = sparse(&[
            (3.0, 4.0, 1.0, 0.0),
            (20.0, 5.0, 2.0, 0.5),
            (11.0, 17.0, -1.0, 1.0),
            (25.0, 25.0, 0.5, -2.0),
            (2.0, 28.0, 0.0, 0.3),
            (14.0, 9.0, 1.5, 1.5),
        ]);
        let model = RbfModel::fit(&s, &FlowParams::default()).unwrap();
        for e in &s.entries {
            let (u, v) = model.eval(e.x, e.y);
            assert!(
                (u - e.u).abs() < 1e-4 && (v - e.v).abs() < 1e-4,
                "{e:?} -> {u} {v}"
            );
        }
    }

    #[test]
    fn empty_sparse_is_an_error() {
        assert!(matches!(
            rbf_interpolate(&sparse(&[]), 4, 4, &FlowParams::default()),
            Err(Error::EmptySparse)
        ));
    }

    #[test]
    fn median_distance() {
        assert_eq!(median_pairwise_distance(&[(0.0, 0.0)]), None);
        let m = median_pairwise_distance(&[(0.0, 0.0), (3.0, 0.0), (0.0, 4.0)]).unwrap();
        assert_eq!(m, 4.0);
    }
}
