//! Learnable parameters and their initialization.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::linalg::Matrix;

/// Named flat views over a set of tensors. Gradients, Adam moments and the
/// finite-difference checker all walk parameters through this trait.
pub trait ParamTensors {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub num_nodes: usize,
    pub dim: usize,
    /// Feature map `F×d`, or a free `num_nodes×d` embedding table when the
    /// graph has no features.
    pub w0: Matrix,
    /// Frozen node features; `None` selects the embedding table.
    pub features: Option<Arc<Matrix>>,
    pub w_self: Vec<Matrix>,
    pub w_neigh: Vec<Matrix>,
    pub delta_t: f64,
    pub theta_d: f64,
    pub theta_l: Vec<f64>,
    pub w_alpha: Matrix,
    pub b_alpha: Vec<f64>,
    pub w_beta: Matrix,
    pub b_beta: Vec<f64>,
    /// Loss weights. Used as-is when fixed; when learnable these hold raw
    /// values and the effective weight is `softplus(raw)`.
    pub eta: [f64; 2],
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Matrix { rows, cols, data }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

impl ModelParams {
    /// Glorot-uniform weights, `δ_t = 1`, `θ_d = 0.1`, `θ_l = 1`, zero FiLM
    /// biases. Deterministic in `seed`.
    pub fn init(
        num_nodes: usize,
        features: Option<Arc<Matrix>>,
        dim: usize,
        layers: usize,
        learn_etas: bool,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || layers == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimension and layer count must be at least 1 (d={dim}, l={layers})"
            )));
        }
        if let Some(f) = &features {
            if f.rows != num_nodes {
                return Err(Error::DimensionMismatch {
                    expected: num_nodes,
                    got: f.rows,
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w0 = match &features {
            Some(f) => glorot(f.cols, dim, &mut rng),
            None => glorot(num_nodes, dim, &mut rng),
        };
        let mut w_self = Vec::with_capacity(layers);
        let mut w_neigh = Vec::with_capacity(layers);
        for _ in 0..layers {
            w_self.push(glorot(dim, dim, &mut rng));
            w_neigh.push(glorot(dim, dim, &mut rng));
        }
        let w_alpha = glorot(2 * dim, dim, &mut rng);
        let w_beta = glorot(2 * dim, dim, &mut rng);
        let eta0 = if learn_etas {
            softplus_inverse(1.0)
        } else {
            1.0
        };
        Ok(Self {
            num_nodes,
            dim,
            w0,
            features,
            w_self,
            w_neigh,
            delta_t: 1.0,
            theta_d: 0.1,
            theta_l: vec![1.0; dim],
            w_alpha,
            b_alpha: vec![0.0; dim],
            w_beta,
            b_beta: vec![0.0; dim],
            eta: [eta0, eta0],
        })
    }

    pub fn layers(&self) -> usize {
        self.w_self.len()
    }

    /// Same shapes, all zeros. Used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn effective_etas(&self, learnable: bool) -> [f64; 2] {
        if learnable {
            [softplus(self.eta[0]), softplus(self.eta[1])]
        } else {
            self.eta
        }
    }

    /// Layer-0 representation: `features[node]·W0`, or the node's table row.
    pub fn base_embedding(&self, node: NodeId) -> Result<Vec<f64>> {
        if node >= self.num_nodes {
            return Err(Error::UnknownNode {
                node,
                num_nodes: self.num_nodes,
            });
        }
        Ok(self.embed(node))
    }

    pub(crate) fn embed(&self, node: NodeId) -> Vec<f64> {
        match &self.features {
            Some(f) => self.w0.vec_mul(f.row(node)),
            None => self.w0.row(node).to_vec(),
        }
    }

    /// Adds `g` (the adjoint of `node`'s base embedding) into `grads.w0`.
    pub(crate) fn accumulate_embedding_grad(
        &self,
        grads: &mut ModelParams,
        node: NodeId,
        g: &[f64],
    ) {
        match &self.features {
            Some(f) => grads.w0.outer_acc(1.0, f.row(node), g),
            None => crate::linalg::axpy(1.0, g, grads.w0.row_mut(node)),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

impl ParamTensors for ModelParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![("w0".into(), &self.w0.data)];
        for (l, w) in self.w_self.iter().enumerate() {
            out.push((format!("w_self.{}", l + 1), &w.data));
        }
        for (l, w) in self.w_neigh.iter().enumerate() {
            out.push((format!("w_neigh.{}", l + 1), &w.data));
        }
        out.push(("delta_t".into(), std::slice::from_ref(&self.delta_t)));
        out.push(("theta_d".into(), std::slice::from_ref(&self.theta_d)));
        out.push(("theta_l".into(), &self.theta_l));
        out.push(("w_alpha".into(), &self.w_alpha.data));
        out.push(("b_alpha".into(), &self.b_alpha));
        out.push(("w_beta".into(), &self.w_beta.data));
        out.push(("b_beta".into(), &self.b_beta));
        out.push(("eta".into(), &self.eta));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = vec![("w0".into(), &mut self.w0.data)];
        for (l, w) in self.w_self.iter_mut().enumerate() {
            out.push((format!("w_self.{}", l + 1), &mut w.data));
        }
        for (l, w) in self.w_neigh.iter_mut().enumerate() {
            out.push((format!("w_neigh.{}", l + 1), &mut w.data));
        }
        out.push(("delta_t".into(), std::slice::from_mut(&mut self.delta_t)));
        out.push(("theta_d".into(), std::slice::from_mut(&mut self.theta_d)));
        out.push(("theta_l".into(), &mut self.theta_l));
        out.push(("w_alpha".into(), &mut self.w_alpha.data));
        out.push(("b_alpha".into(), &mut self.b_alpha));
        out.push(("w_beta".into(), &mut self.w_beta.data));
        out.push(("b_beta".into(), &mut self.b_beta));
        out.push(("eta".into(), &mut self.eta));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let a = ModelParams::init(10, None, 8, 2, false, 1).unwrap();
        let b = ModelParams::init(10, None, 8, 2, false, 1).unwrap();
        let c = ModelParams::init(10, None, 8, 2, false, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.w0, c.w0);
    }

    #[test]
    fn init_shapes_and_defaults() {
        let p = ModelParams::init(5, None, 128, 2, false, 1).unwrap();
        assert_eq!(p.w_self.len(), 2);
        for w in p.w_self.iter().chain(&p.w_neigh) {
            assert_eq!((w.rows, w.cols), (128, 128));
        }
        assert_eq!((p.w0.rows, p.w0.cols), (5, 128));
        assert_eq!((p.w_alpha.rows, p.w_alpha.cols), (256, 128));
        assert_eq!(p.delta_t, 1.0);
        assert_eq!(p.theta_d, 0.1);
        assert!(p.theta_l.iter().all(|&v| v == 1.0));
        assert!(p.b_alpha.iter().chain(&p.b_beta).all(|&v| v == 0.0));
        assert_eq!(p.effective_etas(false), [1.0, 1.0]);
        let bound = (6.0f64 / 256.0).sqrt();
        assert!(p.w_self[0].data.iter().all(|v| v.abs() <= bound));
        assert!(ModelParams::init(5, None, 0, 2, false, 1).is_err());
        assert!(ModelParams::init(5, None, 4, 0, false, 1).is_err());
    }

    #[test]
    fn learnable_etas_start_at_one() {
        let p = ModelParams::init(3, None, 4, 1, true, 0).unwrap();
        let e = p.effective_etas(true);
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn base_embedding_from_identity_features() {
        let feats = Arc::new(Matrix::identity(3));
        let mut p = ModelParams::init(3, Some(feats), 3, 1, false, 0).unwrap();
        p.w0 = Matrix::identity(3);
        assert_eq!(p.base_embedding(1).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(p.base_embedding(3).is_err());
    }

    #[test]
    fn base_embedding_zero_feature_is_zero() {
        let feats = Arc::new(Matrix::zeros(2, 4));
        let p = ModelParams::init(2, Some(feats), 3, 1, false, 0).unwrap();
        assert_eq!(p.base_embedding(0).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn base_embedding_matches_dense_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = 16;
        let d = 5;
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let feats = Arc::new(Matrix::from_rows(&rows));
        let p = ModelParams::init(4, Some(feats), d, 1, false, 3).unwrap();
        for (node, x) in rows.iter().enumerate() {
            let got = p.base_embedding(node).unwrap();
            for j in 0..d {
                let mut expect = 0.0;
                for k in 0..f {
                    expect += x[k] * p.w0.data[k * d + j];
                }
                assert!((got[j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tensor_views_cover_everything() {
        let p = ModelParams::init(3, None, 2, 2, false, 0).unwrap();
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            [
                "w0",
                "w_self.1",
                "w_self.2",
                "w_neigh.1",
                "w_neigh.2",
                "delta_t",
                "theta_d",
                "theta_l",
                "w_alpha",
                "b_alpha",
                "w_beta",
                "b_beta",
                "eta"
            ]
        );
        assert_eq!(p.num_scalars(), 6 + 4 * 4 + 2 + 2 + 8 + 2 + 8 + 2 + 2);
    }
}
