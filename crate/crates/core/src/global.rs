//! Global representation and the FiLM-modulated global parameter.
//!
//! Gates are scalars broadcast over dimensions: `θ_d·|N_x|` when a node
//! writes into `z_g`, `θ_d / |N_x|` when it reads from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, sigmoid, Matrix};
use crate::params::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalState {
    pub z_g: Vec<f64>,
}

impl GlobalState {
    /// Starts empty: the zero vector.
    pub fn new(dim: usize) -> Self {
        Self {
            z_g: vec![0.0; dim],
        }
    }
}

fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// `z_g += (θ_d·dynamics)·z_x`
pub fn update_global(
    g: &mut GlobalState,
    z_x: &[f64],
    theta_d: f64,
    dynamics: usize,
) -> Result<()> {
    if dynamics == 0 {
        return Err(Error::InvalidArgument(
            "node dynamics must be at least 1".into(),
        ));
    }
    if z_x.len() != g.z_g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.z_g.len(),
            got: z_x.len(),
        });
    }
    check_finite("node representation", z_x)?;
    if !theta_d.is_finite() {
        return Err(Error::NonFinite("theta_d".into()));
    }
    axpy(theta_d * dynamics as f64, z_x, &mut g.z_g);
    Ok(())
}

/// `z_x + (θ_d / dynamics)·z_g`
pub fn enhance_node(
    z_x: &[f64],
    g: &GlobalState,
    theta_d: f64,
    dynamics: usize,
) -> Result<Vec<f64>> {
    if dynamics == 0 {
        return Err(Error::InvalidArgument(
            "node dynamics must be at least 1".into(),
        ));
    }
    if z_x.len() != g.z_g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.z_g.len(),
            got: z_x.len(),
        });
    }
    let mut out = z_x.to_vec();
    axpy(theta_d / dynamics as f64, &g.z_g, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilmOutput {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub omega_g: Vec<f64>,
}

/// `α = σ((z_x‖z_y)·W_α + b_α)`, `β` likewise, `ω_g = (α + 1)⊙θ_l + β`.
pub fn film_modulation(z_x: &[f64], z_y: &[f64], params: &ModelParams) -> Result<FilmOutput> {
    let d = params.dim;
    for z in [z_x, z_y] {
        if z.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: z.len(),
            });
        }
    }
    let mut input = Vec::with_capacity(2 * d);
    input.extend_from_slice(z_x);
    input.extend_from_slice(z_y);
    let gate = |w: &Matrix, b: &[f64]| -> Vec<f64> {
        let mut pre = b.to_vec();
        w.vec_mul_acc(&input, &mut pre);
        pre.into_iter().map(sigmoid).collect()
    };
    let alpha = gate(&params.w_alpha, &params.b_alpha);
    let beta = gate(&params.w_beta, &params.b_beta);
    let omega_g = alpha
        .iter()
        .zip(&beta)
        .zip(&params.theta_l)
        .map(|((a, b), th)| (a + 1.0) * th + b)
        .collect();
    Ok(FilmOutput {
        alpha,
        beta,
        omega_g,
    })
}

/// Backward through FiLM. `g_alpha`/`g_beta` are the adjoints of the
/// sigmoid outputs (the `ω_g` path already folded in). Returns the adjoints
/// of `z_x` and `z_y`.
pub(crate) fn film_backward(
    z_x: &[f64],
    z_y: &[f64],
    out: &FilmOutput,
    g_alpha: &[f64],
    g_beta: &[f64],
    params: &ModelParams,
    grads: &mut ModelParams,
) -> (Vec<f64>, Vec<f64>) {
    let d = params.dim;
    let mut input = Vec::with_capacity(2 * d);
    input.extend_from_slice(z_x);
    input.extend_from_slice(z_y);
    let mut g_in = vec![0.0; 2 * d];
    for (gate, g, w, gw, gb) in [
        (
            &out.alpha,
            g_alpha,
            &params.w_alpha,
            &mut grads.w_alpha,
            &mut grads.b_alpha,
        ),
        (
            &out.beta,
            g_beta,
            &params.w_beta,
            &mut grads.w_beta,
            &mut grads.b_beta,
        ),
    ] {
        let g_pre: Vec<f64> = gate.iter().zip(g).map(|(s, g)| g * s * (1.0 - s)).collect();
        axpy(1.0, &g_pre, gb);
        gw.outer_acc(1.0, &input, &g_pre);
        w.mul_vec_acc(&g_pre, &mut g_in);
    }
    let g_y = g_in.split_off(d);
    (g_in, g_y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_examples() {
        let mut g = GlobalState::new(2);
        update_global(&mut g, &[1.0, 2.0], 0.0, 4).unwrap();
        assert_eq!(g.z_g, vec![0.0, 0.0]);
        update_global(&mut g, &[1.0, 2.0], 0.1, 3).unwrap();
        assert!((g.z_g[0] - 0.3).abs() < 1e-15 && (g.z_g[1] - 0.6).abs() < 1e-15);
        assert!(update_global(&mut g, &[1.0, f64::NAN], 0.1, 1).is_err());
        assert!(update_global(&mut g, &[1.0, 1.0], 0.1, 0).is_err());
    }

    #[test]
    fn updates_commute() {
        let a = [0.2, -0.5];
        let b = [1.5, 0.25];
        let mut g1 = GlobalState::new(2);
        update_global(&mut g1, &a, 0.5, 2).unwrap();
        update_global(&mut g1, &b, 0.5, 1).unwrap();
        let mut g2 = GlobalState::new(2);
        update_global(&mut g2, &b, 0.5, 1).unwrap();
        update_global(&mut g2, &a, 0.5, 2).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn enhance_examples() {
        let cold = GlobalState::new(2);
        assert_eq!(
            enhance_node(&[0.3, 0.4], &cold, 0.1, 1).unwrap(),
            vec![0.3, 0.4]
        );
        let g = GlobalState {
            z_g: vec![1.0, 1.0],
        };
        let e = enhance_node(&[0.0, 0.0], &g, 0.1, 1).unwrap();
        assert_eq!(e, vec![0.1, 0.1]);
        let e10 = enhance_node(&[0.0, 0.0], &g, 0.1, 10).unwrap();
        assert!((e10[0] - e[0] / 10.0).abs() < 1e-15);
        assert!(enhance_node(&[0.0, 0.0], &g, 0.1, 0).is_err());
    }

    #[test]
    fn film_with_zero_weights() {
        let mut p = ModelParams::init(2, None, 3, 1, false, 0).unwrap();
        p.w_alpha.data.fill(0.0);
        p.w_beta.data.fill(0.0);
        let out = film_modulation(&[0.3, 0.1, 0.2], &[0.9, 0.4, 0.5], &p).unwrap();
        assert_eq!(out.alpha, vec![0.5; 3]);
        assert_eq!(out.beta, vec![0.5; 3]);
        assert_eq!(out.omega_g, vec![2.0; 3]);

        p.theta_l.fill(0.0);
        let out = film_modulation(&[0.3, 0.1, 0.2], &[0.9, 0.4, 0.5], &p).unwrap();
        assert_eq!(out.omega_g, out.beta);
        assert!(film_modulation(&[0.3], &[0.9, 0.4, 0.5], &p).is_err());
    }
}
