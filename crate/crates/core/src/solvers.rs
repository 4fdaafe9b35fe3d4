//! Iterative reconstruction on the matrix-free operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::AttenuationField;
use crate::trace::{Diagnostics, ProjectionStack, Projector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub iterations: usize,
    /// Projections (angles) per OS-SART block.
    pub block_size: usize,
    pub relax: f64,
    pub nonneg: bool,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            iterations: 50,
            block_size: 20,
            relax: 1.0,
            nonneg: false,
        }
    }
}

impl SolveParams {
    pub fn check(&self, n_angles: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::ParamOutOfRange("iterations must be >= 1".into()));
        }
        if self.block_size == 0 || self.block_size > n_angles {
            return Err(Error::ParamOutOfRange(format!(
                "block size {} outside 1..={n_angles}",
                self.block_size
            )));
        }
        if !(self.relax > 0.0 && self.relax <= 2.0) {
            return Err(Error::ParamOutOfRange(format!(
                "relaxation {} outside (0, 2]",
                self.relax
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Solver state, 64-bit.
    pub values: Vec<f64>,
    pub iterations: usize,
    /// `‖b − A x‖` after each iteration (CGLS only).
    pub residuals: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl Reconstruction {
    pub fn field(&self) -> AttenuationField {
        AttenuationField::from_f64(&self.values)
    }
}

/// Angle-interleaved blocks: block `b` holds angles `b, b + n_blocks, ...`.
pub fn interleaved_blocks(n_angles: usize, block_size: usize) -> Vec<Vec<usize>> {
    let n_blocks = n_angles.div_ceil(block_size.max(1)).max(1);
    (0..n_blocks)
        .map(|b| (b..n_angles).step_by(n_blocks).collect())
        .collect()
}

fn invert_weights(w: &[f64]) -> Vec<f64> {
    let max = w.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let w_eps = 1e-12 * max;
    w.iter()
        .map(|&x| if x > w_eps && x > 0.0 { 1.0 / x } else { 0.0 })
        .collect()
}

fn check_data(op: &Projector, data: &ProjectionStack) -> Result<Vec<f64>> {
    data.check_matches(op.scan)?;
    Ok(data.to_f64())
}

/// OS-SART starting from zero.
pub fn os_sart(op: &Projector, data: &ProjectionStack, params: &SolveParams) -> Result<Reconstruction> {
    let b = check_data(op, data)?;
    os_sart_f64(op, &b, params)
}

pub fn os_sart_f64(op: &Projector, b: &[f64], params: &SolveParams) -> Result<Reconstruction> {
    let n_angles = op.scan.n_angles();
    params.check(n_angles)?;
    let per = op.scan.pixels_per_angle();
    if b.len() != n_angles * per {
        return Err(Error::DimensionMismatch(format!(
            "data holds {} values, geometry needs {}",
            b.len(),
            n_angles * per
        )));
    }
    let blocks = interleaved_blocks(n_angles, params.block_size);
    let mut diagnostics = Diagnostics::default();

    struct Block {
        angles: Vec<usize>,
        data: Vec<f64>,
        inv_w: Vec<f64>,
        inv_v: Vec<f64>,
    }
    let blocks: Vec<Block> = blocks
        .into_iter()
        .map(|angles| {
            let data: Vec<f64> = angles
                .iter()
                .flat_map(|&a| b[a * per..(a + 1) * per].iter().copied())
                .collect();
            let (w, d1) = op.row_sums(&angles);
            let (v, d2) = op.col_sums(&angles);
            diagnostics = std::mem::take(&mut diagnostics).merge(d1).merge(d2);
            Block {
                angles,
                data,
                inv_w: invert_weights(&w),
                inv_v: invert_weights(&v),
            }
        })
        .collect();

    let mut x = vec![0.0f64; op.graph.len()];
    for _ in 0..params.iterations {
        for block in &blocks {
            let (ax, d) = op.forward(&x, &block.angles);
            diagnostics = diagnostics.merge(d);
            let r: Vec<f64> = block
                .data
                .iter()
                .zip(&ax)
                .zip(&block.inv_w)
                .map(|((b, a), w)| (b - a) * w)
                .collect();
            let (back, d) = op.adjoint(&r, &block.angles);
            diagnostics = diagnostics.merge(d);
            for ((xi, bi), vi) in x.iter_mut().zip(&back).zip(&block.inv_v) {
                *xi += params.relax * vi * bi;
                if params.nonneg && *xi < 0.0 {
                    *xi = 0.0;
                }
            }
        }
    }
    Ok(Reconstruction {
        values: x,
        iterations: params.iterations,
        residuals: Vec::new(),
        diagnostics,
    })
}

/// SART: OS-SART with one projection per block.
pub fn sart(op: &Projector, data: &ProjectionStack, params: &SolveParams) -> Result<Reconstruction> {
    let params = SolveParams {
        block_size: 1,
        ..*params
    };
    os_sart(op, data, &params)
}

/// Conjugate gradients on the normal equations, starting from zero. Stops
/// early once the relative change of `‖b − A x‖` drops below 1e-10.
pub fn cgls(op: &Projector, data: &ProjectionStack, iterations: usize) -> Result<Reconstruction> {
    let b = check_data(op, data)?;
    cgls_f64(op, &b, iterations)
}

pub fn cgls_f64(op: &Projector, b: &[f64], iterations: usize) -> Result<Reconstruction> {
    if iterations == 0 {
        return Err(Error::ParamOutOfRange("iterations must be >= 1".into()));
    }
    let angles = op.all_angles();
    let n_rays = op.scan.ray_count();
    if b.len() != n_rays {
        return Err(Error::DimensionMismatch(format!(
            "data holds {} values, geometry needs {n_rays}",
            b.len()
        )));
    }
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();

    let mut x = vec![0.0f64; op.graph.len()];
    let mut r = b.to_vec();
    let (mut s, mut diagnostics) = op.adjoint(&r, &angles);
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let mut rnorm = dot(&r, &r).sqrt();
    let mut residuals = Vec::new();
    let mut done = 0;

    while done < iterations && gamma > 0.0 {
        let (q, d) = op.forward(&p, &angles);
        diagnostics = diagnostics.merge(d);
        let qq = dot(&q, &q);
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
        done += 1;

        let next = dot(&r, &r).sqrt();
        residuals.push(next);
        let stagnant = rnorm > 0.0 && ((rnorm - next).abs() / rnorm) < 1e-10;
        rnorm = next;
        if stagnant || done == iterations {
            break;
        }

        let (s_next, d) = op.adjoint(&r, &angles);
        diagnostics = diagnostics.merge(d);
        s = s_next;
        let gamma_next = dot(&s, &s);
        let beta = gamma_next / gamma;
        gamma = gamma_next;
        p.iter_mut().zip(&s).for_each(|(pi, si)| *pi = si + beta * *pi);
    }
    Ok(Reconstruction {
        values: x,
        iterations: done,
        residuals,
        diagnostics,
    })
}
