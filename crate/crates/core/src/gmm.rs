//! Bivariate Gaussian mixture over 2D velocities.

use std::f64::consts::PI;

use candle_core::{DType, Tensor, D};

use crate::error::{Error, Result};
use crate::nn::{self, Noise};

pub const SIGMA_MIN: f64 = 1e-4;
pub const SIGMA_MAX: f64 = 1e2;
pub const RHO_SCALE: f64 = 0.999;

/// Mixture parameters for a batch of agents, leading shape `[..]`.
#[derive(Debug, Clone)]
pub struct GmmParams {
    /// `[.., C]` unnormalized component weights.
    pub logits: Tensor,
    /// `[.., C]` each.
    pub mu_x: Tensor,
    pub mu_y: Tensor,
    pub log_sigma_x: Tensor,
    pub log_sigma_y: Tensor,
    pub rho: Tensor,
}

impl GmmParams {
    /// Splits a `[.., 6C]` head output into parameters.
    pub fn from_raw(raw: &Tensor, comps: usize) -> Result<Self> {
        let last = raw.rank() - 1;
        if raw.dims()[last] != 6 * comps {
            return Err(Error::Shape(format!(
                "GMM head width {} for {comps} components",
                raw.dims()[last]
            )));
        }
        let part = |i: usize| raw.narrow(last, i * comps, comps);
        let (lo, hi) = (SIGMA_MIN.ln(), SIGMA_MAX.ln());
        Ok(Self {
            logits: part(0)?,
            mu_x: part(1)?,
            mu_y: part(2)?,
            log_sigma_x: part(3)?.clamp(lo, hi)?,
            log_sigma_y: part(4)?.clamp(lo, hi)?,
            rho: (part(5)?.tanh()? * RHO_SCALE)?,
        })
    }

    pub fn components(&self) -> usize {
        *self.logits.dims().last().unwrap_or(&0)
    }

    pub fn weights(&self) -> Result<Tensor> {
        nn::softmax(&self.logits)
    }

    pub fn sigma_x(&self) -> Result<Tensor> {
        Ok(self.log_sigma_x.exp()?)
    }

    pub fn sigma_y(&self) -> Result<Tensor> {
        Ok(self.log_sigma_y.exp()?)
    }

    /// Mixture mean, `[.., 2]`.
    pub fn mean(&self) -> Result<Tensor> {
        let w = self.weights()?;
        let mx = (&w * &self.mu_x)?.sum_keepdim(D::Minus1)?;
        let my = (&w * &self.mu_y)?.sum_keepdim(D::Minus1)?;
        Ok(Tensor::cat(&[mx, my], D::Minus1)?)
    }

    /// Reparameterized draw, `[.., 2]`: the component is picked on the host
    /// from the current weights, then `mu + L eps` for that component.
    pub fn sample(&self, noise: &mut Noise) -> Result<Tensor> {
        let one_hot = noise.categorical_one_hot(&self.weights()?.detach())?;
        let shape: Vec<usize> = self.mu_x.dims()[..self.mu_x.rank() - 1].to_vec();
        let e1 = noise.normal(&shape, self.mu_x.dtype(), self.mu_x.device())?.unsqueeze(D::Minus1)?;
        let e2 = noise.normal(&shape, self.mu_x.dtype(), self.mu_x.device())?.unsqueeze(D::Minus1)?;
        let pick = |t: &Tensor| -> Result<Tensor> { Ok((t * &one_hot)?.sum_keepdim(D::Minus1)?) };
        let (mx, my) = (pick(&self.mu_x)?, pick(&self.mu_y)?);
        let (sx, sy) = (pick(&self.sigma_x()?)?, pick(&self.sigma_y()?)?);
        let rho = pick(&self.rho)?;
        let vx = (mx + (&sx * &e1)?)?;
        let tail = ((rho.sqr()?.affine(-1.0, 1.0)?.sqrt()? * e2)? + (&rho * &e1)?)?;
        let vy = (my + (sy * tail)?)?;
        Ok(Tensor::cat(&[vx, vy], D::Minus1)?)
    }

    /// Negative log-likelihood of `target: [.., 2]`, shape `[..]`.
    pub fn nll(&self, target: &Tensor) -> Result<Tensor> {
        let last = target.rank() - 1;
        let x = target.narrow(last, 0, 1)?;
        let y = target.narrow(last, 1, 1)?;
        let dx = x.broadcast_sub(&self.mu_x)?.div(&self.sigma_x()?)?;
        let dy = y.broadcast_sub(&self.mu_y)?.div(&self.sigma_y()?)?;
        let one_m_r2 = self.rho.sqr()?.affine(-1.0, 1.0)?;
        let quad = ((dx.sqr()? + dy.sqr()?)? - ((&dx * &dy)? * &self.rho)?.affine(2.0, 0.0)?)?;
        let log_n = ((((self.log_sigma_x.neg()? - &self.log_sigma_y)? - (one_m_r2.log()? * 0.5)?)?
            - (quad / one_m_r2.affine(2.0, 0.0)?)?)?
            - (2.0 * PI).ln())?;
        let log_w = nn::log_softmax(&self.logits)?;
        Ok((log_w + log_n)?.log_sum_exp(D::Minus1)?.neg()?)
    }
}

/// Density of one bivariate normal at `(x, y)`, evaluated directly.
pub fn bivariate_pdf(x: f64, y: f64, mu: [f64; 2], sigma: [f64; 2], rho: f64) -> f64 {
    let dx = (x - mu[0]) / sigma[0];
    let dy = (y - mu[1]) / sigma[1];
    let q = (dx * dx + dy * dy - 2.0 * rho * dx * dy) / (1.0 - rho * rho);
    (-0.5 * q).exp() / (2.0 * PI * sigma[0] * sigma[1] * (1.0 - rho * rho).sqrt())
}

/// Builds parameters from explicit host values (one row, `C` components).
pub fn params_from_host(
    weights_logits: &[f64],
    mu: &[[f64; 2]],
    sigma: &[[f64; 2]],
    rho: &[f64],
    dtype: DType,
) -> Result<GmmParams> {
    let c = weights_logits.len();
    let dev = candle_core::Device::Cpu;
    let t = |v: Vec<f64>| -> Result<Tensor> { Ok(Tensor::from_vec(v, (1, c), &dev)?.to_dtype(dtype)?) };
    Ok(GmmParams {
        logits: t(weights_logits.to_vec())?,
        mu_x: t(mu.iter().map(|m| m[0]).collect())?,
        mu_y: t(mu.iter().map(|m| m[1]).collect())?,
        log_sigma_x: t(sigma.iter().map(|s| s[0].ln()).collect())?,
        log_sigma_y: t(sigma.iter().map(|s| s[1].ln()).collect())?,
        rho: t(rho.to_vec())?,
    })
}
