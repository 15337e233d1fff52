//! Diagonal Gaussian utilities: log density, analytic KL divergence and the
//! reparameterized sample, each in a plain form and a taped form.

use super::tape::Var;
use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

/// `½ log(2π)`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Mean and standard deviation of a diagonal Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: Tensor,
    pub stddev: Tensor,
}

impl GaussianParams {
    pub fn new(mean: Tensor, stddev: Tensor) -> Result<Self> {
        if mean.shape() != stddev.shape() {
            return Err(shape_err("GaussianParams", mean.shape(), stddev.shape()));
        }
        check_positive(&stddev)?;
        Ok(Self { mean, stddev })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: Tensor::zeros(&[dim]),
            stddev: Tensor::filled(&[dim], 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.stddev.data().iter().map(|s| s * s).collect()
    }
}

fn check_positive(stddev: &Tensor) -> Result<()> {
    match stddev.data().iter().position(|&s| !(s > 0.0)) {
        Some(i) => Err(Error::Domain(format!(
            "standard deviation must be positive, got {} at index {i}",
            stddev.data()[i]
        ))),
        None => Ok(()),
    }
}

/// `Σᵢ [−½log(2π) − log σᵢ − (xᵢ−μᵢ)²/(2σᵢ²)]`
pub fn gaussian_log_density(x: &Tensor, mean: &Tensor, stddev: &Tensor) -> Result<f64> {
    if x.shape() != mean.shape() {
        return Err(shape_err("gaussian_log_density", x.shape(), mean.shape()));
    }
    if mean.shape() != stddev.shape() {
        return Err(shape_err("gaussian_log_density", mean.shape(), stddev.shape()));
    }
    check_positive(stddev)?;
    Ok(x.data()
        .iter()
        .zip(mean.data())
        .zip(stddev.data())
        .map(|((&x, &m), &s)| log_normal_pdf(x, m, s))
        .sum())
}

/// Scalar Gaussian log density; no domain checks.
#[inline]
pub fn log_normal_pdf(x: f64, mean: f64, stddev: f64) -> f64 {
    let r = (x - mean) / stddev;
    -HALF_LN_2PI - stddev.ln() - 0.5 * r * r
}

/// Analytic `KL(q ‖ p)` between diagonal Gaussians.
pub fn kl_diag_gaussians(q: &GaussianParams, p: &GaussianParams) -> Result<f64> {
    if q.mean.shape() != p.mean.shape() {
        return Err(shape_err("kl_diag_gaussians", q.mean.shape(), p.mean.shape()));
    }
    check_positive(&q.stddev)?;
    check_positive(&p.stddev)?;
    let mut kl = 0.0;
    for i in 0..q.dim() {
        let (mq, sq) = (q.mean.data()[i], q.stddev.data()[i]);
        let (mp, sp) = (p.mean.data()[i], p.stddev.data()[i]);
        let d = mq - mp;
        kl += (sp / sq).ln() + (sq * sq + d * d) / (2.0 * sp * sp) - 0.5;
    }
    // rounding can push identical inputs a hair below zero
    Ok(kl.max(0.0))
}

/// `μ + σ ⊙ ε`
pub fn reparameterize(g: &GaussianParams, noise: &Tensor) -> Result<Tensor> {
    if noise.shape() != g.mean.shape() {
        return Err(shape_err("reparameterize", g.mean.shape(), noise.shape()));
    }
    let data = g
        .mean
        .data()
        .iter()
        .zip(g.stddev.data())
        .zip(noise.data())
        .map(|((m, s), e)| m + s * e)
        .collect();
    Tensor::new(g.mean.shape().to_vec(), data)
}

/// Taped counterpart of [`GaussianParams`].
#[derive(Debug, Clone, Copy)]
pub struct GaussianVars<'t> {
    pub mean: Var<'t>,
    pub stddev: Var<'t>,
}

impl<'t> GaussianVars<'t> {
    pub fn value(&self) -> GaussianParams {
        GaussianParams {
            mean: self.mean.value(),
            stddev: self.stddev.value(),
        }
    }

    /// Log density of `x`, summed over dimensions.
    pub fn log_density(&self, x: Var<'t>) -> Result<Var<'t>> {
        let z = x.sub(self.mean)?.div(self.stddev)?;
        let n = x.len() as f64;
        let quad = z.square().sum().scale(-0.5);
        Ok(quad.sub(self.stddev.ln().sum())?.offset(-HALF_LN_2PI * n))
    }

    /// Analytic `KL(self ‖ prior)`.
    pub fn kl(&self, prior: &GaussianVars<'t>) -> Result<Var<'t>> {
        let log_ratio = prior.stddev.ln().sub(self.stddev.ln())?;
        let diff = self.mean.sub(prior.mean)?;
        let num = self.stddev.square().add(diff.square())?;
        let quad = num.div(prior.stddev.square())?.scale(0.5);
        Ok(log_ratio.add(quad)?.offset(-0.5).sum())
    }

    /// `μ + σ ⊙ ε` with `noise` treated as a constant.
    pub fn reparameterize(&self, noise: Var<'t>) -> Result<Var<'t>> {
        self.mean.add(self.stddev.mul(noise)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::Tape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn t(v: &[f64]) -> Tensor {
        Tensor::vector(v.to_vec())
    }

    #[test]
    fn standard_normal_at_zero() {
        let lp = gaussian_log_density(&t(&[0.0]), &t(&[0.0]), &t(&[1.0])).unwrap();
        assert!((lp + 0.918_939).abs() < 1e-6);
    }

    #[test]
    fn null_model_of_the_lrt_example() {
        let lp = gaussian_log_density(&t(&[30.0]), &t(&[100.0]), &t(&[200f64.sqrt()])).unwrap();
        // −½log(2π·200) − 70²/400
        assert!((lp + 15.818_097_216_5).abs() < 1e-9, "{lp}");
    }

    #[test]
    fn zero_residual() {
        let s = [0.5, 2.0, 3.0];
        let lp = gaussian_log_density(&t(&[1.0, 2.0, 3.0]), &t(&[1.0, 2.0, 3.0]), &t(&s)).unwrap();
        let expected: f64 = -s.iter().map(|s| HALF_LN_2PI + s.ln()).sum::<f64>();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_stddev_is_a_domain_error() {
        let err = gaussian_log_density(&t(&[0.0]), &t(&[0.0]), &t(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        let q = GaussianParams {
            mean: t(&[0.0]),
            stddev: t(&[-1.0]),
        };
        assert!(kl_diag_gaussians(&q, &GaussianParams::standard(1)).is_err());
    }

    #[test]
    fn kl_known_values() {
        let std = GaussianParams::standard(1);
        assert_eq!(kl_diag_gaussians(&std, &std).unwrap(), 0.0);
        let shifted = GaussianParams::new(t(&[1.0]), t(&[1.0])).unwrap();
        assert!((kl_diag_gaussians(&shifted, &std).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_agrees_with_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let q = GaussianParams::new(
                t(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]),
                t(&[rng.random_range(0.3..1.5), rng.random_range(0.3..1.5)]),
            )
            .unwrap();
            let p = GaussianParams::new(
                t(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]),
                t(&[rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)]),
            )
            .unwrap();
            let n = 200_000;
            let mut acc = 0.0;
            for _ in 0..n {
                let eps = t(&[
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ]);
                let z = reparameterize(&q, &eps).unwrap();
                acc += gaussian_log_density(&z, &q.mean, &q.stddev).unwrap()
                    - gaussian_log_density(&z, &p.mean, &p.stddev).unwrap();
            }
            let mc = acc / n as f64;
            let exact = kl_diag_gaussians(&q, &p).unwrap();
            assert!((mc - exact).abs() < 0.02 + 0.02 * exact, "mc {mc} exact {exact}");
        }
    }

    #[test]
    fn reparameterize_cases() {
        let g = GaussianParams::new(t(&[1.0, -2.0]), t(&[0.5, 3.0])).unwrap();
        assert_eq!(reparameterize(&g, &t(&[0.0, 0.0])).unwrap(), g.mean);
        let e = t(&[0.7, -1.1]);
        assert_eq!(reparameterize(&GaussianParams::standard(2), &e).unwrap(), e);

        let tape = Tape::new();
        let gv = GaussianVars {
            mean: tape.leaf(g.mean.clone()),
            stddev: tape.leaf(g.stddev.clone()),
        };
        let noise = tape.leaf(e.clone());
        let z = gv.reparameterize(noise).unwrap().sum();
        let grads = tape.gradient(z).unwrap();
        assert_eq!(grads.get(gv.stddev).unwrap(), e);
    }

    #[test]
    fn taped_forms_match_plain_forms() {
        let q = GaussianParams::new(t(&[0.3, -0.2, 1.0]), t(&[0.4, 1.2, 0.9])).unwrap();
        let p = GaussianParams::new(t(&[0.0, 0.5, 0.2]), t(&[1.0, 0.7, 2.0])).unwrap();
        let x = t(&[0.1, 0.2, 0.3]);
        let tape = Tape::new();
        let qv = GaussianVars {
            mean: tape.leaf(q.mean.clone()),
            stddev: tape.leaf(q.stddev.clone()),
        };
        let pv = GaussianVars {
            mean: tape.leaf(p.mean.clone()),
            stddev: tape.leaf(p.stddev.clone()),
        };
        let lp = qv.log_density(tape.leaf(x.clone())).unwrap().item();
        let kl = qv.kl(&pv).unwrap().item();
        assert!((lp - gaussian_log_density(&x, &q.mean, &q.stddev).unwrap()).abs() < 1e-12);
        assert!((kl - kl_diag_gaussians(&q, &p).unwrap()).abs() < 1e-12);
    }
}
