use proptest::prelude::*;
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};

use graphvrnn::detection::{anomalous_degrees, chi_square_cdf, ln_gamma, lrt_statistic, regularized_gamma_p};
use graphvrnn::diffmath::{gaussian_log_density, kl_diag_gaussians, log_normal_pdf, GaussianParams, Tensor};

proptest! {
    #[test]
    fn chi_square_matches_statrs(x in 0.0f64..80.0, df in 1u32..=12) {
        let ours = chi_square_cdf(x, df).unwrap();
        let theirs = ChiSquared::new(df as f64).unwrap().cdf(x);
        prop_assert!((ours - theirs).abs() < 1e-10, "df {df} x {x}: {ours} vs {theirs}");
    }

    #[test]
    fn ln_gamma_matches_statrs(x in 0.05f64..150.0) {
        let ours = ln_gamma(x);
        let theirs = statrs::function::gamma::ln_gamma(x);
        prop_assert!((ours - theirs).abs() <= 1e-12 * theirs.abs().max(1.0));
    }

    #[test]
    fn regularized_gamma_is_a_cdf(a in 0.1f64..20.0, x in 0.0f64..60.0, dx in 0.0f64..5.0) {
        let p = regularized_gamma_p(a, x).unwrap();
        let q = regularized_gamma_p(a, x + dx).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(q >= p - 1e-15);
    }

    #[test]
    fn log_density_matches_statrs(x in -10.0f64..10.0, mean in -5.0f64..5.0, sd in 0.01f64..5.0) {
        let theirs = Normal::new(mean, sd).unwrap().ln_pdf(x);
        prop_assert!((log_normal_pdf(x, mean, sd) - theirs).abs() < 1e-12 * theirs.abs().max(1.0));
        let t = |v: f64| Tensor::vector(vec![v, v]);
        let joint = gaussian_log_density(&t(x), &t(mean), &t(sd)).unwrap();
        prop_assert!((joint - 2.0 * theirs).abs() < 1e-11 * theirs.abs().max(1.0));
    }

    #[test]
    fn lrt_is_nonnegative(x in -50.0f64..200.0, mean in -50.0f64..200.0, var in 1e-4f64..500.0) {
        let l = lrt_statistic(x, mean, var).unwrap();
        prop_assert!(l >= 0.0 && l.is_finite());
    }

    #[test]
    fn od_grows_with_distance(mean in 0.0f64..1.0, sd in 0.01f64..0.5, d in 0.0f64..3.0, extra in 0.01f64..3.0) {
        let p = GaussianParams::new(Tensor::vector(vec![mean]), Tensor::vector(vec![sd])).unwrap();
        let near = anomalous_degrees(&p, &[mean + d * sd]).unwrap()[0];
        let far = anomalous_degrees(&p, &[mean + (d + extra) * sd]).unwrap()[0];
        prop_assert!(far >= near - 1e-12, "{near} then {far}");
    }
}

/// Closed-form KL checked against a Monte-Carlo-free route: the expected
/// log ratio integrated numerically in one dimension.
#[test]
fn kl_matches_numerical_integral() {
    for &(mq, sq, mp, sp) in &[(0.0, 1.0, 0.0, 1.0), (0.3, 0.5, -1.0, 2.0), (2.0, 0.1, 1.5, 0.3)] {
        let q = GaussianParams::new(Tensor::vector(vec![mq]), Tensor::vector(vec![sq])).unwrap();
        let p = GaussianParams::new(Tensor::vector(vec![mp]), Tensor::vector(vec![sp])).unwrap();
        let closed = kl_diag_gaussians(&q, &p).unwrap();
        let (lo, hi, m) = (mq - 12.0 * sq, mq + 12.0 * sq, 40_000);
        let h = (hi - lo) / m as f64;
        let f = |z: f64| {
            let lq = log_normal_pdf(z, mq, sq);
            lq.exp() * (lq - log_normal_pdf(z, mp, sp))
        };
        let mut s = f(lo) + f(hi);
        for i in 1..m {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let numeric = s * h / 3.0;
        assert!((closed - numeric).abs() < 1e-9, "{closed} vs {numeric}");
    }
}
