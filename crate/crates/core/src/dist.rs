//! Draws from the scaled inverse-χ² family used by the conjugate updates.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// τ² ∼ Scaled-Inv-χ²(dof, scale), via 1/τ² ∼ Gamma(dof/2, scale = 2/(dof·scale)).
pub fn scaled_inv_chi2<R: Rng + ?Sized>(rng: &mut R, dof: f64, scale: f64) -> f64 {
    debug_assert!(dof > 0.0 && scale > 0.0);
    let g = Gamma::new(dof / 2.0, 2.0 / (dof * scale)).expect("positive gamma parameters");
    1.0 / g.sample(rng)
}

/// CDF of Scaled-Inv-χ²(dof, scale) at `x`.
pub fn scaled_inv_chi2_cdf(x: f64, dof: f64, scale: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Gamma as SGamma};
    if x <= 0.0 {
        return 0.0;
    }
    // P(τ² ≤ x) = P(1/τ² ≥ 1/x), 1/τ² ∼ Gamma(shape dof/2, rate dof·scale/2)
    let g = SGamma::new(dof / 2.0, dof * scale / 2.0).expect("positive gamma parameters");
    1.0 - g.cdf(1.0 / x)
}

/// One-sample Kolmogorov–Smirnov test. Returns the statistic D and the
/// asymptotic p-value with the Stephens small-sample correction.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    (d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d))
}

/// P(K > x) for the Kolmogorov distribution.
fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}
