//! Closed-form conditional draws for the variance parameters and the
//! corpus-level means.

use rand::Rng;
use rand_distr::StandardNormal;

use super::SamplerError;
use crate::dist::scaled_inv_chi2;

/// Smallest scale passed to a scaled inverse-χ² draw.
pub const SCALE_FLOOR: f64 = 1e-12;

/// Degrees of freedom and scale of a scaled inverse-χ² law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvChi2 {
    pub dof: f64,
    pub scale: f64,
}

impl InvChi2 {
    /// Draws, flooring a non-positive scale at [`SCALE_FLOOR`] with a warning.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let scale = if self.scale > SCALE_FLOOR {
            self.scale
        } else {
            log::warn!(
                "degenerate inverse-chi2 scale {}; using {SCALE_FLOOR}",
                self.scale
            );
            SCALE_FLOOR
        };
        scaled_inv_chi2(rng, self.dof, scale)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.scale > SCALE_FLOOR)
    }
}

/// τ²_{f,p} | μ_f ∼ Inv-χ²(J + ν, (νσ² + Σ_c (μ_c − μ_p)²)/(J + ν)).
pub fn tau2_conditional(nu: f64, sigma2: f64, mu_parent: f64, mu_children: &[f64]) -> InvChi2 {
    let j = mu_children.len() as f64;
    let ss: f64 = mu_children.iter().map(|c| (c - mu_parent).powi(2)).sum();
    InvChi2 {
        dof: j + nu,
        scale: (nu * sigma2 + ss) / (j + nu),
    }
}

/// γ² | ψ ∼ Inv-χ²(V, Σ_f (μ_{f,0} − ψ)² / V).
pub fn gamma2_conditional(root_mus: &[f64], psi: f64) -> Result<InvChi2, SamplerError> {
    if root_mus.is_empty() {
        return Err(SamplerError::EmptyBlock("words"));
    }
    let v = root_mus.len() as f64;
    Ok(InvChi2 {
        dof: v,
        scale: root_mus.iter().map(|m| (m - psi).powi(2)).sum::<f64>() / v,
    })
}

/// Draws γ² given the current ψ, then ψ | γ² ∼ N(mean μ_{·,0}, γ²/V).
pub fn draw_gamma2_psi<R: Rng + ?Sized>(
    rng: &mut R,
    root_mus: &[f64],
    psi: f64,
) -> Result<(f64, f64), SamplerError> {
    let gamma2 = gamma2_conditional(root_mus, psi)?.sample(rng);
    let v = root_mus.len() as f64;
    let mean = root_mus.iter().sum::<f64>() / v;
    let psi = mean + (gamma2 / v).sqrt() * rng.sample::<f64, _>(StandardNormal);
    Ok((gamma2, psi))
}

/// λ² ∼ Inv-χ²(DK − 1, SS/(DK − 1)) with η integrated out, where
/// SS = Σ_d Σ_k (ξ_dk − ξ̄_k)². Also returns ξ̄.
pub fn lambda2_conditional<X: AsRef<[f64]>>(xis: &[X]) -> Result<(InvChi2, Vec<f64>), SamplerError> {
    let d = xis.len();
    let k = xis.first().map_or(0, |x| x.as_ref().len());
    if d * k < 2 {
        return Err(SamplerError::EmptyBlock("documents × topics < 2"));
    }
    let mut mean = vec![0.0; k];
    for x in xis {
        for (m, v) in mean.iter_mut().zip(x.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= d as f64);
    let mut ss = 0.0;
    for x in xis {
        for (m, v) in mean.iter().zip(x.as_ref()) {
            ss += (v - m).powi(2);
        }
    }
    let dof = (d * k - 1) as f64;
    Ok((InvChi2 { dof, scale: ss / dof }, mean))
}

/// Draws λ², then η | λ² ∼ N(ξ̄, (λ²/D) I).
pub fn draw_lambda2_eta<R: Rng + ?Sized, X: AsRef<[f64]>>(
    rng: &mut R,
    xis: &[X],
) -> Result<(f64, Vec<f64>), SamplerError> {
    let (law, mean) = lambda2_conditional(xis)?;
    let lambda2 = law.sample(rng);
    let sd = (lambda2 / xis.len() as f64).sqrt();
    let eta = mean
        .iter()
        .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok((lambda2, eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tau2_parameters() {
        let law = tau2_conditional(2.0, 1.0, 0.0, &[0.1, -0.1]);
        assert_eq!(law.dof, 4.0);
        assert_relative_eq!(law.scale, 0.505, epsilon = 1e-15);
    }

    #[test]
    fn gamma2_parameters() {
        let law = gamma2_conditional(&[0.0, 0.0, 2.0, 2.0], 1.0).unwrap();
        assert_eq!(law.dof, 4.0);
        assert_relative_eq!(law.scale, 1.0);
        assert!(gamma2_conditional(&[3.0, 3.0], 3.0).unwrap().is_degenerate());
    }

    #[test]
    fn lambda2_parameters() {
        let (law, mean) = lambda2_conditional(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(law.dof, 1.0);
        assert_relative_eq!(law.scale, 2.0);
        assert_eq!(mean, vec![1.0]);
    }

    #[test]
    fn huge_nu_concentrates_at_sigma2() {
        let mut rng = crate::rng::substream(4, crate::rng::Stream::Test, 0, 0);
        let law = tau2_conditional(1e7, 0.3, 0.0, &[5.0, -5.0]);
        for _ in 0..100 {
            assert!((law.sample(&mut rng) - 0.3).abs() < 0.01);
        }
    }

    #[test]
    fn degenerate_scale_is_floored() {
        let mut rng = crate::rng::substream(5, crate::rng::Stream::Test, 0, 0);
        let (g, psi) = draw_gamma2_psi(&mut rng, &[1.0, 1.0, 1.0], 1.0).unwrap();
        assert!(g > 0.0 && g < 1e-9);
        assert!((psi - 1.0).abs() < 1e-3);
    }
}
