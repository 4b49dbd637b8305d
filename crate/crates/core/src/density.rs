//! The interface samplers and optimizers use to talk to a log density.

pub trait LogDensity {
    fn dim(&self) -> usize;

    /// Unnormalized log density; may be non-finite outside the support.
    fn log_density(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.gradient(x, grad);
        self.log_density(x)
    }
}

/// A log density assembled from closures, mostly for tests and small targets.
pub struct FnDensity<F, G> {
    pub dim: usize,
    pub f: F,
    pub g: G,
}

impl<F, G> LogDensity for FnDensity<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        (self.g)(x, grad)
    }
}
