//! Problem description: spectrum of A, noise eigenvalues, kernel exponent,
//! nonlinearity and initial data.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Eigenvalues of A and of the noise covariance Q in a common eigenbasis.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    lambdas: Vec<f64>,
    mus: Option<Vec<f64>>,
}

impl Spectrum {
    /// `lambdas` must be finite, non-negative and nondecreasing. A zero
    /// eigenvalue is admitted for synthetic test modes.
    pub fn new(lambdas: Vec<f64>, mus: Option<Vec<f64>>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidParameter("spectrum has no modes".into()));
        }
        if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidParameter(
                "eigenvalues must be finite and non-negative".into(),
            ));
        }
        if lambdas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("eigenvalues must be nondecreasing".into()));
        }
        let spec = Spectrum { lambdas, mus: None };
        match mus {
            Some(m) => spec.with_mus(m),
            None => Ok(spec),
        }
    }

    pub fn with_mus(mut self, mus: Vec<f64>) -> Result<Self> {
        if mus.len() != self.lambdas.len() {
            return Err(Error::InvalidParameter(format!(
                "{} noise eigenvalues for {} modes",
                mus.len(),
                self.lambdas.len()
            )));
        }
        if mus.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidParameter(
                "noise eigenvalues must be finite and non-negative".into(),
            ));
        }
        self.mus = Some(mus);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn mus(&self) -> Option<&[f64]> {
        self.mus.as_deref()
    }

    /// Noise eigenvalues, or an error if they were never set.
    pub fn require_mus(&self) -> Result<&[f64]> {
        self.mus
            .as_deref()
            .ok_or_else(|| Error::InvalidParameter("noise eigenvalues not set".into()))
    }

    /// Restrict to the given (0-based) mode indices, keeping their order.
    pub fn select(&self, modes: &[usize]) -> Result<Spectrum> {
        let mut lambdas = Vec::with_capacity(modes.len());
        let mut mus = self.mus.as_ref().map(|_| Vec::with_capacity(modes.len()));
        for &k in modes {
            let l = *self.lambdas.get(k).ok_or_else(|| {
                Error::InvalidParameter(format!("mode {} outside spectrum of {}", k + 1, self.len()))
            })?;
            lambdas.push(l);
            if let (Some(out), Some(src)) = (mus.as_mut(), self.mus.as_ref()) {
                out.push(src[k]);
            }
        }
        Spectrum::new(lambdas, mus)
    }
}

/// λ_k = k²π², k = 1..n, without noise eigenvalues.
pub fn dirichlet_laplacian_1d(n: usize) -> Result<Spectrum> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one mode".into()));
    }
    let pi2 = PI * PI;
    let lambdas = (1..=n).map(|k| (k * k) as f64 * pi2).collect();
    Spectrum::new(lambdas, None)
}

/// Riesz kernel b(t) = t^{α-1}/Γ(α) with ρ = α + 1.
///
/// ρ = 1 is accepted as the memoryless limit (α = 0, b = δ), in which the
/// resolvent is e^{-λt} and the equation reduces to Ornstein–Uhlenbeck.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    rho: f64,
}

impl KernelSpec {
    pub fn new(rho: f64) -> Result<Self> {
        if !(1.0..2.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!(
                "kernel exponent rho = {rho} outside [1, 2)"
            )));
        }
        Ok(KernelSpec { rho })
    }

    pub fn from_alpha(alpha: f64) -> Result<Self> {
        Self::new(alpha + 1.0)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn alpha(&self) -> f64 {
        self.rho - 1.0
    }

    pub fn is_memoryless(&self) -> bool {
        self.rho == 1.0
    }
}

/// Scalar nonlinearity applied to each mode coefficient, F(u)_k = f(u_k).
#[derive(Clone)]
pub enum Nonlinearity {
    Zero,
    Sine,
    /// f(u) = scale (1 - u) / (1 + u²)
    Rational { scale: f64 },
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        lipschitz: Option<f64>,
    },
}

// max |d/du (1-u)/(1+u²)|, attained at u = 2 - √3
const RATIONAL_LIPSCHITZ: f64 = 1.274_519_052_838_329;

impl Nonlinearity {
    pub fn custom<F>(name: &str, f: F, lipschitz: Option<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Nonlinearity::Custom {
            name: name.to_string(),
            f: Arc::new(f),
            lipschitz,
        }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Sine => u.sin(),
            Nonlinearity::Rational { scale } => scale * (1.0 - u) / (1.0 + u * u),
            Nonlinearity::Custom { f, .. } => f(u),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
    }

    pub fn lipschitz_hint(&self) -> Option<f64> {
        match self {
            Nonlinearity::Zero => Some(0.0),
            Nonlinearity::Sine => Some(1.0),
            Nonlinearity::Rational { scale } => Some(scale.abs() * RATIONAL_LIPSCHITZ),
            Nonlinearity::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Nonlinearity::Zero => "zero".into(),
            Nonlinearity::Sine => "sin".into(),
            Nonlinearity::Rational { scale } => format!("rational({scale})"),
            Nonlinearity::Custom { name, .. } => name.clone(),
        }
    }
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonlinearity({})", self.name())
    }
}

/// Componentwise F(u)_k = f(u_k).
pub fn apply_nonlinearity(nl: &Nonlinearity, u: &[f64]) -> Result<Vec<f64>> {
    let out: Vec<f64> = u.iter().map(|&x| nl.eval(x)).collect();
    if let Some(k) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "nonlinearity {} returned {} at u[{k}] = {}",
            nl.name(),
            out[k],
            u[k]
        )));
    }
    Ok(out)
}

/// One problem: spectrum, kernel, nonlinearity, initial coefficients, horizon.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub spectrum: Spectrum,
    pub kernel: KernelSpec,
    pub nonlinearity: Nonlinearity,
    pub u0: Vec<f64>,
    pub t_end: f64,
}

impl ProblemInstance {
    /// `u0 = None` means zero initial data.
    pub fn new(
        spectrum: Spectrum,
        kernel: KernelSpec,
        nonlinearity: Nonlinearity,
        u0: Option<Vec<f64>>,
        t_end: f64,
    ) -> Result<Self> {
        let n = spectrum.len();
        let u0 = u0.unwrap_or_else(|| vec![0.0; n]);
        if u0.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} initial coefficients for {n} modes",
                u0.len()
            )));
        }
        if u0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("initial data must be finite".into()));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon T = {t_end} must be positive")));
        }
        Ok(ProblemInstance {
            spectrum,
            kernel,
            nonlinearity,
            u0,
            t_end,
        })
    }

    pub fn modes(&self) -> usize {
        self.spectrum.len()
    }

    /// Noise eigenvalues, treating unset ones as zero.
    pub fn mus_or_zero(&self) -> Vec<f64> {
        self.spectrum
            .mus()
            .map(|m| m.to_vec())
            .unwrap_or_else(|| vec![0.0; self.modes()])
    }

    pub fn is_deterministic(&self) -> bool {
        self.spectrum.mus().is_none_or(|m| m.iter().all(|&v| v == 0.0))
    }
}

/// Empirical check of the noise-regularity condition
/// Σ_k λ_k^{β-1/ρ} μ_k < ∞ on the truncated spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    pub beta_estimate: f64,
    pub trace: f64,
    pub predicted_temporal_rate: f64,
    pub notes: String,
}

/// Estimates β from the decay of λ_k^{-1/ρ} μ_k.
///
/// Over the upper half of the modes, q is the log-log slope of
/// λ_k^{-1/ρ} μ_k against λ_k and κ the slope of λ_k against k. The series
/// Σ λ_k^{β-1/ρ} μ_k ~ Σ k^{κ(β+q)} converges for β < -q - 1/κ, so
/// β = min(1/ρ, -q - 1/κ).
pub fn validate_noise_regularity(spectrum: &Spectrum, kernel: &KernelSpec) -> Result<RegularityReport> {
    let mus = spectrum.require_mus()?;
    let lambdas = spectrum.lambdas();
    let rho = kernel.rho();
    let cap = 1.0 / rho;
    let trace: f64 = mus.iter().sum();
    let mut notes = Vec::new();

    let beta = if trace == 0.0 {
        notes.push("deterministic: all noise eigenvalues vanish".to_string());
        cap
    } else if spectrum.len() == 1 {
        notes.push("single mode: noise is trace class, beta = 1/rho".to_string());
        cap
    } else {
        let n = spectrum.len();
        let start = n - (n / 2).max(2);
        let pts: Vec<(f64, f64, f64)> = (start..n)
            .filter(|&k| mus[k] > 0.0 && lambdas[k] > 0.0)
            .map(|k| {
                let l = lambdas[k];
                ((k as f64 + 1.0).ln(), l.ln(), (l.powf(-cap) * mus[k]).ln())
            })
            .collect();
        if pts.len() < 2 {
            notes.push("too few modes with positive noise in the fit window; beta = 1/rho".to_string());
            cap
        } else {
            let kappa = ols_slope(pts.iter().map(|p| (p.0, p.1)));
            let q = ols_slope(pts.iter().map(|p| (p.1, p.2)));
            if !(kappa > 0.0) {
                notes.push("eigenvalues do not grow; beta = 1/rho".to_string());
                cap
            } else {
                let b = -q - 1.0 / kappa;
                if b >= cap {
                    notes.push("noise decays fast enough to be trace class".to_string());
                    cap
                } else {
                    if b <= 0.0 {
                        notes.push(format!(
                            "fitted beta = {b:.4} is not positive: the regularity assumption fails"
                        ));
                    }
                    b
                }
            }
        }
    };
    Ok(RegularityReport {
        beta_estimate: beta,
        trace,
        predicted_temporal_rate: beta * rho,
        notes: notes.join("; "),
    })
}

fn ols_slope<I: Iterator<Item = (f64, f64)>>(pts: I) -> f64 {
    let pts: Vec<(f64, f64)> = pts.collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_values() {
        let s = dirichlet_laplacian_1d(30).unwrap();
        assert_eq!(s.lambdas()[0], PI * PI);
        assert!((s.lambdas()[1] - 39.47841760435743).abs() < 1e-12);
        assert!((s.lambdas()[29] - 8882.643960980423).abs() < 1e-9);
        assert!(dirichlet_laplacian_1d(0).is_err());
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::new(vec![2.0, 1.0], None).is_err());
        assert!(Spectrum::new(vec![1.0, -1.0], None).is_err());
        assert!(Spectrum::new(vec![1.0], Some(vec![1.0, 2.0])).is_err());
        assert!(Spectrum::new(vec![1.0], Some(vec![-1.0])).is_err());
        assert!(Spectrum::new(vec![0.0, 1.0], Some(vec![1.0, 1.0])).is_ok());
    }

    #[test]
    fn kernel_validation() {
        assert!(KernelSpec::new(2.0).is_err());
        assert!(KernelSpec::new(0.9).is_err());
        let k = KernelSpec::new(1.5).unwrap();
        assert_eq!(k.alpha(), 0.5);
        assert_eq!(KernelSpec::from_alpha(0.75).unwrap().rho(), 1.75);
    }

    #[test]
    fn nonlinearity_examples() {
        let z = apply_nonlinearity(&Nonlinearity::Sine, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(z, vec![0.0; 3]);
        let r = apply_nonlinearity(&Nonlinearity::Rational { scale: 5.0 }, &[1.0]).unwrap();
        assert_eq!(r, vec![0.0]);
        let s = apply_nonlinearity(&Nonlinearity::Sine, &[PI / 2.0, -PI / 2.0]).unwrap();
        assert_eq!(s, vec![1.0, -1.0]);
        let bad = Nonlinearity::custom("log", |u: f64| u.ln(), None);
        assert!(matches!(
            apply_nonlinearity(&bad, &[-1.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn rational_lipschitz_constant() {
        let f = |u: f64| (1.0 - u) / (1.0 + u * u);
        let mut best = 0.0f64;
        let h = 1e-6;
        for i in -40000..40000 {
            let u = i as f64 * 1e-3;
            best = best.max(((f(u + h) - f(u - h)) / (2.0 * h)).abs());
        }
        assert!((best - RATIONAL_LIPSCHITZ).abs() < 1e-6, "{best}");
    }

    #[test]
    fn regularity_examples() {
        let k12 = KernelSpec::new(1.2).unwrap();
        let s = Spectrum::new(vec![PI * PI], Some(vec![1.0])).unwrap();
        let r = validate_noise_regularity(&s, &k12).unwrap();
        assert!((r.beta_estimate - 1.0 / 1.2).abs() < 1e-15);
        assert!((r.predicted_temporal_rate - 1.0).abs() < 1e-15);

        let k15 = KernelSpec::new(1.5).unwrap();
        let white = dirichlet_laplacian_1d(200).unwrap().with_mus(vec![1.0; 200]).unwrap();
        let r = validate_noise_regularity(&white, &k15).unwrap();
        assert!((r.beta_estimate - 1.0 / 6.0).abs() < 1e-12, "{r:?}");

        let det = dirichlet_laplacian_1d(5).unwrap().with_mus(vec![0.0; 5]).unwrap();
        let r = validate_noise_regularity(&det, &k15).unwrap();
        assert_eq!(r.trace, 0.0);
        assert!(r.notes.contains("deterministic"));
    }
}
