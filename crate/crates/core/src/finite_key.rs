//! Finite-size bookkeeping: the security budget, basis sifting, the
//! confidence bound on the correlation time and the finite-key rate.

use crate::error::{ensure_finite, Error, Result};
use crate::special::erfc_inverse;

/// Relative tolerance on the budget identity `eps_s = sum of parts`.
pub const BUDGET_TOL: f64 = 1e-12;
/// Smallest failure probability the optimizer will assign to any stage.
pub const EPS_FLOOR: f64 = 1e-15;

/// Allocation of the total failure probability across protocol stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityBudget {
    pub eps_s: f64,
    pub eps_ec: f64,
    pub eps_pa: f64,
    pub eps_pe: f64,
    pub eps_bar: f64,
}

impl SecurityBudget {
    pub fn new(eps_s: f64, eps_ec: f64, eps_pa: f64, eps_pe: f64, eps_bar: f64) -> Result<Self> {
        let b = Self {
            eps_s,
            eps_ec,
            eps_pa,
            eps_pe,
            eps_bar,
        };
        b.validate()?;
        Ok(b)
    }

    /// Budget whose `eps_bar` takes whatever `eps_s` leaves after the other stages.
    pub fn with_remainder(eps_s: f64, eps_ec: f64, eps_pa: f64, eps_pe: f64) -> Result<Self> {
        let eps_bar = eps_s - eps_ec - eps_pa - eps_pe;
        if !(eps_bar > 0.0) {
            return Err(Error::invalid(
                "budget",
                format!(
                    "eps_pa + eps_pe = {} leaves nothing for eps_bar",
                    eps_pa + eps_pe
                ),
            ));
        }
        Self::new(eps_s, eps_ec, eps_pa, eps_pe, eps_bar)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_s", self.eps_s),
            ("eps_ec", self.eps_ec),
            ("eps_pa", self.eps_pa),
            ("eps_pe", self.eps_pe),
            ("eps_bar", self.eps_bar),
        ] {
            ensure_finite(name, v)?;
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(name, format!("must lie in (0, 1), got {v}")));
            }
        }
        let sum = self.eps_ec + self.eps_pa + self.eps_pe + self.eps_bar;
        if (sum - self.eps_s).abs() > BUDGET_TOL * self.eps_s {
            return Err(Error::invalid(
                "budget",
                format!("components sum to {sum}, expected eps_s = {}", self.eps_s),
            ));
        }
        Ok(())
    }

    /// Free share left for privacy amplification, estimation and smoothing.
    pub fn free(&self) -> f64 {
        self.eps_s - self.eps_ec
    }
}

/// Sifting bookkeeping for `total` post-selected coincidences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameAccounting {
    /// Post-selected coincidences, `N`.
    pub total: u64,
    /// Arrival-time basis probability, stored as bits so the struct stays `Eq`.
    p_bits: u64,
    /// Both parties in the arrival-time basis.
    pub n: u64,
    /// Both parties in the dispersed basis.
    pub m: u64,
}

impl FrameAccounting {
    pub fn p(&self) -> f64 {
        f64::from_bits(self.p_bits)
    }

    /// Key-generation budget left after sacrificing `m` arrival-time frames.
    pub fn key_budget(&self) -> u64 {
        self.n.saturating_sub(self.m)
    }
}

/// Floor that forgives the last few ulps, so `0.1^2 * 1e6` counts as 10000.
pub(crate) fn floor_count(x: f64) -> u64 {
    let r = x.round();
    if (r - x).abs() <= 8.0 * f64::EPSILON * x.abs() {
        r as u64
    } else {
        x.floor() as u64
    }
}

/// Expected sifted counts `n = floor(p^2 N)`, `m = floor((1-p)^2 N)`.
pub fn sift_counts(total: u64, p: f64) -> Result<FrameAccounting> {
    ensure_finite("p", p)?;
    if !(0.5..1.0).contains(&p) {
        return Err(Error::invalid(
            "p",
            format!("arrival-time basis probability must lie in [1/2, 1), got {p}"),
        ));
    }
    let nf = total as f64;
    let n = floor_count(p * p * nf);
    let q = 1.0 - p;
    let m = floor_count(q * q * nf);
    Ok(FrameAccounting {
        total,
        p_bits: p.to_bits(),
        n,
        m,
    })
}

/// Inputs to the correlation-time confidence bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationInput {
    /// Observed squared correlation time.
    pub sigma_hat_sq: f64,
    /// Squared correlation time of the undisturbed source.
    pub sigma_cor_sq: f64,
    /// Number of estimation samples.
    pub m: u64,
    pub eps_pe: f64,
}

impl EstimationInput {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("sigma_hat_sq", self.sigma_hat_sq)?;
        ensure_finite("sigma_cor_sq", self.sigma_cor_sq)?;
        ensure_finite("eps_pe", self.eps_pe)?;
        if !(self.sigma_cor_sq > 0.0) {
            return Err(Error::invalid("sigma_cor_sq", "must be positive"));
        }
        // Finite samples can land below the source value; only positivity is required.
        if !(self.sigma_hat_sq > 0.0) {
            return Err(Error::invalid("sigma_hat_sq", "must be positive"));
        }
        if self.m < 2 {
            return Err(Error::invalid(
                "m",
                format!("need at least 2 samples, got {}", self.m),
            ));
        }
        if !(self.eps_pe > 0.0 && self.eps_pe < 1.0) {
            return Err(Error::invalid("eps_pe", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn observed_xi(&self) -> f64 {
        self.sigma_hat_sq / self.sigma_cor_sq - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundForm {
    /// Statistical margin only, proportional to the observed ratio.
    Literal,
    /// Observed excess plus the statistical margin.
    #[default]
    Centered,
}

impl std::str::FromStr for BoundForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(BoundForm::Literal),
            "centered" => Ok(BoundForm::Centered),
            _ => Err(Error::invalid(
                "bound_form",
                format!("expected literal|centered, got `{s}`"),
            )),
        }
    }
}

impl std::fmt::Display for BoundForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundForm::Literal => "literal",
            BoundForm::Centered => "centered",
        })
    }
}

/// Largest `xi` compatible with the estimate at confidence `1 - eps_pe`.
pub fn xi_upper_bound(input: &EstimationInput, form: BoundForm) -> Result<f64> {
    xi_upper_bound_scaled(input, form, 1.0)
}

/// [`xi_upper_bound`] with the statistical margin multiplied by `margin_scale`.
///
/// Only validation harnesses should pass anything other than 1.
pub fn xi_upper_bound_scaled(
    input: &EstimationInput,
    form: BoundForm,
    margin_scale: f64,
) -> Result<f64> {
    input.validate()?;
    let ratio = input.sigma_hat_sq / input.sigma_cor_sq;
    let margin = margin_scale * 2.0 / (input.m as f64).sqrt() * erfc_inverse(input.eps_pe)? * ratio;
    Ok(match form {
        BoundForm::Literal => margin,
        BoundForm::Centered => ratio - 1.0 + margin,
    })
}

/// Which sifted count carries the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Accounting {
    /// Key length `n`, prefactor `n/N`.
    #[default]
    Eq2,
    /// Key length `n - m`: the arrival-time frames matching the dispersed
    /// estimation sample are sacrificed as well.
    Strict,
}

impl std::str::FromStr for Accounting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eq2" => Ok(Accounting::Eq2),
            "strict" => Ok(Accounting::Strict),
            _ => Err(Error::invalid(
                "accounting_mode",
                format!("expected eq2|strict, got `{s}`"),
            )),
        }
    }
}

impl std::fmt::Display for Accounting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Accounting::Eq2 => "eq2",
            Accounting::Strict => "strict",
        })
    }
}

/// Finite-key rate in bits per coincidence; `raw` keeps negative values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteKeyRate {
    pub raw: f64,
    pub key_length: u64,
}

impl FiniteKeyRate {
    pub fn clamped(&self) -> f64 {
        self.raw.max(0.0)
    }
}

/// The three finite-size penalties, in bits per key bit, for key length `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corrections {
    pub error_correction: f64,
    pub privacy_amplification: f64,
    pub smooth_entropy: f64,
}

impl Corrections {
    pub fn new(n: f64, budget: &SecurityBudget, dimension: f64) -> Self {
        Self {
            error_correction: (2.0 / budget.eps_ec).log2() / n,
            privacy_amplification: 2.0 * (1.0 / budget.eps_pa).log2() / n,
            smooth_entropy: (2.0 * dimension.log2() + 3.0)
                * ((2.0 / budget.eps_bar).log2() / n).sqrt(),
        }
    }

    pub fn total(&self) -> f64 {
        self.error_correction + self.privacy_amplification + self.smooth_entropy
    }
}

/// Finite-key rate `(n/N) [r_do - corrections(n)]`; with strict accounting
/// the key length is `n - m`.
pub fn finite_key_rate(
    r_do: f64,
    acct: &FrameAccounting,
    budget: &SecurityBudget,
    dimension: f64,
    accounting: Accounting,
) -> Result<FiniteKeyRate> {
    ensure_finite("r_do", r_do)?;
    budget.validate()?;
    if !(dimension > 1.0) {
        return Err(Error::invalid("dimension", "must exceed 1"));
    }
    let key_length = match accounting {
        Accounting::Eq2 => acct.n,
        Accounting::Strict => acct.key_budget(),
    };
    if key_length == 0 {
        return Err(Error::Infeasible(format!(
            "no key material: {key_length} frames left of N = {}",
            acct.total
        )));
    }
    let n = key_length as f64;
    let c = Corrections::new(n, budget, dimension);
    Ok(FiniteKeyRate {
        raw: n / acct.total as f64 * (r_do - c.total()),
        key_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn budget() -> SecurityBudget {
        SecurityBudget::with_remainder(1e-5, 1e-10, 3e-6, 3e-6).unwrap()
    }

    #[test]
    fn sifting_examples() {
        let a = sift_counts(1_000_000, 0.9).unwrap();
        assert_eq!((a.n, a.m), (810_000, 10_000));
        let b = sift_counts(1_000_000, 0.5).unwrap();
        assert_eq!((b.n, b.m, b.key_budget()), (250_000, 250_000, 0));
        let c = sift_counts(0, 0.7).unwrap();
        assert_eq!((c.n, c.m), (0, 0));
        assert!(sift_counts(10, 0.49).is_err());
        assert!(sift_counts(10, 1.0).is_err());
        assert!(sift_counts(10, f64::NAN).is_err());
    }

    #[test]
    fn budget_identity_enforced() {
        assert!(SecurityBudget::new(1e-5, 1e-10, 1e-6, 1e-6, 1e-6).is_err());
        assert!(SecurityBudget::with_remainder(1e-5, 1e-10, 5e-6, 5e-6).is_err());
        assert!(SecurityBudget::new(1e-5, 0.0, 5e-6, 4e-6, 1e-6 - 0.0).is_err());
        let b = budget();
        assert_relative_eq!(
            b.eps_ec + b.eps_pa + b.eps_pe + b.eps_bar,
            1e-5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn bound_examples() {
        let input = EstimationInput {
            sigma_hat_sq: 1.21,
            sigma_cor_sq: 1.0,
            m: 10_000,
            eps_pe: 1e-5,
        };
        let margin = 0.02 * 3.123_413_274_340_875 * 1.21;
        assert_relative_eq!(
            xi_upper_bound(&input, BoundForm::Literal).unwrap(),
            margin,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            xi_upper_bound(&input, BoundForm::Centered).unwrap(),
            0.21 + margin,
            max_relative = 1e-12
        );
        assert!(xi_upper_bound(&EstimationInput { m: 1, ..input }, BoundForm::Literal).is_err());
        let huge = EstimationInput {
            m: u64::MAX,
            ..input
        };
        assert!((xi_upper_bound(&huge, BoundForm::Centered).unwrap() - 0.21).abs() < 1e-6);
    }

    #[test]
    fn correction_terms() {
        let b = SecurityBudget::new(1e-5, 1e-10, 1e-6, 8.9999e-6 - 1e-7, 1e-7).unwrap();
        let c = Corrections::new(1e6, &b, 8.0);
        // log2(2e10) = 34.21928094887362
        assert_relative_eq!(
            c.error_correction,
            3.421_928_094_887_362e-5,
            max_relative = 1e-12
        );
        // 9 sqrt(log2(2e7) / 1e6)
        assert_relative_eq!(
            c.smooth_entropy,
            0.044_323_055_285_044_76,
            max_relative = 1e-12
        );
    }

    #[test]
    fn rate_limits_and_errors() {
        let b = budget();
        let acct = sift_counts(1_000_000, 0.9).unwrap();
        let r = finite_key_rate(2.0, &acct, &b, 8.0, Accounting::Eq2).unwrap();
        assert!(r.raw < 0.81 * 2.0);
        let strict = finite_key_rate(2.0, &acct, &b, 8.0, Accounting::Strict).unwrap();
        assert_eq!(strict.key_length, 800_000);
        assert!(strict.raw < r.raw);
        let empty = sift_counts(1, 0.9).unwrap();
        assert!(finite_key_rate(2.0, &empty, &b, 8.0, Accounting::Eq2).is_err());
        let neg = finite_key_rate(
            0.01,
            &sift_counts(1000, 0.9).unwrap(),
            &b,
            8.0,
            Accounting::Eq2,
        )
        .unwrap();
        assert!(neg.raw < 0.0);
        assert_eq!(neg.clamped(), 0.0);
    }

    #[test]
    fn parse_switches() {
        assert_eq!("literal".parse::<BoundForm>().unwrap(), BoundForm::Literal);
        assert_eq!("strict".parse::<Accounting>().unwrap(), Accounting::Strict);
        assert!("Centered".parse::<BoundForm>().is_err());
    }
}
