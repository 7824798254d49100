//! Two-mode Gaussian description of the time-energy entangled biphoton.
//!
//! Quadrature ordering is (Alice time, Alice frequency, Bob time, Bob
//! frequency) and the vacuum variance is 1/2, so a state is physical when
//! both symplectic eigenvalues are at least 1/2.

use nalgebra::{Matrix2, Matrix4};

use crate::error::{ensure_finite, Error, Result};

/// Tolerance on the `nu >= 1/2` physicality test.
pub const PHYSICALITY_TOL: f64 = 1e-9;
/// Tolerance used when checking the eta/epsilon/xi constraint.
pub const CONSTRAINT_TOL: f64 = 1e-9;
const SYMMETRY_TOL: f64 = 1e-12;
const DIMENSION_REL_TOL: f64 = 1e-9;

/// Biphoton source description.
///
/// All times share one arbitrary unit; the rest of the crate uses
/// `sigma_cor` as that unit by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    sigma_coh: f64,
    sigma_cor: f64,
    k: f64,
    dimension: f64,
}

impl SourceParams {
    /// Builds a source and checks that `dimension == sigma_coh / sigma_cor`.
    pub fn new(sigma_coh: f64, sigma_cor: f64, k: f64, dimension: f64) -> Result<Self> {
        ensure_finite("sigma_coh", sigma_coh)?;
        ensure_finite("sigma_cor", sigma_cor)?;
        ensure_finite("k", k)?;
        ensure_finite("dimension", dimension)?;
        if sigma_cor <= 0.0 {
            return Err(Error::invalid("sigma_cor", "must be positive"));
        }
        if sigma_coh <= sigma_cor {
            return Err(Error::invalid(
                "sigma_coh",
                format!("must exceed sigma_cor ({sigma_coh} <= {sigma_cor})"),
            ));
        }
        if k == 0.0 {
            return Err(Error::invalid("k", "must be non-zero"));
        }
        let ratio = sigma_coh / sigma_cor;
        if ((ratio - dimension) / ratio).abs() > DIMENSION_REL_TOL {
            return Err(Error::invalid(
                "dimension",
                format!("must equal sigma_coh/sigma_cor = {ratio}, got {dimension}"),
            ));
        }
        Ok(Self {
            sigma_coh,
            sigma_cor,
            k,
            dimension,
        })
    }

    /// Source of dimension `d` with `sigma_coh = d * sigma_cor`.
    pub fn with_dimension(dimension: f64, sigma_cor: f64, k: f64) -> Result<Self> {
        ensure_finite("dimension", dimension)?;
        if dimension <= 1.0 {
            return Err(Error::invalid("dimension", "must exceed 1"));
        }
        Self::new(dimension * sigma_cor, sigma_cor, k, dimension)
    }

    pub fn sigma_coh(&self) -> f64 {
        self.sigma_coh
    }

    pub fn sigma_cor(&self) -> f64 {
        self.sigma_cor
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn dimension(&self) -> f64 {
        self.dimension
    }

    /// `u = 16 sigma_coh^2`.
    pub fn u(&self) -> f64 {
        16.0 * self.sigma_coh * self.sigma_coh
    }

    /// `v = 4 sigma_cor^2`.
    pub fn v(&self) -> f64 {
        4.0 * self.sigma_cor * self.sigma_cor
    }

    /// Variance of one party's arrival time, the time-time entry of the
    /// local blocks.
    pub fn arrival_time_variance(&self) -> f64 {
        (self.u() + self.v()) / 16.0
    }

    /// Closed-form local symplectic eigenvalue `(u+v) / (4 sqrt(uv))`.
    pub fn local_symplectic_eigenvalue(&self) -> f64 {
        let (u, v) = (self.u(), self.v());
        (u + v) / (4.0 * (u * v).sqrt())
    }
}

/// Eavesdropper noise insertion.
///
/// No invariants are enforced on construction; admissibility is a separate
/// question answered by [`check_attack_admissible`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseParams {
    /// Fractional decrease of the Alice-Bob correlations.
    pub eta: f64,
    /// Excess noise on Bob's block.
    pub epsilon: f64,
    /// Relative increase of the squared correlation time.
    pub xi: f64,
}

impl NoiseParams {
    pub const NONE: NoiseParams = NoiseParams {
        eta: 0.0,
        epsilon: 0.0,
        xi: 0.0,
    };

    /// Noise pair on the constraint surface: epsilon follows from eta and xi.
    pub fn on_constraint(eta: f64, xi: f64, dimension: f64) -> Result<Self> {
        Ok(Self {
            eta,
            epsilon: epsilon_from_eta(eta, xi, dimension)?,
            xi,
        })
    }
}

/// Symmetric, positive definite 4x4 covariance matrix over two modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix(Matrix4<f64>);

impl CovarianceMatrix {
    /// Validates symmetry and positive definiteness.
    pub fn new(entries: Matrix4<f64>) -> Result<Self> {
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::Covariance("non-finite entry".into()));
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                if (entries[(i, j)] - entries[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::Covariance(format!(
                        "not symmetric at ({i}, {j}): {} vs {}",
                        entries[(i, j)],
                        entries[(j, i)]
                    )));
                }
            }
        }
        if entries.cholesky().is_none() {
            return Err(Error::Covariance("not positive definite".into()));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn alice_block(&self) -> Matrix2<f64> {
        self.0.fixed_view::<2, 2>(0, 0).into_owned()
    }

    pub fn bob_block(&self) -> Matrix2<f64> {
        self.0.fixed_view::<2, 2>(2, 2).into_owned()
    }

    /// Alice-Bob correlation block (rows Alice, columns Bob).
    pub fn cross_block(&self) -> Matrix2<f64> {
        self.0.fixed_view::<2, 2>(0, 2).into_owned()
    }

    fn from_blocks(a: Matrix2<f64>, c: Matrix2<f64>, b: Matrix2<f64>) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
        m.fixed_view_mut::<2, 2>(0, 2).copy_from(&c);
        m.fixed_view_mut::<2, 2>(2, 0).copy_from(&c.transpose());
        m.fixed_view_mut::<2, 2>(2, 2).copy_from(&b);
        m
    }

    /// True when both symplectic eigenvalues clear `1/2 - PHYSICALITY_TOL`.
    pub fn is_physical(&self) -> Result<bool> {
        let (_, low) = symplectic_eigenvalues(self)?;
        Ok(low >= 0.5 - PHYSICALITY_TOL)
    }
}

/// Noise-free local and correlation blocks `(gamma_AA, gamma_AB, gamma_BB)`.
pub fn source_blocks(source: &SourceParams) -> (Matrix2<f64>, Matrix2<f64>, Matrix2<f64>) {
    let (u, v, k) = (source.u(), source.v(), source.k());
    let sum = u + v;
    let diff = u - v;
    let freq = (4.0 * k * k + u * v) / (4.0 * k * k * u * v);
    let aa = Matrix2::new(sum / 16.0, -sum / (8.0 * k), -sum / (8.0 * k), sum * freq);
    let ab = Matrix2::new(
        diff / 16.0,
        diff / (8.0 * k),
        -diff / (8.0 * k),
        -diff * freq,
    );
    let bb = Matrix2::new(sum / 16.0, sum / (8.0 * k), sum / (8.0 * k), sum * freq);
    (aa, ab, bb)
}

/// Covariance matrix with correlations scaled by `1 - eta` and Bob's block
/// scaled by `1 + epsilon`.
pub fn build_covariance(source: &SourceParams, noise: &NoiseParams) -> Result<CovarianceMatrix> {
    ensure_finite("eta", noise.eta)?;
    ensure_finite("epsilon", noise.epsilon)?;
    if source.k() == 0.0 {
        return Err(Error::invalid("k", "must be non-zero"));
    }
    let (aa, ab, bb) = source_blocks(source);
    let m = CovarianceMatrix::from_blocks(aa, ab * (1.0 - noise.eta), bb * (1.0 + noise.epsilon));
    CovarianceMatrix::new(m)
}

/// Lower-triangular symplectic map `S` with `S block S^T = sqrt(det) I`.
///
/// Lower-triangular keeps the time quadrature proportional to itself, so a
/// time measurement in the new frame is the same measurement.
fn normalizing_map(block: &Matrix2<f64>) -> Result<(Matrix2<f64>, f64)> {
    let a = block[(0, 0)];
    if a <= 0.0 {
        return Err(Error::Covariance("non-positive time variance".into()));
    }
    let l11 = a.sqrt();
    let l21 = block[(1, 0)] / l11;
    let schur = block[(1, 1)] - l21 * l21;
    if schur <= 0.0 {
        return Err(Error::Covariance(
            "local block not positive definite".into(),
        ));
    }
    let l22 = schur.sqrt();
    let nu = l11 * l22;
    let scale = nu.sqrt();
    // inverse of [[l11, 0], [l21, l22]]
    let inv = Matrix2::new(1.0 / l11, 0.0, -l21 / (l11 * l22), 1.0 / l22);
    Ok((inv * scale, nu))
}

/// Covariance matrix in a local symplectic frame where both diagonal blocks
/// are multiples of the identity.
struct NormalForm {
    nu_a: f64,
    nu_b: f64,
    cross: Matrix2<f64>,
}

impl NormalForm {
    fn of(gamma: &CovarianceMatrix) -> Result<Self> {
        let (sa, nu_a) = normalizing_map(&gamma.alice_block())?;
        let (sb, nu_b) = normalizing_map(&gamma.bob_block())?;
        let cross = sa * gamma.cross_block() * sb.transpose();
        Ok(Self { nu_a, nu_b, cross })
    }

    fn spectrum(&self) -> (f64, f64) {
        let (a, b) = (self.nu_a, self.nu_b);
        let c = &self.cross;
        let det_c = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
        let frob = c.iter().map(|x| x * x).sum::<f64>();
        let delta = a * a + b * b + 2.0 * det_c;
        // (Delta^2 - 4 det Gamma) regrouped as a sum of non-negative terms
        // where possible, so near-degenerate spectra keep full precision.
        let trace_like = (c[(0, 0)] + c[(1, 1)]).powi(2) + (c[(0, 1)] - c[(1, 0)]).powi(2);
        let disc =
            ((a - b).powi(2) * ((a + b).powi(2) + 4.0 * det_c) + 4.0 * a * b * trace_like).max(0.0);
        let det_gamma = (a * b) * (a * b) - a * b * frob + det_c * det_c;
        let root = disc.sqrt();
        let hi_sq = 0.5 * (delta + root);
        let lo_sq = if root < 0.5 * delta {
            0.5 * (delta - root)
        } else {
            det_gamma / hi_sq
        };
        (hi_sq.max(0.0).sqrt(), lo_sq.max(0.0).sqrt())
    }

    /// `sqrt(det)` of Bob's block after an ideal measurement of Alice's time
    /// quadrature.
    fn conditional_bob_nu(&self) -> f64 {
        let row = [self.cross[(0, 0)], self.cross[(0, 1)]];
        let norm_sq = row[0] * row[0] + row[1] * row[1];
        let b = self.nu_b;
        (b * (b - norm_sq / self.nu_a)).max(0.0).sqrt()
    }
}

/// Symplectic eigenvalues of a two-mode covariance matrix, descending.
pub fn symplectic_eigenvalues(gamma: &CovarianceMatrix) -> Result<(f64, f64)> {
    Ok(NormalForm::of(gamma)?.spectrum())
}

/// Symplectic eigenvalue of a single-mode block, `sqrt(det)`.
pub fn single_mode_symplectic_eigenvalue(block: &Matrix2<f64>) -> Result<f64> {
    if (block[(0, 1)] - block[(1, 0)]).abs() > SYMMETRY_TOL {
        return Err(Error::Covariance("block not symmetric".into()));
    }
    let det = block.determinant();
    if block[(0, 0)] <= 0.0 || det <= 0.0 {
        return Err(Error::Covariance("block not positive definite".into()));
    }
    Ok(det.sqrt())
}

/// Bob's covariance after Alice ideally measures her time quadrature:
/// `gamma_BB - gamma_BA (P gamma_AA P)^+ gamma_AB` with `P = diag(1, 0)`.
pub fn conditional_covariance_after_time_measurement(
    gamma: &CovarianceMatrix,
) -> Result<Matrix2<f64>> {
    let a = gamma.alice_block();
    let time_var = a[(0, 0)];
    if time_var <= 0.0 {
        return Err(Error::Covariance(
            "Alice time variance must be positive".into(),
        ));
    }
    let c = gamma.cross_block();
    let row = c.row(0).transpose();
    Ok(gamma.bob_block() - row * row.transpose() / time_var)
}

/// Entropy-relevant pieces of a covariance matrix: its symplectic spectrum
/// and the conditional symplectic eigenvalue of Bob given Alice's time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropicSpectrum {
    pub joint: (f64, f64),
    pub bob_given_alice_time: f64,
}

pub fn entropic_spectrum(gamma: &CovarianceMatrix) -> Result<EntropicSpectrum> {
    let nf = NormalForm::of(gamma)?;
    Ok(EntropicSpectrum {
        joint: nf.spectrum(),
        bob_given_alice_time: nf.conditional_bob_nu(),
    })
}

/// Noise-dependent invariants of [`build_covariance`] in terms of
/// `w = 4uv/(u+v)^2` and `r = (u-v)/(u+v)`.
///
/// After local shears the covariance splits into independent time and
/// frequency pairs; every difference that cancels in the matrix route is a
/// sum of non-negative terms here, so large dimensions keep full precision.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StructuredForm {
    w: f64,
    r2: f64,
    eta: f64,
    epsilon: f64,
}

impl StructuredForm {
    fn new(source: &SourceParams, noise: &NoiseParams) -> Result<Self> {
        ensure_finite("eta", noise.eta)?;
        ensure_finite("epsilon", noise.epsilon)?;
        let (u, v) = (source.u(), source.v());
        let s = u + v;
        let r = (u - v) / s;
        let f = Self {
            w: 4.0 * (u / s) * (v / s),
            r2: r * r,
            eta: noise.eta,
            epsilon: noise.epsilon,
        };
        if 1.0 + f.epsilon <= 0.0 || f.q() <= 0.0 {
            return Err(Error::Covariance("not positive definite".into()));
        }
        Ok(f)
    }

    /// `(1+eps)(u+v)^2 - (1-eta)^2 (u-v)^2`, over `(u+v)^2`.
    fn q(&self) -> f64 {
        self.w + self.epsilon + self.eta * (2.0 - self.eta) * self.r2
    }

    fn spectrum(&self) -> (f64, f64) {
        let (w, e, h) = (self.w, self.epsilon, self.eta * (2.0 - self.eta) * self.r2);
        let sqrt_det = self.q() / (4.0 * w);
        let delta = (2.0 * w + e * (2.0 + e) + 2.0 * h) / (4.0 * w);
        let root = e.abs() * (4.0 * w + e * (4.0 + e) + 4.0 * h).max(0.0).sqrt() / (4.0 * w);
        let hi_sq = 0.5 * (delta + root);
        (hi_sq.sqrt(), sqrt_det / hi_sq.sqrt())
    }

    fn conditional_bob_nu(&self) -> f64 {
        (self.q() * (1.0 + self.epsilon) / (4.0 * self.w)).sqrt()
    }

    fn timing_information(&self) -> f64 {
        0.5 * ((1.0 + self.epsilon) / self.q()).log2()
    }
}

/// [`entropic_spectrum`] of `build_covariance(source, noise)`, evaluated in
/// closed form.
pub fn noise_spectrum(source: &SourceParams, noise: &NoiseParams) -> Result<EntropicSpectrum> {
    let f = StructuredForm::new(source, noise)?;
    Ok(EntropicSpectrum {
        joint: f.spectrum(),
        bob_given_alice_time: f.conditional_bob_nu(),
    })
}

/// [`timing_information`] of `build_covariance(source, noise)`, evaluated in
/// closed form.
pub fn noise_timing_information(source: &SourceParams, noise: &NoiseParams) -> Result<f64> {
    Ok(StructuredForm::new(source, noise)?.timing_information())
}

/// Excess noise implied by eta and the observed correlation-time increase.
pub fn epsilon_from_eta(eta: f64, xi: f64, dimension: f64) -> Result<f64> {
    ensure_finite("eta", eta)?;
    ensure_finite("xi", xi)?;
    ensure_finite("dimension", dimension)?;
    if dimension <= 1.0 {
        return Err(Error::invalid("dimension", "must exceed 1"));
    }
    let d2 = dimension * dimension;
    Ok((-2.0 * eta * (d2 - 0.25) + xi) / (d2 + 0.25))
}

/// Largest eta on the constraint surface that keeps epsilon non-negative.
pub fn eta_upper_bound(xi: f64, dimension: f64) -> f64 {
    xi / (2.0 * (dimension * dimension - 0.25))
}

/// Mutual information, in bits, of the jitter-free arrival times described
/// by the time-time entries of `gamma`.
pub fn timing_information(gamma: &CovarianceMatrix) -> f64 {
    let m = gamma.entries();
    let (va, vb, c) = (m[(0, 0)], m[(2, 2)], m[(0, 2)]);
    let residual = va * vb - c * c;
    if residual <= 0.0 {
        return f64::INFINITY;
    }
    0.5 * (va * vb / residual).log2()
}

/// Individual admissibility conditions on an attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    /// Eve cannot raise Alice and Bob's timing information.
    DataProcessing,
    /// Both symplectic eigenvalues at least 1/2.
    Physical,
    /// eta and epsilon non-negative.
    DegradeOnly,
    /// epsilon consistent with eta and xi.
    Constraint,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Condition::DataProcessing => "condition (i): data processing",
            Condition::Physical => "condition (ii): symplectic eigenvalues >= 1/2",
            Condition::DegradeOnly => "condition (iii): eta, epsilon >= 0",
            Condition::Constraint => "eta-epsilon-xi constraint",
        };
        f.write_str(s)
    }
}

/// Outcome of [`check_attack_admissible`]; empty `violations` means admissible.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Admissibility {
    pub violations: Vec<Condition>,
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, condition: Condition) -> bool {
        self.violations.contains(&condition)
    }

    pub fn reason(&self) -> Option<String> {
        if self.violations.is_empty() {
            None
        } else {
            Some(
                self.violations
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            )
        }
    }
}

/// Reports every admissibility condition the attack violates.
pub fn check_attack_admissible(source: &SourceParams, noise: &NoiseParams) -> Admissibility {
    let mut violations = Vec::new();
    if !(noise.eta >= 0.0 && noise.epsilon >= 0.0 && noise.xi >= 0.0) {
        violations.push(Condition::DegradeOnly);
    }
    match epsilon_from_eta(noise.eta, noise.xi, source.dimension()) {
        Ok(expected) if (expected - noise.epsilon).abs() <= CONSTRAINT_TOL => {}
        _ => violations.push(Condition::Constraint),
    }
    match noise_spectrum(source, noise) {
        Ok(spec) if spec.joint.1 >= 0.5 - PHYSICALITY_TOL => {}
        _ => violations.push(Condition::Physical),
    }
    let baseline = noise_timing_information(source, &NoiseParams::NONE).unwrap_or(f64::INFINITY);
    let info = noise_timing_information(source, noise).unwrap_or(f64::INFINITY);
    if info > baseline + 1e-12 {
        violations.push(Condition::DataProcessing);
    }
    Admissibility { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn src10() -> SourceParams {
        SourceParams::new(10.0, 1.0, 1.0, 10.0).unwrap()
    }

    #[test]
    fn alice_block_matches_direct_substitution() {
        let g = build_covariance(&src10(), &NoiseParams::NONE).unwrap();
        let a = g.alice_block();
        assert_relative_eq!(a[(0, 0)], 100.25, max_relative = 1e-15);
        assert_relative_eq!(a[(0, 1)], -200.5, max_relative = 1e-15);
        assert_relative_eq!(a[(1, 1)], 1604.0 * 6404.0 / 25600.0, max_relative = 1e-15);
        assert_relative_eq!(a[(1, 1)], 401.250625, max_relative = 1e-15);
    }

    #[test]
    fn eta_halves_cross_blocks_only() {
        let s = src10();
        let g0 = build_covariance(&s, &NoiseParams::NONE).unwrap();
        let noise = NoiseParams {
            eta: 0.5,
            epsilon: 0.0,
            xi: 0.0,
        };
        let g = build_covariance(&s, &noise).unwrap();
        assert_eq!(g.cross_block(), g0.cross_block() * 0.5);
        assert_eq!(g.alice_block(), g0.alice_block());
        assert_eq!(g.bob_block(), g0.bob_block());
    }

    #[test]
    fn local_determinant_closed_form() {
        let g = build_covariance(&src10(), &NoiseParams::NONE).unwrap();
        let det = g.alice_block().determinant();
        assert_relative_eq!(det, 1604.0f64.powi(2) / 102400.0, max_relative = 1e-12);
        assert_relative_eq!(det, 25.1252, max_relative = 1e-5);
    }

    #[test]
    fn vacuum_spectrum() {
        let g = CovarianceMatrix::new(Matrix4::identity() * 0.5).unwrap();
        let (hi, lo) = symplectic_eigenvalues(&g).unwrap();
        assert_relative_eq!(hi, 0.5, epsilon = 1e-15);
        assert_relative_eq!(lo, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn single_mode_eigenvalue_two_ways() {
        let s = src10();
        let g = build_covariance(&s, &NoiseParams::NONE).unwrap();
        let nu = single_mode_symplectic_eigenvalue(&g.alice_block()).unwrap();
        assert_relative_eq!(nu, 5.0125, max_relative = 1e-12);
        assert_relative_eq!(nu, s.local_symplectic_eigenvalue(), max_relative = 1e-12);
    }

    #[test]
    fn noise_free_state_is_pure() {
        let g = build_covariance(&src10(), &NoiseParams::NONE).unwrap();
        let (hi, lo) = symplectic_eigenvalues(&g).unwrap();
        assert!(lo >= 0.5 - PHYSICALITY_TOL);
        assert!((hi - 0.5).abs() < 1e-9, "hi = {hi}");
        assert!((lo - 0.5).abs() < 1e-9, "lo = {lo}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SourceParams::new(10.0, 1.0, 0.0, 10.0).is_err());
        assert!(SourceParams::new(1.0, 2.0, 1.0, 0.5).is_err());
        assert!(SourceParams::new(10.0, 1.0, 1.0, 9.0).is_err());
        let noise = NoiseParams {
            eta: f64::NAN,
            ..NoiseParams::NONE
        };
        assert!(build_covariance(&src10(), &noise).is_err());
        let mut m = Matrix4::identity();
        m[(0, 1)] = 0.1;
        assert!(CovarianceMatrix::new(m).is_err());
        assert!(CovarianceMatrix::new(-Matrix4::<f64>::identity()).is_err());
    }

    #[test]
    fn conditioning_uncorrelated_is_noop() {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<2, 2>(0, 0)
            .copy_from(&Matrix2::new(2.0, 0.3, 0.3, 1.0));
        m.fixed_view_mut::<2, 2>(2, 2)
            .copy_from(&Matrix2::new(3.0, -0.2, -0.2, 0.7));
        let g = CovarianceMatrix::new(m).unwrap();
        let cond = conditional_covariance_after_time_measurement(&g).unwrap();
        assert_eq!(cond, g.bob_block());
    }

    #[test]
    fn conditioning_reduces_uncertainty() {
        let s = src10();
        let g = build_covariance(&s, &NoiseParams::NONE).unwrap();
        let cond = conditional_covariance_after_time_measurement(&g).unwrap();
        let nu = cond.determinant().sqrt();
        assert!(nu < 5.0125);
        // normal-form route agrees with the direct formula
        let es = entropic_spectrum(&g).unwrap();
        assert_relative_eq!(es.bob_given_alice_time, nu, max_relative = 1e-9);
    }

    #[test]
    fn conditioning_converges_as_correlations_vanish() {
        let s = src10();
        let g = build_covariance(
            &s,
            &NoiseParams {
                eta: 1.0 - 1e-9,
                ..NoiseParams::NONE
            },
        )
        .unwrap();
        let cond = conditional_covariance_after_time_measurement(&g).unwrap();
        let bb = g.bob_block();
        for (x, y) in cond.iter().zip(bb.iter()) {
            assert_relative_eq!(*x, *y, max_relative = 1e-12);
        }
    }

    #[test]
    fn epsilon_from_eta_examples() {
        let e = epsilon_from_eta(0.0, 0.21, 8.0).unwrap();
        assert_relative_eq!(e, 0.21 / 64.25, max_relative = 1e-15);
        assert_eq!(epsilon_from_eta(0.0, 0.0, 8.0).unwrap(), 0.0);
        let eta = eta_upper_bound(0.21, 8.0);
        assert_relative_eq!(eta, 0.21 / 127.5, max_relative = 1e-15);
        assert!(epsilon_from_eta(eta, 0.21, 8.0).unwrap().abs() < 1e-18);
        assert!(epsilon_from_eta(0.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn admissibility_examples() {
        let s = SourceParams::with_dimension(8.0, 1.0, 1.0).unwrap();
        assert!(check_attack_admissible(&s, &NoiseParams::NONE).is_admissible());
        let bad = NoiseParams {
            eta: -0.1,
            epsilon: 0.0,
            xi: 0.0,
        };
        let verdict = check_attack_admissible(&s, &bad);
        assert!(verdict.violates(Condition::DegradeOnly));
        assert!(verdict.reason().unwrap().contains("condition (iii)"));
    }

    #[test]
    fn increasing_correlation_violates_data_processing() {
        let s = SourceParams::with_dimension(8.0, 1.0, 1.0).unwrap();
        let noise = NoiseParams {
            eta: -1e-4,
            epsilon: 0.0,
            xi: 0.0,
        };
        let verdict = check_attack_admissible(&s, &noise);
        assert!(
            verdict.violates(Condition::DataProcessing) || verdict.violates(Condition::Physical)
        );
    }

    #[test]
    fn closed_form_spectrum_matches_matrix_route() {
        for d in [2.0, 4.0, 8.0] {
            let src = SourceParams::with_dimension(d, 1.0, 1.3).unwrap();
            for (eta, epsilon) in [(0.0, 0.0), (0.01, 0.2), (0.3, 0.05), (0.0, 1.5), (0.9, 0.0)] {
                let noise = NoiseParams {
                    eta,
                    epsilon,
                    xi: 0.0,
                };
                let fast = noise_spectrum(&src, &noise).unwrap();
                let slow = entropic_spectrum(&build_covariance(&src, &noise).unwrap()).unwrap();
                assert_relative_eq!(fast.joint.0, slow.joint.0, max_relative = 1e-9);
                assert_relative_eq!(fast.joint.1, slow.joint.1, max_relative = 1e-9);
                assert_relative_eq!(
                    fast.bob_given_alice_time,
                    slow.bob_given_alice_time,
                    max_relative = 1e-9
                );
                let g = build_covariance(&src, &noise).unwrap();
                assert_relative_eq!(
                    noise_timing_information(&src, &noise).unwrap(),
                    timing_information(&g),
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn pure_state_stays_pure_at_large_dimension() {
        for d in [16.0, 32.0, 64.0, 1024.0] {
            let src = SourceParams::with_dimension(d, 1.0, 1.0).unwrap();
            let spec = noise_spectrum(&src, &NoiseParams::NONE).unwrap();
            assert!((spec.joint.0 - 0.5).abs() < 1e-14);
            assert!((spec.joint.1 - 0.5).abs() < 1e-14);
            assert!((spec.bob_given_alice_time - 0.5).abs() < 1e-14);
            assert!(check_attack_admissible(&src, &NoiseParams::NONE).is_admissible());
        }
    }
}
