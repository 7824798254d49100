//! Seedable Monte Carlo model of post-selected coincidences, used to check
//! the correlation-time confidence bound and the Shannon-information model.
//!
//! Every trial draws from its own ChaCha8 stream selected by
//! `(seed, trial index)`, so results do not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channel::{link_statistics, ChannelParams, DetectorParams, LinkStatistics};
use crate::error::{ensure_finite, Error, Result};
use crate::finite_key::{xi_upper_bound_scaled, BoundForm, EstimationInput};
use crate::gaussian::SourceParams;
use crate::info::{plug_in_information, shannon_information_with, wrap_to_frame, ShannonModel};

/// Fewest samples accepted by [`empirical_mutual_information`].
pub const MIN_MI_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub trials: usize,
    pub frames_per_trial: usize,
    pub source: SourceParams,
    pub detector: DetectorParams,
    pub link: LinkStatistics,
    pub true_xi: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::invalid("trials", "need at least 1"));
        }
        if self.frames_per_trial < 2 {
            return Err(Error::invalid("frames_per_trial", "need at least 2"));
        }
        ensure_finite("true_xi", self.true_xi)?;
        if self.true_xi < 0.0 {
            return Err(Error::invalid("true_xi", "must be non-negative"));
        }
        self.detector.validate()?;
        LinkStatistics::from_fractions(
            self.link.signal_fraction,
            self.link.accidental_mix,
            self.link.frame_duration,
        )?;
        Ok(())
    }

    /// Squared correlation time the sampler actually uses.
    pub fn true_sigma_sq(&self) -> f64 {
        (1.0 + self.true_xi) * self.source.sigma_cor() * self.source.sigma_cor()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Signal,
    Accidental,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coincidence {
    pub t_a: f64,
    pub t_b: f64,
    pub kind: Kind,
}

/// Random stream of one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

struct Sampler {
    sigma_t: f64,
    sigma_z: f64,
    jitter: f64,
    frame: f64,
    signal_fraction: f64,
    /// Cumulative accidental mix: alice-signal/bob-dark, then alice-dark/bob-signal.
    mix_cdf: [f64; 2],
}

impl Sampler {
    fn new(config: &SimConfig, with_jitter: bool) -> Self {
        let m = config.link.accidental_mix;
        Self {
            sigma_t: config.source.arrival_time_variance().sqrt(),
            sigma_z: config.true_sigma_sq().sqrt(),
            jitter: if with_jitter {
                config.detector.jitter_rms
            } else {
                0.0
            },
            frame: config.link.frame_duration,
            signal_fraction: config.link.signal_fraction,
            mix_cdf: [
                m.alice_signal_bob_dark,
                m.alice_signal_bob_dark + m.alice_dark_bob_signal,
            ],
        }
    }

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    fn jitter(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.jitter > 0.0 {
            self.jitter * Self::normal(rng)
        } else {
            0.0
        }
    }

    fn alice(&self, t: f64, rng: &mut ChaCha8Rng) -> f64 {
        t + self.jitter(rng)
    }

    fn bob(&self, t: f64, rng: &mut ChaCha8Rng) -> f64 {
        t + self.sigma_z * Self::normal(rng) + self.jitter(rng)
    }

    fn uniform(&self, rng: &mut ChaCha8Rng) -> f64 {
        (rng.random::<f64>() - 0.5) * self.frame
    }

    fn signal(&self, rng: &mut ChaCha8Rng) -> Coincidence {
        let t = self.sigma_t * Self::normal(rng);
        Coincidence {
            t_a: self.alice(t, rng),
            t_b: self.bob(t, rng),
            kind: Kind::Signal,
        }
    }

    fn frame_sample(&self, rng: &mut ChaCha8Rng) -> Coincidence {
        if rng.random::<f64>() < self.signal_fraction {
            return self.signal(rng);
        }
        let u = rng.random::<f64>();
        let (t_a, t_b) = if u < self.mix_cdf[0] {
            let t = self.sigma_t * Self::normal(rng);
            (self.alice(t, rng), self.uniform(rng))
        } else if u < self.mix_cdf[1] {
            let t = self.sigma_t * Self::normal(rng);
            (self.uniform(rng), self.bob(t, rng))
        } else {
            (self.uniform(rng), self.uniform(rng))
        };
        Coincidence {
            t_a,
            t_b,
            kind: Kind::Accidental,
        }
    }
}

/// All `trials * frames_per_trial` frames, trial by trial.
pub fn sample_coincidences(config: &SimConfig) -> Result<Vec<Coincidence>> {
    config.validate()?;
    let sampler = Sampler::new(config, true);
    let per_trial: Vec<Vec<Coincidence>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(config.seed, trial as u64);
            (0..config.frames_per_trial)
                .map(|_| sampler.frame_sample(&mut rng))
                .collect()
        })
        .collect();
    Ok(per_trial.concat())
}

/// Unbiased residual variance of `t_b` regressed on `t_a`.
pub fn estimate_sigma_prime(samples: &[Coincidence]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid(
            "samples",
            format!("need at least 2, got {n}"),
        ));
    }
    let nf = n as f64;
    let (mut ma, mut mb) = (0.0, 0.0);
    for s in samples {
        ma += s.t_a;
        mb += s.t_b;
    }
    ma /= nf;
    mb /= nf;
    let (mut saa, mut sab, mut sbb) = (0.0, 0.0, 0.0);
    for s in samples {
        let (da, db) = (s.t_a - ma, s.t_b - mb);
        saa += da * da;
        sab += da * db;
        sbb += db * db;
    }
    let rss = if saa > 0.0 {
        sbb - sab * sab / saa
    } else {
        sbb
    };
    let dof = if n > 2 { nf - 2.0 } else { 1.0 };
    Ok((rss / dof).max(0.0))
}

/// Correlation-time estimate of every trial from jitter-free signal frames.
pub fn trial_estimates(config: &SimConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let sampler = Sampler::new(config, false);
    (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(config.seed, trial as u64);
            let frames: Vec<Coincidence> = (0..config.frames_per_trial)
                .map(|_| sampler.signal(&mut rng))
                .collect();
            estimate_sigma_prime(&frames)
        })
        .collect()
}

/// Fraction of trials whose bound on `xi` falls below the true value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub trials: usize,
    pub violations: usize,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        self.violations as f64 / self.trials as f64
    }

    /// Violation fraction allowed at three binomial standard errors.
    pub fn allowance(trials: usize, eps_pe: f64) -> f64 {
        eps_pe + 3.0 * (eps_pe * (1.0 - eps_pe) / trials as f64).sqrt()
    }
}

/// Coverage of precomputed trial estimates; `margin_scale` multiplies the
/// statistical margin and is 1 outside validation harnesses.
pub fn coverage_from_estimates(
    estimates: &[f64],
    config: &SimConfig,
    eps_pe: f64,
    form: BoundForm,
    margin_scale: f64,
) -> Result<Coverage> {
    let s2 = config.source.sigma_cor() * config.source.sigma_cor();
    let mut violations = 0;
    for &est in estimates {
        let input = EstimationInput {
            // a degenerate trial estimate still yields a (violating) bound
            sigma_hat_sq: est.max(f64::MIN_POSITIVE),
            sigma_cor_sq: s2,
            m: config.frames_per_trial as u64,
            eps_pe,
        };
        if config.true_xi > xi_upper_bound_scaled(&input, form, margin_scale)? {
            violations += 1;
        }
    }
    Ok(Coverage {
        trials: estimates.len(),
        violations,
    })
}

/// Empirical violation rate of the confidence bound at level `1 - eps_pe`.
pub fn coverage_test(config: &SimConfig, eps_pe: f64, form: BoundForm) -> Result<Coverage> {
    coverage_test_scaled(config, eps_pe, form, 1.0)
}

pub fn coverage_test_scaled(
    config: &SimConfig,
    eps_pe: f64,
    form: BoundForm,
    margin_scale: f64,
) -> Result<Coverage> {
    if !(eps_pe > 0.0 && eps_pe < 1.0) {
        return Err(Error::invalid("eps_pe", "must lie in (0, 1)"));
    }
    if (config.trials as f64) * eps_pe < 5.0 {
        return Err(Error::invalid(
            "trials",
            format!(
                "trials * eps_pe = {} is below 5",
                config.trials as f64 * eps_pe
            ),
        ));
    }
    let estimates = trial_estimates(config)?;
    coverage_from_estimates(&estimates, config, eps_pe, form, margin_scale)
}

/// Grid used to histogram arrival times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    /// Times folded into the frame and split into `bins` equal slots.
    Frame { bins: usize, frame: f64 },
    /// Unfolded times on a grid of roughly `width`, with the frame edges
    /// falling on bin edges.
    Fine { width: f64, frame: f64 },
}

/// Plug-in mutual information, in bits, of the binned samples.
pub fn empirical_mutual_information(samples: &[Coincidence], binning: Binning) -> Result<f64> {
    if samples.len() < MIN_MI_SAMPLES {
        return Err(Error::invalid(
            "samples",
            format!("need at least {MIN_MI_SAMPLES}, got {}", samples.len()),
        ));
    }
    match binning {
        Binning::Frame { bins, frame } => {
            if bins == 0 || !(frame > 0.0) {
                return Err(Error::invalid(
                    "binning",
                    "need bins >= 1 and a positive frame",
                ));
            }
            let w = frame / bins as f64;
            let idx = |t: f64| {
                (((wrap_to_frame(t, frame) + 0.5 * frame) / w).floor() as usize).min(bins - 1)
            };
            let mut table = vec![0.0; bins * bins];
            for s in samples {
                table[idx(s.t_a) * bins + idx(s.t_b)] += 1.0;
            }
            Ok(plug_in_information(&table, bins, bins))
        }
        Binning::Fine { width, frame } => {
            if !(width > 0.0 && frame > 0.0) {
                return Err(Error::invalid("binning", "need positive width and frame"));
            }
            let per_half = (0.5 * frame / width).ceil().max(1.0);
            let w = 0.5 * frame / per_half;
            let cell = |t: f64| ((t + 0.5 * frame) / w).floor() as i64;
            let range = |f: &dyn Fn(&Coincidence) -> f64| {
                samples.iter().fold((i64::MAX, i64::MIN), |(lo, hi), s| {
                    let c = cell(f(s));
                    (lo.min(c), hi.max(c))
                })
            };
            let (ax, bx) = range(&|s| s.t_a);
            let (ay, by) = range(&|s| s.t_b);
            let nx = (bx - ax + 1) as usize;
            let ny = (by - ay + 1) as usize;
            if nx.saturating_mul(ny) > 50_000_000 {
                return Err(Error::invalid(
                    "binning",
                    format!("{nx} x {ny} grid is too large"),
                ));
            }
            let mut table = vec![0.0; nx * ny];
            for s in samples {
                let i = (cell(s.t_a) - ax) as usize;
                let j = (cell(s.t_b) - ay) as usize;
                table[i * ny + j] += 1.0;
            }
            Ok(plug_in_information(&table, nx, ny))
        }
    }
}

/// What `mc-validate` checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationPlan {
    pub seed: u64,
    pub trials: usize,
    pub m_values: Vec<u64>,
    pub eps_pe_values: Vec<f64>,
    pub true_xi: f64,
    pub form: BoundForm,
    pub margin_scale: f64,
    pub source: SourceParams,
    pub mi_draws: usize,
    pub mi_samples: usize,
    pub mi_tolerance: f64,
    /// Fine-grid bin width in units of `sigma_cor`.
    pub mi_bin_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub form: BoundForm,
    pub m: u64,
    pub eps_pe: f64,
    pub coverage: Coverage,
    pub allowance: f64,
    /// Whether the row gates the verdict; rows of the other bound form are informational.
    pub gating: bool,
}

impl CoverageRow {
    pub fn pass(&self) -> bool {
        self.coverage.fraction() <= self.allowance
    }
}

/// One random link drawn for the information cross-check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoDraw {
    pub d: f64,
    pub jitter: f64,
    pub xi: f64,
    pub efficiency: f64,
    pub dark_rate: f64,
    pub length_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoRow {
    pub draw: InfoDraw,
    pub signal_fraction: f64,
    pub model: ShannonModel,
    pub model_bits: f64,
    pub empirical_bits: f64,
    pub tolerance: f64,
}

impl InfoRow {
    pub fn pass(&self) -> bool {
        (self.model_bits - self.empirical_bits).abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub coverage: Vec<CoverageRow>,
    pub information: Vec<InfoRow>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.coverage
            .iter()
            .filter(|r| r.gating)
            .all(CoverageRow::pass)
            && self.information.iter().all(InfoRow::pass)
    }
}

/// Stream index reserved for drawing cross-check parameters.
const DRAW_STREAM: u64 = u64::MAX;

/// Random link parameters for the information cross-check.
pub fn information_draws(seed: u64, count: usize) -> Vec<InfoDraw> {
    let mut rng = trial_rng(seed, DRAW_STREAM);
    (0..count)
        .map(|_| InfoDraw {
            d: [4.0, 8.0, 16.0, 32.0][rng.random_range(0..4)],
            jitter: rng.random_range(0.0..1.0),
            xi: rng.random_range(0.0..0.5),
            efficiency: rng.random_range(0.5..1.0),
            dark_rate: 10f64.powf(rng.random_range(1.0..7.0)),
            length_km: rng.random_range(0.0..300.0),
        })
        .collect()
}

/// Compares model and sampled information for one draw under both models.
pub fn information_check(
    draw: &InfoDraw,
    sigma_cor: f64,
    seed: u64,
    samples: usize,
    bin_width: f64,
    tolerance: f64,
) -> Result<Vec<InfoRow>> {
    let source = SourceParams::with_dimension(draw.d, sigma_cor, 1.0)?;
    let detector = DetectorParams::new(draw.efficiency, draw.dark_rate, draw.jitter * sigma_cor)?;
    let channel = ChannelParams::reference(&source).with_length(draw.length_km);
    let link = link_statistics(&channel, &detector)?;
    let trials = samples.div_ceil(100_000).max(1);
    let config = SimConfig {
        seed,
        trials,
        frames_per_trial: samples.div_ceil(trials).max(2),
        source,
        detector,
        link,
        true_xi: draw.xi,
    };
    let frames = sample_coincidences(&config)?;
    let frame = link.frame_duration;
    let bins = draw.d.round() as u32;
    let mut rows = Vec::with_capacity(2);
    for (model, binning) in [
        (
            ShannonModel::Gaussian,
            Binning::Fine {
                width: bin_width * sigma_cor,
                frame,
            },
        ),
        (
            ShannonModel::Binned { bins },
            Binning::Frame {
                bins: bins as usize,
                frame,
            },
        ),
    ] {
        rows.push(InfoRow {
            draw: *draw,
            signal_fraction: link.signal_fraction,
            model,
            model_bits: shannon_information_with(&source, &detector, &link, draw.xi, model)?,
            empirical_bits: empirical_mutual_information(&frames, binning)?,
            tolerance,
        });
    }
    Ok(rows)
}

/// Runs the coverage grid and the information cross-check.
pub fn run_validation(plan: &ValidationPlan) -> Result<ValidationReport> {
    let link = LinkStatistics::ideal(plan.source.sigma_coh());
    let detector = DetectorParams::new(1.0, 0.0, 0.0)?;
    let other = match plan.form {
        BoundForm::Centered => BoundForm::Literal,
        BoundForm::Literal => BoundForm::Centered,
    };
    let mut coverage = Vec::new();
    for &m in &plan.m_values {
        let config = SimConfig {
            seed: plan.seed,
            trials: plan.trials,
            frames_per_trial: usize::try_from(m).map_err(|_| Error::invalid("m", "too large"))?,
            source: plan.source,
            detector,
            link,
            true_xi: plan.true_xi,
        };
        config.validate()?;
        let estimates = trial_estimates(&config)?;
        for &eps_pe in &plan.eps_pe_values {
            if (plan.trials as f64) * eps_pe < 5.0 {
                return Err(Error::invalid(
                    "trials",
                    format!(
                        "trials * eps_pe = {} is below 5",
                        plan.trials as f64 * eps_pe
                    ),
                ));
            }
            for (form, gating) in [(plan.form, true), (other, false)] {
                coverage.push(CoverageRow {
                    form,
                    m,
                    eps_pe,
                    coverage: coverage_from_estimates(
                        &estimates,
                        &config,
                        eps_pe,
                        form,
                        plan.margin_scale,
                    )?,
                    allowance: Coverage::allowance(plan.trials, eps_pe),
                    gating,
                });
            }
        }
    }
    let mut information = Vec::new();
    for (i, draw) in information_draws(plan.seed, plan.mi_draws)
        .iter()
        .enumerate()
    {
        let rows = information_check(
            draw,
            plan.source.sigma_cor(),
            plan.seed.wrapping_add(1 + i as u64),
            plan.mi_samples,
            plan.mi_bin_width,
            plan.mi_tolerance,
        )
        .map_err(|e| e.at_index(i))?;
        information.extend(rows);
    }
    Ok(ValidationReport {
        coverage,
        information,
    })
}
