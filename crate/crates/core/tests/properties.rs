use doqkd::channel::LinkStatistics;
use doqkd::channel::{link_statistics, ChannelParams, DetectorParams};
use doqkd::finite_key::{
    finite_key_rate, sift_counts, xi_upper_bound, Accounting, BoundForm, Corrections,
    EstimationInput, SecurityBudget,
};
use doqkd::gaussian::{
    build_covariance, check_attack_admissible, conditional_covariance_after_time_measurement,
    epsilon_from_eta, eta_upper_bound, noise_timing_information, single_mode_symplectic_eigenvalue,
    source_blocks, symplectic_eigenvalues, CovarianceMatrix, NoiseParams, SourceParams,
};
use doqkd::info::{
    g_entropy, holevo_information, holevo_worst_case, shannon_information_with, ShannonModel,
};
use doqkd::mc::{trial_estimates, SimConfig};
use doqkd::optimizer::{Coincidences, Context, Evaluator};
use nalgebra::Matrix4;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn source(d: f64) -> SourceParams {
    SourceParams::with_dimension(d, 1.0, 1.0).unwrap()
}

fn budget() -> SecurityBudget {
    SecurityBudget::with_remainder(1e-5, 1e-10, 3e-6, 3e-6).unwrap()
}

// gaussian model

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn alice_determinant_is_free_of_k(sigma_cor in 0.1f64..10.0, d in 1.5f64..32.0, kappa in 0.3f64..3.0) {
        // k in units of sigma_cor^2; rounding of the block entries costs about
        // eps * uv / (4k^2) in the determinant
        let k = kappa * sigma_cor * sigma_cor;
        let src = SourceParams::new(d * sigma_cor, sigma_cor, k, d).unwrap();
        let (u, v) = (src.u(), src.v());
        let (aa, _, bb) = source_blocks(&src);
        let want = (u + v) * (u + v) / (16.0 * u * v);
        prop_assert!(((aa.determinant() - want) / want).abs() < 1e-9);
        prop_assert!(((bb.determinant() - want) / want).abs() < 1e-9);
    }

    #[test]
    fn label_exchange_keeps_spectrum(d in 1.5f64..12.0, k in 0.2f64..5.0) {
        let src = SourceParams::new(d, 1.0, k, d).unwrap();
        let g = build_covariance(&src, &NoiseParams::NONE).unwrap();
        let m = g.entries();
        let perm = [2usize, 3, 0, 1];
        let swapped = Matrix4::from_fn(|i, j| m[(perm[i], perm[j])]);
        let (a_hi, a_lo) = symplectic_eigenvalues(&g).unwrap();
        let (b_hi, b_lo) = symplectic_eigenvalues(&CovarianceMatrix::new(swapped).unwrap()).unwrap();
        prop_assert!((a_hi - b_hi).abs() < 1e-9 && (a_lo - b_lo).abs() < 1e-9);
    }

    #[test]
    fn conditioning_reduces_uncertainty(d in 2.0f64..16.0, xi in 0.0f64..2.0, frac in 0.0f64..=1.0) {
        let src = source(d);
        let mut noise = NoiseParams::on_constraint(frac * eta_upper_bound(xi, d), xi, d).unwrap();
        noise.epsilon = noise.epsilon.max(0.0);
        let g = build_covariance(&src, &noise).unwrap();
        let before = single_mode_symplectic_eigenvalue(&g.bob_block()).unwrap();
        let after = conditional_covariance_after_time_measurement(&g).unwrap().determinant().max(0.0).sqrt();
        prop_assert!(after <= before * (1.0 + 1e-12));
    }

    #[test]
    fn epsilon_is_affine(eta in 0.0f64..0.1, xi in 0.0f64..3.0, d in 1.5f64..64.0) {
        let h = 1e-3;
        let d2 = d * d;
        let e = |a: f64, b: f64| epsilon_from_eta(a, b, d).unwrap();
        let slope_eta = (e(eta + h, xi) - e(eta, xi)) / h;
        let slope_xi = (e(eta, xi + h) - e(eta, xi)) / h;
        prop_assert!((slope_eta + 2.0 * (d2 - 0.25) / (d2 + 0.25)).abs() < 1e-9);
        prop_assert!((slope_xi - 1.0 / (d2 + 0.25)).abs() < 1e-9);
    }
}

// information rates

#[test]
fn g_is_increasing_and_concave() {
    let xs: Vec<f64> = (0..=2000).map(|i| 0.5 + 49.5 * i as f64 / 2000.0).collect();
    let g: Vec<f64> = xs.iter().map(|&x| g_entropy(x).unwrap()).collect();
    for w in g.windows(2) {
        assert!(w[1] > w[0]);
    }
    for w in g.windows(3) {
        assert!(w[2] - 2.0 * w[1] + w[0] < 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn holevo_is_non_negative(d in 2.0f64..32.0, xi in 0.0f64..4.0, frac in 0.0f64..=1.0) {
        let mut noise = NoiseParams::on_constraint(frac * eta_upper_bound(xi, d), xi, d).unwrap();
        noise.epsilon = noise.epsilon.max(0.0);
        prop_assert!(holevo_information(&source(d), &noise).unwrap() >= 0.0);
    }

    #[test]
    fn worst_case_is_admissible_and_on_surface(d in 2.0f64..32.0, xi in 1e-3f64..4.0) {
        let src = source(d);
        let w = holevo_worst_case(&src, xi).unwrap();
        let want = epsilon_from_eta(w.noise.eta, xi, d).unwrap();
        prop_assert!((w.noise.epsilon - want).abs() <= 1e-9);
        prop_assert!(check_attack_admissible(&src, &w.noise).is_admissible());
        prop_assert!(w.chi > 1e-6, "chi = {} at xi = {}", w.chi, xi);
        let at_worst = noise_timing_information(&src, &w.noise).unwrap();
        let clean = noise_timing_information(&src, &NoiseParams::NONE).unwrap();
        prop_assert!(at_worst <= clean + 1e-12);
    }
}

#[test]
fn holevo_vanishes_without_noise() {
    for d in [2.0, 4.0, 8.0, 16.0, 64.0] {
        assert!(holevo_worst_case(&source(d), 0.0).unwrap().chi.abs() <= 1e-6);
    }
}

fn shannon(d: f64, jitter: f64, dark_rate: f64, model: ShannonModel) -> f64 {
    let src = source(d);
    let det = DetectorParams::new(0.93, dark_rate, jitter).unwrap();
    let link = link_statistics(&ChannelParams::reference(&src).with_length(100.0), &det).unwrap();
    shannon_information_with(&src, &det, &link, 0.21, model).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn shannon_falls_with_jitter(d in 2.0f64..32.0, j in 0.0f64..1.5, dj in 0.01f64..0.5) {
        let lo = shannon(d, j, 1000.0, ShannonModel::Gaussian);
        let hi = shannon(d, j + dj, 1000.0, ShannonModel::Gaussian);
        prop_assert!(lo >= 0.0 && hi <= lo + 1e-9);
    }

    #[test]
    fn shannon_falls_with_dark_counts(d in 2.0f64..32.0, log_dark in 1.0f64..7.0, step in 0.1f64..1.0) {
        let lo = shannon(d, 2.0 / 3.0, 10f64.powf(log_dark), ShannonModel::Gaussian);
        let hi = shannon(d, 2.0 / 3.0, 10f64.powf(log_dark + step), ShannonModel::Gaussian);
        prop_assert!(hi <= lo + 1e-9);
    }

    #[test]
    fn binned_shannon_is_bounded_by_log_d(bins in 2u32..64, j in 0.0f64..1.5, log_dark in 1.0f64..7.0) {
        let i = shannon(bins as f64, j, 10f64.powf(log_dark), ShannonModel::Binned { bins });
        prop_assert!(i >= 0.0 && i <= (bins as f64).log2() + 1e-12);
    }
}

// channel and detector

fn channel_at(length: f64, insertion: f64, frame: f64) -> ChannelParams {
    ChannelParams {
        length_km: length,
        insertion_loss_db: insertion,
        frame_duration: frame,
        ..ChannelParams::reference(&source(8.0))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn loss_composes(l1 in 0.0f64..200.0, l2 in 0.0f64..200.0, dark in 0.0f64..1e6) {
        let det = DetectorParams::new(0.93, dark, 0.5).unwrap();
        let whole = channel_at(l1 + l2, 0.0, 8.0);
        let first = channel_at(l1, 0.0, 8.0);
        let rel = (whole.transmittance() - first.transmittance() * channel_at(l2, 0.0, 8.0).transmittance()).abs()
            / whole.transmittance();
        prop_assert!(rel < 1e-12);
        // loss sits on Bob's arm, so the second span acts as extra insertion loss there
        let pre = channel_at(l1, l2 * whole.loss_db_per_km, 8.0);
        let a = link_statistics(&whole, &det).unwrap();
        let b = link_statistics(&pre, &det).unwrap();
        for (x, y) in [
            (a.p_signal_coincidence, b.p_signal_coincidence),
            (a.p_accidental_coincidence, b.p_accidental_coincidence),
            (a.signal_fraction, b.signal_fraction),
        ] {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn signal_fraction_monotone(
        length in 0.0f64..300.0,
        dark in 1.0f64..1e6,
        frame in 2.0f64..64.0,
        eff in 0.05f64..0.95,
        bump in 1.01f64..3.0,
    ) {
        let sf = |l: f64, dk: f64, f: f64, e: f64| {
            let s = link_statistics(&channel_at(l, 0.0, f), &DetectorParams::new(e, dk, 0.5).unwrap()).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.signal_fraction));
            prop_assert!((0.0..=1.0).contains(&s.p_signal_coincidence));
            prop_assert!((0.0..=1.0).contains(&s.p_accidental_coincidence));
            Ok(s.signal_fraction)
        };
        let base = sf(length, dark, frame, eff)?;
        prop_assert!(sf(length * bump + 1.0, dark, frame, eff)? <= base);
        prop_assert!(sf(length, dark * bump, frame, eff)? <= base);
        prop_assert!(sf(length, dark, frame * bump, eff)? <= base);
        prop_assert!(sf(length, dark, frame, (eff * bump).min(1.0))? >= base);
    }
}

// finite-key

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rate_never_exceeds_asymptotic(r_do in 0.0f64..8.0, log_n in 3.0f64..15.0, p in 0.5f64..0.999) {
        let acct = sift_counts(10f64.powf(log_n) as u64, p).unwrap();
        if acct.n > 0 {
            let r = finite_key_rate(r_do, &acct, &budget(), 8.0, Accounting::Eq2).unwrap();
            let cap = acct.n as f64 / acct.total as f64 * r_do;
            prop_assert!(r.raw <= cap && cap <= r_do);
        }
    }

    #[test]
    fn xi_bound_monotone(m in 2u64..10_000_000, log_eps in -12.0f64..-1.0) {
        for form in [BoundForm::Literal, BoundForm::Centered] {
            let at = |m: u64, eps: f64| {
                xi_upper_bound(&EstimationInput { sigma_hat_sq: 1.21, sigma_cor_sq: 1.0, m, eps_pe: eps }, form).unwrap()
            };
            let eps = 10f64.powf(log_eps);
            prop_assert!(at(m + m / 10 + 1, eps) < at(m, eps));
            prop_assert!(at(m, eps / 2.0) > at(m, eps));
        }
    }
}

#[test]
fn rate_increases_with_n() {
    let mut prev = f64::NEG_INFINITY;
    for e in 3..=12 {
        let acct = sift_counts(10u64.pow(e), 0.9).unwrap();
        let r = finite_key_rate(1.5, &acct, &budget(), 8.0, Accounting::Eq2)
            .unwrap()
            .raw;
        assert!(r > prev, "N = 1e{e}");
        prev = r;
    }
}

#[test]
fn doubling_d_changes_only_its_coefficient() {
    for total in [10_000u64, 1_000_000, 10_000_000_000] {
        let acct = sift_counts(total, 0.9).unwrap();
        let b = budget();
        let r8 = finite_key_rate(1.5, &acct, &b, 8.0, Accounting::Eq2)
            .unwrap()
            .raw;
        let r16 = finite_key_rate(1.5, &acct, &b, 16.0, Accounting::Eq2)
            .unwrap()
            .raw;
        let n = acct.n as f64;
        let want = n / total as f64 * 2.0 * ((2.0 / b.eps_bar).log2() / n).sqrt();
        assert!(((r8 - r16) - want).abs() < 1e-12);
        let c8 = Corrections::new(n, &b, 8.0);
        let c16 = Corrections::new(n, &b, 16.0);
        assert_eq!(c8.error_correction, c16.error_correction);
        assert_eq!(c8.privacy_amplification, c16.privacy_amplification);
    }
}

// optimizer

#[test]
fn no_random_probe_beats_the_optimum() {
    let ctx = Context::reference(8.0).unwrap();
    let ev = Evaluator::new(&ctx).unwrap();
    let free = ctx.eps_s - ctx.eps_ec;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [10_000u64, 1_000_000, 10_000_000_000] {
        let best = ev.optimize(Coincidences::Finite(n)).unwrap();
        let b = best.budget;
        assert!(((b.eps_ec + b.eps_pa + b.eps_pe + b.eps_bar) - b.eps_s).abs() <= 1e-12 * b.eps_s);
        let p_top = 1.0 - (2.0 / n as f64).sqrt();
        for _ in 0..100 {
            let p = rng.random_range(0.5..p_top);
            let w: Vec<f64> = (0..3)
                .map(|_| 10f64.powf(rng.random_range(-15.0..0.0)))
                .collect();
            let sum: f64 = w.iter().sum();
            let (pa, pe) = (free * w[0] / sum, free * w[1] / sum);
            if pa < 1e-15 || pe < 1e-15 || free - pa - pe < 1e-15 {
                continue;
            }
            let budget = SecurityBudget::with_remainder(ctx.eps_s, ctx.eps_ec, pa, pe).unwrap();
            let probe = ev
                .evaluate(
                    Coincidences::Finite(n),
                    p,
                    budget.eps_pa,
                    budget.eps_pe,
                    budget.eps_bar,
                )
                .unwrap();
            assert!(
                probe.r_n <= best.r_n + 1e-6,
                "N = {n}: probe {probe:?} beats {best:?}"
            );
        }
    }
}

#[test]
fn optimizer_is_deterministic() {
    let ctx = Context::reference(8.0).unwrap();
    for n in [
        Coincidences::Finite(50_000),
        Coincidences::Finite(1_000_000_000),
        Coincidences::Infinite,
    ] {
        let a = Evaluator::new(&ctx).unwrap().optimize(n).unwrap();
        let b = Evaluator::new(&ctx).unwrap().optimize(n).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}

// Monte Carlo

fn sim(m: usize, trials: usize) -> SimConfig {
    let src = source(8.0);
    SimConfig {
        seed: 11,
        trials,
        frames_per_trial: m,
        source: src,
        detector: DetectorParams::new(1.0, 0.0, 0.0).unwrap(),
        link: LinkStatistics::ideal(src.sigma_coh()),
        true_xi: 0.21,
    }
}

#[test]
fn estimates_do_not_depend_on_worker_count() {
    let cfg = sim(500, 64);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| trial_estimates(&cfg).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert!(one
        .iter()
        .zip(&four)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn estimator_error_scales_as_inverse_root_m() {
    let ms = [100usize, 1_000, 10_000, 100_000];
    let pts: Vec<(f64, f64)> = ms
        .iter()
        .map(|&m| {
            let cfg = sim(m, 400);
            let truth = cfg.true_sigma_sq();
            let est = trial_estimates(&cfg).unwrap();
            let mse = est.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / est.len() as f64;
            ((m as f64).ln(), mse.sqrt().ln())
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.05, "slope = {slope}");
}
