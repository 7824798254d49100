//! Asymptotic information quantities: Gaussian-state entropies, the
//! worst-case Holevo information of the eavesdropper, the timing Shannon
//! information between Alice and Bob and the asymptotic secret-key rate.

use rayon::prelude::*;

use crate::channel::{DetectorParams, LinkStatistics};
use crate::error::{ensure_finite, Error, Result};
use crate::gaussian::{
    epsilon_from_eta, eta_upper_bound, noise_spectrum, noise_timing_information, NoiseParams,
    SourceParams, CONSTRAINT_TOL, PHYSICALITY_TOL,
};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    /// Reconciliation efficiency in (0, 1].
    pub beta: f64,
}

impl RateParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::invalid(
                "beta",
                format!("must lie in (0, 1], got {beta}"),
            ));
        }
        Ok(Self { beta })
    }
}

/// Entropy of a single thermal mode with symplectic eigenvalue `nu`, in bits.
///
/// Values within `PHYSICALITY_TOL` below 1/2 are treated as 1/2.
pub fn g_entropy(nu: f64) -> Result<f64> {
    if !nu.is_finite() || nu < 0.5 - PHYSICALITY_TOL {
        return Err(Error::invalid(
            "nu",
            format!("symplectic eigenvalue must be >= 1/2, got {nu}"),
        ));
    }
    let nu = nu.max(0.5);
    let plus = nu + 0.5;
    let minus = nu - 0.5;
    let tail = if minus > 0.0 {
        minus * minus.log2()
    } else {
        0.0
    };
    Ok(plus * plus.log2() - tail)
}

/// Holevo information `chi(A;E) = S(AB) - S(B|A)` for one attack, in bits.
///
/// Eve holds the purification of the Alice-Bob state; the conditional term
/// is Bob's entropy after Alice measures her arrival time.
pub fn holevo_information(source: &SourceParams, noise: &NoiseParams) -> Result<f64> {
    let spec = noise_spectrum(source, noise)?;
    let joint = g_entropy(spec.joint.0)? + g_entropy(spec.joint.1)?;
    let conditional = g_entropy(spec.bob_given_alice_time)?;
    Ok((joint - conditional).max(0.0))
}

/// Resolution of the one-dimensional worst-case search over eta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolevoSearch {
    pub grid_points: usize,
    pub eta_tol: f64,
}

impl Default for HolevoSearch {
    fn default() -> Self {
        Self {
            grid_points: 2001,
            eta_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCase {
    pub chi: f64,
    pub noise: NoiseParams,
}

/// Maximum of `chi(A;E)` over admissible attacks consistent with `xi_max`.
pub fn holevo_worst_case(source: &SourceParams, xi_max: f64) -> Result<WorstCase> {
    holevo_worst_case_with(source, xi_max, &HolevoSearch::default())
}

pub fn holevo_worst_case_with(
    source: &SourceParams,
    xi_max: f64,
    search: &HolevoSearch,
) -> Result<WorstCase> {
    ensure_finite("xi_max", xi_max)?;
    if xi_max < 0.0 {
        return Err(Error::invalid("xi_max", "must be non-negative"));
    }
    if search.grid_points < 2 {
        return Err(Error::invalid("grid_points", "need at least 2"));
    }
    let d = source.dimension();
    let baseline = noise_timing_information(source, &NoiseParams::NONE)?;

    let noise_at = |eta: f64| -> Result<NoiseParams> {
        let mut noise = NoiseParams::on_constraint(eta, xi_max, d)?;
        // The top of the interval lands on epsilon = 0 up to rounding.
        if noise.epsilon < 0.0 && noise.epsilon > -CONSTRAINT_TOL {
            noise.epsilon = 0.0;
        }
        Ok(noise)
    };
    let objective = |eta: f64| -> Option<f64> {
        let noise = noise_at(eta).ok()?;
        if noise.epsilon < 0.0 {
            return None;
        }
        let spec = noise_spectrum(source, &noise).ok()?;
        if spec.joint.1 < 0.5 - PHYSICALITY_TOL {
            return None;
        }
        if noise_timing_information(source, &noise).ok()? > baseline + 1e-12 {
            return None;
        }
        let joint = g_entropy(spec.joint.0).ok()? + g_entropy(spec.joint.1).ok()?;
        let conditional = g_entropy(spec.bob_given_alice_time).ok()?;
        Some((joint - conditional).max(0.0))
    };

    let Some(chi0) = objective(0.0) else {
        return Err(Error::Infeasible(format!(
            "no admissible attack at xi = {xi_max}: eta = 0 is already unphysical"
        )));
    };
    let eta_hi = eta_upper_bound(xi_max, d);
    if xi_max == 0.0 || eta_hi <= 0.0 {
        return Ok(WorstCase {
            chi: chi0,
            noise: noise_at(0.0)?,
        });
    }

    let n = search.grid_points;
    let step = eta_hi / (n - 1) as f64;
    let mut best = (0.0, chi0, 0usize);
    for i in 1..n {
        let eta = if i == n - 1 { eta_hi } else { step * i as f64 };
        if let Some(chi) = objective(eta) {
            if chi > best.1 {
                best = (eta, chi, i);
            }
        }
    }

    let lo = step * best.2.saturating_sub(1) as f64;
    let hi = if best.2 + 1 >= n - 1 {
        eta_hi
    } else {
        step * (best.2 + 1) as f64
    };
    let f = |eta: f64| objective(eta).unwrap_or(f64::NEG_INFINITY);
    let (eta_g, chi_g) = golden_max(f, lo, hi, search.eta_tol * eta_hi.max(f64::MIN_POSITIVE));
    let (eta, chi) = if chi_g > best.1 {
        (eta_g, chi_g)
    } else {
        (best.0, best.1)
    };
    Ok(WorstCase {
        chi,
        noise: noise_at(eta)?,
    })
}

/// Golden-section maximisation on `[lo, hi]`, also checking both endpoints.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut e = a + INV_PHI * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    while (b - a) > tol {
        if fc >= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + INV_PHI * (b - a);
            fe = f(e);
        }
    }
    let mut best = if fc >= fe { (c, fc) } else { (e, fe) };
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Cubic interpolant of the worst-case Holevo information against `xi`,
/// tabulated on nodes uniform in `sqrt(xi)`. Values past the table fall
/// back to the exact search.
#[derive(Debug, Clone)]
pub struct HolevoTable {
    source: SourceParams,
    step: f64,
    values: Vec<f64>,
}

impl HolevoTable {
    pub const DEFAULT_XI_CAP: f64 = 64.0;
    pub const DEFAULT_NODES: usize = 1025;

    pub fn build(source: &SourceParams, xi_cap: f64, nodes: usize) -> Result<Self> {
        if !(xi_cap > 0.0 && xi_cap.is_finite()) {
            return Err(Error::invalid("xi_cap", "must be positive and finite"));
        }
        if nodes < 4 {
            return Err(Error::invalid("nodes", "need at least 4"));
        }
        let step = xi_cap.sqrt() / (nodes - 1) as f64;
        let search = HolevoSearch {
            grid_points: 257,
            eta_tol: 1e-10,
        };
        let values = (0..nodes)
            .into_par_iter()
            .map(|i| {
                let t = step * i as f64;
                holevo_worst_case_with(source, t * t, &search).map(|w| w.chi)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            source: *source,
            step,
            values,
        })
    }

    pub fn source(&self) -> &SourceParams {
        &self.source
    }

    pub fn xi_cap(&self) -> f64 {
        let t = self.step * (self.values.len() - 1) as f64;
        t * t
    }

    pub fn eval(&self, xi: f64) -> Result<f64> {
        ensure_finite("xi", xi)?;
        if xi < 0.0 {
            return Err(Error::invalid("xi", "must be non-negative"));
        }
        let n = self.values.len();
        let u = xi.sqrt() / self.step;
        if u > (n - 1) as f64 {
            return holevo_worst_case(&self.source, xi).map(|w| w.chi);
        }
        let i = (u.floor() as usize).min(n - 2);
        let s = u - i as f64;
        let y = &self.values;
        // chi depends on t = sqrt(xi) through t^2, so reflect at the origin.
        let p0 = if i == 0 { y[1] } else { y[i - 1] };
        let p3 = if i + 2 < n {
            y[i + 2]
        } else {
            2.0 * y[n - 1] - y[n - 2]
        };
        let (p1, p2) = (y[i], y[i + 1]);
        let v = p1
            + 0.5
                * s
                * (p2 - p0
                    + s * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + s * (3.0 * (p1 - p2) + p3 - p0)));
        Ok(v.max(0.0))
    }
}

/// How the timing Shannon information is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShannonModel {
    /// Continuous arrival times; accidentals uniform over the frame.
    #[default]
    Gaussian,
    /// Arrival times folded into the frame and read out in `bins` equal slots.
    Binned { bins: u32 },
}

/// Jointly Gaussian signal model of the detected arrival times
/// `X = T_A + J_A`, `Y = T_A + Z + J_B`, where `Var Z = (1 + xi) sigma_cor^2`.
#[derive(Debug, Clone, Copy)]
struct TimingModel {
    sigma_x: f64,
    sigma_y: f64,
    /// Regression slope of Y on X.
    slope: f64,
    /// Conditional standard deviation of Y given X.
    spread: f64,
    frame: f64,
    weights: [f64; 4],
}

impl TimingModel {
    fn new(
        source: &SourceParams,
        detector: &DetectorParams,
        link: &LinkStatistics,
        xi: f64,
    ) -> Result<Self> {
        ensure_finite("xi", xi)?;
        if xi < 0.0 {
            return Err(Error::invalid("xi", "must be non-negative"));
        }
        detector.validate()?;
        if !(link.frame_duration > 0.0 && link.frame_duration.is_finite()) {
            return Err(Error::invalid("frame_duration", "must be positive"));
        }
        let jitter_sq = detector.jitter_rms * detector.jitter_rms;
        let var_t = source.arrival_time_variance();
        let var_z = (1.0 + xi) * source.sigma_cor() * source.sigma_cor();
        let var_x = var_t + jitter_sq;
        let var_y = var_t + var_z + jitter_sq;
        let slope = var_t / var_x;
        let spread = (var_y - var_t * slope).sqrt();
        let mut weights = link.mixture_weights();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("link", "mixture weights sum to zero"));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            sigma_x: var_x.sqrt(),
            sigma_y: var_y.sqrt(),
            slope,
            spread,
            frame: link.frame_duration,
            weights,
        })
    }

    fn closed_form(&self) -> f64 {
        let var_x = self.sigma_x * self.sigma_x;
        let var_y = self.sigma_y * self.sigma_y;
        let cov = self.slope * var_x;
        0.5 * (var_x * var_y / (var_x * var_y - cov * cov)).log2()
    }
}

/// Shannon information between Alice's and Bob's detected arrival times, in
/// bits per post-selected coincidence, under the default model.
pub fn shannon_information(
    source: &SourceParams,
    detector: &DetectorParams,
    link: &LinkStatistics,
    xi: f64,
) -> Result<f64> {
    shannon_information_with(source, detector, link, xi, ShannonModel::default())
}

pub fn shannon_information_with(
    source: &SourceParams,
    detector: &DetectorParams,
    link: &LinkStatistics,
    xi: f64,
    model: ShannonModel,
) -> Result<f64> {
    let tm = TimingModel::new(source, detector, link, xi)?;
    let info = match model {
        ShannonModel::Gaussian => continuous_information(&tm),
        ShannonModel::Binned { bins } => {
            if bins == 0 {
                return Err(Error::invalid("bins", "must be a positive integer"));
            }
            binned_information(&tm, bins as usize)
        }
    };
    Ok(info.max(0.0))
}

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Composite 8-point Gauss-Legendre nodes over sorted breakpoints; `width`
/// gives the largest panel allowed around a point.
fn panel_nodes(breaks: &mut Vec<f64>, width: impl Fn(f64) -> f64, out: &mut Vec<(f64, f64)>) {
    out.clear();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let h = width(0.5 * (a + b));
        let panels = if h.is_finite() && h > 0.0 {
            ((b - a) / h).ceil().max(1.0) as usize
        } else {
            1
        };
        let len = (b - a) / panels as f64;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * len;
            let half = 0.5 * len;
            for (x, wt) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
                out.push((mid - half * x, half * wt));
                out.push((mid + half * x, half * wt));
            }
        }
    }
}

fn normal_pdf(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    INV_SQRT_2PI / sigma * (-0.5 * z * z).exp()
}

fn continuous_information(tm: &TimingModel) -> f64 {
    let [ws, wab, wba, wdd] = tm.weights;
    if ws >= 1.0 {
        return tm.closed_form();
    }
    let half = 0.5 * tm.frame;
    let u = 1.0 / tm.frame;
    let uniform = |t: f64| if t.abs() <= half { u } else { 0.0 };
    let (sx, sy, s, beta) = (tm.sigma_x, tm.sigma_y, tm.spread, tm.slope);
    let tail_x = 10.0 * sx;
    let tail_y = 10.0 * sy;
    let rx = tail_x.max(half);
    let ry = tail_y.max(half);
    let band = 12.0 * s;

    // Where the signal band crosses the edges of Bob's frame, the y-integral
    // changes on the scale of the conditional spread.
    let fine_x = |x: f64| (beta * x - half).abs() < band || (beta * x + half).abs() < band;
    let mut xb = vec![-rx, rx, -half, half, -tail_x, tail_x];
    for edge in [-half, half] {
        for off in [-band, band] {
            xb.push(((edge + off) / beta).clamp(-tail_x, tail_x));
        }
    }
    let mut xs = Vec::new();
    panel_nodes(
        &mut xb,
        |x| {
            if x.abs() > tail_x {
                f64::INFINITY
            } else if fine_x(x) {
                0.5 * s / beta
            } else {
                0.25 * sx
            }
        },
        &mut xs,
    );

    let mut ys = Vec::new();
    let mut yb = Vec::with_capacity(8);
    let mut total = 0.0;
    for &(x, wx) in &xs {
        let phx = normal_pdf(x, sx);
        let ux = uniform(x);
        let px = (ws + wab) * phx + (wba + wdd) * ux;
        if px <= 0.0 {
            continue;
        }
        let centre = beta * x;
        yb.clear();
        yb.extend([-ry, ry, -half, half, -tail_y, tail_y]);
        yb.push((centre - band).clamp(-ry, ry));
        yb.push((centre + band).clamp(-ry, ry));
        panel_nodes(
            &mut yb,
            |y| {
                if (y - centre).abs() < band {
                    0.5 * s
                } else if y.abs() > tail_y {
                    f64::INFINITY
                } else {
                    0.25 * sy
                }
            },
            &mut ys,
        );
        let mut inner = 0.0;
        for &(y, wy) in &ys {
            let phy = normal_pdf(y, sy);
            let uy = uniform(y);
            let joint = ws * phx * normal_pdf(y - centre, s)
                + wab * phx * uy
                + wba * ux * phy
                + wdd * ux * uy;
            if joint <= 1e-300 {
                continue;
            }
            let py = (ws + wba) * phy + (wab + wdd) * uy;
            inner += wy * joint * (joint / (px * py)).ln();
        }
        total += wx * inner;
    }
    total / std::f64::consts::LN_2
}

/// Standard normal CDF of `z`, accurate in both tails.
fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Mass of N(mean, sigma^2), folded modulo `frame` into `[-frame/2, frame/2)`,
/// that lands in `[a, b)`.
fn wrapped_mass(a: f64, b: f64, mean: f64, sigma: f64, frame: f64) -> f64 {
    let reach = 10.0 * sigma + frame;
    let k_lo = ((mean - reach) / frame).floor() as i64;
    let k_hi = ((mean + reach) / frame).ceil() as i64;
    let mut m = 0.0;
    for k in k_lo..=k_hi {
        let shift = k as f64 * frame;
        m += normal_cdf((b + shift - mean) / sigma) - normal_cdf((a + shift - mean) / sigma);
    }
    m
}

/// Folds `t` into the frame `[-frame/2, frame/2)`.
pub fn wrap_to_frame(t: f64, frame: f64) -> f64 {
    (t + 0.5 * frame).rem_euclid(frame) - 0.5 * frame
}

fn binned_information(tm: &TimingModel, bins: usize) -> f64 {
    let [ws, wab, wba, wdd] = tm.weights;
    let f = tm.frame;
    let w = f / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| -0.5 * f + i as f64 * w).collect();
    let bin_of = |t: f64| (((wrap_to_frame(t, f) + 0.5 * f) / w).floor() as usize).min(bins - 1);

    let pa: Vec<f64> = (0..bins)
        .map(|i| wrapped_mass(edges[i], edges[i + 1], 0.0, tm.sigma_x, f))
        .collect();
    let pb: Vec<f64> = (0..bins)
        .map(|j| wrapped_mass(edges[j], edges[j + 1], 0.0, tm.sigma_y, f))
        .collect();

    // Signal table: integrate over Alice's unfolded time, splitting at every
    // folded bin edge so each panel maps to a single Alice bin.
    let tail = 10.0 * tm.sigma_x;
    let mut xb = vec![-tail, tail];
    let k_lo = ((-tail - 0.5 * f) / f).floor() as i64;
    let k_hi = ((tail + 0.5 * f) / f).ceil() as i64;
    for k in k_lo..=k_hi {
        for e in &edges {
            let x = e + k as f64 * f;
            if x > -tail && x < tail {
                xb.push(x);
            }
        }
    }
    let (s, beta) = (tm.spread, tm.slope);
    let band = 12.0 * s;
    // Bob's bin masses only change where the signal band crosses a bin edge.
    let near_edge = |x: f64| {
        let r = (beta * x + 0.5 * f).rem_euclid(w);
        r.min(w - r) < band
    };
    let mut xs = Vec::new();
    panel_nodes(
        &mut xb,
        |x| {
            if near_edge(x) {
                0.5 * s / beta
            } else {
                0.25 * tm.sigma_x
            }
        },
        &mut xs,
    );

    let mut signal = vec![0.0; bins * bins];
    for &(x, wx) in &xs {
        let weight = wx * normal_pdf(x, tm.sigma_x);
        if weight == 0.0 {
            continue;
        }
        let i = bin_of(x);
        let mean = beta * x;
        let row = &mut signal[i * bins..(i + 1) * bins];
        if 2.0 * band >= f {
            for (j, r) in row.iter_mut().enumerate() {
                *r += weight * wrapped_mass(edges[j], edges[j + 1], mean, s, f);
            }
            continue;
        }
        let mut k = ((mean - band + 0.5 * f) / w).floor() as i64;
        loop {
            let a = -0.5 * f + k as f64 * w;
            if a >= mean + band {
                break;
            }
            let mass = normal_cdf((a + w - mean) / s) - normal_cdf((a - mean) / s);
            row[k.rem_euclid(bins as i64) as usize] += weight * mass;
            k += 1;
        }
    }

    let uniform = 1.0 / bins as f64;
    let mut table = vec![0.0; bins * bins];
    for i in 0..bins {
        for j in 0..bins {
            table[i * bins + j] = ws * signal[i * bins + j]
                + wab * pa[i] * uniform
                + wba * uniform * pb[j]
                + wdd * uniform * uniform;
        }
    }
    plug_in_information(&table, bins, bins)
}

/// Mutual information, in bits, of a row-major joint table (normalised here).
pub fn plug_in_information(table: &[f64], rows: usize, cols: usize) -> f64 {
    debug_assert_eq!(table.len(), rows * cols);
    let total: f64 = table.iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    let mut pr = vec![0.0; rows];
    let mut pc = vec![0.0; cols];
    for i in 0..rows {
        for j in 0..cols {
            let p = table[i * cols + j] / total;
            pr[i] += p;
            pc[j] += p;
        }
    }
    let mut mi = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let p = table[i * cols + j] / total;
            if p > 0.0 {
                mi += p * (p / (pr[i] * pc[j])).log2();
            }
        }
    }
    mi.max(0.0)
}

/// `beta * I - chi`; may be negative.
pub fn asymptotic_rate(params: &RateParams, shannon: f64, holevo: f64) -> f64 {
    params.beta * shannon - holevo
}

/// Decomposition of one asymptotic rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoBreakdown {
    pub shannon_ab: f64,
    pub holevo_ae: f64,
    pub worst_eta: f64,
    pub worst_epsilon: f64,
    pub r_do: f64,
}

impl InfoBreakdown {
    pub fn new(params: &RateParams, shannon_ab: f64, worst: &WorstCase) -> Self {
        Self {
            shannon_ab,
            holevo_ae: worst.chi,
            worst_eta: worst.noise.eta,
            worst_epsilon: worst.noise.epsilon,
            r_do: asymptotic_rate(params, shannon_ab, worst.chi),
        }
    }
}

/// Checks that `epsilon` is consistent with `eta` and `xi` on the constraint
/// surface.
pub fn on_constraint_surface(noise: &NoiseParams, dimension: f64) -> bool {
    epsilon_from_eta(noise.eta, noise.xi, dimension)
        .map(|e| (e - noise.epsilon).abs() <= CONSTRAINT_TOL)
        .unwrap_or(false)
}
