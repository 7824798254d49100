//! Maximisation of the finite-key rate over the basis probability and the
//! security-budget split, plus the rate-versus-N and rate-versus-distance
//! sweeps.
//!
//! The search runs a coarse grid and a coordinatewise golden-section polish
//! against a tabulated worst-case Holevo information, then polishes once
//! more and reports the final point with the exact worst-case search.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::channel::{link_statistics, ChannelParams, DetectorParams, LinkStatistics};
use crate::error::{Error, Result};
use crate::finite_key::{
    finite_key_rate, floor_count, sift_counts, Accounting, BoundForm, Corrections, EstimationInput,
    SecurityBudget, EPS_FLOOR,
};
use crate::gaussian::{NoiseParams, SourceParams};
use crate::info::{
    golden_max, holevo_worst_case, shannon_information_with, HolevoTable, RateParams, ShannonModel,
};
use crate::special::erfc_inverse;

/// Near-equal optima within this many bpc are broken by the tie rule.
pub const TIE_TOL: f64 = 1e-9;

/// Number of post-selected coincidences; `Infinite` is the asymptotic limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coincidences {
    Finite(u64),
    Infinite,
}

impl std::fmt::Display for Coincidences {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coincidences::Finite(n) => write!(f, "{n}"),
            Coincidences::Infinite => f.write_str("inf"),
        }
    }
}

/// Resolution of the optimizer's search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSettings {
    pub p_points: usize,
    pub p_max: f64,
    pub eps_points: usize,
    pub polish_rounds: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            p_points: 199,
            p_max: 0.995,
            eps_points: 15,
            polish_rounds: 4,
        }
    }
}

/// Everything held fixed while the optimizer varies `p` and the budget split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Context {
    pub source: SourceParams,
    pub detector: DetectorParams,
    pub channel: ChannelParams,
    pub rate: RateParams,
    pub eps_s: f64,
    pub eps_ec: f64,
    /// Observed correlation time in units of `sigma_cor`.
    pub sigma_hat_ratio: f64,
    pub bound_form: BoundForm,
    pub accounting: Accounting,
    /// Force `p = 1/2`; the key uses all `N/4` arrival-time frames.
    pub symmetric: bool,
    /// Hold `p` at this value instead of optimising it.
    pub fixed_p: Option<f64>,
    /// Split `eps_pe` evenly between the two bases.
    pub pe_split: bool,
    pub shannon_model: ShannonModel,
    pub search: SearchSettings,
}

impl Context {
    /// Reference operating conditions at dimension `d` with `sigma_cor = 1`.
    pub fn reference(d: f64) -> Result<Self> {
        let source = SourceParams::with_dimension(d, 1.0, 1.0)?;
        Ok(Self {
            source,
            detector: DetectorParams::reference(&source),
            channel: ChannelParams::reference(&source),
            rate: RateParams::new(0.9)?,
            eps_s: 1e-5,
            eps_ec: 1e-10,
            sigma_hat_ratio: 1.1,
            bound_form: BoundForm::Centered,
            accounting: Accounting::Eq2,
            symmetric: false,
            fixed_p: None,
            pe_split: false,
            shannon_model: ShannonModel::Gaussian,
            search: SearchSettings::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.channel.validate()?;
        RateParams::new(self.rate.beta)?;
        if !(self.eps_s > 0.0 && self.eps_s < 1.0) {
            return Err(Error::invalid("eps_s", "must lie in (0, 1)"));
        }
        if !(self.eps_ec > 0.0 && self.eps_ec < self.eps_s) {
            return Err(Error::invalid("eps_ec", "must lie in (0, eps_s)"));
        }
        if self.eps_s - self.eps_ec < 3.0 * EPS_FLOOR {
            return Err(Error::invalid(
                "eps_ec",
                "leaves no room for the other stages",
            ));
        }
        if !(self.sigma_hat_ratio > 0.0 && self.sigma_hat_ratio.is_finite()) {
            return Err(Error::invalid("sigma_hat_ratio", "must be positive"));
        }
        if let Some(p) = self.fixed_p {
            if !(0.5..1.0).contains(&p) {
                return Err(Error::invalid(
                    "fixed_p",
                    format!("basis probability must lie in [1/2, 1), got {p}"),
                ));
            }
            if self.symmetric && p != 0.5 {
                return Err(Error::invalid("fixed_p", "symmetric mode fixes p = 1/2"));
            }
        }
        let s = &self.search;
        if s.p_points < 1 || !(s.p_max >= 0.5 && s.p_max < 1.0) || s.eps_points < 2 {
            return Err(Error::invalid(
                "search",
                "needs p_points >= 1, p_max in [1/2, 1), eps_points >= 2",
            ));
        }
        Ok(())
    }

    /// Relative excess of the observed squared correlation time.
    pub fn observed_xi(&self) -> f64 {
        self.sigma_hat_ratio * self.sigma_hat_ratio - 1.0
    }
}

/// One evaluated operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub coincidences: Coincidences,
    pub budget: SecurityBudget,
    /// Arrival-time basis probability; 1 for asymptotic points.
    pub p: f64,
    pub xi_max: f64,
    pub shannon_ab: f64,
    pub holevo_ae: f64,
    pub r_do: f64,
    /// Finite-key rate before clamping at zero.
    pub r_n_raw: f64,
    pub r_n: f64,
    pub worst_noise: NoiseParams,
    /// Why the point carries no key, if it does not.
    pub note: Option<String>,
}

impl OperatingPoint {
    pub fn has_key(&self) -> bool {
        self.r_n > 0.0
    }
}

fn table_cache() -> &'static Mutex<HashMap<[u64; 4], Arc<HolevoTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<[u64; 4], Arc<HolevoTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Process-wide surrogate table for `source`, built on first use.
pub fn holevo_table(source: &SourceParams) -> Result<Arc<HolevoTable>> {
    let key = [
        source.sigma_coh().to_bits(),
        source.sigma_cor().to_bits(),
        source.k().to_bits(),
        source.dimension().to_bits(),
    ];
    if let Some(t) = table_cache()
        .lock()
        .expect("table cache poisoned")
        .get(&key)
    {
        return Ok(Arc::clone(t));
    }
    // Built outside the lock; a concurrent duplicate build is harmless.
    let table = Arc::new(HolevoTable::build(
        source,
        HolevoTable::DEFAULT_XI_CAP,
        HolevoTable::DEFAULT_NODES,
    )?);
    let mut cache = table_cache().lock().expect("table cache poisoned");
    Ok(Arc::clone(cache.entry(key).or_insert(table)))
}

/// Budget split as `(eps_pa, eps_pe, eps_bar)`.
type Split = [f64; 3];

/// A [`Context`] with its link-dependent quantities precomputed.
#[derive(Debug, Clone)]
pub struct Evaluator {
    ctx: Context,
    link: LinkStatistics,
    shannon: f64,
    table: Arc<HolevoTable>,
}

impl Evaluator {
    pub fn new(ctx: &Context) -> Result<Self> {
        ctx.validate()?;
        let link = link_statistics(&ctx.channel, &ctx.detector)?;
        Self::with_link(ctx, link)
    }

    /// Evaluator with externally supplied link statistics.
    pub fn with_link(ctx: &Context, link: LinkStatistics) -> Result<Self> {
        ctx.validate()?;
        let xi_hat = ctx.observed_xi().max(0.0);
        let shannon =
            shannon_information_with(&ctx.source, &ctx.detector, &link, xi_hat, ctx.shannon_model)?;
        Ok(Self {
            ctx: *ctx,
            link,
            shannon,
            table: holevo_table(&ctx.source)?,
        })
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn link(&self) -> &LinkStatistics {
        &self.link
    }

    /// Timing Shannon information at the observed noise level.
    pub fn shannon(&self) -> f64 {
        self.shannon
    }

    fn key_accounting(&self) -> Accounting {
        if self.ctx.symmetric {
            Accounting::Eq2
        } else {
            self.ctx.accounting
        }
    }

    /// `p` when it is not a free parameter.
    fn pinned_p(&self) -> Option<f64> {
        if self.ctx.symmetric {
            Some(0.5)
        } else {
            self.ctx.fixed_p
        }
    }

    fn effective_eps_pe(&self, eps_pe: f64) -> f64 {
        if self.ctx.pe_split {
            0.5 * eps_pe
        } else {
            eps_pe
        }
    }

    fn estimation(&self, m: u64, eps_pe: f64) -> EstimationInput {
        let s2 = self.ctx.source.sigma_cor() * self.ctx.source.sigma_cor();
        EstimationInput {
            sigma_hat_sq: self.ctx.sigma_hat_ratio * self.ctx.sigma_hat_ratio * s2,
            sigma_cor_sq: s2,
            m,
            eps_pe: self.effective_eps_pe(eps_pe),
        }
    }

    /// `xi` for the asymptotic limit, where the statistical margin vanishes.
    fn asymptotic_xi(&self) -> f64 {
        match self.ctx.bound_form {
            BoundForm::Literal => 0.0,
            BoundForm::Centered => self.ctx.observed_xi().max(0.0),
        }
    }

    fn even_budget(&self) -> Result<SecurityBudget> {
        let third = (self.ctx.eps_s - self.ctx.eps_ec) / 3.0;
        SecurityBudget::with_remainder(self.ctx.eps_s, self.ctx.eps_ec, third, third)
    }

    /// Fully evaluated operating point with the exact worst-case search.
    pub fn evaluate(
        &self,
        coincidences: Coincidences,
        p: f64,
        eps_pa: f64,
        eps_pe: f64,
        eps_bar: f64,
    ) -> Result<OperatingPoint> {
        let budget = SecurityBudget::new(self.ctx.eps_s, self.ctx.eps_ec, eps_pa, eps_pe, eps_bar)?;
        let d = self.ctx.source.dimension();
        let beta = self.ctx.rate.beta;
        let total = match coincidences {
            Coincidences::Infinite => return self.asymptotic_point(budget),
            Coincidences::Finite(n) => n,
        };
        if let Some(q) = self.pinned_p() {
            if p != q {
                return Err(Error::invalid("p", format!("p is fixed at {q}")));
            }
        }
        let acct = sift_counts(total, p)?;
        let zero = |xi_max: f64, note: String| OperatingPoint {
            coincidences,
            budget,
            p,
            xi_max,
            shannon_ab: self.shannon,
            holevo_ae: f64::NAN,
            r_do: f64::NAN,
            r_n_raw: f64::NEG_INFINITY,
            r_n: 0.0,
            worst_noise: NoiseParams::NONE,
            note: Some(note),
        };
        if acct.m < 2 {
            return Ok(zero(
                f64::INFINITY,
                format!("infeasible: only {} estimation samples", acct.m),
            ));
        }
        let xi_max = crate::finite_key::xi_upper_bound(
            &self.estimation(acct.m, eps_pe),
            self.ctx.bound_form,
        )?;
        let worst = holevo_worst_case(&self.ctx.source, xi_max.max(0.0))?;
        let r_do = beta * self.shannon - worst.chi;
        let rate = match finite_key_rate(r_do, &acct, &budget, d, self.key_accounting()) {
            Ok(r) => r,
            Err(Error::Infeasible(why)) => {
                let mut z = zero(xi_max, format!("infeasible: {why}"));
                z.holevo_ae = worst.chi;
                z.r_do = r_do;
                z.worst_noise = worst.noise;
                return Ok(z);
            }
            Err(e) => return Err(e),
        };
        let r_n = rate.clamped();
        Ok(OperatingPoint {
            coincidences,
            budget,
            p,
            xi_max,
            shannon_ab: self.shannon,
            holevo_ae: worst.chi,
            r_do,
            r_n_raw: rate.raw,
            r_n,
            worst_noise: worst.noise,
            note: (r_n <= 0.0).then(|| "infeasible: no positive key".to_string()),
        })
    }

    fn asymptotic_point(&self, budget: SecurityBudget) -> Result<OperatingPoint> {
        let xi = self.asymptotic_xi();
        let worst = holevo_worst_case(&self.ctx.source, xi)?;
        let r_do = self.ctx.rate.beta * self.shannon - worst.chi;
        // key fraction n/N in the limit
        let (p, share) = match (self.pinned_p(), self.key_accounting()) {
            (None, _) => (1.0, 1.0),
            (Some(q), Accounting::Eq2) => (q, q * q),
            (Some(q), Accounting::Strict) => (q, 2.0 * q - 1.0),
        };
        let raw = share * r_do;
        Ok(OperatingPoint {
            coincidences: Coincidences::Infinite,
            budget,
            p,
            xi_max: xi,
            shannon_ab: self.shannon,
            holevo_ae: worst.chi,
            r_do,
            r_n_raw: raw,
            r_n: raw.max(0.0),
            worst_noise: worst.noise,
            note: (raw <= 0.0).then(|| "infeasible: no positive key".to_string()),
        })
    }

    /// Raw finite-key rate with a caller-supplied Holevo information; negative
    /// infinity where no key can be formed.
    fn score(&self, total: u64, p: f64, split: &Split, chi: &dyn Fn(f64) -> f64) -> f64 {
        let [eps_pa, eps_pe, eps_bar] = *split;
        let nf = total as f64;
        let n = floor_count(p * p * nf) as f64;
        let m = floor_count((1.0 - p) * (1.0 - p) * nf) as f64;
        if m < 2.0 {
            return f64::NEG_INFINITY;
        }
        let key = match self.key_accounting() {
            Accounting::Eq2 => n,
            Accounting::Strict => n - m,
        };
        if key < 1.0 {
            return f64::NEG_INFINITY;
        }
        let Ok(x) = erfc_inverse(self.effective_eps_pe(eps_pe)) else {
            return f64::NEG_INFINITY;
        };
        let ratio = self.ctx.sigma_hat_ratio * self.ctx.sigma_hat_ratio;
        let margin = 2.0 / m.sqrt() * x * ratio;
        let xi_max = match self.ctx.bound_form {
            BoundForm::Literal => margin,
            BoundForm::Centered => ratio - 1.0 + margin,
        };
        let r_do = self.ctx.rate.beta * self.shannon - chi(xi_max.max(0.0));
        let budget = SecurityBudget {
            eps_s: self.ctx.eps_s,
            eps_ec: self.ctx.eps_ec,
            eps_pa,
            eps_pe,
            eps_bar,
        };
        let c = Corrections::new(key, &budget, self.ctx.source.dimension());
        key / nf * (r_do - c.total())
    }

    fn p_grid(&self) -> Vec<f64> {
        if let Some(p) = self.pinned_p() {
            return vec![p];
        }
        let s = &self.ctx.search;
        if s.p_points == 1 {
            return vec![0.5];
        }
        (0..s.p_points)
            .map(|i| 0.5 + (s.p_max - 0.5) * i as f64 / (s.p_points - 1) as f64)
            .collect()
    }

    /// Budget splits on a logarithmic grid: two components on the grid, the
    /// third taking the remainder, for each choice of the remainder slot.
    fn split_grid(&self) -> Vec<Split> {
        let free = self.ctx.eps_s - self.ctx.eps_ec;
        let k = self.ctx.search.eps_points;
        let (lo, hi) = (EPS_FLOOR.ln(), free.ln());
        let axis: Vec<f64> = (0..k)
            .map(|i| (lo + (hi - lo) * i as f64 / (k - 1) as f64).exp())
            .collect();
        let mut out = Vec::new();
        for slot in [2usize, 1, 0] {
            for &a in &axis {
                for &b in &axis {
                    let rest = free - a - b;
                    if rest < EPS_FLOOR {
                        continue;
                    }
                    let s = match slot {
                        2 => [a, b, rest],
                        1 => [a, rest, b],
                        _ => [rest, a, b],
                    };
                    out.push(s);
                }
            }
        }
        out
    }

    fn p_ceiling(&self, total: u64) -> f64 {
        // at least two estimation samples
        let cap = 1.0 - (2.0 / total as f64).sqrt();
        cap.min(1.0 - 1e-12).max(0.5)
    }

    /// Maximises the finite-key rate at `coincidences`.
    pub fn optimize(&self, coincidences: Coincidences) -> Result<OperatingPoint> {
        let total = match coincidences {
            Coincidences::Infinite => return self.asymptotic_point(self.even_budget()?),
            Coincidences::Finite(0) => {
                return Ok(OperatingPoint {
                    coincidences,
                    budget: self.even_budget()?,
                    p: 0.5,
                    xi_max: f64::INFINITY,
                    shannon_ab: self.shannon,
                    holevo_ae: f64::NAN,
                    r_do: f64::NAN,
                    r_n_raw: f64::NEG_INFINITY,
                    r_n: 0.0,
                    worst_noise: NoiseParams::NONE,
                    note: Some("infeasible: no coincidences".into()),
                });
            }
            Coincidences::Finite(n) => n,
        };

        let table = &self.table;
        let surrogate = |xi: f64| table.eval(xi).unwrap_or(f64::INFINITY);
        let (mut p, mut split, mut best) = self.coarse(total, &surrogate);
        for _ in 0..self.ctx.search.polish_rounds {
            let before = best;
            (p, split, best) = self.polish(total, p, split, best, &surrogate);
            if best - before <= 1e-13 {
                break;
            }
        }

        let memo = RefCell::new(HashMap::<u64, f64>::new());
        let exact = |xi: f64| -> f64 {
            if let Some(v) = memo.borrow().get(&xi.to_bits()) {
                return *v;
            }
            let v = holevo_worst_case(&self.ctx.source, xi)
                .map(|w| w.chi)
                .unwrap_or(f64::INFINITY);
            memo.borrow_mut().insert(xi.to_bits(), v);
            v
        };
        let best_exact = self.score(total, p, &split, &exact);
        (p, split, _) = self.polish(total, p, split, best_exact, &exact);

        let [eps_pa, eps_pe, _] = split;
        // eps_bar is re-derived so the budget identity holds to rounding.
        let budget =
            SecurityBudget::with_remainder(self.ctx.eps_s, self.ctx.eps_ec, eps_pa, eps_pe)?;
        let mut point = self.evaluate(
            coincidences,
            p,
            budget.eps_pa,
            budget.eps_pe,
            budget.eps_bar,
        )?;
        if point.r_n <= 0.0 && point.note.is_none() {
            point.note = Some("infeasible: no positive key".into());
        }
        Ok(point)
    }

    fn coarse(&self, total: u64, chi: &dyn Fn(f64) -> f64) -> (f64, Split, f64) {
        let splits = self.split_grid();
        let mut best: Option<(f64, Split, f64)> = None;
        for p in self.p_grid() {
            for s in &splits {
                let r = self.score(total, p, s, chi);
                let better = match &best {
                    None => true,
                    Some((bp, bs, br)) => {
                        let tied = r.is_finite() && (r - br).abs() <= TIE_TOL;
                        r > br + TIE_TOL || (tied && (p < *bp || (p == *bp && s[1] > bs[1])))
                    }
                };
                if better {
                    best = Some((p, *s, r));
                }
            }
        }
        best.expect("grids are non-empty")
    }

    fn polish(
        &self,
        total: u64,
        mut p: f64,
        mut split: Split,
        mut best: f64,
        chi: &dyn Fn(f64) -> f64,
    ) -> (f64, Split, f64) {
        if self.pinned_p().is_none() {
            let ceiling = self.p_ceiling(total);
            let step = if self.ctx.search.p_points > 1 {
                (self.ctx.search.p_max - 0.5) / (self.ctx.search.p_points - 1) as f64
            } else {
                0.5
            };
            let lo = (p - step).max(0.5);
            let hi = if p + step >= self.ctx.search.p_max {
                ceiling
            } else {
                (p + step).min(ceiling)
            };
            if hi > lo {
                let (x, fx) = golden_max(|q| self.score(total, q, &split, chi), lo, hi, 1e-10);
                if fx > best {
                    p = x;
                    best = fx;
                }
            }
        }
        for (i, j) in [(0usize, 2usize), (1, 2), (0, 1)] {
            let pair = split[i] + split[j];
            if pair < 2.0 * EPS_FLOOR * 1.000_001 {
                continue;
            }
            let frac = |z: f64| 1.0 / (1.0 + (-z).exp());
            let f_lo = EPS_FLOOR / pair;
            let z_lo = (f_lo / (1.0 - f_lo)).ln();
            let z_hi = -z_lo;
            let place = |z: f64| {
                let mut s = split;
                let a = (pair * frac(z)).clamp(EPS_FLOOR, pair - EPS_FLOOR);
                s[i] = a;
                s[j] = pair - a;
                s
            };
            let (z, fz) = golden_max(|z| self.score(total, p, &place(z), chi), z_lo, z_hi, 1e-7);
            if fz > best {
                split = place(z);
                best = fz;
            }
        }
        (p, split, best)
    }
}

/// Evaluates one operating point of `ctx`.
pub fn evaluate_point(
    coincidences: Coincidences,
    p: f64,
    eps_pa: f64,
    eps_pe: f64,
    eps_bar: f64,
    ctx: &Context,
) -> Result<OperatingPoint> {
    Evaluator::new(ctx)?.evaluate(coincidences, p, eps_pa, eps_pe, eps_bar)
}

/// Best operating point of `ctx` at `coincidences`.
pub fn optimize_point(coincidences: Coincidences, ctx: &Context) -> Result<OperatingPoint> {
    Evaluator::new(ctx)?.optimize(coincidences)
}

fn check_ascending(grid: &[Coincidences]) -> Result<()> {
    for (i, w) in grid.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::invalid("n_grid", "must be strictly ascending").at_index(i + 1));
        }
    }
    if let Some(Coincidences::Finite(0)) = grid.first() {
        return Err(Error::invalid("n_grid", "values must be positive").at_index(0));
    }
    Ok(())
}

/// Optimised points for an ascending grid of coincidence counts.
pub fn sweep_n(ctx: &Context, n_grid: &[Coincidences]) -> Result<Vec<OperatingPoint>> {
    check_ascending(n_grid)?;
    let ev = Evaluator::new(ctx)?;
    n_grid
        .par_iter()
        .enumerate()
        .map(|(i, &n)| ev.optimize(n).map_err(|e| e.at_index(i)))
        .collect()
}

/// One cell of a distance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DistancePoint {
    pub length_km: f64,
    pub point: OperatingPoint,
}

/// Optimised points over channel lengths for each coincidence count. Rows are
/// ordered by `N` descending (asymptotic first), lengths ascending within a row.
pub fn sweep_distance(
    ctx: &Context,
    n_values: &[Coincidences],
    lengths_km: &[f64],
) -> Result<Vec<DistancePoint>> {
    if n_values.is_empty() {
        return Err(Error::invalid("n_values", "empty grid"));
    }
    if lengths_km.is_empty() {
        return Err(Error::invalid("lengths", "empty grid"));
    }
    let mut ns = n_values.to_vec();
    ns.sort_unstable_by(|a, b| b.cmp(a));
    ns.dedup();
    if let Some(Coincidences::Finite(0)) = ns.last() {
        return Err(Error::invalid("n_values", "values must be positive"));
    }
    let stats =
        crate::channel::distance_to_statistics_sweep(&ctx.channel, &ctx.detector, lengths_km)?;
    let evaluators = stats
        .iter()
        .zip(lengths_km)
        .enumerate()
        .map(|(i, (s, &l))| {
            let mut c = *ctx;
            c.channel.length_km = l;
            Evaluator::with_link(&c, *s).map_err(|e| e.at_index(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(Coincidences, usize)> = ns
        .iter()
        .flat_map(|&n| (0..lengths_km.len()).map(move |j| (n, j)))
        .collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(i, &(n, j))| {
            evaluators[j]
                .optimize(n)
                .map(|point| DistancePoint {
                    length_km: lengths_km[j],
                    point,
                })
                .map_err(|e| e.at_index(i))
        })
        .collect()
}

/// Smallest `N` in `[lo, hi]` with a positive optimised rate, if any,
/// assuming the optimised rate is monotone in `N`.
pub fn positive_key_threshold(ev: &Evaluator, lo: u64, hi: u64) -> Result<Option<u64>> {
    if lo == 0 || hi < lo {
        return Err(Error::invalid("range", "need 0 < lo <= hi"));
    }
    let positive = |n: u64| ev.optimize(Coincidences::Finite(n)).map(|p| p.has_key());
    if !positive(hi)? {
        return Ok(None);
    }
    if positive(lo)? {
        return Ok(Some(lo));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > 1 {
        let mid = a + (b - a) / 2;
        if positive(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(Some(b))
}
