//! Human-readable and CSV rendering for the subcommands.

use std::fmt::Write as _;

use doqkd::csv::fmt_g9;
use doqkd::info::ShannonModel;
use doqkd::mc::ValidationReport;
use doqkd::optimizer::OperatingPoint;

use crate::Failure;

pub const VALIDATION_HEADER: &str = "check,form,m,eps_pe,trials,violations,d,jitter,xi,efficiency,dark_rate,length_km,signal_fraction,model,value,reference,limit,result";

/// Re-checks a point's invariants before it is emitted.
pub fn check_point(p: &OperatingPoint) -> Result<(), Failure> {
    let bad = |what: &str| {
        Failure::Config(format!(
            "internal check failed at N = {}: {what}",
            p.coincidences
        ))
    };
    p.budget.validate().map_err(|e| bad(&e.to_string()))?;
    if !(0.5..=1.0).contains(&p.p) {
        return Err(bad("p outside [1/2, 1]"));
    }
    if !(p.r_n >= 0.0 && p.r_n.is_finite()) {
        return Err(bad("rate is negative or not finite"));
    }
    if p.has_key() && p.r_n > p.r_do {
        return Err(bad("finite-key rate exceeds the asymptotic rate"));
    }
    Ok(())
}

/// Every field of an operating point, with units.
pub fn describe(d: f64, p: &OperatingPoint) -> String {
    let mut s = String::new();
    let mut line = |name: &str, value: String, unit: &str| {
        writeln!(s, "{name:<10} {value:>16}  {unit}").expect("writing to a String");
    };
    line("N", p.coincidences.to_string(), "coincidences");
    line("d", fmt_g9(d), "");
    line("p", fmt_g9(p.p), "arrival-time basis probability");
    line("eps_pa", fmt_g9(p.budget.eps_pa), "");
    line("eps_pe", fmt_g9(p.budget.eps_pe), "");
    line("eps_bar", fmt_g9(p.budget.eps_bar), "");
    line(
        "xi_max",
        fmt_g9(p.xi_max),
        "excess noise, units of sigma_cor^2",
    );
    line(
        "eta",
        fmt_g9(p.worst_noise.eta),
        "worst-case correlation degradation",
    );
    line(
        "epsilon",
        fmt_g9(p.worst_noise.epsilon),
        "worst-case excess noise",
    );
    line("I(A;B)", fmt_g9(p.shannon_ab), "bits/coincidence");
    line("chi(A;E)", fmt_g9(p.holevo_ae), "bits/coincidence");
    line("r_do", fmt_g9(p.r_do), "bits/coincidence");
    line("r_n", fmt_g9(p.r_n), "bits/coincidence");
    if let Some(note) = &p.note {
        line("note", note.clone(), "");
    }
    s
}

fn model_name(m: ShannonModel) -> String {
    match m {
        ShannonModel::Gaussian => "gaussian".into(),
        ShannonModel::Binned { bins } => format!("binned{bins}"),
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn validation_rows(r: &ValidationReport) -> Vec<String> {
    let mut rows = Vec::new();
    for c in &r.coverage {
        let result = if c.gating { verdict(c.pass()) } else { "info" };
        rows.push(format!(
            "coverage,{},{},{},{},{},,,,,,,,,{},{},{},{}",
            c.form,
            c.m,
            fmt_g9(c.eps_pe),
            c.coverage.trials,
            c.coverage.violations,
            fmt_g9(c.coverage.fraction()),
            fmt_g9(c.eps_pe),
            fmt_g9(c.allowance),
            result
        ));
    }
    for i in &r.information {
        let d = &i.draw;
        rows.push(format!(
            "shannon,,,,,,{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_g9(d.d),
            fmt_g9(d.jitter),
            fmt_g9(d.xi),
            fmt_g9(d.efficiency),
            fmt_g9(d.dark_rate),
            fmt_g9(d.length_km),
            fmt_g9(i.signal_fraction),
            model_name(i.model),
            fmt_g9(i.empirical_bits),
            fmt_g9(i.model_bits),
            fmt_g9(i.tolerance),
            verdict(i.pass())
        ));
    }
    rows
}

pub fn validation_summary(r: &ValidationReport) -> String {
    let mut s = String::new();
    for c in r.coverage.iter().filter(|c| c.gating) {
        writeln!(
            s,
            "coverage {} m={} eps_pe={}: {}/{} violations ({} <= {}) {}",
            c.form,
            c.m,
            fmt_g9(c.eps_pe),
            c.coverage.violations,
            c.coverage.trials,
            fmt_g9(c.coverage.fraction()),
            fmt_g9(c.allowance),
            verdict(c.pass())
        )
        .expect("writing to a String");
    }
    let info_fail = r.information.iter().filter(|i| !i.pass()).count();
    if !r.information.is_empty() {
        let worst = r
            .information
            .iter()
            .map(|i| (i.model_bits - i.empirical_bits).abs())
            .fold(0.0, f64::max);
        writeln!(
            s,
            "shannon cross-check: {} rows, max |model - sampled| = {} bits, {} failing",
            r.information.len(),
            fmt_g9(worst),
            info_fail
        )
        .expect("writing to a String");
    }
    writeln!(s, "mc-validate: {}", verdict(r.pass())).expect("writing to a String");
    s
}
