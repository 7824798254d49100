//! CSV rendering of sweep results with 9 significant digits.

use std::fmt::Write as _;

use crate::optimizer::{Coincidences, DistancePoint, OperatingPoint};

pub const SWEEP_N_HEADER: &str = "N,d,p_opt,eps_pa,eps_pe,eps_bar,xi_max,r_do,r_n";
pub const SWEEP_DISTANCE_HEADER: &str = "length_km,N,r_n,d,p_opt,eps_pa,eps_pe,eps_bar,xi_max,r_do";

/// Renders `x` like C's `%.9g`.
pub fn fmt_g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    strip_zeros(&format!("{x:.decimals$}")).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn fmt_n(n: Coincidences) -> String {
    n.to_string()
}

fn provenance(p: &OperatingPoint) -> String {
    [
        p.p,
        p.budget.eps_pa,
        p.budget.eps_pe,
        p.budget.eps_bar,
        p.xi_max,
        p.r_do,
    ]
    .iter()
    .map(|v| fmt_g9(*v))
    .collect::<Vec<_>>()
    .join(",")
}

/// One `sweep-n` row.
pub fn sweep_n_row(d: f64, p: &OperatingPoint) -> String {
    let mut s = String::new();
    write!(
        s,
        "{},{},{},{},{},{},{},{},{}",
        fmt_n(p.coincidences),
        fmt_g9(d),
        fmt_g9(p.p),
        fmt_g9(p.budget.eps_pa),
        fmt_g9(p.budget.eps_pe),
        fmt_g9(p.budget.eps_bar),
        fmt_g9(p.xi_max),
        fmt_g9(p.r_do),
        fmt_g9(p.r_n)
    )
    .expect("writing to a String");
    s
}

/// One `sweep-distance` row.
pub fn sweep_distance_row(d: f64, cell: &DistancePoint) -> String {
    let p = &cell.point;
    let prov = provenance(p);
    let (pp, rest) = prov.split_once(',').expect("provenance has several fields");
    format!(
        "{},{},{},{},{},{}",
        fmt_g9(cell.length_km),
        fmt_n(p.coincidences),
        fmt_g9(p.r_n),
        fmt_g9(d),
        pp,
        rest
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g9() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (1.5, "1.5"),
            (1.94, "1.94"),
            (123_456_789.0, "123456789"),
            (1_234_567_890.0, "1.23456789e+09"),
            (1e12, "1e+12"),
            (0.0001, "0.0001"),
            (0.000_012_345, "1.2345e-05"),
            (1e-15, "1e-15"),
            (2.0 / 3.0, "0.666666667"),
            (-0.125, "-0.125"),
            (9.999_999_999, "10"),
            (999_999_999.5, "1e+09"),
            (0.999_999_999_7, "1"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g9(x), want, "{x}");
        }
        assert_eq!(fmt_g9(f64::INFINITY), "inf");
        assert_eq!(fmt_g9(f64::NAN), "nan");
    }
}
