//! Plain CSV writing helpers shared by the path, trajectory and report exports.

use std::fmt::Write;

/// Formats a value with 17 significant digits; non-finite values render as
/// `Inf`, `-Inf` or `NaN`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "Inf" } else { "-Inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Renders `t,<prefix>1,...,<prefix>m` rows for a vector-valued series on a grid.
pub(crate) fn series_csv<'a, I>(prefix: &str, dim: usize, rows: I) -> String
where
    I: IntoIterator<Item = (f64, &'a [f64])>,
{
    let mut out = String::from("t");
    for i in 1..=dim {
        let _ = write!(out, ",{prefix}{i}");
    }
    out.push('\n');
    for (t, values) in rows {
        out.push_str(&fmt_f64(t));
        for v in values {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}
