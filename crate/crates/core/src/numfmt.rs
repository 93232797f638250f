//! Fixed-precision decimal output.
//!
//! Every number written to an exchange file or report passes through
//! [`round_sig9`], so the text form carries at most nine significant digits and
//! is byte-identical across runs.

/// Rounds `x` to nine significant decimal digits.
///
/// Non-finite values are returned unchanged.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.8e}")
        .parse()
        .expect("scientific formatting of a finite f64 always parses")
}

/// Formats `x` with at most nine significant digits, shortest form.
pub fn fmt_sig9(x: f64) -> String {
    format!("{}", round_sig9(x))
}
