//! Number formatting and small text-output helpers.

use std::io::Write;

/// Writes to stdout, swallowing write errors so a downstream `head` closing
/// the pipe ends the program without a panic trace.
pub fn emit(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes());
    let _ = stdout.flush();
}

/// Formats `x` with `sig` significant digits and no trailing zeros, so
/// tables stay readable across magnitudes (`2.4`, `90`, `0.404061`).
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sig = sig.max(1);
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - magnitude).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    // "-0" after rounding collapses to plain zero.
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Prints aligned `key  value` rows.
pub fn print_kv(rows: &[(&str, String)]) {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut text = String::new();
    for (key, value) in rows {
        text.push_str(&format!("{key:<width$}  {value}\n"));
    }
    emit(&text);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits_trim_cleanly() {
        assert_eq!(fmt_sig(2.4, 6), "2.4");
        assert_eq!(fmt_sig(90.0, 6), "90");
        assert_eq!(fmt_sig(0.404061, 6), "0.404061");
        assert_eq!(fmt_sig(0.4040614999, 6), "0.404061");
        assert_eq!(fmt_sig(123456789.0, 6), "123456789");
        assert_eq!(fmt_sig(-0.000012345678, 4), "-0.00001235");
        assert_eq!(fmt_sig(0.0, 6), "0");
        assert_eq!(fmt_sig(10.0, 2), "10");
    }

    #[test]
    fn precision_one_still_prints() {
        assert_eq!(fmt_sig(0.666, 1), "0.7");
        assert_eq!(fmt_sig(666.0, 1), "666");
    }
}
