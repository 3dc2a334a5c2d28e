//! Number formatting shared by the CSV writers.

/// Shortest decimal text that parses back to exactly `v`, choosing between
/// positional and exponent notation by length.
pub fn fmt_real(v: f64) -> String {
    let plain = format!("{v}");
    let sci = format!("{v:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}
