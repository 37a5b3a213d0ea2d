//! Plain-decimal formatting for CSV output.
//!
//! Every float in a data file is printed with nine significant digits,
//! never in scientific notation, so files diff cleanly across platforms
//! and runs.

/// Formats with nine significant digits in plain decimal notation.
pub fn format_sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000000".into();
    }
    let magnitude = x.abs().log10().floor() as i32 + 1;
    if magnitude >= 9 {
        // All nine significant digits sit left of the point; round there.
        let scale = 10f64.powi(magnitude - 9);
        format!("{:.0}", (x / scale).round() * scale)
    } else {
        format!("{:.*}", (9 - magnitude) as usize, x)
    }
}

/// Joins one CSV row, no trailing separator.
pub fn csv_row(fields: &[String]) -> String {
    fields.join(",")
}
