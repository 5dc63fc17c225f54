/// `x` with six significant digits, fixed-point when that stays readable.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

pub fn opt6(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_else(|| "-".into())
}
