//! Number formatting shared by every writer: 12 significant digits.

use serde_json::Value;

pub const SIG: usize = 12;

pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..12).contains(&mag) {
        let decimals = (SIG as i32 - 1 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        trim(&s)
    } else {
        let s = format!("{:.*e}", SIG - 1, x);
        let (mantissa, exp) = s.split_once('e').expect("exponent");
        format!("{}e{exp}", trim(mantissa))
    }
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Rounds every float in a JSON tree to 12 significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64");
            num(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(0.121_704_241_949_123), "0.121704241949");
        assert_eq!(num(87.267_799_999_99), "87.2678");
        assert_eq!(num(1.0), "1");
        assert_eq!(num(-2.5e-9), "-2.5e-9");
        assert_eq!(num(1.234_567_890_123_4e15), "1.23456789012e15");
        assert_eq!(num(0.0), "0");
    }
}
