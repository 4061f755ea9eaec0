//! Canonical JSON writer: sorted keys, two-space indentation, and floats
//! rendered like C's `%.6g`. Re-serializing a parsed canonical document is
//! byte-identical, so command outputs diff cleanly.

use serde_json::Value;

/// Formats a float with 6 significant digits, trimming trailing zeros;
/// scientific notation outside [1e-4, 1e6), with a signed two-digit
/// exponent.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x < 0.0 {
        return format!("-{}", format_g6(-x));
    }
    // 5 digits after the point in scientific form = 6 significant digits
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("numeric exponent");
    if (-4..6).contains(&exp) {
        let precision = (5 - exp).max(0) as usize;
        let fixed = format!("{:.*}", precision, x);
        let trimmed = if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.')
        } else {
            &fixed
        };
        trimmed.to_string()
    } else {
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

fn write_number(n: &serde_json::Number, out: &mut String) {
    if let Some(i) = n.as_i64() {
        out.push_str(&i.to_string());
    } else if let Some(u) = n.as_u64() {
        out.push_str(&u.to_string());
    } else {
        out.push_str(&format_g6(n.as_f64().expect("finite float")));
    }
}

fn write_value(value: &Value, indent: usize, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(n, out),
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string encodes"));
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // short arrays of scalars stay on one line
            let scalar_only = items
                .iter()
                .all(|v| !matches!(v, Value::Array(_) | Value::Object(_)));
            if scalar_only {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(item, indent, out);
                }
                out.push(']');
            } else {
                out.push_str("[\n");
                for (i, item) in items.iter().enumerate() {
                    out.push_str(&"  ".repeat(indent + 1));
                    write_value(item, indent + 1, out);
                    if i + 1 < items.len() {
                        out.push(',');
                    }
                    out.push('\n');
                }
                out.push_str(&"  ".repeat(indent));
                out.push(']');
            }
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            // serde_json's default map is a BTreeMap, so iteration is
            // already key-sorted
            let len = map.len();
            for (i, (key, item)) in map.iter().enumerate() {
                out.push_str(&"  ".repeat(indent + 1));
                out.push_str(&serde_json::to_string(key).expect("key encodes"));
                out.push_str(": ");
                write_value(item, indent + 1, out);
                if i + 1 < len {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&"  ".repeat(indent));
            out.push('}');
        }
    }
}

/// Renders the value canonically with a trailing newline.
pub fn to_canonical_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, 0, &mut out);
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn g6_formatting() {
        assert_eq!(format_g6(0.0), "0");
        assert_eq!(format_g6(1.0), "1");
        assert_eq!(format_g6(0.6), "0.6");
        assert_eq!(format_g6(2.0 / 3.0), "0.666667");
        assert_eq!(format_g6(-0.5333333333333333), "-0.533333");
        assert_eq!(format_g6(1234.5678), "1234.57");
        assert_eq!(format_g6(0.000123456), "0.000123456");
        assert_eq!(format_g6(1.2e-6), "1.2e-06");
        assert_eq!(format_g6(1609438.0), "1.60944e+06");
        assert_eq!(format_g6(100000.0), "100000");
    }

    #[test]
    fn g6_is_idempotent_through_parse() {
        for x in [0.1, 2.0 / 3.0, 123456.789, 3.5e-9, 0.98765432] {
            let s = format_g6(x);
            let reparsed: f64 = s.parse().unwrap();
            assert_eq!(format_g6(reparsed), s, "value {x}");
        }
    }

    #[test]
    fn keys_are_sorted_and_stable() {
        let value = json!({"zeta": 1, "alpha": {"b": 0.5, "a": [1, 2.25]}});
        let s = to_canonical_string(&value);
        assert_eq!(
            s,
            "{\n  \"alpha\": {\n    \"a\": [1, 2.25],\n    \"b\": 0.5\n  },\n  \"zeta\": 1\n}\n"
        );
        // parse and re-serialize: byte-identical
        let reparsed: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(to_canonical_string(&reparsed), s);
    }
}
