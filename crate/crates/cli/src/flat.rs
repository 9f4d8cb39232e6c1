//! CSV projection: one row per sample, nested fields joined with dots.

use serde::Serialize;
use serde_json::Value;

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{}.{}", prefix, k) };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&key(k), x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&key(&i.to_string()), x, out);
            }
        }
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::Number(n) => {
            let s = n.as_f64().filter(|_| n.is_f64()).map_or_else(|| n.to_string(), |f| format!("{:.16e}", f));
            out.push((prefix.to_string(), s));
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
    }
}

/// Columns are the union of all sample keys, in first-seen order.
pub fn to_csv<T: Serialize>(samples: &[T]) -> Result<String, String> {
    let mut rows = Vec::with_capacity(samples.len());
    let mut header: Vec<String> = Vec::new();
    for s in samples {
        let v = serde_json::to_value(s).map_err(|e| e.to_string())?;
        let mut cells = Vec::new();
        flatten("", &v, &mut cells);
        for (k, _) in &cells {
            if !header.contains(k) {
                header.push(k.clone());
            }
        }
        rows.push(cells);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| e.to_string())?;
    for cells in rows {
        let rec: Vec<&str> = header
            .iter()
            .map(|h| cells.iter().find(|(k, _)| k == h).map_or("", |(_, v)| v.as_str()))
            .collect();
        w.write_record(&rec).map_err(|e| e.to_string())?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    String::from_utf8(bytes).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        t: f64,
        k: Vec<Option<f64>>,
        label: &'static str,
    }

    #[test]
    fn nested_columns() {
        let rows = [Row { t: 0.5, k: vec![Some(1.0), None], label: "a" }, Row { t: 1.0, k: vec![], label: "b" }];
        let s = to_csv(&rows).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "t,k.0,k.1,label");
        assert_eq!(lines.next().unwrap(), "5.0000000000000000e-1,1.0000000000000000e0,,a");
        assert_eq!(lines.next().unwrap(), "1.0000000000000000e0,,,b");
    }
}
