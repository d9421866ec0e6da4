//! Text checkpoints: the scheme config plus every parameter tensor.
//!
//! ```text
//! spatial3d-checkpoint 1
//! config {"n_points":128,...}
//! tensor vote.hidden.weight 16 64
//! 0.0123 -0.5 ...
//! ```
//!
//! Each `tensor` line gives name, rows and cols and is followed by one line of
//! `rows * cols` row-major values in shortest round-trip decimal form.

use std::collections::BTreeMap;

use spatial3d_core::diff::Tensor2;
use spatial3d_core::scheme::{SchemeConfig, SchemeParams};

use crate::error::CliError;

pub const MAGIC: &str = "spatial3d-checkpoint 1";

pub fn encode(cfg: &SchemeConfig, params: &SchemeParams) -> Result<String, CliError> {
    let mut out = format!("{MAGIC}\n");
    let cfg_json = serde_json::to_string(cfg).map_err(CliError::internal)?;
    out.push_str(&format!("config {cfg_json}\n"));
    for (name, t) in params.named() {
        out.push_str(&format!("tensor {name} {} {}\n", t.rows(), t.cols()));
        let values: Vec<String> = t.data().iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&values.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn decode(text: &str) -> Result<(SchemeConfig, SchemeParams), CliError> {
    let bad =
        |line: usize, msg: &str| CliError::validation(format!("checkpoint line {line}: {msg}"));
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, MAGIC)) => {}
        _ => return Err(bad(1, "missing header")),
    }
    let (n, cfg_line) = lines.next().ok_or_else(|| bad(2, "missing config"))?;
    let cfg_json = cfg_line
        .strip_prefix("config ")
        .ok_or_else(|| bad(n, "expected config"))?;
    let cfg: SchemeConfig = serde_json::from_str(cfg_json).map_err(|e| bad(n, &e.to_string()))?;
    cfg.validate()?;

    let mut tensors = BTreeMap::new();
    while let Some((n, header)) = lines.next() {
        let fields: Vec<&str> = header.split(' ').collect();
        let [kw, name, rows, cols] = fields[..] else {
            return Err(bad(n, "expected `tensor NAME ROWS COLS`"));
        };
        if kw != "tensor" {
            return Err(bad(n, "expected `tensor NAME ROWS COLS`"));
        }
        let rows: usize = rows.parse().map_err(|_| bad(n, "bad row count"))?;
        let cols: usize = cols.parse().map_err(|_| bad(n, "bad column count"))?;
        let (vn, values) = lines.next().ok_or_else(|| bad(n + 1, "missing values"))?;
        let data = values
            .split_ascii_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(vn, &e.to_string()))?;
        let t = Tensor2::new(rows, cols, data).map_err(|e| bad(vn, &e.to_string()))?;
        if tensors.insert(name.to_string(), t).is_some() {
            return Err(bad(n, &format!("duplicate tensor {name}")));
        }
    }
    let params = SchemeParams::from_named(&cfg, tensors)?;
    Ok((cfg, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = SchemeConfig::toy();
        let params = SchemeParams::random(&cfg, 3, 0.7).unwrap();
        let text = encode(&cfg, &params).unwrap();
        let (cfg2, params2) = decode(&text).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(params2, params);
        assert_eq!(encode(&cfg2, &params2).unwrap(), text);
    }

    #[test]
    fn damaged_checkpoints_are_rejected() {
        let cfg = SchemeConfig::toy();
        let text = encode(&cfg, &SchemeParams::init(&cfg, 1).unwrap()).unwrap();
        assert!(decode("").is_err());
        assert!(decode(&text.replacen(MAGIC, "spatial3d-checkpoint 9", 1)).is_err());
        // Drop the last tensor's values.
        let cut = text.trim_end().rfind('\n').unwrap();
        assert!(decode(&text[..cut]).is_err());
        // Shape disagreeing with the config.
        let wrong = text.replacen(
            "tensor vote.hidden.weight 16 64",
            "tensor vote.hidden.weight 64 16",
            1,
        );
        assert_ne!(wrong, text);
        assert!(decode(&wrong).is_err());
    }
}
