//! Evaluation reports as flat `key = value` text and as JSON.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use spatial3d_core::eval::EvalReport;

/// JSON form: undefined metrics are `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub metrics: BTreeMap<String, Option<f64>>,
    pub counts: BTreeMap<String, usize>,
}

impl From<&EvalReport> for ReportJson {
    fn from(r: &EvalReport) -> Self {
        let mut metrics: BTreeMap<String, Option<f64>> = r
            .metrics
            .iter()
            .map(|(k, v)| (k.clone(), Some(*v)))
            .collect();
        for k in &r.undefined {
            metrics.insert(k.clone(), None);
        }
        ReportJson {
            metrics,
            counts: r.counts.clone(),
        }
    }
}

/// Metrics sorted by name, then counts as `count.NAME`. Undefined metrics read `n/a`.
pub fn to_text(r: &EvalReport) -> String {
    let json = ReportJson::from(r);
    let mut out = String::new();
    for (k, v) in &json.metrics {
        match v {
            Some(v) => out.push_str(&format!("{k} = {v:?}\n")),
            None => out.push_str(&format!("{k} = n/a\n")),
        }
    }
    for (k, v) in &json.counts {
        out.push_str(&format!("count.{k} = {v}\n"));
    }
    out
}

pub fn to_json(r: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(&ReportJson::from(r)).expect("plain maps serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_and_json_agree() {
        let mut r = EvalReport::default();
        r.metrics.insert("acc@0.5".into(), 0.75);
        r.metrics.insert("f1@0.5".into(), 1.0);
        r.undefined.insert("mare_x@0.5".into());
        r.counts.insert("samples".into(), 4);
        assert_eq!(
            to_text(&r),
            "acc@0.5 = 0.75\nf1@0.5 = 1.0\nmare_x@0.5 = n/a\ncount.samples = 4\n"
        );
        let back: ReportJson = serde_json::from_str(&to_json(&r)).unwrap();
        assert_eq!(back.metrics["acc@0.5"], Some(0.75));
        assert_eq!(back.metrics["mare_x@0.5"], None);
        assert_eq!(back.counts["samples"], 4);
    }
}
