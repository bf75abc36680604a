//! Structural validation of artifact JSON (as written or as served).

use serde_json::{Map, Value};

const TOP_KEYS: [&str; 7] = [
    "schema_version",
    "community_id",
    "generated_at",
    "window",
    "total_posts",
    "records",
    "summaries",
];
const RECORD_KEYS: [&str; 10] = [
    "post_id",
    "timestamp",
    "x",
    "y",
    "novelty",
    "transience",
    "resonance",
    "cluster",
    "author",
    "snippet",
];
const WINDOW_KEYS: [&str; 2] = ["n", "mode"];
const SUMMARY_KEYS: [&str; 3] = ["novelty", "transience", "resonance"];
const HISTOGRAM_KEYS: [&str; 3] = ["metric", "bin_edges", "counts"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaViolation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

struct Checker {
    violations: Vec<SchemaViolation>,
}

impl Checker {
    fn fail(&mut self, path: &str, message: impl Into<String>) {
        self.violations.push(SchemaViolation {
            path: path.to_owned(),
            message: message.into(),
        });
    }

    fn object<'v>(
        &mut self,
        v: &'v Value,
        path: &str,
        keys: &[&str],
    ) -> Option<&'v Map<String, Value>> {
        let Some(obj) = v.as_object() else {
            self.fail(path, "expected object");
            return None;
        };
        let actual: Vec<&str> = obj.keys().map(String::as_str).collect();
        if actual != keys {
            self.fail(
                path,
                format!("expected keys {keys:?} in order, got {actual:?}"),
            );
        }
        Some(obj)
    }

    fn integer(&mut self, v: Option<&Value>, path: &str, min: i64) {
        match v.and_then(Value::as_i64) {
            Some(i) if i >= min => {}
            Some(i) => self.fail(path, format!("{i} below minimum {min}")),
            None => self.fail(path, "expected integer"),
        }
    }

    fn number(&mut self, v: Option<&Value>, path: &str, nullable: bool) {
        match v {
            Some(Value::Number(n)) if n.as_f64().is_some_and(f64::is_finite) => {}
            Some(Value::Null) if nullable => {}
            _ => self.fail(
                path,
                if nullable {
                    "expected number or null"
                } else {
                    "expected number"
                },
            ),
        }
    }

    fn string(&mut self, v: Option<&Value>, path: &str, nullable: bool) {
        match v {
            Some(Value::String(_)) => {}
            Some(Value::Null) if nullable => {}
            _ => self.fail(path, "expected string"),
        }
    }
}

/// Returns every structural violation: key sets and order, value types,
/// enum values, snippet length and histogram shape.
pub fn validate_artifact_json(doc: &Value) -> Result<(), Vec<SchemaViolation>> {
    let mut c = Checker {
        violations: Vec::new(),
    };
    if let Some(top) = c.object(doc, "$", &TOP_KEYS) {
        if top.get("schema_version").and_then(Value::as_u64)
            != Some(u64::from(super::SCHEMA_VERSION))
        {
            c.fail("$.schema_version", "unsupported schema version");
        }
        c.string(top.get("community_id"), "$.community_id", false);
        c.integer(top.get("generated_at"), "$.generated_at", i64::MIN);
        c.integer(top.get("total_posts"), "$.total_posts", 0);
        if let Some(w) = top.get("window") {
            if let Some(w) = c.object(w, "$.window", &WINDOW_KEYS) {
                c.integer(w.get("n"), "$.window.n", 1);
                match w.get("mode").and_then(Value::as_str) {
                    Some("mean_distribution" | "mean_divergence") => {}
                    _ => c.fail("$.window.mode", "unknown window mode"),
                }
            }
        }
        match top.get("records").and_then(Value::as_array) {
            None => c.fail("$.records", "expected array"),
            Some(records) => {
                for (i, r) in records.iter().enumerate() {
                    let p = format!("$.records[{i}]");
                    let Some(r) = c.object(r, &p, &RECORD_KEYS) else {
                        continue;
                    };
                    c.string(r.get("post_id"), &format!("{p}.post_id"), false);
                    c.integer(r.get("timestamp"), &format!("{p}.timestamp"), i64::MIN);
                    c.number(r.get("x"), &format!("{p}.x"), false);
                    c.number(r.get("y"), &format!("{p}.y"), false);
                    for m in SUMMARY_KEYS {
                        c.number(r.get(m), &format!("{p}.{m}"), true);
                    }
                    c.integer(r.get("cluster"), &format!("{p}.cluster"), -1);
                    c.string(r.get("author"), &format!("{p}.author"), true);
                    c.string(r.get("snippet"), &format!("{p}.snippet"), false);
                    if let Some(s) = r.get("snippet").and_then(Value::as_str) {
                        if s.chars().count() > super::SNIPPET_CHARS {
                            c.fail(&format!("{p}.snippet"), "longer than 200 characters");
                        }
                    }
                }
            }
        }
        if let Some(s) = top.get("summaries") {
            if let Some(s) = c.object(s, "$.summaries", &SUMMARY_KEYS) {
                for m in SUMMARY_KEYS {
                    let p = format!("$.summaries.{m}");
                    let Some(h) = s.get(m) else { continue };
                    let Some(h) = c.object(h, &p, &HISTOGRAM_KEYS) else {
                        continue;
                    };
                    if h.get("metric").and_then(Value::as_str) != Some(m) {
                        c.fail(&format!("{p}.metric"), "metric does not match key");
                    }
                    let edges = h.get("bin_edges").and_then(Value::as_array);
                    let counts = h.get("counts").and_then(Value::as_array);
                    match (edges, counts) {
                        (Some(e), Some(k)) => {
                            let shape_ok = (e.is_empty() && k.is_empty()) || e.len() == k.len() + 1;
                            if !shape_ok {
                                c.fail(&p, "bin_edges must have one more entry than counts");
                            }
                            if !e.iter().all(|v| v.as_f64().is_some_and(f64::is_finite)) {
                                c.fail(&format!("{p}.bin_edges"), "expected finite numbers");
                            }
                            if !e.windows(2).all(|w| w[0].as_f64() <= w[1].as_f64()) {
                                c.fail(&format!("{p}.bin_edges"), "not ascending");
                            }
                            if !k.iter().all(Value::is_u64) {
                                c.fail(&format!("{p}.counts"), "expected non-negative integers");
                            }
                        }
                        _ => c.fail(&p, "expected bin_edges and counts arrays"),
                    }
                }
            }
        }
    }
    if c.violations.is_empty() {
        Ok(())
    } else {
        Err(c.violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn hist(m: &str) -> Value {
        json!({"metric": m, "bin_edges": [0.0, 1.0], "counts": [2]})
    }

    fn doc() -> Value {
        json!({
            "schema_version": 1,
            "community_id": "hydra",
            "generated_at": 0,
            "window": {"n": 25, "mode": "mean_distribution"},
            "total_posts": 1,
            "records": [{
                "post_id": "a", "timestamp": 5, "x": 0.5, "y": -1.0,
                "novelty": null, "transience": 0.1, "resonance": null,
                "cluster": -1, "author": null, "snippet": "hi"
            }],
            "summaries": {"novelty": hist("novelty"), "transience": hist("transience"), "resonance": hist("resonance")}
        })
    }

    #[test]
    fn accepts_valid_document() {
        validate_artifact_json(&doc()).unwrap();
    }

    #[test]
    fn rejects_structural_problems() {
        let mut d = doc();
        d["records"][0]["cluster"] = json!(-2);
        d["window"]["mode"] = json!("median");
        d["summaries"]["novelty"]["counts"] = json!([1, 1]);
        let errs = validate_artifact_json(&d).unwrap_err();
        assert_eq!(errs.len(), 3, "{errs:?}");
    }

    #[test]
    fn rejects_reordered_keys() {
        let d: Value = serde_json::from_str(
            r#"{"community_id":"x","schema_version":1,"generated_at":0,"window":{"n":1,"mode":"mean_divergence"},"total_posts":0,"records":[],"summaries":{}}"#,
        )
        .unwrap();
        assert!(validate_artifact_json(&d).is_err());
    }
}
