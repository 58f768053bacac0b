//! Validator for the JSON Schema keywords the report schema uses:
//! `$ref` into `$defs`, `type`, `const`, `enum`, `anyOf`, `required`,
//! `properties`, `additionalProperties: false`, `items`, numeric bounds and
//! item or property counts. Unknown keywords are an error, so the schema
//! cannot silently outgrow the validator.

use serde_json::Value;

const ANNOTATIONS: [&str; 5] = ["$schema", "$id", "title", "description", "$defs"];

pub struct Validator<'a> {
    root: &'a Value,
}

impl<'a> Validator<'a> {
    pub fn new(root: &'a Value) -> Self {
        Validator { root }
    }

    /// Every violation as `path: message`.
    pub fn errors(&self, instance: &Value) -> Vec<String> {
        let mut out = Vec::new();
        self.check(self.root, instance, "$", &mut out);
        out
    }

    fn resolve(&self, reference: &str) -> &'a Value {
        let name = reference.strip_prefix("#/$defs/").unwrap_or_else(|| panic!("unsupported $ref {reference}"));
        self.root["$defs"].get(name).unwrap_or_else(|| panic!("dangling $ref {reference}"))
    }

    fn check(&self, schema: &Value, v: &Value, path: &str, out: &mut Vec<String>) {
        let Some(schema) = schema.as_object() else {
            panic!("schema at {path} is not an object");
        };
        for (key, rule) in schema {
            match key.as_str() {
                k if ANNOTATIONS.contains(&k) => {}
                "$ref" => self.check(self.resolve(rule.as_str().unwrap()), v, path, out),
                "type" => {
                    let allowed: Vec<&str> = match rule {
                        Value::String(s) => vec![s.as_str()],
                        Value::Array(a) => a.iter().map(|t| t.as_str().unwrap()).collect(),
                        _ => panic!("bad type rule at {path}"),
                    };
                    if !allowed.iter().any(|t| has_type(v, t)) {
                        out.push(format!("{path}: expected {allowed:?}, got {v}"));
                    }
                }
                "const" if v != rule => out.push(format!("{path}: expected {rule}, got {v}")),
                "const" => {}
                "enum" if !rule.as_array().unwrap().contains(v) => out.push(format!("{path}: {v} not in {rule}")),
                "enum" => {}
                "anyOf" => {
                    let ok = rule.as_array().unwrap().iter().any(|s| {
                        let mut sub = Vec::new();
                        self.check(s, v, path, &mut sub);
                        sub.is_empty()
                    });
                    if !ok {
                        out.push(format!("{path}: matches no alternative"));
                    }
                }
                "required" => {
                    if let Some(o) = v.as_object() {
                        for r in rule.as_array().unwrap() {
                            let r = r.as_str().unwrap();
                            if !o.contains_key(r) {
                                out.push(format!("{path}: missing `{r}`"));
                            }
                        }
                    }
                }
                "properties" => {
                    if let Some(o) = v.as_object() {
                        for (name, sub) in rule.as_object().unwrap() {
                            if let Some(x) = o.get(name) {
                                self.check(sub, x, &format!("{path}.{name}"), out);
                            }
                        }
                    }
                }
                "additionalProperties" => {
                    assert_eq!(rule, &Value::Bool(false), "only `additionalProperties: false` is supported");
                    let known = schema.get("properties").and_then(Value::as_object);
                    if let Some(o) = v.as_object() {
                        for name in o.keys().filter(|n| !known.is_some_and(|k| k.contains_key(*n))) {
                            out.push(format!("{path}: unexpected `{name}`"));
                        }
                    }
                }
                "items" => {
                    if let Some(a) = v.as_array() {
                        for (i, x) in a.iter().enumerate() {
                            self.check(rule, x, &format!("{path}[{i}]"), out);
                        }
                    }
                }
                "minimum" | "maximum" | "exclusiveMinimum" => {
                    if let Some(x) = v.as_f64() {
                        let b = rule.as_f64().unwrap();
                        let ok = match key.as_str() {
                            "minimum" => x >= b,
                            "maximum" => x <= b,
                            _ => x > b,
                        };
                        if !ok {
                            out.push(format!("{path}: {x} violates {key} {b}"));
                        }
                    }
                }
                "minItems" | "maxItems" => {
                    if let Some(a) = v.as_array() {
                        bound(key, a.len(), rule, path, out);
                    }
                }
                "minProperties" | "maxProperties" => {
                    if let Some(o) = v.as_object() {
                        bound(key, o.len(), rule, path, out);
                    }
                }
                other => panic!("unsupported schema keyword `{other}` at {path}"),
            }
        }
    }
}

fn bound(key: &str, n: usize, rule: &Value, path: &str, out: &mut Vec<String>) {
    let b = rule.as_u64().unwrap() as usize;
    let ok = if key.starts_with("min") { n >= b } else { n <= b };
    if !ok {
        out.push(format!("{path}: size {n} violates {key} {b}"));
    }
}

fn has_type(v: &Value, t: &str) -> bool {
    match t {
        "null" => v.is_null(),
        "boolean" => v.is_boolean(),
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.as_i64().is_some() || v.as_u64().is_some() || v.as_f64().is_some_and(|x| x.fract() == 0.0),
        _ => panic!("unknown type `{t}`"),
    }
}

pub fn report_schema() -> Value {
    let text = include_str!("../../schema/report.schema.json");
    serde_json::from_str(text).expect("schema is valid JSON")
}
