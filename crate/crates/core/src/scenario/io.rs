//! JSON scenario files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::expr::{parse_with_dim, Expr};

use super::{
    Axis, Chart, DifferentialForm, GlobalFunction, GroundTruth, LocalForm, Scenario, ScenarioData, ScenarioError,
    Transition,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionFile {
    pub target: String,
    pub overlap: String,
    pub map: Vec<String>,
    pub inverse: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartFile {
    pub id: String,
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub transitions: Vec<TransitionFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermFile {
    /// One-based coordinate indices.
    pub indices: Vec<usize>,
    pub coeff: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormFile {
    pub name: String,
    pub degree: usize,
    #[serde(default)]
    pub closed: bool,
    #[serde(default)]
    pub generator: bool,
    pub charts: BTreeMap<String, Vec<TermFile>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionFile {
    pub name: String,
    pub charts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub name: String,
    pub dimension: usize,
    pub charts: Vec<ChartFile>,
    pub metric: BTreeMap<String, Vec<String>>,
    pub vector_field: BTreeMap<String, Vec<String>>,
    pub lyapunov: BTreeMap<String, String>,
    #[serde(default)]
    pub forms: Vec<FormFile>,
    #[serde(default)]
    pub functions: Vec<FunctionFile>,
    #[serde(default)]
    pub ground_truth: Option<GroundTruth>,
}

fn strings(v: &[Expr]) -> Vec<String> {
    v.iter().map(Expr::to_string).collect()
}

impl ScenarioFile {
    pub fn from_scenario(s: &Scenario) -> ScenarioFile {
        let id = |c: usize| s.charts[c].id.clone();
        let per_chart = |v: &[Vec<Expr>]| -> BTreeMap<String, Vec<String>> {
            v.iter().enumerate().map(|(c, e)| (id(c), strings(e))).collect()
        };
        ScenarioFile {
            name: s.name.clone(),
            dimension: s.dim,
            charts: s
                .charts
                .iter()
                .map(|c| ChartFile {
                    id: c.id.clone(),
                    axes: c.axes.clone(),
                    transitions: c
                        .transitions
                        .iter()
                        .map(|t| TransitionFile {
                            target: id(t.target),
                            overlap: t.overlap.to_string(),
                            map: strings(&t.map),
                            inverse: strings(&t.inverse),
                        })
                        .collect(),
                })
                .collect(),
            metric: per_chart(&s.metric),
            vector_field: per_chart(&s.field),
            lyapunov: s.lyapunov.iter().enumerate().map(|(c, f)| (id(c), f.to_string())).collect(),
            forms: s
                .forms
                .iter()
                .map(|w| FormFile {
                    name: w.name.clone(),
                    degree: w.degree,
                    closed: w.closed,
                    generator: w.generator,
                    charts: w
                        .local
                        .iter()
                        .enumerate()
                        .map(|(c, l)| {
                            let terms = l
                                .terms()
                                .into_iter()
                                .map(|(indices, coeff)| TermFile { indices, coeff: coeff.to_string() })
                                .collect();
                            (id(c), terms)
                        })
                        .collect(),
                })
                .collect(),
            functions: s
                .functions
                .iter()
                .map(|g| FunctionFile {
                    name: g.name.clone(),
                    charts: g.per_chart.iter().enumerate().map(|(c, e)| (id(c), e.to_string())).collect(),
                })
                .collect(),
            ground_truth: s.ground_truth.clone(),
        }
    }

    pub fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let n = self.dimension;
        let ids: Vec<String> = self.charts.iter().map(|c| c.id.clone()).collect();
        let index = |id: &str| {
            ids.iter().position(|x| x == id).ok_or_else(|| ScenarioError::UnknownChart(id.to_string()))
        };
        let expr = |context: String, src: &str| {
            parse_with_dim(src, n).map_err(|source| ScenarioError::Parse { context, source })
        };
        let exprs = |context: String, src: &[String]| -> Result<Vec<Expr>, ScenarioError> {
            src.iter().enumerate().map(|(i, s)| expr(format!("{context}[{i}]"), s)).collect()
        };
        let lookup = |map: &BTreeMap<String, Vec<String>>, what: &str| -> Result<Vec<Vec<Expr>>, ScenarioError> {
            ids.iter()
                .map(|id| {
                    let v = map.get(id).ok_or_else(|| ScenarioError::Malformed(format!("{what} missing for chart `{id}`")))?;
                    exprs(format!("{what}.{id}"), v)
                })
                .collect()
        };
        if let Some(extra) = self.metric.keys().chain(self.vector_field.keys()).find(|k| !ids.contains(k)) {
            return Err(ScenarioError::UnknownChart(extra.clone()));
        }

        let mut charts = Vec::with_capacity(self.charts.len());
        for c in &self.charts {
            let mut transitions = Vec::new();
            for t in &c.transitions {
                let ctx = format!("transition {} -> {}", c.id, t.target);
                transitions.push(Transition::new(
                    index(&t.target)?,
                    expr(format!("{ctx} overlap"), &t.overlap)?,
                    exprs(format!("{ctx} map"), &t.map)?,
                    exprs(format!("{ctx} inverse"), &t.inverse)?,
                ));
            }
            charts.push(Chart { id: c.id.clone(), axes: c.axes.clone(), transitions });
        }
        let metric = lookup(&self.metric, "metric")?;
        let field = lookup(&self.vector_field, "vector_field")?;
        let lyapunov = ids
            .iter()
            .map(|id| {
                let s = self.lyapunov.get(id).ok_or_else(|| ScenarioError::Malformed(format!("lyapunov missing for chart `{id}`")))?;
                expr(format!("lyapunov.{id}"), s)
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut forms = Vec::new();
        for w in &self.forms {
            let form_err = |source| ScenarioError::Form { name: w.name.clone(), source };
            let mut local = Vec::new();
            for id in &ids {
                let terms = w.charts.get(id).map(Vec::as_slice).unwrap_or_default();
                let mut parsed = Vec::new();
                for t in terms {
                    if t.indices.iter().any(|&i| i == 0 || i > n) {
                        return Err(ScenarioError::Malformed(format!("form `{}` has index out of 1..={n}", w.name)));
                    }
                    let idx = t.indices.iter().map(|i| i - 1).collect();
                    parsed.push((idx, expr(format!("form {}.{id}", w.name), &t.coeff)?));
                }
                local.push(LocalForm::from_terms(n, w.degree, &parsed).map_err(form_err)?);
            }
            forms.push(DifferentialForm::new(w.name.clone(), local).map_err(form_err)?.with_flags(w.closed, w.generator));
        }
        let functions = self
            .functions
            .iter()
            .map(|g| {
                let per_chart = ids
                    .iter()
                    .map(|id| {
                        let s = g.charts.get(id).ok_or_else(|| ScenarioError::Malformed(format!("function `{}` missing chart `{id}`", g.name)))?;
                        expr(format!("function {}.{id}", g.name), s)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(GlobalFunction { name: g.name.clone(), per_chart })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;

        Scenario::new(ScenarioData {
            name: self.name,
            dim: n,
            charts,
            metric,
            field,
            lyapunov,
            forms,
            functions,
            ground_truth: self.ground_truth,
        })
    }
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from_scenario(self)).expect("scenario files serialize")
    }

    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        serde_json::from_str::<ScenarioFile>(text)?.into_scenario()
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// Reparses the printed form, so that in-memory and file scenarios agree bit for bit.
    pub fn canonical(&self) -> Result<Scenario, ScenarioError> {
        ScenarioFile::from_scenario(self).into_scenario()
    }
}
