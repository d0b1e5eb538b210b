//! Prompt template registry.
//!
//! Template bodies live under `src/llm/templates/` and are embedded at
//! compile time. They are kept byte-for-byte as published — including
//! their quirks (inconsistent ``` fence spacing, stray typos in few-shot
//! answers) — so rendered prompts are reproducible and golden-testable.
//! Rendering substitutes only the declared `{variable}` placeholders;
//! doubled braces in few-shot JSON examples pass through untouched.

use std::collections::BTreeMap;

use super::GatewayError;

/// A registered template: verbatim body plus its placeholder contract.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: &'static str,
    pub body: &'static str,
    pub required_vars: &'static [&'static str],
}

macro_rules! template {
    ($id:literal, [$($var:literal),*]) => {
        PromptTemplate {
            id: $id,
            body: include_str!(concat!("templates/", $id, ".txt")),
            required_vars: &[$($var),*],
        }
    };
}

/// All known templates. QA prompts come in per-dataset variants selected
/// by dataset id at run time.
pub static TEMPLATES: &[PromptTemplate] = &[
    template!("judge.accuracy", ["question", "prediction", "answer"]),
    template!("synthesis.decompose", []),
    template!("synthesis.token_label", []),
    template!("synthesis.query_filter", []),
    template!("baseline.decompose", ["question"]),
    template!("qa.direct.hotpotqa", ["question"]),
    template!("qa.direct.musique", ["question"]),
    template!("qa.direct.2wikimqa", ["question"]),
    template!("qa.cot.hotpotqa", ["question"]),
    template!("qa.cot.musique", ["question"]),
    template!("qa.cot.2wikimqa", ["question"]),
    template!("qa.retrieval.hotpotqa", ["knowledge", "question"]),
    template!("qa.retrieval.musique", ["knowledge", "question"]),
    template!("qa.retrieval.2wikimqa", ["knowledge", "question"]),
    template!("baseline.iter_retgen.hotpotqa", ["documents", "question"]),
    template!("baseline.iter_retgen.musique", ["documents", "question"]),
    template!("baseline.iter_retgen.2wikimqa", ["documents", "question"]),
    template!("baseline.self_ask.hotpotqa", ["question"]),
    template!("baseline.self_ask.musique", ["question"]),
    template!("baseline.self_ask.2wikimqa", ["question"]),
];

pub fn template(id: &str) -> Result<&'static PromptTemplate, GatewayError> {
    TEMPLATES
        .iter()
        .find(|t| t.id == id)
        .ok_or_else(|| GatewayError::UnknownTemplate(id.to_string()))
}

/// Render a template by id, substituting every `{var}` placeholder.
///
/// Fails when the template is unknown or any required variable is absent.
/// Extra variables are ignored. Output is byte-stable for a given input.
pub fn render_prompt(id: &str, vars: &BTreeMap<&str, &str>) -> Result<String, GatewayError> {
    let tpl = template(id)?;
    let mut out = tpl.body.to_string();
    for var in tpl.required_vars {
        let value = vars.get(var).ok_or_else(|| GatewayError::MissingVariable {
            template: id.to_string(),
            variable: var.to_string(),
        })?;
        out = out.replace(&format!("{{{var}}}"), value);
    }
    Ok(out)
}

/// Dataset selector for the per-dataset QA prompt families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetId {
    Hotpotqa,
    Musique,
    #[serde(rename = "2wikimqa", alias = "wikimqa2", alias = "2wiki")]
    TwoWikiMqa,
}

impl DatasetId {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetId::Hotpotqa => "hotpotqa",
            DatasetId::Musique => "musique",
            DatasetId::TwoWikiMqa => "2wikimqa",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hotpotqa" => Some(DatasetId::Hotpotqa),
            "musique" => Some(DatasetId::Musique),
            "2wikimqa" | "2wiki" | "2wikimultihopqa" => Some(DatasetId::TwoWikiMqa),
            _ => None,
        }
    }

    pub fn direct_template(&self) -> String {
        format!("qa.direct.{}", self.as_str())
    }

    pub fn retrieval_template(&self) -> String {
        format!("qa.retrieval.{}", self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars<'a>(pairs: &[(&'a str, &'a str)]) -> BTreeMap<&'a str, &'a str> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn judge_prompt_fills_all_slots() {
        let rendered = render_prompt(
            "judge.accuracy",
            &vars(&[
                ("question", "Q?"),
                ("prediction", "P!"),
                ("answer", "A."),
            ]),
        )
        .unwrap();
        assert!(rendered.contains("Question: Q?"));
        assert!(rendered.contains("Prediction: P!"));
        assert!(rendered.contains("Ground-truth Answer: A."));
        assert!(!rendered.contains("{question}"));
    }

    #[test]
    fn unknown_template_rejected() {
        let err = render_prompt("qa.direct.nosuch", &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, GatewayError::UnknownTemplate(_)));
    }

    #[test]
    fn missing_variable_rejected() {
        let err = render_prompt(
            "judge.accuracy",
            &vars(&[("question", "Q"), ("prediction", "P")]),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            GatewayError::MissingVariable { variable, .. } if variable == "answer"
        ));
    }

    #[test]
    fn sentinel_render_reproduces_body() {
        // substituting each placeholder with itself must leave every
        // template byte-identical
        for tpl in TEMPLATES {
            let sentinels: Vec<(String, String)> = tpl
                .required_vars
                .iter()
                .map(|v| (v.to_string(), format!("{{{v}}}")))
                .collect();
            let map: BTreeMap<&str, &str> = sentinels
                .iter()
                .map(|(k, v)| (k.as_str(), v.as_str()))
                .collect();
            let rendered = render_prompt(tpl.id, &map).unwrap();
            assert_eq!(rendered, tpl.body, "template {}", tpl.id);
        }
    }

    #[test]
    fn no_residual_placeholders_after_render() {
        // after substituting real values, no {identifier} pattern from the
        // declared variable lists may remain
        for tpl in TEMPLATES {
            let map: BTreeMap<&str, &str> =
                tpl.required_vars.iter().map(|v| (*v, "VALUE")).collect();
            let rendered = render_prompt(tpl.id, &map).unwrap();
            for var in tpl.required_vars {
                assert!(
                    !rendered.contains(&format!("{{{var}}}")),
                    "template {} left {{{var}}} unfilled",
                    tpl.id
                );
            }
        }
    }

    #[test]
    fn dataset_ids_select_templates() {
        assert_eq!(
            DatasetId::parse("2wikimqa").unwrap().retrieval_template(),
            "qa.retrieval.2wikimqa"
        );
        assert!(template(&DatasetId::Hotpotqa.direct_template()).is_ok());
        assert!(DatasetId::parse("nope").is_none());
    }
}
