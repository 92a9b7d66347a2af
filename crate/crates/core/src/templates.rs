//! Prompt templates for query expansion and intent classification.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::providers::cache::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    text: String,
    placeholder: &'static str,
    hash: String,
}

impl Template {
    pub fn new(text: impl Into<String>, placeholder: &'static str) -> Result<Self> {
        let text = text.into();
        if !text.contains(placeholder) {
            return Err(Error::Config(format!(
                "template is missing the {placeholder} placeholder"
            )));
        }
        let hash = sha256_hex(&text);
        Ok(Template {
            text,
            placeholder,
            hash,
        })
    }

    pub fn load(path: impl AsRef<Path>, placeholder: &'static str) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Template::new(text, placeholder)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn render(&self, value: &str) -> String {
        self.text.replace(self.placeholder, value)
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// The four prompts the pipeline issues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    /// Stage one of expansion: `{query}` -> IRAC analysis.
    pub irac: Template,
    /// Stage two: `{analysis}` -> one keyword per line.
    pub keywords: Template,
    pub query_intent: Template,
    pub article_intent: Template,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            irac: Template::new(include_str!("../assets/prompts/irac.txt"), "{query}").unwrap(),
            keywords: Template::new(include_str!("../assets/prompts/keywords.txt"), "{analysis}")
                .unwrap(),
            query_intent: Template::new(
                include_str!("../assets/prompts/query_intent.txt"),
                "{text}",
            )
            .unwrap(),
            article_intent: Template::new(
                include_str!("../assets/prompts/article_intent.txt"),
                "{text}",
            )
            .unwrap(),
        }
    }
}

/// Optional per-template file overrides; unset entries keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatePaths {
    #[serde(default)]
    pub irac: Option<std::path::PathBuf>,
    #[serde(default)]
    pub keywords: Option<std::path::PathBuf>,
    #[serde(default)]
    pub query_intent: Option<std::path::PathBuf>,
    #[serde(default)]
    pub article_intent: Option<std::path::PathBuf>,
}

impl PromptTemplates {
    pub fn new(
        irac: &str,
        keywords: &str,
        query_intent: &str,
        article_intent: &str,
    ) -> Result<Self> {
        Ok(PromptTemplates {
            irac: Template::new(irac, "{query}")?,
            keywords: Template::new(keywords, "{analysis}")?,
            query_intent: Template::new(query_intent, "{text}")?,
            article_intent: Template::new(article_intent, "{text}")?,
        })
    }

    pub fn load(paths: &TemplatePaths) -> Result<Self> {
        let mut t = PromptTemplates::default();
        if let Some(p) = &paths.irac {
            t.irac = Template::load(p, "{query}")?;
        }
        if let Some(p) = &paths.keywords {
            t.keywords = Template::load(p, "{analysis}")?;
        }
        if let Some(p) = &paths.query_intent {
            t.query_intent = Template::load(p, "{text}")?;
        }
        if let Some(p) = &paths.article_intent {
            t.article_intent = Template::load(p, "{text}")?;
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_hash() {
        let t = Template::new("Q: {query}!", "{query}").unwrap();
        assert_eq!(t.render("x"), "Q: x!");
        assert_eq!(t.hash().len(), 64);
        assert!(Template::new("no slot", "{query}").is_err());
    }

    #[test]
    fn defaults_have_placeholders() {
        let t = PromptTemplates::default();
        assert!(t.irac.render("Q").contains("Question: Q"));
        assert!(t.keywords.render("A").contains("A"));
        assert_ne!(t.query_intent.hash(), t.article_intent.hash());
    }
}
