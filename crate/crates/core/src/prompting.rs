//! Prompt construction for annotation (zero-shot, few-shot) and the
//! knowledge quiz.
//!
//! Templates are text files with `[system]` and `[user]` sections and
//! `{{name}}` placeholders. The shipped set is compiled in; a directory
//! holding files with the same names overrides it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{ErrorSpan, LangPair, Segment, SeverityScheme, Side, MAX_ERRORS};

const ZERO_SHOT: &str = include_str!("../templates/zero_shot.txt");
const ZERO_SHOT_BASIC: &str = include_str!("../templates/zero_shot_basic.txt");
const FEW_SHOT: &str = include_str!("../templates/few_shot.txt");
const QUIZ: &str = include_str!("../templates/quiz.txt");
const EXAMPLES_ZH_EN: &str = include_str!("../templates/few_shot_examples.zh-en.jsonl");

const PLACEHOLDERS: [&str; 8] = [
    "src_lang",
    "tgt_lang",
    "src_lang_a",
    "max_errors",
    "source",
    "target",
    "examples",
    "lang_pair",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewShot,
    Quiz,
}

/// Which zero-shot wording to use; `Basic` is the whitespace-index variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroShotVariant {
    #[default]
    Revised,
    Basic,
}

pub fn language_name(code: &str) -> Option<&'static str> {
    Some(match code {
        "ar" => "Arabic",
        "cs" => "Czech",
        "de" => "German",
        "en" => "English",
        "es" => "Spanish",
        "et" => "Estonian",
        "fi" => "Finnish",
        "fr" => "French",
        "he" => "Hebrew",
        "hi" => "Hindi",
        "hr" => "Croatian",
        "is" => "Icelandic",
        "it" => "Italian",
        "ja" => "Japanese",
        "kk" => "Kazakh",
        "ko" => "Korean",
        "lt" => "Lithuanian",
        "nl" => "Dutch",
        "pl" => "Polish",
        "pt" => "Portuguese",
        "ro" => "Romanian",
        "ru" => "Russian",
        "tr" => "Turkish",
        "uk" => "Ukrainian",
        "zh" => "Chinese",
        _ => return None,
    })
}

fn names(lp: &LangPair) -> Result<(&'static str, &'static str)> {
    match (language_name(&lp.source), language_name(&lp.target)) {
        (Some(s), Some(t)) => Ok((s, t)),
        _ => Err(Error::Config(format!("unsupported language pair {lp}"))),
    }
}

fn with_article(name: &str) -> String {
    let vowel = name.starts_with(['A', 'E', 'I', 'O', 'U']);
    format!("{} {name}", if vowel { "an" } else { "a" })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: Option<String>,
    pub user: String,
}

impl RenderedPrompt {
    /// Hex SHA-256 over the system and user messages; keys mock replies.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system.as_deref().unwrap_or("").as_bytes());
        h.update([0u8]);
        h.update(self.user.as_bytes());
        hex::encode(h.finalize())
    }
}

/// One worked example for the few-shot prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub source: String,
    pub target: String,
    pub errors: Vec<ErrorSpan>,
}

impl FewShotExample {
    /// Schema check for the example's error lines: each carries a 1-5
    /// severity and sits on the side its category requires.
    pub fn validate(&self) -> Result<()> {
        if self.source.trim().is_empty() || self.target.trim().is_empty() {
            return Err(Error::Config("few-shot example with empty source or target".into()));
        }
        if self.errors.is_empty() {
            return Err(Error::Config("few-shot example without error lines".into()));
        }
        for e in &self.errors {
            match e.raw_scale {
                Some(1..=5) => {}
                other => {
                    return Err(Error::Config(format!(
                        "few-shot error line needs a 1-5 severity, got {other:?}"
                    )))
                }
            }
            if Side::for_category(e.category) != e.side {
                return Err(Error::Config(format!(
                    "few-shot {} error marked on the {:?} side",
                    e.category.label(),
                    e.side
                )));
            }
            if e.marked_text.is_empty() {
                return Err(Error::Config("few-shot error line without marked text".into()));
            }
        }
        Ok(())
    }

    fn render(&self) -> String {
        let mut out = format!("Source: {}\nTarget: {}", self.source, self.target);
        for (i, e) in self.errors.iter().enumerate() {
            out.push_str(&format!(
                "\nError {}: error type: {}, severity: {}, marked text: {}, error span index: {{start: {}, end: {}}}",
                i + 1,
                e.category.label(),
                e.raw_scale.unwrap_or_default(),
                e.marked_text,
                e.span.start,
                e.span.end,
            ));
        }
        out
    }
}

pub fn parse_examples_jsonl(text: &str, origin: &Path) -> Result<Vec<FewShotExample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: FewShotExample = serde_json::from_str(line).map_err(|e| Error::data(origin, i + 1, e.to_string()))?;
        ex.validate().map_err(|e| Error::data(origin, i + 1, e.to_string()))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn load_examples(path: &Path) -> Result<Vec<FewShotExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_examples_jsonl(&text, path)
}

/// The shipped two-shot examples. Only zh-en ships; other pairs must supply
/// their own.
pub fn default_examples(lp: &LangPair) -> Result<Vec<FewShotExample>> {
    if lp.source == "zh" && lp.target == "en" {
        parse_examples_jsonl(EXAMPLES_ZH_EN, Path::new("few_shot_examples.zh-en.jsonl"))
    } else {
        Err(Error::Config(format!(
            "no shipped few-shot examples for {lp}; supply an examples file"
        )))
    }
}

/// Split a template file into its `[system]` and `[user]` sections.
fn split_sections(text: &str) -> Result<(Option<String>, String)> {
    let mut system: Option<Vec<&str>> = None;
    let mut user: Option<Vec<&str>> = None;
    let mut current: Option<&mut Vec<&str>> = None;
    for line in text.lines() {
        match line.trim_end() {
            "[system]" => current = Some(system.insert(Vec::new())),
            "[user]" => current = Some(user.insert(Vec::new())),
            _ => match current.as_mut() {
                Some(buf) => buf.push(line),
                None if line.trim().is_empty() => {}
                None => return Err(Error::Config("template text before any section header".into())),
            },
        }
    }
    let join = |v: Vec<&str>| v.join("\n").trim_end_matches('\n').to_string();
    let user = user.ok_or_else(|| Error::Config("template has no [user] section".into()))?;
    Ok((system.map(join), join(user)))
}

fn check_placeholders(template: &str) -> Result<()> {
    let mut rest = template;
    while let Some(i) = rest.find("{{") {
        let after = &rest[i + 2..];
        let j = after
            .find("}}")
            .ok_or_else(|| Error::Config("unterminated {{ in template".into()))?;
        let name = &after[..j];
        if !PLACEHOLDERS.contains(&name) {
            return Err(Error::Config(format!("unknown template placeholder {{{{{name}}}}}")));
        }
        rest = &after[j + 2..];
    }
    Ok(())
}

/// Single-pass substitution; substituted values are not rescanned.
fn substitute(template: &str, values: &BTreeMap<&str, String>) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find("{{") {
        out.push_str(&rest[..i]);
        let after = &rest[i + 2..];
        let j = after
            .find("}}")
            .ok_or_else(|| Error::Config("unterminated {{ in template".into()))?;
        let name = &after[..j];
        let v = values
            .get(name)
            .ok_or_else(|| Error::Config(format!("placeholder {{{{{name}}}}} has no value here")))?;
        out.push_str(v);
        rest = &after[j + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub mode: PromptMode,
    pub system_message: Option<String>,
    pub instruction: String,
    pub examples: Vec<FewShotExample>,
    pub scheme: SeverityScheme,
    pub max_errors: usize,
}

impl PromptTemplate {
    /// Build from template text, checking the mode/scheme pairing: binary
    /// labels go with zero-shot, the 1-5 scale schemes with few-shot.
    pub fn from_text(
        text: &str,
        mode: PromptMode,
        scheme: SeverityScheme,
        examples: Vec<FewShotExample>,
    ) -> Result<Self> {
        match (mode, scheme.is_scale()) {
            (PromptMode::ZeroShot, false) | (PromptMode::FewShot, true) => {}
            (PromptMode::Quiz, _) => return Err(Error::Config("quiz prompts are not annotation templates".into())),
            _ => {
                return Err(Error::Config(format!(
                    "severity scheme {} cannot be used with {mode:?} prompts",
                    scheme.name()
                )))
            }
        }
        match mode {
            PromptMode::ZeroShot if !examples.is_empty() => {
                return Err(Error::Config("zero-shot prompts take no examples".into()))
            }
            PromptMode::FewShot if examples.is_empty() => {
                return Err(Error::Config("few-shot prompts need at least one example".into()))
            }
            _ => {}
        }
        for ex in &examples {
            ex.validate()?;
        }
        let (system_message, instruction) = split_sections(text)?;
        check_placeholders(&instruction)?;
        if let Some(s) = &system_message {
            check_placeholders(s)?;
        }
        Ok(PromptTemplate {
            mode,
            system_message,
            instruction,
            examples,
            scheme,
            max_errors: MAX_ERRORS,
        })
    }

    pub fn zero_shot(variant: ZeroShotVariant) -> Self {
        let text = match variant {
            ZeroShotVariant::Revised => ZERO_SHOT,
            ZeroShotVariant::Basic => ZERO_SHOT_BASIC,
        };
        Self::from_text(text, PromptMode::ZeroShot, SeverityScheme::BinaryLabels, vec![])
            .expect("shipped zero-shot template is valid")
    }

    pub fn few_shot(scheme: SeverityScheme, examples: Vec<FewShotExample>) -> Result<Self> {
        Self::from_text(FEW_SHOT, PromptMode::FewShot, scheme, examples)
    }

    /// Load `zero_shot.txt` / `zero_shot_basic.txt` / `few_shot.txt` from
    /// `dir`, falling back to the shipped text when the file is absent.
    pub fn load(
        dir: Option<&Path>,
        mode: PromptMode,
        variant: ZeroShotVariant,
        scheme: SeverityScheme,
        examples: Vec<FewShotExample>,
    ) -> Result<Self> {
        let (file, builtin) = match (mode, variant) {
            (PromptMode::ZeroShot, ZeroShotVariant::Revised) => ("zero_shot.txt", ZERO_SHOT),
            (PromptMode::ZeroShot, ZeroShotVariant::Basic) => ("zero_shot_basic.txt", ZERO_SHOT_BASIC),
            (PromptMode::FewShot, _) => ("few_shot.txt", FEW_SHOT),
            (PromptMode::Quiz, _) => return Err(Error::Config("quiz prompts are not annotation templates".into())),
        };
        let text = read_override(dir, file)?.unwrap_or_else(|| builtin.to_string());
        Self::from_text(&text, mode, scheme, examples)
    }

    pub fn render(&self, lp: &LangPair, segment: &Segment) -> Result<RenderedPrompt> {
        if segment.lang_pair != *lp {
            return Err(Error::Config(format!(
                "segment {} is {} but the prompt is for {lp}",
                segment.id, segment.lang_pair
            )));
        }
        if segment.source.trim().is_empty() || segment.target.trim().is_empty() {
            return Err(Error::Config(format!(
                "segment {} has an empty source or target",
                segment.id
            )));
        }
        let mut values = lang_values(lp)?;
        values.insert("max_errors", self.max_errors.to_string());
        values.insert("source", segment.source.clone());
        values.insert("target", segment.target.clone());
        values.insert(
            "examples",
            self.examples
                .iter()
                .map(FewShotExample::render)
                .collect::<Vec<_>>()
                .join("\n\n"),
        );
        Ok(RenderedPrompt {
            system: self
                .system_message
                .as_deref()
                .map(|s| substitute(s, &values))
                .transpose()?,
            user: substitute(&self.instruction, &values)?,
        })
    }
}

fn read_override(dir: Option<&Path>, file: &str) -> Result<Option<String>> {
    let Some(dir) = dir else { return Ok(None) };
    let path = dir.join(file);
    if !path.exists() {
        return Ok(None);
    }
    fs::read_to_string(&path).map(Some).map_err(|e| Error::io(path, e))
}

fn lang_values(lp: &LangPair) -> Result<BTreeMap<&'static str, String>> {
    let (src, tgt) = names(lp)?;
    Ok(BTreeMap::from([
        ("src_lang", src.to_string()),
        ("tgt_lang", tgt.to_string()),
        ("src_lang_a", with_article(src)),
        ("lang_pair", lp.to_string()),
    ]))
}

pub fn build_zero_shot(lp: &LangPair, segment: &Segment) -> Result<RenderedPrompt> {
    PromptTemplate::zero_shot(ZeroShotVariant::Revised).render(lp, segment)
}

/// Few-shot prompt under the m3 mapping (the severity scheme does not
/// change the prompt text).
pub fn build_few_shot(lp: &LangPair, segment: &Segment, examples: &[FewShotExample]) -> Result<RenderedPrompt> {
    PromptTemplate::few_shot(SeverityScheme::ScaleM3, examples.to_vec())?.render(lp, segment)
}

/// The five knowledge questions, one independent request each.
pub fn quiz_prompts(lp: &LangPair) -> Result<Vec<RenderedPrompt>> {
    quiz_prompts_from(QUIZ, lp)
}

pub fn quiz_prompts_from(text: &str, lp: &LangPair) -> Result<Vec<RenderedPrompt>> {
    let values = lang_values(lp)?;
    let prompts = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            Ok(RenderedPrompt {
                system: None,
                user: substitute(l, &values)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if prompts.len() != 5 {
        return Err(Error::Config(format!(
            "quiz file must hold 5 questions, found {}",
            prompts.len()
        )));
    }
    Ok(prompts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(lp: &str, source: &str, target: &str) -> Segment {
        Segment {
            id: "s".into(),
            lang_pair: lp.parse().unwrap(),
            source: source.into(),
            target: target.into(),
            system: None,
            doc: None,
        }
    }

    fn zh_en() -> LangPair {
        "zh-en".parse().unwrap()
    }

    #[test]
    fn zero_shot_persona_and_fields() {
        let p = build_zero_shot(&zh_en(), &seg("zh-en", "电池在用。", "The battery is working.")).unwrap();
        assert_eq!(
            p.system.as_deref(),
            Some("You are a professional Chinese-English translator.")
        );
        assert!(p
            .user
            .contains("value scope: accuracy, style, fluency, terminology, locale convention, other"));
        assert!(p.user.contains("up to 5 errors"));
        assert!(p.user.contains("json format"));
        assert!(p.user.contains("explanation"));
        assert!(p.user.contains("NLTK tokenizer"));
        assert!(p.user.ends_with("Source: 电池在用。\nTarget: The battery is working."));
        assert!(!p.user.contains("{{"));
    }

    #[test]
    fn zero_shot_en_de_persona() {
        let lp: LangPair = "en-de".parse().unwrap();
        let p = build_zero_shot(&lp, &seg("en-de", "Hello.", "Hallo.")).unwrap();
        assert_eq!(
            p.system.as_deref(),
            Some("You are a professional English-German translator.")
        );
    }

    #[test]
    fn empty_source_rejected() {
        let r = build_zero_shot(&zh_en(), &seg("zh-en", "  ", "x"));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn wrong_pair_and_unknown_language_rejected() {
        assert!(build_zero_shot(&zh_en(), &seg("en-de", "a", "b")).is_err());
        let lp: LangPair = "xx-en".parse().unwrap();
        assert!(build_zero_shot(&lp, &seg("xx-en", "a", "b")).is_err());
    }

    #[test]
    fn few_shot_contents() {
        let ex = default_examples(&zh_en()).unwrap();
        let p = build_few_shot(&zh_en(), &seg("zh-en", "电池在用。", "The battery is working."), &ex).unwrap();
        assert!(p.user.contains("Error 1: error type: fluency, severity: 2"));
        assert!(p.user.contains(
            "Error 2: error type: omission, severity: 4, marked text: 出不来, error span index: {start: 10, end: 10}"
        ));
        assert!(p
            .user
            .contains("Error 1: error type: accuracy, severity: 4, marked text: tried to"));
        assert!(p.user.contains("a maximum of 5 errors"));
        assert!(p.user.contains("JSON format"));
        assert!(!p.user.contains("explanation"));
        for cat in [
            "Accuracy:",
            "Omission:",
            "Fluency:",
            "Style:",
            "Terminology:",
            "Locale convention:",
        ] {
            assert!(p.user.contains(cat), "{cat}");
        }
        // persona repeated inside the instruction message
        assert!(p
            .user
            .starts_with("You are a professional Chinese-English translator.\n"));
    }

    #[test]
    fn few_shot_needs_examples() {
        let r = build_few_shot(&zh_en(), &seg("zh-en", "a", "b"), &[]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn scheme_mode_pairing() {
        let ex = default_examples(&zh_en()).unwrap();
        assert!(PromptTemplate::few_shot(SeverityScheme::BinaryLabels, ex.clone()).is_err());
        assert!(PromptTemplate::from_text(ZERO_SHOT, PromptMode::ZeroShot, SeverityScheme::ScaleM3, vec![]).is_err());
        assert!(PromptTemplate::from_text(ZERO_SHOT, PromptMode::ZeroShot, SeverityScheme::BinaryLabels, ex).is_err());
    }

    #[test]
    fn example_validation() {
        let mut ex = default_examples(&zh_en()).unwrap().remove(0);
        ex.errors[0].raw_scale = None;
        assert!(ex.validate().is_err());
        assert!(default_examples(&"en-de".parse().unwrap()).is_err());
    }

    #[test]
    fn quiz() {
        let q = quiz_prompts(&zh_en()).unwrap();
        assert_eq!(q.len(), 5);
        assert_eq!(q[2].user, "What are the core error categories of MQM?");
        assert!(q[3].user.contains("the Chinese sentence and its English translation"));
        assert!(q[4].user.contains("a Chinese source sentence into English"));
        let q = quiz_prompts(&"en-de".parse().unwrap()).unwrap();
        assert!(q[3].user.contains("the English sentence and its German translation"));
        assert!(q[4].user.contains("an English source sentence into German"));
        assert!(q.iter().all(|p| p.system.is_none()));
    }

    #[test]
    fn rendering_is_pure_and_not_rescanned() {
        let s = seg("zh-en", "{{target}}", "The {{source}}.");
        let a = build_zero_shot(&zh_en(), &s).unwrap();
        let b = build_zero_shot(&zh_en(), &s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert!(a.user.ends_with("Source: {{target}}\nTarget: The {{source}}."));
    }

    #[test]
    fn unknown_placeholder_rejected() {
        let t = "[user]\nHello {{nope}}";
        assert!(PromptTemplate::from_text(t, PromptMode::ZeroShot, SeverityScheme::BinaryLabels, vec![]).is_err());
    }

    #[test]
    fn basic_variant_differs_only_in_index_instruction() {
        let s = seg("zh-en", "a", "b");
        let basic = PromptTemplate::zero_shot(ZeroShotVariant::Basic)
            .render(&zh_en(), &s)
            .unwrap();
        assert!(basic.user.contains("split the target sentence with whitespace"));
    }
}
