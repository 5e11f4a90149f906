//! MRC and open-QA datasets. Answer offsets in files are character offsets.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::metrics::normalize_answer;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::synthgen::char_to_byte;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrcAnswer {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrcExample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passage_id: Option<String>,
    pub answers: Vec<MrcAnswer>,
}

impl MrcExample {
    /// Checks that every offset answer is found at its offset in the inline context.
    pub fn validate(&self) -> Result<()> {
        let Some(context) = &self.context else {
            return Ok(());
        };
        for a in &self.answers {
            let Some(start) = a.start else { continue };
            let found = char_to_byte(context, start)
                .and_then(|b| context.get(b..))
                .is_some_and(|rest| rest.starts_with(&a.text));
            if !found {
                return Err(Error::invalid(format!(
                    "answer {:?} not at character offset {start} of the context for {:?}",
                    a.text, self.question
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenQAExample {
    pub question_id: String,
    pub question: String,
    pub answers: Vec<String>,
}

impl OpenQAExample {
    /// Drops answers that repeat an earlier one after normalization.
    pub fn new(
        question_id: impl Into<String>,
        question: impl Into<String>,
        answers: Vec<String>,
    ) -> Result<Self> {
        let question_id = question_id.into();
        let mut seen = HashSet::new();
        let answers: Vec<String> = answers
            .into_iter()
            .filter(|a| seen.insert(normalize_answer(a)))
            .collect();
        if answers.is_empty() {
            return Err(Error::invalid(format!(
                "open-QA example {question_id} has no answers"
            )));
        }
        Ok(Self {
            question_id,
            question: question.into(),
            answers,
        })
    }
}

/// Group by normalized question, merging answers; first-seen order throughout.
///
/// Groups without any answer text are dropped. The question id is the first
/// member's id, or `q<group index>` when it has none.
pub fn dedup_open(examples: &[MrcExample]) -> Vec<OpenQAExample> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<(String, String, Vec<String>)> = Vec::new();
    for ex in examples {
        let key = normalize_answer(&ex.question);
        let g = *index.entry(key).or_insert_with(|| {
            let id = ex
                .id
                .clone()
                .unwrap_or_else(|| format!("q{}", groups.len()));
            groups.push((id, ex.question.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[g]
            .2
            .extend(ex.answers.iter().map(|a| a.text.clone()));
    }
    groups
        .into_iter()
        .filter_map(|(id, q, answers)| OpenQAExample::new(id, q, answers).ok())
        .collect()
}

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    #[serde(default)]
    title: String,
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
    #[serde(default)]
    document_id: Option<Value>,
}

#[derive(Deserialize)]
struct SquadQa {
    #[serde(default)]
    id: Option<Value>,
    question: String,
    #[serde(default)]
    answers: Vec<SquadAnswer>,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

fn value_to_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn read_squad(path: &Path, text: &str) -> Result<SquadFile> {
    serde_json::from_str(text).map_err(|e| Error::Malformed {
        path: path.to_owned(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn looks_like_squad(text: &str) -> bool {
    serde_json::from_str::<Value>(text).is_ok_and(|v| v.get("data").is_some_and(Value::is_array))
}

fn squad_examples(file: SquadFile) -> Vec<MrcExample> {
    let mut out = Vec::new();
    for article in file.data {
        for para in article.paragraphs {
            for qa in para.qas {
                out.push(MrcExample {
                    id: qa.id.as_ref().map(value_to_string),
                    question: qa.question,
                    context: Some(para.context.clone()),
                    passage_id: None,
                    answers: qa
                        .answers
                        .into_iter()
                        .map(|a| MrcAnswer {
                            text: a.text,
                            start: Some(a.answer_start),
                        })
                        .collect(),
                });
            }
        }
    }
    out
}

/// Loads MRC examples from a SQuAD-style JSON file or from JSON lines.
pub fn load_mrc(path: impl AsRef<Path>) -> Result<Vec<MrcExample>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let examples = if looks_like_squad(&text) {
        squad_examples(read_squad(path, &text)?)
    } else {
        jsonl::read_from(text.as_bytes(), path)?
    };
    for ex in &examples {
        ex.validate()?;
    }
    Ok(examples)
}

/// Loads open-QA examples, or derives them with [`dedup_open`] from an MRC file.
pub fn load_open(path: impl AsRef<Path>) -> Result<Vec<OpenQAExample>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    if looks_like_squad(&text) {
        return Ok(dedup_open(&squad_examples(read_squad(path, &text)?)));
    }
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let is_mrc = serde_json::from_str::<Value>(first).is_ok_and(|v| v.get("question_id").is_none());
    if is_mrc {
        let mrc: Vec<MrcExample> = jsonl::read_from(text.as_bytes(), path)?;
        return Ok(dedup_open(&mrc));
    }
    let raw: Vec<OpenQAExample> = jsonl::read_from(text.as_bytes(), path)?;
    let mut ids = HashSet::new();
    raw.into_iter()
        .map(|ex| {
            if !ids.insert(ex.question_id.clone()) {
                return Err(Error::DuplicateId(ex.question_id));
            }
            OpenQAExample::new(ex.question_id, ex.question, ex.answers)
        })
        .collect()
}

/// One document per SQuAD paragraph, so the contexts can be chunked and indexed.
pub fn squad_documents(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = read_squad(path, &read_text(path)?)?;
    let mut used = HashSet::new();
    let mut seen_contexts = HashSet::new();
    let mut docs = Vec::new();
    for (ai, article) in file.data.into_iter().enumerate() {
        let n = article.paragraphs.len();
        for (pi, para) in article.paragraphs.into_iter().enumerate() {
            if !seen_contexts.insert(para.context.clone()) {
                continue;
            }
            let mut id = match &para.document_id {
                Some(v) => value_to_string(v),
                None if article.title.trim().is_empty() => format!("doc{ai}"),
                None => article.title.trim().to_owned(),
            };
            if n > 1 {
                id = format!("{id}.{pi}");
            }
            if !used.insert(id.clone()) {
                id = format!("{id}~{ai}");
                used.insert(id.clone());
            }
            docs.push(Document {
                id,
                title: article.title.clone(),
                text: para.context,
            });
        }
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn mrc(q: &str, a: &str) -> MrcExample {
        MrcExample {
            id: None,
            question: q.into(),
            context: None,
            passage_id: None,
            answers: vec![MrcAnswer {
                text: a.into(),
                start: None,
            }],
        }
    }

    #[test]
    fn dedup_three_example_fixture() {
        let out = dedup_open(&[
            mrc("What causes it?", "A1"),
            mrc("How long?", "B"),
            mrc("what causes it", "A2"),
        ]);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].answers, vec!["A1", "A2"]);
        assert_eq!(out[0].question, "What causes it?");
        assert_eq!(out[0].question_id, "q0");
        assert_eq!(out[1].question_id, "q1");
    }

    #[test]
    fn open_example_rejects_empty_answers() {
        assert!(OpenQAExample::new("q", "?", vec![]).is_err());
        let ex = OpenQAExample::new("q", "?", vec!["The cat".into(), "cat".into(), "dog".into()])
            .unwrap();
        assert_eq!(ex.answers, vec!["The cat", "dog"]);
    }

    #[test]
    fn squad_import_and_offsets() {
        let squad = r#"{"version":"1","data":[{"title":"T","paragraphs":[{"context":"Ünï fever here.","qas":[
            {"id":7,"question":"What?","answers":[{"text":"fever","answer_start":4}]},
            {"id":"b","question":"what","answers":[{"text":"here","answer_start":10}]}]}]}]}"#;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        fs::write(&p, squad).unwrap();
        let ex = load_mrc(&p).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].id.as_deref(), Some("7"));
        let open = load_open(&p).unwrap();
        assert_eq!(open.len(), 1);
        assert_eq!(open[0].answers, vec!["fever", "here"]);
        let docs = squad_documents(&p).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].id, "T");

        let bad = squad.replace("\"answer_start\":4", "\"answer_start\":5");
        fs::write(&p, bad).unwrap();
        assert!(load_mrc(&p).is_err());
    }

    #[test]
    fn open_jsonl_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.jsonl");
        let mut f = fs::File::create(&p).unwrap();
        writeln!(
            f,
            r#"{{"question_id":"a","question":"q1","answers":["x"]}}"#
        )
        .unwrap();
        writeln!(
            f,
            r#"{{"question_id":"b","question":"q2","answers":["y","Y."]}}"#
        )
        .unwrap();
        drop(f);
        let open = load_open(&p).unwrap();
        assert_eq!(open[1].answers, vec!["y"]);

        fs::write(&p, "{\"question_id\":\"a\",\"question\":\"q\",\"answers\":[\"x\"]}\n{\"question_id\":\"a\",\"question\":\"r\",\"answers\":[\"x\"]}\n").unwrap();
        assert!(matches!(load_open(&p), Err(Error::DuplicateId(_))));

        fs::write(&p, "{\"question\":\"q\",\"answers\":[{\"text\":\"x\"}]}\n{\"question\":\"Q.\",\"answers\":[{\"text\":\"z\"}]}\n").unwrap();
        let derived = load_open(&p).unwrap();
        assert_eq!(derived.len(), 1);
        assert_eq!(derived[0].answers, vec!["x", "z"]);
    }

    proptest! {
        #[test]
        fn dedup_preserves_pairs(pairs in proptest::collection::vec(("[a-c]{1,2}", "[x-z]{1,2}"), 0..25)) {
            let exs: Vec<MrcExample> = pairs.iter().map(|(q, a)| mrc(q, a)).collect();
            let out = dedup_open(&exs);
            prop_assert!(out.len() <= exs.len());
            let before: HashSet<(String, String)> = pairs.iter()
                .map(|(q, a)| (normalize_answer(q), normalize_answer(a))).collect();
            let after: HashSet<(String, String)> = out.iter()
                .flat_map(|o| o.answers.iter().map(move |a| (normalize_answer(&o.question), normalize_answer(a))))
                .collect();
            prop_assert_eq!(before, after);
        }
    }
}
