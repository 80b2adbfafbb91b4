//! Timestamped question files: one JSON object per line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOption {
    pub letter: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionItem {
    pub id: String,
    pub asked_at_s: f64,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<QuestionOption>>,
    pub gold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl QuestionItem {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.asked_at_s >= 0.0 && self.asked_at_s.is_finite()) {
            return Err(format!(
                "asked_at_s {} must be a non-negative number",
                self.asked_at_s
            ));
        }
        if self.gold.trim().is_empty() {
            return Err("gold answer is empty".into());
        }
        if let Some(options) = &self.options {
            if !options
                .iter()
                .any(|o| o.letter.eq_ignore_ascii_case(self.gold.trim()))
            {
                return Err(format!(
                    "gold {:?} is not one of the option letters",
                    self.gold
                ));
            }
        }
        Ok(())
    }

    /// Question text as shown to the policy, options listed one per line.
    pub fn prompt_text(&self) -> String {
        let mut s = self.question.trim().to_string();
        if let Some(options) = &self.options {
            s.push_str("\nOptions:");
            for o in options {
                s.push_str(&format!("\n{}. {}", o.letter, o.text));
            }
        }
        s
    }
}

pub fn parse_questions(text: &str) -> Result<Vec<QuestionItem>, HarnessError> {
    let mut out: Vec<QuestionItem> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: String| HarnessError::Data(format!("questions line {}: {m}", i + 1));
        let q: QuestionItem = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        q.validate().map_err(err)?;
        if let Some(prev) = out.last() {
            if q.asked_at_s < prev.asked_at_s {
                return Err(err(format!(
                    "questions must be sorted by asked_at_s ({} after {})",
                    q.asked_at_s, prev.asked_at_s
                )));
            }
        }
        out.push(q);
    }
    Ok(out)
}

pub fn load_questions(path: &Path) -> Result<Vec<QuestionItem>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    parse_questions(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_renders_options() {
        let qs = parse_questions(
            r#"{"id": "q1", "asked_at_s": 5, "question": "What color?", "options": [{"letter": "A", "text": "red"}, {"letter": "B", "text": "blue"}], "gold": "B", "category": "color"}
{"id": "q2", "asked_at_s": 5, "question": "Open?", "gold": "yes"}"#,
        )
        .unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(
            qs[0].prompt_text(),
            "What color?\nOptions:\nA. red\nB. blue"
        );
        assert_eq!(qs[1].category, None);
    }

    #[test]
    fn enforces_order_and_gold() {
        let unsorted = "{\"id\":\"a\",\"asked_at_s\":9,\"question\":\"x\",\"gold\":\"y\"}\n{\"id\":\"b\",\"asked_at_s\":3,\"question\":\"x\",\"gold\":\"y\"}";
        let e = parse_questions(unsorted).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("sorted"), "{e}");
        let bad_gold = r#"{"id":"a","asked_at_s":1,"question":"x","options":[{"letter":"A","text":"t"}],"gold":"C"}"#;
        assert!(parse_questions(bad_gold).is_err());
        let negative = r#"{"id":"a","asked_at_s":-1,"question":"x","gold":"y"}"#;
        assert!(parse_questions(negative).is_err());
    }
}
