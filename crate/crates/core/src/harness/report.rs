//! Run reports: JSON, an aligned text table and CSV series.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agent::{Termination, Trajectory};
use crate::stm::StmStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub asked_at_s: f64,
    pub answer: Option<String>,
    pub gold: String,
    pub reward: f64,
    pub turns: usize,
    pub tools: Vec<String>,
    /// `None` when the question was not run.
    pub terminated_by: Option<Termination>,
    /// Asked after the stream ended; scored 0 without running.
    pub unanswerable: bool,
    pub max_visible_timestamp_s: Option<f64>,
    /// Nothing newer than `asked_at_s` reached the policy.
    pub online_ok: bool,
}

impl QuestionResult {
    pub fn from_trajectory(
        t: &Trajectory,
        category: Option<String>,
        gold: &str,
        reward: f64,
    ) -> Self {
        Self {
            id: t.question_id.clone(),
            category,
            asked_at_s: t.asked_at_s,
            answer: t.final_answer.clone(),
            gold: gold.to_string(),
            reward,
            turns: t.turns.len(),
            tools: t.tools_used().into_iter().map(str::to_string).collect(),
            terminated_by: Some(t.terminated_by),
            unanswerable: false,
            max_visible_timestamp_s: t.max_visible_timestamp_s,
            online_ok: t.max_visible_timestamp_s.is_none_or(|m| m <= t.asked_at_s),
        }
    }

    pub fn unanswerable(id: &str, category: Option<String>, asked_at_s: f64, gold: &str) -> Self {
        Self {
            id: id.to_string(),
            category,
            asked_at_s,
            answer: None,
            gold: gold.to_string(),
            reward: 0.0,
            turns: 0,
            tools: Vec::new(),
            terminated_by: None,
            unanswerable: true,
            max_visible_timestamp_s: None,
            online_ok: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryStats {
    pub frames_admitted: u64,
    pub events_created: u64,
    pub evictions: u64,
    pub reservoir_accept_rate: Option<f64>,
    pub ltm_entries: usize,
    pub pending: usize,
}

impl MemoryStats {
    pub fn from_parts(stats: &StmStats, ltm_entries: usize, pending: usize) -> Self {
        Self {
            frames_admitted: stats.frames_admitted,
            events_created: stats.events_created,
            evictions: stats.evictions,
            reservoir_accept_rate: stats.reservoir_accept_rate(),
            ltm_entries,
            pending,
        }
    }

    fn write_table(&self, out: &mut String) {
        let rate = self
            .reservoir_accept_rate
            .map_or_else(|| "-".to_string(), |r| format!("{r:.4}"));
        let rows = [
            ("frames admitted", self.frames_admitted.to_string()),
            ("events created", self.events_created.to_string()),
            ("evictions", self.evictions.to_string()),
            ("reservoir accept rate", rate),
            ("ltm entries", self.ltm_entries.to_string()),
            ("pending archival", self.pending.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<22} {v}");
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        self.write_table(&mut s);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub segmentation: String,
    pub questions: Vec<QuestionResult>,
    pub accuracy: f64,
    pub accuracy_by_category: BTreeMap<String, f64>,
    pub online_violations: usize,
    pub unanswerable: usize,
    pub policy_errors: usize,
    pub memory: MemoryStats,
}

impl RunReport {
    pub fn new(segmentation: String, questions: Vec<QuestionResult>, memory: MemoryStats) -> Self {
        let mean = |rs: &[f64]| {
            if rs.is_empty() {
                0.0
            } else {
                rs.iter().sum::<f64>() / rs.len() as f64
            }
        };
        let all: Vec<f64> = questions.iter().map(|q| q.reward).collect();
        let mut by_cat: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for q in &questions {
            if let Some(c) = &q.category {
                by_cat.entry(c.clone()).or_default().push(q.reward);
            }
        }
        Self {
            segmentation,
            accuracy: mean(&all),
            accuracy_by_category: by_cat.into_iter().map(|(k, v)| (k, mean(&v))).collect(),
            online_violations: questions.iter().filter(|q| !q.online_ok).count(),
            unanswerable: questions.iter().filter(|q| q.unanswerable).count(),
            policy_errors: questions
                .iter()
                .filter(|q| q.terminated_by == Some(Termination::PolicyError))
                .count(),
            questions,
            memory,
        }
    }

    pub fn to_table(&self) -> String {
        let header = [
            "id", "category", "asked_at", "answer", "gold", "reward", "turns", "tools", "max_seen",
            "flags",
        ];
        let rows: Vec<[String; 10]> = self
            .questions
            .iter()
            .map(|q| {
                let mut flags = Vec::new();
                if q.unanswerable {
                    flags.push("unanswerable");
                }
                if !q.online_ok {
                    flags.push("ONLINE-VIOLATION");
                }
                match q.terminated_by {
                    Some(Termination::MaxTurns) => flags.push("max_turns"),
                    Some(Termination::PolicyError) => flags.push("policy_error"),
                    _ => {}
                }
                [
                    q.id.clone(),
                    q.category.clone().unwrap_or_else(|| "-".into()),
                    format!("{:.1}", q.asked_at_s),
                    q.answer.clone().unwrap_or_else(|| "-".into()),
                    q.gold.clone(),
                    format!("{:.0}", q.reward),
                    q.turns.to_string(),
                    if q.tools.is_empty() {
                        "-".into()
                    } else {
                        q.tools.join(",")
                    },
                    q.max_visible_timestamp_s
                        .map_or_else(|| "-".into(), |t| format!("{t:.1}")),
                    if flags.is_empty() {
                        "-".into()
                    } else {
                        flags.join(",")
                    },
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for r in &rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let line = |cells: &[&str], out: &mut String| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&header, &mut out);
        for r in &rows {
            let cells: Vec<&str> = r.iter().map(String::as_str).collect();
            line(&cells, &mut out);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "segmentation           {}", self.segmentation);
        let _ = writeln!(
            out,
            "accuracy               {:.4} ({} questions)",
            self.accuracy,
            self.questions.len()
        );
        for (c, a) in &self.accuracy_by_category {
            let _ = writeln!(out, "  {c:<20} {a:.4}");
        }
        let _ = writeln!(out, "online violations      {}", self.online_violations);
        let _ = writeln!(out, "unanswerable           {}", self.unanswerable);
        let _ = writeln!(out, "policy errors          {}", self.policy_errors);
        self.memory.write_table(&mut out);
        out
    }

    /// Per-question series for plotting turn counts.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("question_id,asked_at_s,reward,turns,max_visible_timestamp_s,online_ok\n");
        for q in &self.questions {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&q.id),
                q.asked_at_s,
                q.reward,
                q.turns,
                q.max_visible_timestamp_s
                    .map_or_else(String::new, |t| t.to_string()),
                q.online_ok
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub runs: Vec<RunReport>,
}

impl ComparisonReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>8} {:>10} {:>10}",
            "policy", "events", "ltm", "accuracy", "questions"
        );
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{:<14} {:>8} {:>8} {:>10.4} {:>10}",
                r.segmentation,
                r.memory.events_created,
                r.memory.ltm_entries,
                r.accuracy,
                r.questions.len()
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(id: &str, cat: Option<&str>, reward: f64) -> QuestionResult {
        let mut r = QuestionResult::unanswerable(id, cat.map(str::to_string), 1.0, "A");
        r.unanswerable = false;
        r.reward = reward;
        r.terminated_by = Some(Termination::Answer);
        r
    }

    #[test]
    fn accuracy_is_mean_reward() {
        let r = RunReport::new(
            "event".into(),
            vec![
                q("a", Some("ocr"), 1.0),
                q("b", Some("ocr"), 0.0),
                q("c", None, 1.0),
                q("d", Some("count"), 1.0),
            ],
            MemoryStats::default(),
        );
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.accuracy_by_category["ocr"], 0.5);
        assert_eq!(r.accuracy_by_category["count"], 1.0);
        assert!(r.to_table().lines().next().unwrap().starts_with("id"));
        assert_eq!(r.to_csv().lines().count(), 5);
        let empty = RunReport::new("event".into(), vec![], MemoryStats::default());
        assert_eq!(empty.accuracy, 0.0);
    }

    #[test]
    fn csv_quotes() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }
}
