use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::Aspect;
use crate::llm::{extract_json_object, prompts, Image, LlmError, Message, Role, Session};
use crate::reflection::ViewSet;

pub const MAX_SCORE: f64 = 10.0;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge response could not be scored: {reason}")]
    ScoreParse { reason: String, response: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Scores restricted to the task's applicable aspects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScore {
    pub per_aspect: BTreeMap<Aspect, f64>,
    pub total: f64,
    pub percentage: f64,
    /// Total as stated by the judge, if it gave one. Not used for scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_total: Option<f64>,
}

impl EvalScore {
    /// Keeps only `applicable` aspects; each must be present and in [0, 10].
    pub fn from_scores(scores: &BTreeMap<Aspect, f64>, applicable: &[Aspect]) -> Result<Self, String> {
        if applicable.is_empty() {
            return Err("no applicable aspects".into());
        }
        let mut per_aspect = BTreeMap::new();
        for &a in applicable {
            let s = *scores.get(&a).ok_or_else(|| format!("no score for {a}"))?;
            if !(0.0..=MAX_SCORE).contains(&s) {
                return Err(format!("{a} score {s} is outside 0..10"));
            }
            per_aspect.insert(a, s);
        }
        let total: f64 = per_aspect.values().sum();
        let percentage = total / (MAX_SCORE * per_aspect.len() as f64) * 100.0;
        Ok(EvalScore {
            per_aspect,
            total,
            percentage,
            reported_total: None,
        })
    }

    /// Score of a failed trial.
    pub fn zero(applicable: &[Aspect]) -> Self {
        EvalScore {
            per_aspect: applicable.iter().map(|&a| (a, 0.0)).collect(),
            total: 0.0,
            percentage: 0.0,
            reported_total: None,
        }
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().split('/').next()?.trim().parse().ok(),
        Value::Object(m) => m.get("score").and_then(number),
        _ => None,
    }
}

fn from_json(text: &str) -> Option<(BTreeMap<Aspect, f64>, Option<f64>)> {
    let map = extract_json_object(text).ok()?;
    let lookup = |name: &str| {
        map.iter()
            .find(|(k, _)| k.trim().eq_ignore_ascii_case(name))
            .and_then(|(_, v)| number(v))
    };
    let scores: BTreeMap<Aspect, f64> = Aspect::ALL
        .iter()
        .filter_map(|&a| lookup(a.name()).map(|s| (a, s)))
        .collect();
    (!scores.is_empty()).then(|| (scores, lookup("total")))
}

fn aspect_pattern(name: &str) -> Regex {
    Regex::new(&format!(r"(?i)\b{name}\b[^0-9\n]{{0,40}}?(\d+(?:\.\d+)?)")).expect("static pattern")
}

fn patterns() -> &'static [(Option<Aspect>, Regex)] {
    static CELL: OnceLock<Vec<(Option<Aspect>, Regex)>> = OnceLock::new();
    CELL.get_or_init(|| {
        Aspect::ALL
            .iter()
            .map(|&a| (Some(a), aspect_pattern(a.name())))
            .chain(std::iter::once((None, aspect_pattern("total(?: score)?"))))
            .collect()
    })
}

/// Free-text fallback. The last mention of each aspect wins, so a reply that
/// restates the rubric before scoring still parses.
fn from_text(text: &str) -> (BTreeMap<Aspect, f64>, Option<f64>) {
    let mut scores = BTreeMap::new();
    let mut total = None;
    for (aspect, re) in patterns() {
        let last = re
            .captures_iter(text)
            .filter_map(|c| c[1].parse::<f64>().ok())
            .last();
        match (aspect, last) {
            (Some(a), Some(v)) => {
                scores.insert(*a, v);
            }
            (None, v) => total = v,
            _ => {}
        }
    }
    (scores, total)
}

/// Reads the aspect scores out of a judge reply, JSON first then prose.
pub fn parse_scores(text: &str, applicable: &[Aspect]) -> Result<EvalScore, String> {
    let (scores, total) = from_json(text).unwrap_or_else(|| from_text(text));
    let mut score = EvalScore::from_scores(&scores, applicable)?;
    score.reported_total = total;
    Ok(score)
}

/// Rubric prompt with the instruction and the rendered views; one JSON-mode
/// re-ask if the reply cannot be scored.
pub fn judge(
    session: &mut Session<'_>,
    instruction: &str,
    applicable: &[Aspect],
    views: &ViewSet,
    image: Option<Image>,
) -> Result<EvalScore, JudgeError> {
    let image = image.filter(|_| session.supports_images());
    let mut messages = vec![Message::user(prompts::evaluation(instruction, views.to_text().trim_end())).with_image(image)];
    let first = session.ask("judge", &messages, false)?;
    let reason = match parse_scores(&first, applicable) {
        Ok(s) => return Ok(s),
        Err(reason) => reason,
    };
    messages.push(Message {
        role: Role::Assistant,
        text: first,
        image: None,
    });
    messages.push(Message::user(format!(
        "Your reply could not be scored: {reason}. Reply with only a JSON object with the numeric keys \"correctness\", \"complexity\", \"creativity\", \"functionality\" (each 0 to 10) and \"total\"."
    )));
    let second = session.ask("judge-repair", &messages, true)?;
    parse_scores(&second, applicable).map_err(|reason| JudgeError::ScoreParse {
        reason,
        response: second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{BoundingBox, Coord};
    use crate::llm::{ScriptedClient, TranscriptEntry};
    use crate::reflection::render_views;
    use crate::world::WorldState;
    use proptest::prelude::*;

    fn views() -> ViewSet {
        let bb = BoundingBox::spanning(Coord::new(0, 1, 0), Coord::new(1, 1, 1));
        render_views(&WorldState::default(), &bb)
    }

    fn scripted(responses: &[&str]) -> ScriptedClient {
        ScriptedClient::new(
            responses
                .iter()
                .map(|r| TranscriptEntry {
                    expect_substring: String::new(),
                    response: r.to_string(),
                })
                .collect(),
        )
    }

    #[test]
    fn perfect_marks() {
        let mut client = scripted(&[r#"{"correctness": 10, "complexity": 10, "creativity": 10, "functionality": 10, "total": 40}"#]);
        let mut s = Session::new(&mut client, 0.0);
        let score = judge(&mut s, "a hut", &Aspect::ALL, &views(), None).unwrap();
        assert_eq!(score.percentage, 100.0);
        assert_eq!(score.total, 40.0);
        assert_eq!(score.reported_total, Some(40.0));
        assert!(s.log[0].messages[0].text.starts_with("Your task is to evaluate the building"));
        assert!(s.log[0].messages[0].text.contains("Instruction: a hut\nImage of the building: Legend:"));
    }

    #[test]
    fn single_aspect() {
        let reply = "Correctness: 9/10\nComplexity: 4/10\nCreativity: 5/10\nFunctionality: 6/10\nTotal: 24/40";
        let score = parse_scores(reply, &[Aspect::Correctness]).unwrap();
        assert_eq!(score.percentage, 90.0);
        assert_eq!(score.per_aspect.len(), 1);
        assert_eq!(score.reported_total, Some(24.0));
    }

    #[test]
    fn prose_after_rubric_echo() {
        let reply = "1. Correctness: How accurately does it follow?\n2. Complexity: how intricate\n\nScores:\n- **Correctness**: 8\n- **Complexity**: 6.5\n- **Creativity** - 7\n- **Functionality** 9 out of 10\nOverall total score: 30.5";
        let score = parse_scores(reply, &Aspect::ALL).unwrap();
        assert_eq!(score.per_aspect[&Aspect::Correctness], 8.0);
        assert_eq!(score.per_aspect[&Aspect::Complexity], 6.5);
        assert_eq!(score.per_aspect[&Aspect::Functionality], 9.0);
        assert_eq!(score.total, 30.5);
    }

    #[test]
    fn malformed_then_retry() {
        let mut client = scripted(&["It looks great!", r#"{"correctness": 7, "functionality": 8}"#]);
        let mut s = Session::new(&mut client, 0.0);
        let score = judge(&mut s, "tower", &[Aspect::Correctness, Aspect::Functionality], &views(), None).unwrap();
        assert_eq!(score.percentage, 75.0);
        assert_eq!(s.log.len(), 2);
        assert!(s.log[1].options.json_mode);
    }

    #[test]
    fn malformed_twice() {
        let mut client = scripted(&["It looks great!", "Still great."]);
        let mut s = Session::new(&mut client, 0.0);
        let err = judge(&mut s, "tower", &Aspect::ALL, &views(), None).unwrap_err();
        assert!(matches!(err, JudgeError::ScoreParse { .. }), "{err}");
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(parse_scores(r#"{"correctness": 11}"#, &[Aspect::Correctness]).is_err());
        assert!(parse_scores(r#"{"correctness": "8/10"}"#, &[Aspect::Correctness]).is_ok());
    }

    proptest! {
        #[test]
        fn percentage_ignores_aspect_order(
            scores in prop::array::uniform4(0u8..=10),
            mut order in Just(Aspect::ALL.to_vec()).prop_shuffle(),
            n in 1usize..=4,
        ) {
            let map: BTreeMap<Aspect, f64> = Aspect::ALL.iter().zip(scores).map(|(&a, s)| (a, f64::from(s))).collect();
            order.truncate(n);
            let a = EvalScore::from_scores(&map, &order).unwrap();
            let mut rev = order.clone();
            rev.reverse();
            let b = EvalScore::from_scores(&map, &rev).unwrap();
            prop_assert_eq!(a.percentage, b.percentage);
            let oracle: f64 = order.iter().map(|x| map[x]).sum::<f64>() / (10.0 * n as f64) * 100.0;
            prop_assert!((a.percentage - oracle).abs() < 1e-12);
            prop_assert!((0.0..=100.0).contains(&a.percentage));
        }
    }
}
