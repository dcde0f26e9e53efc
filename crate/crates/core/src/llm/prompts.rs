//! Prompt templates and slot substitution.

use crate::block;
use crate::memory::Retrieved;

pub const LAYOUT_SYNOPSIS: &str = include_str!("templates/layout_synopsis.txt");
pub const BLUEPRINT_SYSTEM: &str = include_str!("templates/blueprint_system.txt");
pub const BLUEPRINT_USER: &str = include_str!("templates/blueprint_user.txt");
pub const SELF_REFLECTION: &str = include_str!("templates/self_reflection.txt");
pub const EVALUATION: &str = include_str!("templates/evaluation.txt");
pub const DSL_REFERENCE: &str = include_str!("templates/dsl_reference.txt");

pub const NO_RETRIEVED_PLANS: &str = "None";

/// Replaces each `{slot}` in one pass; substituted text is never rescanned.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let template = template.strip_suffix('\n').unwrap_or(template);
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = slots.iter().find(|(name, _)| {
            tail.strip_prefix('{')
                .and_then(|t| t.strip_prefix(name))
                .is_some_and(|t| t.starts_with('}'))
        });
        match hit {
            Some((name, value)) => {
                out.push_str(value);
                rest = &tail[name.len() + 2..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn layout_synopsis(text: &str) -> String {
    fill(LAYOUT_SYNOPSIS, &[("text", text)])
}

pub fn blueprint_system() -> String {
    fill(BLUEPRINT_SYSTEM, &[])
}

pub fn retrieved_plans(retrieved: &[Retrieved]) -> String {
    if retrieved.is_empty() {
        return NO_RETRIEVED_PLANS.to_string();
    }
    retrieved
        .iter()
        .map(|r| format!("Task: {}\nPlan:\n{}", r.record.task_text, r.record.plan_dsl.trim_end()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn blueprint_user(retrieved: &[Retrieved], structure: &str) -> String {
    fill(
        BLUEPRINT_USER,
        &[("retrievedPlans", &retrieved_plans(retrieved)), ("structure", structure)],
    )
}

pub fn self_reflection(structure: &str, image: &str, blueprint: &str) -> String {
    fill(
        SELF_REFLECTION,
        &[("structure", structure), ("Image", image), ("blueprint", blueprint)],
    )
}

pub fn evaluation(instruction: &str, image: &str) -> String {
    fill(EVALUATION, &[("INSTRUCTION", instruction), ("IMAGE", image)])
}

pub fn dsl_reference() -> String {
    let ids: Vec<&str> = block::all().iter().map(|b| b.id).collect();
    fill(DSL_REFERENCE, &[("blocks", &ids.join(", "))])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pass_substitution() {
        assert_eq!(fill("a {x} {y} {z}", &[("x", "{y}"), ("y", "2")]), "a {y} 2 {z}");
        assert_eq!(fill("{x", &[("x", "1")]), "{x");
        assert_eq!(fill("{x}{x}\n", &[("x", "1")]), "11");
    }

    #[test]
    fn empty_retrieval_reads_none() {
        let p = blueprint_user(&[], "a hut");
        assert!(p.contains("(could be None)"));
        assert!(p.contains("reference it:\nNone\n\nPlease provide the code for this structure: a hut."));
    }

    #[test]
    fn every_slot_is_filled() {
        for p in [
            layout_synopsis("t"),
            blueprint_user(&[], "s"),
            self_reflection("s", "i", "b"),
            evaluation("i", "m"),
            dsl_reference(),
        ] {
            for slot in ["{text}", "{retrievedPlans}", "{structure}", "{Image}", "{blueprint}", "{INSTRUCTION}", "{IMAGE}", "{blocks}"] {
                assert!(!p.contains(slot), "{slot} left in prompt");
            }
        }
        assert!(dsl_reference().contains("oak_door"));
    }
}
