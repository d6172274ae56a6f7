//! Chat payloads sent to generator and evaluator endpoints.

use super::{CoTStep, CorrectionRequest, EvaluationRequest, RawSample};

pub const GENERATOR_SYSTEM: &str =
    "You write step-by-step reasoning for visual question answering \
over images that contain text in many languages. You are given the image reference, the question \
and the correct answer. Produce the reasoning that leads to that answer.";

pub const EVALUATOR_SYSTEM: &str = "You check one step of a visual reasoning chain. Judge whether \
the step is correct, consistent with the image, the question, the answer and the earlier steps. \
Reply with a single JSON object and nothing else.";

const STAGE_INSTRUCTIONS: &str = "Work through four stages, one <step>...</step> block per stage:\n\
1. Text summary: list each text region as `[x1,y1,x2,y2] short summary`, one per line, inside \
<segments>...</segments>.\n\
2. Language: name the primary language of the text as \\lang{code} using a two-letter code \
(en, zh, pt, ar, tr, ru, de, fr, it, ja, ko, th, vi).\n\
3. Objects: describe the main objects and where they are, and give their total as \\obj{n}.\n\
4. Reasoning: restate the question, plan the solution and carry it out until you reach the answer.\n\
Write stages 3 and 4 in the language identified in stage 2.";

fn sample_block(sample: &RawSample) -> String {
    format!(
        "Image: {}\nQuestion: {}\nAnswer: {}\nLanguage label: {}",
        sample.image_ref, sample.question, sample.answer, sample.language_label
    )
}

fn numbered_steps(steps: &[CoTStep]) -> String {
    steps
        .iter()
        .map(|s| format!("Step {}:\n{}", s.index, s.content))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn generation_prompt(sample: &RawSample) -> String {
    format!("{}\n\n{STAGE_INSTRUCTIONS}", sample_block(sample))
}

/// Index and text of the step at `position`, and the steps before it. An
/// out-of-range position yields an empty step.
fn split_at_step(steps: &[CoTStep], position: usize) -> (usize, &str, &[CoTStep]) {
    let earlier = &steps[..position.min(steps.len())];
    match steps.get(position) {
        Some(step) => (step.index, step.content.as_str(), earlier),
        None => (position + 1, "", earlier),
    }
}

pub fn evaluation_prompt(request: &EvaluationRequest<'_>) -> String {
    let (index, content, earlier) = split_at_step(request.steps, request.position);
    format!(
        "{}\n\nReasoning so far:\n{}\n\nEvaluate step {} only:\n{}\n\n\
         Return {{\"score\": <number between 0 and 1>, \"error_span\": {{\"start\": <char offset>, \
         \"end\": <char offset>}} or null, \"critique\": \"<what is wrong>\"}}. \
         Offsets count characters of the evaluated step.",
        sample_block(request.sample),
        numbered_steps(earlier),
        index,
        content,
    )
}

pub fn correction_prompt(request: &CorrectionRequest<'_>) -> String {
    let (index, content, earlier) = split_at_step(request.steps, request.position);
    let erroneous: String = content
        .chars()
        .skip(request.span.start)
        .take(request.span.end.saturating_sub(request.span.start))
        .collect();
    format!(
        "{}\n\nReasoning so far:\n{}\n\nStep {} contains an error.\nStep:\n{}\n\nErroneous part:\n{}\n\n\
         Critique:\n{}\n\nRewrite step {} so the error is fixed. Keep everything that was correct \
         and keep the same stage syntax. Reply with the corrected step text only.",
        sample_block(request.sample),
        numbered_steps(earlier),
        index,
        content,
        erroneous,
        request.critique,
        index,
    )
}
