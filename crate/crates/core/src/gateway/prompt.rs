use crate::corpus::ExperienceRecord;
use crate::error::{Error, Result};
use crate::persona::{render, Persona};

use super::{ChatRequest, AUDIT_MAX_TOKENS, AUDIT_TEMPERATURE};

pub const AFFECTIVE_SYSTEM: &str = "Your task is to analyze a given sentence and determine the most appropriate emotion that is conveyed in the sentence. Consider the user's background while interpreting emotions. Do not provide any explanation for your prediction. Your output should be of the format: (You have to include the Output token)\n[OUTPUT 1]: <persona description>\n[OUTPUT 2]: <single emotion word>";

pub const AFFECTIVE_SYSTEM_MASKED: &str = "Your task is to analyze a given sentence and determine the most appropriate emotion for the masked word (denoted as [MASK]). Consider the user's background while interpreting emotions. Do not provide any explanation for your prediction. Your output should be of the format: (You have to include the Output token)\n[OUTPUT 1]: <persona description>\n[OUTPUT 2]: <single emotion word>";

pub const AFFECTIVE_FINAL_PREFIX: &str =
    "Identify the emotion in the sentence based on my description and identity: ";

pub const COGNITIVE_SYSTEM: &str = "You will be given an input that contains a text and the identity of the speaker. You cannot use the phrase 'I cannot'. Prepare an appropriate response to this speaker. An appropriate response considers the entire context of the input and the speaker. The output should be of the following format: (You must include the output)\nOutput: <response text>";

pub const COGNITIVE_FINAL_PREFIX: &str =
    "Generate a response based on my description and identity for the input sentence: ";

/// `I am a {identity}. Who am I?`, or `None` for the base persona.
pub fn identity_turn(persona: &Persona) -> Option<String> {
    render(persona).map(|clause| format!("I am a {clause}. Who am I?"))
}

fn request(system: &str, persona: &Persona, final_turn: String) -> ChatRequest {
    let mut turns = Vec::with_capacity(2);
    turns.extend(identity_turn(persona));
    turns.push(final_turn);
    ChatRequest {
        system_text: system.to_owned(),
        turns,
        temperature: AUDIT_TEMPERATURE,
        max_tokens: AUDIT_MAX_TOKENS,
    }
}

pub fn build_affective_prompt(persona: &Persona, record: &ExperienceRecord) -> ChatRequest {
    let system = if record.masked {
        AFFECTIVE_SYSTEM_MASKED
    } else {
        AFFECTIVE_SYSTEM
    };
    request(system, persona, format!("{AFFECTIVE_FINAL_PREFIX}{}", record.text))
}

/// Response-generation request; the record must carry its original text.
pub fn build_cognitive_prompt(persona: &Persona, record: &ExperienceRecord) -> Result<ChatRequest> {
    if record.masked {
        return Err(Error::Argument(format!(
            "record {:?} is masked; response generation uses the original text",
            record.id
        )));
    }
    Ok(request(
        COGNITIVE_SYSTEM,
        persona,
        format!("{COGNITIVE_FINAL_PREFIX}{}", record.text),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::GoldLabel;

    fn rec(text: &str) -> ExperienceRecord {
        ExperienceRecord::new("r", text, GoldLabel::Anger).unwrap()
    }

    #[test]
    fn affective_prompt_variants() {
        let masked = build_affective_prompt(&Persona::base(), &rec("I felt [MASK] today."));
        assert!(masked.system_text.contains("masked word (denoted as [MASK])"));
        assert_eq!(masked.turns.len(), 1);
        assert_eq!(
            masked.turns[0],
            "Identify the emotion in the sentence based on my description and identity: I felt [MASK] today."
        );
        assert_eq!(masked.temperature, 0.0);
        assert_eq!(masked.max_tokens, 2048);

        let p = Persona::new(Some("0-17"), Some("male"), Some("Protestant Europe"));
        let plain = build_affective_prompt(&p, &rec("I felt bad."));
        assert!(!plain.system_text.contains("[MASK]"));
        assert_eq!(plain.turns.len(), 2);
        assert_eq!(
            plain.turns[0],
            "I am a 0-17 age category, Protestant Europe culture and male gender. Who am I?"
        );
    }

    #[test]
    fn cognitive_prompt_rules() {
        let r = build_cognitive_prompt(&Persona::base(), &rec("I felt bad.")).unwrap();
        assert!(r.system_text.ends_with("Output: <response text>"));
        assert!(r.system_text.contains("You cannot use the phrase 'I cannot'"));
        assert_eq!(r.turns.len(), 1);
        assert!(r.turns[0].starts_with("Generate a response based on my description and identity for the input sentence: "));
        let p = Persona::new(None, Some("female"), None);
        let r = build_cognitive_prompt(&p, &rec("I felt bad.")).unwrap();
        assert_eq!(r.turns[0], "I am a female gender. Who am I?");
        assert!(matches!(
            build_cognitive_prompt(&p, &rec("I felt [MASK].")),
            Err(Error::Argument(_))
        ));
    }
}
