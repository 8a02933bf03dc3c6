use thiserror::Error;

use super::{ParseError, Prompt};
use crate::providers::{ImageRef, LanguageModel, MllmRequest, ProviderError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AskError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("unusable model response: {0}")]
    Parse(#[from] ParseError),
}

/// A parsed model answer and the raw text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Asked<T> {
    pub value: T,
    pub raw: String,
    /// 1, or 2 when the first answer had to be re-asked.
    pub attempts: u32,
}

fn reask_text(prompt: &Prompt, err: &ParseError) -> String {
    format!(
        "{}\n\nYour previous response could not be used ({}). Respond again with only the required JSON object.",
        prompt.text.trim_end(),
        err.kind
    )
}

/// Sends `prompt` with `images` and parses the answer. A parse failure is
/// re-asked once with the error appended; a second failure is returned.
/// Provider errors are returned as-is.
pub fn ask<T>(
    model: &dyn LanguageModel,
    prompt: &Prompt,
    images: &[ImageRef],
    parse: impl Fn(&str) -> Result<T, ParseError>,
) -> Result<Asked<T>, AskError> {
    let base = MllmRequest::new(prompt.template.as_str(), prompt.text.clone())
        .with_images(images.to_vec())
        .with_temperature(prompt.template.temperature());
    let raw = model.complete(&base)?;
    let err = match parse(&raw) {
        Ok(value) => {
            return Ok(Asked {
                value,
                raw,
                attempts: 1,
            })
        }
        Err(e) => e,
    };
    tracing::debug!(template = %prompt.template, error = %err.kind, "re-asking after parse failure");
    let retry = MllmRequest {
        text: reask_text(prompt, &err),
        ..base
    };
    let raw = model.complete(&retry)?;
    let value = parse(&raw)?;
    Ok(Asked {
        value,
        raw,
        attempts: 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{parse_triple, TemplateId};
    use crate::providers::ProviderResult;
    use std::sync::Mutex;

    struct Queue(Mutex<Vec<String>>, Mutex<Vec<MllmRequest>>);

    impl LanguageModel for Queue {
        fn complete(&self, req: &MllmRequest) -> ProviderResult<String> {
            self.1.lock().unwrap().push(req.clone());
            Ok(self.0.lock().unwrap().remove(0))
        }
    }

    fn prompt() -> Prompt {
        Prompt {
            template: TemplateId::Segment,
            text: "describe".into(),
        }
    }

    #[test]
    fn second_answer_is_used() {
        let m = Queue(
            Mutex::new(vec![
                "not json".into(),
                r#"{"long_description":"l","medium_description":"m","short_description":"s"}"#.into(),
            ]),
            Mutex::new(vec![]),
        );
        let a = ask(&m, &prompt(), &[], parse_triple).unwrap();
        assert_eq!(a.attempts, 2);
        let sent = m.1.lock().unwrap();
        assert!(sent[1].text.starts_with("describe\n\nYour previous response could not be used (no JSON object found)"));
        assert_eq!(sent[1].temperature, 0.2);
    }

    #[test]
    fn two_failures_surface() {
        let m = Queue(Mutex::new(vec!["x".into(), "y".into()]), Mutex::new(vec![]));
        match ask(&m, &prompt(), &[], parse_triple) {
            Err(AskError::Parse(e)) => assert_eq!(e.raw, "y"),
            other => panic!("{other:?}"),
        }
    }
}
