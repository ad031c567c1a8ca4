use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReactError {
    #[error("completion has no `Action:` segment")]
    MissingAction,
}

/// Extracts the last `Thought:` and the last `Action:` segment of a
/// completion. The action is cut at the first line break; the thought is
/// empty when absent.
pub fn parse_react(text: &str) -> Result<(String, String), ReactError> {
    let action_at = text.rfind("Action:").ok_or(ReactError::MissingAction)?;
    let action = text[action_at + "Action:".len()..]
        .trim_start()
        .lines()
        .next()
        .unwrap_or("")
        .trim()
        .to_string();
    if action.is_empty() {
        return Err(ReactError::MissingAction);
    }
    let before = &text[..action_at];
    let thought = before
        .rfind("Thought:")
        .map(|i| before[i + "Thought:".len()..].trim().to_string())
        .unwrap_or_default();
    Ok((thought, action))
}

pub fn render_react(thought: &str, action: &str) -> String {
    if thought.is_empty() {
        format!("Action: {action}")
    } else {
        format!("Thought: {thought} Action: {action}")
    }
}
