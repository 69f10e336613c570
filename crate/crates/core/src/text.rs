//! Shared tokenizer. Placeholders like `<object>` and ontology tags like
//! `cat:mug` survive as single tokens.

/// Lowercases and splits on anything outside `[a-z0-9_:]`, keeping
/// `<placeholder>` spans intact.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_placeholder = false;
    for ch in text.chars() {
        let c = ch.to_ascii_lowercase();
        if in_placeholder {
            current.push(c);
            if c == '>' {
                tokens.push(std::mem::take(&mut current));
                in_placeholder = false;
            }
            continue;
        }
        if c == '<' {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            current.push(c);
            in_placeholder = true;
        } else if c.is_ascii_alphanumeric() || c == '_' || c == ':' {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    // Strip bare trailing colons left by prose like "holding:".
    tokens
        .into_iter()
        .map(|t| t.trim_matches(':').to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// True for the fixed placeholder vocabulary.
pub fn is_placeholder(token: &str) -> bool {
    matches!(token, "<object>" | "<location>" | "<appliance>")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_placeholders_and_tags() {
        assert_eq!(
            tokenize("Take <object> from <location>!"),
            vec!["take", "<object>", "from", "<location>"]
        );
        assert_eq!(tokenize("the cup cat:mug"), vec!["the", "cup", "cat:mug"]);
    }

    #[test]
    fn trailing_colon_stripped() {
        assert_eq!(tokenize("holding: lettuce"), vec!["holding", "lettuce"]);
    }
}
