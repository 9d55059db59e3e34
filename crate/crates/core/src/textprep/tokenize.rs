/// Punctuation marks that become standalone tokens when split off a word.
/// Anything else that is neither alphanumeric nor one of these (emoji,
/// symbols) is dropped.
fn is_mark(c: char) -> bool {
    c.is_ascii_punctuation()
}

fn is_url(token: &str) -> bool {
    token.starts_with("http://") || token.starts_with("https://") || token.starts_with("www.")
}

/// Splits tweet text into lowercase tokens.
///
/// Whitespace separates raw tokens. URLs become `<url>` and @-mentions
/// become `<user>`. Leading and trailing punctuation is split off into
/// one token per mark, except that a `#` or `@` prefix stays attached.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    for raw in lower.split_whitespace() {
        if is_url(raw) {
            out.push("<url>".to_string());
            continue;
        }
        let chars: Vec<char> = raw.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && !chars[start].is_alphanumeric() && chars[start] != '#' && chars[start] != '@' {
            if is_mark(chars[start]) {
                out.push(chars[start].to_string());
            }
            start += 1;
        }
        let mut trailing = Vec::new();
        while end > start && !chars[end - 1].is_alphanumeric() {
            // a lone prefix mark is the whole core, keep it
            if end - 1 == start {
                break;
            }
            if is_mark(chars[end - 1]) {
                trailing.push(chars[end - 1].to_string());
            }
            end -= 1;
        }
        if start < end {
            let core: String = chars[start..end].iter().collect();
            if core.len() > 1 && core.starts_with('@') {
                out.push("<user>".to_string());
            } else {
                out.push(core);
            }
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn hashtag_and_trailing_mark() {
        assert_eq!(toks("I hate #FeminismIsAwful!"), ["i", "hate", "#feminismisawful", "!"]);
    }

    #[test]
    fn empty_text() {
        assert!(toks("").is_empty());
        assert!(toks("   \n\t ").is_empty());
    }

    #[test]
    fn urls_and_mentions() {
        assert_eq!(toks("see http://t.co/x @bob"), ["see", "<url>", "<user>"]);
        assert_eq!(toks("@Bob: hi"), ["<user>", ":", "hi"]);
    }

    #[test]
    fn leading_marks_and_emoji() {
        assert_eq!(toks("(hello), world..."), ["(", "hello", ")", ",", "world", ".", ".", "."]);
        assert_eq!(toks("great \u{1F600}"), ["great"]);
        assert_eq!(toks("# @"), ["#", "@"]);
    }
}
