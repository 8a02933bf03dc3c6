//! Rule-based sentence splitting.

/// Tokens that end in a period without ending a sentence.
const ABBREVIATIONS: [&str; 8] = ["st.", "ave.", "blvd.", "e.g.", "i.e.", "dr.", "mt.", "no."];

const TERMINALS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 5] = ['"', '\'', '”', '’', ')'];
const OPENERS: [char; 4] = ['"', '\'', '“', '‘'];

fn ends_with_abbreviation(before: &str) -> bool {
    let token = before
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    ABBREVIATIONS.contains(&token.as_str())
}

/// Splits `text` into sentences at `.`, `!` or `?` (optionally followed by
/// closing quotes or a parenthesis) when whitespace and then a capital letter,
/// opening quote or digit follow. A period ending a known abbreviation such as
/// `St.` never splits. Pieces are trimmed; empty pieces are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (pos, ch) = chars[i];
        if !TERMINALS.contains(&ch) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < chars.len() && TERMINALS.contains(&chars[j + 1].1) {
            j += 1;
        }
        while j + 1 < chars.len() && CLOSERS.contains(&chars[j + 1].1) {
            j += 1;
        }
        let end = chars.get(j + 1).map_or(text.len(), |c| c.0);
        let mut k = j + 1;
        let mut saw_space = false;
        while k < chars.len() && chars[k].1.is_whitespace() {
            saw_space = true;
            k += 1;
        }
        let next_starts_sentence = chars.get(k).is_some_and(|&(_, c)| {
            c.is_uppercase() || c.is_ascii_digit() || OPENERS.contains(&c)
        });
        let abbreviation = ch == '.' && ends_with_abbreviation(&text[start..pos + 1]);
        if saw_space && next_starts_sentence && !abbreviation {
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
        i = j + 1;
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, piece: &str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece.to_string());
    }
}

/// The first `max` sentences of `text`, joined by single spaces.
pub fn first_sentences(text: &str, max: usize) -> String {
    split_sentences(text)
        .into_iter()
        .take(max)
        .collect::<Vec<_>>()
        .join(" ")
}
