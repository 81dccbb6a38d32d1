//! Lenient parsing of model completions.

use regex::Regex;
use std::sync::LazyLock;

static LIST_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:[-*•]\s*|\(?\d+[.):]\s*|(?i:key\s*(?:point|statement)\s*\d*\s*[:.-])\s*)").unwrap()
});
static LEADING_QUOTES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"^["'“”‘’«»]+"#).unwrap());
static TRAILING_QUOTES: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"["'“”‘’«»]+[.,;]?$"#).unwrap());
static FIRST_INT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+").unwrap());
static RATER_FORMAT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?is)rating\s*[:=]\s*(.*?)\s*problem\s*[:=]\s*(.*?)\s*explanation\s*[:=]\s*(.*)")
        .unwrap()
});
static RATING_VALUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^[\s"'*]*(\d+)(?:\s*/\s*5)?[\s"'*.,;]*$"#).unwrap());

fn fold_quote(c: char) -> char {
    match c {
        '“' | '”' | '«' | '»' => '"',
        '‘' | '’' => '\'',
        c => c,
    }
}

/// Trims, drops surrounding quotes and a trailing period, and lowercases, for
/// sentinel comparisons.
pub fn sentinel_form(text: &str) -> String {
    let t = text.trim();
    let t = LEADING_QUOTES.replace(t, "");
    let t = TRAILING_QUOTES.replace(&t, "");
    let t = t.trim().trim_end_matches('.').trim();
    t.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

pub fn is_sentinel(text: &str, sentinel: &str) -> bool {
    sentinel_form(text) == sentinel.to_lowercase()
}

/// Strips list markers and surrounding quotes from one candidate keypoint line.
pub fn clean_candidate(line: &str) -> String {
    let t = line.trim();
    let t = LIST_MARKER.replace(t, "");
    let t = LEADING_QUOTES.replace(t.trim(), "");
    let t = TRAILING_QUOTES.replace(&t, "");
    t.trim().to_string()
}

/// Whitespace-collapsed, quote-folded view of `text` with, for each normalized
/// character, the byte range it came from in the original.
struct Normalized {
    text: String,
    starts: Vec<usize>,
    spans: Vec<(usize, usize)>,
}

fn normalize(text: &str) -> Normalized {
    let mut out = Normalized { text: String::new(), starts: Vec::new(), spans: Vec::new() };
    let mut pending_space: Option<(usize, usize)> = None;
    for (i, c) in text.char_indices() {
        let span = (i, i + c.len_utf8());
        if c.is_whitespace() {
            if !out.text.is_empty() && pending_space.is_none() {
                pending_space = Some(span);
            }
            continue;
        }
        if let Some(space) = pending_space.take() {
            out.starts.push(out.text.len());
            out.spans.push(space);
            out.text.push(' ');
        }
        out.starts.push(out.text.len());
        out.spans.push(span);
        out.text.push(fold_quote(c));
    }
    out
}

/// Locates `candidate` in `haystack` modulo whitespace runs and quote style,
/// returning the matching substring of the original `haystack`.
pub fn find_verbatim<'a>(haystack: &'a str, candidate: &str) -> Option<&'a str> {
    let needle = normalize(candidate).text;
    if needle.is_empty() {
        return None;
    }
    let hay = normalize(haystack);
    let at = hay.text.find(&needle)?;
    let first = hay.starts.binary_search(&at).ok()?;
    let last_start = at + needle.len() - needle.chars().next_back()?.len_utf8();
    let last = hay.starts.binary_search(&last_start).ok()?;
    Some(&haystack[hay.spans[first].0..hay.spans[last].1])
}

pub enum ScoreParse {
    Score(u8),
    Unparsed,
}

/// Reads the first integer in a passage-rating completion, clamped to 0..=100.
pub fn parse_passage_score(text: &str) -> ScoreParse {
    match FIRST_INT.find(text) {
        Some(m) => {
            let v: i64 = m.as_str().parse().unwrap_or(if m.as_str().starts_with('-') { 0 } else { 100 });
            ScoreParse::Score(v.clamp(0, 100) as u8)
        }
        None => ScoreParse::Unparsed,
    }
}

/// Parses "Rating: X Problem: Y Explanation: Z" with case-insensitive labels.
/// Returns `None` unless X is an integer on the 1..5 scale.
pub fn parse_rater_sample(text: &str) -> Option<(u8, String, String)> {
    let caps = RATER_FORMAT.captures(text)?;
    let value = RATING_VALUE.captures(caps.get(1)?.as_str())?;
    let rating: u8 = value[1].parse().ok()?;
    if !(1..=5).contains(&rating) {
        return None;
    }
    Some((rating, caps[2].trim().to_string(), caps[3].trim().to_string()))
}
