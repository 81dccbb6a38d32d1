use regex::Regex;
use scraper::{ElementRef, Html, Node, Selector};
use std::sync::LazyLock;

static REFERENCE_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\[(?:\d+|[a-z]|note \d+|citation needed|clarification needed|when\?|who\?)\]")
        .unwrap()
});

const SKIPPED_CONTAINERS: [&str; 6] = ["table", "style", "script", "figure", "nav", "sup"];
const SKIPPED_CLASSES: [&str; 6] =
    ["infobox", "navbox", "reflist", "mw-references-wrap", "mw-editsection", "reference"];

fn is_skipped(el: &ElementRef<'_>) -> bool {
    let v = el.value();
    // Only reference superscripts are dropped; other <sup> (units, exponents) are kept.
    if v.name() == "sup" {
        return v.classes().any(|c| c == "reference");
    }
    SKIPPED_CONTAINERS.contains(&v.name()) || v.classes().any(|c| SKIPPED_CLASSES.contains(&c))
}

fn collect_text(el: ElementRef<'_>, out: &mut String) {
    for child in el.children() {
        match child.value() {
            Node::Text(t) => out.push_str(t),
            Node::Element(_) => {
                let child_el = ElementRef::wrap(child).expect("element node");
                if !is_skipped(&child_el) {
                    collect_text(child_el, out);
                }
            }
            _ => {}
        }
    }
}

/// Extracts prose paragraphs from an article page as blank-line separated
/// plain text. Tables, infoboxes, navigation boxes and reference markers are
/// dropped.
pub fn html_to_text(html: &str) -> String {
    let doc = Html::parse_document(html);
    let content = Selector::parse("#mw-content-text").unwrap();
    let body = Selector::parse("body").unwrap();
    let p = Selector::parse("p").unwrap();
    let root = doc
        .select(&content)
        .next()
        .or_else(|| doc.select(&body).next())
        .unwrap_or_else(|| doc.root_element());

    let mut paragraphs = Vec::new();
    for para in root.select(&p) {
        let inside_skipped = para
            .ancestors()
            .filter_map(ElementRef::wrap)
            .any(|a| is_skipped(&a));
        if inside_skipped {
            continue;
        }
        let mut text = String::new();
        collect_text(para, &mut text);
        let text = REFERENCE_MARKER.replace_all(&text, "");
        let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
        if !text.is_empty() {
            paragraphs.push(text);
        }
    }
    paragraphs.join("\n\n")
}
