//! HTML scanning: mobile-UI marker detection and contact-information harvesting.
//!
//! Scanning is token/pattern based. Malformed or minified HTML is tolerated;
//! no DOM is built and no JavaScript runs.

use regex::Regex;
use std::sync::OnceLock;

/// An HTML page held in memory, optionally tagged with the URL it came from.
#[derive(Debug, Clone)]
pub struct HtmlDocument {
    pub source_url: Option<String>,
    pub body: String,
}

impl HtmlDocument {
    pub fn new(body: impl Into<String>) -> Self {
        HtmlDocument {
            source_url: None,
            body: body.into(),
        }
    }

    pub fn with_url(url: impl Into<String>, body: impl Into<String>) -> Self {
        HtmlDocument {
            source_url: Some(url.into()),
            body: body.into(),
        }
    }
}

/// Marker substrings whose presence in a `<meta>` name/content attribute
/// flags the page as mobile-ready. Matching is case-insensitive containment.
#[derive(Debug, Clone)]
pub struct MobileUiPhrases {
    pub phrases: Vec<String>,
}

impl Default for MobileUiPhrases {
    fn default() -> Self {
        MobileUiPhrases {
            phrases: vec![
                "device-width".to_owned(),
                "apple-mobile-web".to_owned(),
                "inmobile-site-verification".to_owned(),
            ],
        }
    }
}

/// Contact channels found in a document. `any_present` is true iff at least
/// one of the three lists is non-empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct ContactInfo {
    pub emails: Vec<String>,
    pub phones: Vec<String>,
    pub social_handles: Vec<String>,
    pub any_present: bool,
}

fn meta_tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)<meta\b[^>]*>").unwrap())
}

fn meta_attr_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?is)\b(name|content)\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]+))"#).unwrap()
    })
}

fn email_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}").unwrap())
}

fn phone_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\+?\(?[0-9][0-9()\s.\-]{5,}[0-9]").unwrap())
}

fn tel_href_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?i)href\s*=\s*["']tel:([+0-9()\s.\-]+)["']"#).unwrap())
}

fn social_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(?:twitter|instagram|facebook)\.com/([A-Za-z0-9_.]+)").unwrap()
    })
}

/// True iff some `<meta>` element's `name` or `content` attribute contains
/// one of the marker phrases, case-insensitively.
pub fn detect_mobile_ui(doc: &HtmlDocument, phrases: &MobileUiPhrases) -> bool {
    let needles: Vec<String> = phrases.phrases.iter().map(|p| p.to_lowercase()).collect();
    for tag in meta_tag_re().find_iter(&doc.body) {
        for caps in meta_attr_re().captures_iter(tag.as_str()) {
            let value = caps
                .get(2)
                .or_else(|| caps.get(3))
                .or_else(|| caps.get(4))
                .map(|m| m.as_str().to_lowercase())
                .unwrap_or_default();
            if needles.iter().any(|n| value.contains(n)) {
                return true;
            }
        }
    }
    false
}

fn push_dedup(list: &mut Vec<String>, entry: String) {
    let key = entry.to_lowercase();
    if !list.iter().any(|e| e.to_lowercase() == key) {
        list.push(entry);
    }
}

fn digit_count(s: &str) -> usize {
    s.chars().filter(|c| c.is_ascii_digit()).count()
}

/// Harvest emails, phone numbers (textual plus `tel:` hrefs) and social
/// handles from the document body. Entries are deduplicated preserving
/// first-seen order.
pub fn extract_contacts(doc: &HtmlDocument) -> ContactInfo {
    let mut info = ContactInfo::default();

    for m in email_re().find_iter(&doc.body) {
        push_dedup(&mut info.emails, m.as_str().to_owned());
    }

    for caps in tel_href_re().captures_iter(&doc.body) {
        let raw = caps[1].trim();
        if digit_count(raw) >= 7 {
            push_dedup(&mut info.phones, raw.to_owned());
        }
    }
    for m in phone_re().find_iter(&doc.body) {
        let raw = m.as_str().trim();
        if digit_count(raw) >= 7 {
            push_dedup(&mut info.phones, raw.to_owned());
        }
    }

    for caps in social_re().captures_iter(&doc.body) {
        let handle = caps[1].trim_end_matches('.').to_owned();
        if !handle.is_empty() {
            push_dedup(&mut info.social_handles, handle);
        }
    }

    info.any_present =
        !info.emails.is_empty() || !info.phones.is_empty() || !info.social_handles.is_empty();
    info
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(body: &str) -> HtmlDocument {
        HtmlDocument::new(body)
    }

    #[test]
    fn viewport_meta_is_mobile() {
        let d = doc(r#"<html><head><meta name="viewport" content="width=device-width, initial-scale=1"></head></html>"#);
        assert!(detect_mobile_ui(&d, &MobileUiPhrases::default()));
    }

    #[test]
    fn apple_mobile_meta_is_mobile() {
        let d = doc(r#"<meta name="apple-mobile-web-app-capable" content="yes">"#);
        assert!(detect_mobile_ui(&d, &MobileUiPhrases::default()));
    }

    #[test]
    fn no_meta_is_not_mobile() {
        let d = doc("<html><body><p>hello</p></body></html>");
        assert!(!detect_mobile_ui(&d, &MobileUiPhrases::default()));
    }

    #[test]
    fn phrase_in_body_text_does_not_count() {
        let d = doc("<html><body>we support device-width layouts</body></html>");
        assert!(!detect_mobile_ui(&d, &MobileUiPhrases::default()));
    }

    #[test]
    fn empty_document_is_not_mobile() {
        assert!(!detect_mobile_ui(&doc(""), &MobileUiPhrases::default()));
    }

    #[test]
    fn case_insensitive_match() {
        let d = doc(r#"<META NAME="Viewport" CONTENT="width=DEVICE-WIDTH">"#);
        assert!(detect_mobile_ui(&d, &MobileUiPhrases::default()));
    }

    #[test]
    fn email_extraction() {
        let info = extract_contacts(&doc("<p>reach us at support@shop.com</p>"));
        assert_eq!(info.emails, vec!["support@shop.com"]);
        assert!(info.any_present);
    }

    #[test]
    fn empty_body_has_no_contacts() {
        let info = extract_contacts(&doc("<body></body>"));
        assert_eq!(info, ContactInfo::default());
        assert!(!info.any_present);
    }

    #[test]
    fn tel_href_and_social() {
        let info = extract_contacts(&doc(
            r#"<a href="tel:+15551234567">call</a> <a href="https://twitter.com/shopbrand">tw</a>"#,
        ));
        assert_eq!(info.phones, vec!["+15551234567"]);
        assert_eq!(info.social_handles, vec!["shopbrand"]);
        assert!(info.any_present);
    }

    #[test]
    fn short_digit_runs_are_not_phones() {
        let info = extract_contacts(&doc("<p>order 12345 shipped</p>"));
        assert!(info.phones.is_empty());
    }

    #[test]
    fn duplicates_removed_first_seen_order() {
        let info = extract_contacts(&doc(
            "a@b.com then C@d.org then A@B.COM again <p>c@d.org</p>",
        ));
        assert_eq!(info.emails, vec!["a@b.com", "C@d.org"]);
    }

    #[test]
    fn adding_phrase_is_monotone() {
        let d = doc(r#"<meta name="viewport" content="width=device-width">"#);
        let base = MobileUiPhrases::default();
        assert!(detect_mobile_ui(&d, &base));
        let mut more = base.clone();
        more.phrases.push("something-else".to_owned());
        assert!(detect_mobile_ui(&d, &more));
    }

    proptest! {
        #[test]
        fn concat_union_property(a in "[ -~]{0,200}", b in "[ -~]{0,200}") {
            let ia = extract_contacts(&doc(&a));
            let ib = extract_contacts(&doc(&b));
            // Separator guarantees no match spans the boundary.
            let joined = format!("{a}\n<!-- -->\n{b}");
            let ij = extract_contacts(&doc(&joined));
            for e in ia.emails.iter().chain(ib.emails.iter()) {
                prop_assert!(ij.emails.iter().any(|x| x.eq_ignore_ascii_case(e)));
            }
            for e in ij.emails.iter() {
                prop_assert!(
                    ia.emails.iter().chain(ib.emails.iter()).any(|x| x.eq_ignore_ascii_case(e))
                );
            }
        }

        #[test]
        fn extracted_emails_rematch_pattern(body in "[ -~]{0,300}") {
            let info = extract_contacts(&doc(&body));
            for e in &info.emails {
                prop_assert!(super::email_re().is_match(e));
            }
        }

        #[test]
        fn extraction_is_idempotent(body in "[ -~]{0,300}") {
            let d = doc(&body);
            prop_assert_eq!(extract_contacts(&d), extract_contacts(&d));
        }
    }
}
