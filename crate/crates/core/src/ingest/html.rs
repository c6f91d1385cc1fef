//! Markup stripping for fetched pages.

/// Tags whose content is dropped entirely.
const IGNORED: &[&str] = &[
    "script", "style", "noscript", "svg", "template", "head", "iframe", "object",
];

/// Tags that separate words when removed.
const BLOCK: &[&str] = &[
    "p", "div", "br", "li", "ul", "ol", "tr", "td", "th", "table", "tbody", "thead", "caption",
    "h1", "h2", "h3", "h4", "h5", "h6", "blockquote", "pre", "hr", "article", "section",
    "header", "footer", "aside", "nav", "main", "dd", "dt", "dl", "figure", "figcaption",
];

/// Heuristic check for HTML content.
pub fn looks_like_html(text: &str) -> bool {
    let head: String = text
        .trim_start()
        .chars()
        .take(512)
        .collect::<String>()
        .to_ascii_lowercase();
    head.starts_with("<!doctype html")
        || head.starts_with("<html")
        || head.contains("<body")
        || (head.starts_with('<') && (head.contains("<p") || head.contains("<div")))
}

/// Returns the decoded `<title>` text, if any.
pub fn extract_title(html: &str) -> Option<String> {
    let lower = html.to_ascii_lowercase();
    let open = lower.find("<title")?;
    let start = open + lower[open..].find('>')? + 1;
    let end = start + lower[start..].find("</title")?;
    let title = collapse_whitespace(&decode_entities(&html[start..end]));
    (!title.is_empty()).then_some(title)
}

/// Strips tags, drops script-like content, decodes entities and collapses
/// whitespace. Table cells end up separated by single spaces.
pub fn clean_html(html: &str) -> String {
    let mut out = String::with_capacity(html.len() / 2);
    let mut rest = html;
    let mut skip_until: Option<String> = None;

    while !rest.is_empty() {
        if let Some(close) = &skip_until {
            match find_ignore_case(rest, close) {
                Some(pos) => {
                    rest = &rest[pos..];
                    rest = rest.find('>').map_or("", |end| &rest[end + 1..]);
                    skip_until = None;
                }
                None => break,
            }
            continue;
        }

        if let Some(after) = rest.strip_prefix("<!--") {
            rest = after.find("-->").map_or("", |end| &after[end + 3..]);
            continue;
        }

        if rest.starts_with('<') {
            let Some(end) = rest.find('>') else {
                // stray '<' with no closing bracket is text
                out.push('<');
                rest = &rest[1..];
                continue;
            };
            let tag = &rest[1..end];
            let closing = tag.starts_with('/');
            let name: String = tag
                .trim_start_matches('/')
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric())
                .map(|c| c.to_ascii_lowercase())
                .collect();
            if name.is_empty() && !tag.starts_with('!') && !closing {
                out.push('<');
                rest = &rest[1..];
                continue;
            }
            if !closing && !tag.ends_with('/') && IGNORED.contains(&name.as_str()) {
                skip_until = Some(format!("</{name}"));
            }
            if BLOCK.contains(&name.as_str()) {
                out.push(' ');
            }
            rest = &rest[end + 1..];
            continue;
        }

        let next = rest.find('<').unwrap_or(rest.len());
        out.push_str(&decode_entities(&rest[..next]));
        rest = &rest[next..];
    }

    collapse_whitespace(&out)
}

fn find_ignore_case(haystack: &str, needle: &str) -> Option<usize> {
    let n = needle.len();
    haystack
        .char_indices()
        .map(|(i, _)| i)
        .find(|&i| haystack.len() - i >= n && haystack.is_char_boundary(i + n) && haystack[i..i + n].eq_ignore_ascii_case(needle))
}

/// Replaces every run of whitespace with a single space and trims the ends.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Decodes named and numeric character references. Unknown references are
/// left untouched.
pub fn decode_entities(text: &str) -> String {
    if !text.contains('&') {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let decoded = rest
            .find(';')
            .filter(|&semi| semi <= 12)
            .and_then(|semi| decode_one(&rest[1..semi]).map(|c| (c, semi + 1)));
        match decoded {
            Some((c, used)) => {
                out.push(c);
                rest = &rest[used..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_one(entity: &str) -> Option<char> {
    if let Some(num) = entity.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse().ok()?,
        };
        return char::from_u32(code);
    }
    Some(match entity {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        "ndash" => '\u{2013}',
        "mdash" => '\u{2014}',
        "lsquo" => '\u{2018}',
        "rsquo" => '\u{2019}',
        "ldquo" => '\u{201C}',
        "rdquo" => '\u{201D}',
        "hellip" => '\u{2026}',
        "deg" => '\u{00B0}',
        "copy" => '\u{00A9}',
        _ => return None,
    })
}
