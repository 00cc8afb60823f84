use scraper::{Html, Node};

const SKIPPED: &[&str] = &["script", "style", "nav", "noscript", "head", "template", "svg", "iframe", "object"];

const BLOCKS: &[&str] = &[
    "address",
    "article",
    "aside",
    "blockquote",
    "body",
    "caption",
    "dd",
    "details",
    "dialog",
    "div",
    "dl",
    "dt",
    "fieldset",
    "figcaption",
    "figure",
    "footer",
    "form",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "header",
    "hr",
    "html",
    "li",
    "main",
    "ol",
    "p",
    "pre",
    "section",
    "summary",
    "table",
    "tbody",
    "tfoot",
    "thead",
    "tr",
    "ul",
];

#[derive(Default)]
struct Paragraphs {
    done: Vec<String>,
    current: String,
}

impl Paragraphs {
    fn push(&mut self, text: &str) {
        self.current.push_str(text);
    }

    fn flush(&mut self) {
        let collapsed = self.current.split_whitespace().collect::<Vec<_>>().join(" ");
        if !collapsed.is_empty() {
            self.done.push(collapsed);
        }
        self.current.clear();
    }
}

/// Visible text of an HTML document. Scripts, styles, navigation and similar
/// containers are dropped, image alt text is kept, whitespace runs collapse
/// to one space, and block elements become blank-line separated paragraphs.
/// Invalid UTF-8 is decoded lossily and malformed markup never fails.
pub fn extract_text(html: &[u8]) -> String {
    let source = String::from_utf8_lossy(html);
    let doc = Html::parse_document(&source);
    let mut out = Paragraphs::default();

    // Explicit stack: (node, leaving) so deep nesting cannot overflow.
    let mut stack = vec![(doc.tree.root(), false)];
    while let Some((node, leaving)) = stack.pop() {
        match node.value() {
            Node::Element(el) => {
                let name = el.name();
                let block = BLOCKS.contains(&name);
                if leaving {
                    if block {
                        out.flush();
                    }
                    continue;
                }
                if SKIPPED.contains(&name) {
                    continue;
                }
                match name {
                    "img" => {
                        if let Some(alt) = el.attr("alt") {
                            out.push(" ");
                            out.push(alt);
                            out.push(" ");
                        }
                        continue;
                    }
                    "br" | "td" | "th" => out.push(" "),
                    _ => {}
                }
                if block {
                    out.flush();
                }
                stack.push((node, true));
                let children: Vec<_> = node.children().collect();
                stack.extend(children.into_iter().rev().map(|c| (c, false)));
            }
            Node::Text(text) => out.push(text),
            Node::Document | Node::Fragment => {
                let children: Vec<_> = node.children().collect();
                stack.extend(children.into_iter().rev().map(|c| (c, false)));
            }
            _ => {}
        }
    }
    out.flush();
    out.done.join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripts_are_removed() {
        assert_eq!(extract_text(b"<p>a</p><script>x</script><p>b</p>"), "a\n\nb");
    }

    #[test]
    fn alt_text_is_kept() {
        assert_eq!(extract_text(b"<img alt='medal photo'>"), "medal photo");
    }

    #[test]
    fn nav_style_noscript_dropped_and_whitespace_collapsed() {
        let html = b"<html><head><title>T</title><style>p{}</style></head><body>\
            <nav>menu</nav><div>  Hello\n\n   <b>world</b> </div><noscript>js</noscript>\
            <p>second&amp;last</p></body></html>";
        assert_eq!(extract_text(html), "Hello world\n\nsecond&last");
    }

    #[test]
    fn invalid_utf8_is_lossy() {
        let got = extract_text(b"<p>caf\xff</p>");
        assert!(got.starts_with("caf"));
    }

    #[test]
    fn deep_unclosed_nesting() {
        let mut html = String::new();
        for i in 0..100 {
            html.push_str(&format!("<div><span>t{i} "));
        }
        let got = extract_text(html.as_bytes());
        for i in 0..100 {
            assert!(got.contains(&format!("t{i}")));
        }
        assert!(!got.contains('<'));
    }
}
