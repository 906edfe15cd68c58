use crate::error::{Error, Result};

/// Splits an LLM reply into its boxed description and its code.
///
/// The description is the outermost brace span following the first `boxed`
/// keyword (`\boxed{..}` and `boxed {..}` both work). Redundant wrapping braces
/// such as `{{..}}` are peeled. The code is the first fenced block, or the
/// text after the boxed span when there is no fence.
pub fn extract_boxed_description(text: &str) -> Result<(String, String)> {
    let (description, span_end) = boxed_span(text)?;
    let code = match fenced_block(text) {
        Some(code) if code.trim().is_empty() => {
            return Err(Error::Extraction("empty code block".into()));
        }
        Some(code) => code,
        None => {
            let rest = text[span_end..].trim();
            let rest = rest.trim_start_matches(['.', ':']).trim();
            if rest.is_empty() {
                return Err(Error::Extraction("no code after the boxed description".into()));
            }
            rest.to_string()
        }
    };
    Ok((description, code))
}

/// First fenced code block, or the whole trimmed reply when unfenced.
pub fn extract_code(text: &str) -> Result<String> {
    let code = fenced_block(text).unwrap_or_else(|| text.trim().to_string());
    if code.trim().is_empty() {
        return Err(Error::Extraction("reply contains no code".into()));
    }
    Ok(code)
}

fn boxed_span(text: &str) -> Result<(String, usize)> {
    let lower = text.to_ascii_lowercase();
    let keyword = lower
        .find("boxed")
        .ok_or_else(|| Error::Extraction("no boxed description".into()))?;
    let after = keyword + "boxed".len();
    let open = text[after..]
        .char_indices()
        .find(|(_, c)| !c.is_whitespace())
        .filter(|(_, c)| *c == '{')
        .map(|(i, _)| after + i)
        .ok_or_else(|| Error::Extraction("`boxed` is not followed by `{`".into()))?;
    let close = matching_brace(text, open)
        .ok_or_else(|| Error::Extraction("unbalanced braces in boxed description".into()))?;
    let mut inner = &text[open + 1..close];
    loop {
        let trimmed = inner.trim();
        if trimmed.starts_with('{') && matching_brace(trimmed, 0) == Some(trimmed.len() - 1) {
            inner = &trimmed[1..trimmed.len() - 1];
        } else {
            inner = trimmed;
            break;
        }
    }
    if inner.is_empty() {
        return Err(Error::Extraction("boxed description is empty".into()));
    }
    Ok((inner.to_string(), close + 1))
}

fn matching_brace(text: &str, open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in text[open..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i);
                }
            }
            _ => {}
        }
    }
    None
}

fn fenced_block(text: &str) -> Option<String> {
    let start = text.find("```")?;
    let body_start = start + 3 + text[start + 3..].find('\n')? + 1;
    let end = text[body_start..].find("```")? + body_start;
    let code = &text[body_start..end];
    Some(code.trim_end_matches(['\n', '\r']).to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_fence_is_not_code() {
        let text = "boxed {Nothing}\n```c\n```\n";
        assert!(extract_boxed_description(text).is_err());
        assert!(extract_code(text).is_err());
    }

    #[test]
    fn boxed_with_fenced_code() {
        let text = "boxed {Use vector fused multiply-add}\n```c\nvoid k(){}\n```\n";
        let (d, c) = extract_boxed_description(text).unwrap();
        assert_eq!(d, "Use vector fused multiply-add");
        assert_eq!(c, "void k(){}");
    }

    #[test]
    fn latex_style_and_double_braces() {
        let (d, _) = extract_boxed_description("\\boxed{{Tile loops}}\n```\nint x;\n```").unwrap();
        assert_eq!(d, "Tile loops");
    }

    #[test]
    fn nested_braces_take_outermost_span() {
        let text = "boxed {Split {hot} and {cold} paths} then\n```c\nint f(){return 1;}\n```";
        let (d, c) = extract_boxed_description(text).unwrap();
        assert_eq!(d, "Split {hot} and {cold} paths");
        assert_eq!(c, "int f(){return 1;}");
    }

    #[test]
    fn unfenced_trailing_code() {
        let (d, c) = extract_boxed_description("boxed{Unroll by 4}\nint f(void) { return 0; }\n").unwrap();
        assert_eq!(d, "Unroll by 4");
        assert_eq!(c, "int f(void) { return 0; }");
    }

    #[test]
    fn missing_box_is_error() {
        assert!(matches!(
            extract_boxed_description("just some text without braces"),
            Err(Error::Extraction(_))
        ));
        assert!(extract_boxed_description("boxed {unclosed").is_err());
        assert!(extract_boxed_description("boxed {desc}").is_err());
    }

    #[test]
    fn extract_code_prefers_fence() {
        assert_eq!(extract_code("Here:\n```c\nint a;\n```\nbye").unwrap(), "int a;");
        assert_eq!(extract_code("int b;\n").unwrap(), "int b;");
        assert!(extract_code("  \n").is_err());
    }
}
