//! Lexical metric extraction for C-like source.
//!
//! Functions are found by a brace-matching scan: a top-level `{` directly
//! preceded by `)` opens a function body, and the identifier before the
//! matching `(` names it. Halstead counts cover the body only.
//!
//! Token classes inside a body:
//! * operands: identifiers, numeric, string and character literals
//! * operators: every other punctuation token, plus keywords that are not
//!   part of a declaration (`if`, `return`, `sizeof`, ...). `[` stands for the
//!   subscript operator.
//! * ignored: `;` `{` `}` `(` `)` `,` `]` and declaration keywords
//!
//! Cyclomatic complexity is `1 + #{if, while, for, case, &&, ||, ?}`.

use std::collections::{BTreeSet, HashSet};

use super::{MetricsError, ModuleMetricsRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Word,
    Number,
    Str,
    Char,
    Punct,
}

#[derive(Debug, Clone)]
struct Token<'a> {
    kind: Kind,
    text: &'a str,
    line: usize,
}

const PUNCT3: [&str; 3] = ["<<=", ">>=", "..."];
const PUNCT2: [&str; 21] = [
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "::", "##",
];

const DECLARATION_KEYWORDS: [&str; 22] = [
    "int", "char", "short", "long", "float", "double", "void", "signed", "unsigned", "const", "volatile", "static",
    "extern", "register", "auto", "struct", "union", "enum", "typedef", "inline", "restrict", "_Bool",
];

const OPERATOR_KEYWORDS: [&str; 13] = [
    "if", "else", "while", "for", "do", "switch", "case", "default", "return", "break", "continue", "goto", "sizeof",
];

const IGNORED: [&str; 7] = [";", "{", "}", "(", ")", ",", "]"];

const DECISIONS: [&str; 7] = ["if", "while", "for", "case", "&&", "||", "?"];

struct Lexed<'a> {
    tokens: Vec<Token<'a>>,
    /// lines holding code (tokens or preprocessor directives)
    code_lines: BTreeSet<usize>,
}

fn lex(src: &str) -> Lexed<'_> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut code_lines = BTreeSet::new();
    let mut i = 0;
    let mut line = 1;
    let mut line_start = true;

    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\n' {
            line += 1;
            line_start = true;
            i += 1;
            continue;
        }
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                if bytes[i] == b'\n' {
                    line += 1;
                }
                i += 1;
            }
            i = (i + 2).min(bytes.len());
            continue;
        }
        if b == b'#' && line_start {
            // directive, with backslash continuations
            code_lines.insert(line);
            while i < bytes.len() && bytes[i] != b'\n' {
                if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'\n') {
                    line += 1;
                    code_lines.insert(line);
                    i += 1;
                }
                i += 1;
            }
            continue;
        }
        line_start = false;
        let start = i;
        let start_line = line;
        let kind = if b.is_ascii_alphabetic() || b == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            Kind::Word
        } else if b.is_ascii_digit() || (b == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() {
                let c = bytes[i];
                let prev = bytes[i - 1];
                let hex = src[start..i].starts_with("0x") || src[start..i].starts_with("0X");
                let exp_sign =
                    (c == b'+' || c == b'-') && (matches!(prev, b'p' | b'P') || (!hex && matches!(prev, b'e' | b'E')));
                if c.is_ascii_alphanumeric() || c == b'.' || c == b'_' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            Kind::Number
        } else if b == b'"' || b == b'\'' {
            i += 1;
            while i < bytes.len() && bytes[i] != b {
                if bytes[i] == b'\\' {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'\n' {
                    line += 1;
                }
                i += 1;
            }
            i = (i + 1).min(bytes.len());
            if b == b'"' {
                Kind::Str
            } else {
                Kind::Char
            }
        } else {
            let rest = &src[i..];
            let width = PUNCT3
                .iter()
                .find(|p| rest.starts_with(*p))
                .map(|p| p.len())
                .or_else(|| PUNCT2.iter().find(|p| rest.starts_with(*p)).map(|p| p.len()))
                .unwrap_or_else(|| rest.chars().next().map_or(1, char::len_utf8));
            i += width;
            Kind::Punct
        };
        for l in start_line..=line {
            code_lines.insert(l);
        }
        tokens.push(Token {
            kind,
            text: &src[start..i],
            line: start_line,
        });
    }
    Lexed { tokens, code_lines }
}

/// Location of one function definition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSpan {
    pub name: String,
    /// first line of the declaration (return type)
    pub start_line: usize,
    /// line of the opening brace
    pub body_line: usize,
    /// line of the closing brace
    pub end_line: usize,
    body: (usize, usize),
}

fn matching_open_paren(tokens: &[Token<'_>], close: usize) -> Option<usize> {
    let mut depth = 0usize;
    for k in (0..=close).rev() {
        match tokens[k].text {
            ")" => depth += 1,
            "(" => {
                depth -= 1;
                if depth == 0 {
                    return Some(k);
                }
            }
            _ => {}
        }
    }
    None
}

fn scan_functions(tokens: &[Token<'_>]) -> Result<Vec<FunctionSpan>, MetricsError> {
    let mut spans = Vec::new();
    let mut decl_start = 0;
    let mut i = 0;
    while i < tokens.len() {
        match tokens[i].text {
            "{" => {
                let mut depth = 0usize;
                let mut close = None;
                for (k, t) in tokens.iter().enumerate().skip(i) {
                    match t.text {
                        "{" => depth += 1,
                        "}" => {
                            depth -= 1;
                            if depth == 0 {
                                close = Some(k);
                                break;
                            }
                        }
                        _ => {}
                    }
                }
                let close = close.ok_or(MetricsError::UnbalancedBraces { line: tokens[i].line })?;
                let name = (i > 0 && tokens[i - 1].text == ")")
                    .then(|| matching_open_paren(tokens, i - 1))
                    .flatten()
                    .filter(|&open| open > 0 && tokens[open - 1].kind == Kind::Word)
                    .map(|open| tokens[open - 1].text.to_owned());
                if let Some(name) = name {
                    spans.push(FunctionSpan {
                        name,
                        start_line: tokens[decl_start.min(i)].line,
                        body_line: tokens[i].line,
                        end_line: tokens[close].line,
                        body: (i + 1, close),
                    });
                }
                i = close + 1;
                // `struct s {..} x;` keeps its declaration open until the `;`
                if spans.last().is_some_and(|s| s.body.1 == close) {
                    decl_start = i;
                }
            }
            "}" => return Err(MetricsError::UnbalancedBraces { line: tokens[i].line }),
            ";" => {
                i += 1;
                decl_start = i;
            }
            _ => i += 1,
        }
    }
    Ok(spans)
}

/// Function definitions found in `source`, in file order.
pub fn find_functions(source: &str) -> Result<Vec<FunctionSpan>, MetricsError> {
    scan_functions(&lex(source).tokens)
}

fn count_body(name: &str, span: &FunctionSpan, lexed: &Lexed<'_>) -> Result<ModuleMetricsRecord, MetricsError> {
    let body = &lexed.tokens[span.body.0..span.body.1];
    if body.is_empty() {
        return Err(MetricsError::EmptyModule {
            name: name.to_owned(),
            line: span.body_line,
        });
    }
    let mut operators = HashSet::new();
    let mut operands = HashSet::new();
    let (mut total_operators, mut total_operands) = (0u64, 0u64);
    let mut decisions = 0u64;
    for t in body {
        if DECISIONS.contains(&t.text) {
            decisions += 1;
        }
        match t.kind {
            Kind::Word if DECLARATION_KEYWORDS.contains(&t.text) => {}
            Kind::Word if OPERATOR_KEYWORDS.contains(&t.text) => {
                operators.insert(t.text);
                total_operators += 1;
            }
            Kind::Word | Kind::Number | Kind::Str | Kind::Char => {
                operands.insert(t.text);
                total_operands += 1;
            }
            Kind::Punct if IGNORED.contains(&t.text) => {}
            Kind::Punct => {
                operators.insert(t.text);
                total_operators += 1;
            }
        }
    }
    let loc = lexed.code_lines.range(span.start_line..=span.end_line).count() as u64;
    Ok(ModuleMetricsRecord {
        module_id: name.to_owned(),
        loc,
        n1: operators.len() as u64,
        n2: operands.len() as u64,
        total_operators,
        total_operands,
        cyclomatic: 1 + decisions,
    })
}

/// One record per function definition in `source`.
pub fn extract_metrics(source: &str) -> Result<Vec<ModuleMetricsRecord>, MetricsError> {
    let lexed = lex(source);
    let spans = scan_functions(&lexed.tokens)?;
    spans.iter().map(|span| count_body(&span.name, span, &lexed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(src: &str) -> ModuleMetricsRecord {
        let mut v = extract_metrics(src).unwrap();
        assert_eq!(v.len(), 1, "{v:?}");
        v.remove(0)
    }

    #[test]
    fn assignment_counts() {
        let r = one("void f(void)\n{\n    a = b + c;\n}\n");
        assert_eq!((r.n1, r.total_operators, r.n2, r.total_operands), (2, 2, 3, 3));
        assert_eq!(r.cyclomatic, 1);
        assert_eq!(r.loc, 4);
        assert_eq!(r.module_id, "f");
    }

    #[test]
    fn if_and_while_give_three() {
        let r = one("int g(int x) {\n  if (x > 0) x--;\n  while (x) x = x - 1;\n  return x;\n}");
        assert_eq!(r.cyclomatic, 3);
    }

    #[test]
    fn logical_operators_and_ternary_are_decisions() {
        let r = one("int h(int a, int b) { return a && b || !a ? 1 : 0; }");
        assert_eq!(r.cyclomatic, 4);
    }

    #[test]
    fn comments_strings_and_directives() {
        let src = "#include <stdio.h>\n/* block\n comment */\nint main() {\n  // note\n  printf(\"%d {\\n\", 1); /* } */\n\n}\n";
        let r = one(src);
        assert_eq!(r.loc, 3);
        // operands: printf, "%d {\n", 1
        assert_eq!((r.n2, r.total_operands), (3, 3));
        assert_eq!((r.n1, r.total_operators), (0, 0));
    }

    #[test]
    fn skips_non_function_blocks() {
        let src = "struct point { int x; int y; };\nint table[] = {1, 2};\nint f() { return 1; }\n";
        let spans = find_functions(src).unwrap();
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].name, "f");
        assert_eq!(spans[0].start_line, 3);
    }

    #[test]
    fn multi_line_header_counts_toward_loc() {
        let src = "static int\nadd(int a,\n    int b)\n{\n  return a + b;\n}\n";
        let r = one(src);
        assert_eq!(r.loc, 6);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            extract_metrics("int f() { if (x) { y = 1; }"),
            Err(MetricsError::UnbalancedBraces { line: 1 })
        ));
        assert!(matches!(
            extract_metrics("int f() { }\n}"),
            Err(MetricsError::EmptyModule { .. }) | Err(MetricsError::UnbalancedBraces { .. })
        ));
        assert!(matches!(
            extract_metrics("void f() {}"),
            Err(MetricsError::EmptyModule { ref name, line: 1 }) if name == "f"
        ));
        assert!(extract_metrics("").unwrap().is_empty());
    }

    #[test]
    fn multi_char_operators() {
        let r = one("void f() { p->x <<= 2; i++; j += k; }");
        // operators: ->, <<=, ++, +=
        assert_eq!((r.n1, r.total_operators), (4, 4));
        // operands: p, x, 2, i, j, k
        assert_eq!((r.n2, r.total_operands), (6, 6));
    }
}
