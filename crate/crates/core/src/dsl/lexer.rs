//! Tokeniser for `.fsim` sources.

use crate::diag::{DiagCode, Diagnostic, Span};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Unsigned integer literal; sign is handled by the parser.
    Int(u64),
    Real(f64),
    Str(String),
    /// `:name`
    Sym(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Walrus,
    PlusEq,
    Assign,
    Tilde,
    FatArrow,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Newline,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Real(r) => format!("`{r}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Sym(s) => format!("`:{s}`"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", other.punct()),
        }
    }

    fn punct(&self) -> &'static str {
        match self {
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Walrus => ":=",
            Tok::PlusEq => "+=",
            Tok::Assign => "=",
            Tok::Tilde => "~",
            Tok::FatArrow => "=>",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            _ => "?",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits `src` into tokens. Newlines inside `()` and `[]` are dropped so
/// argument lists may span lines; `#` starts a comment. Never fails: bad
/// characters become diagnostics and are skipped.
pub fn lex(src: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut toks = Vec::new();
    let mut diags = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let end_of = |i: usize| chars.get(i).map_or(src.len(), |(b, _)| *b);
    let mut depth: usize = 0;
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        let next = chars.get(i + 1).map(|(_, c)| *c);
        let push = |tok: Tok, len: usize, toks: &mut Vec<Token>| {
            toks.push(Token { tok, span: Span::new(start, end_of(i + len)) });
            len
        };
        let consumed = match c {
            '\n' => {
                if depth == 0 {
                    push(Tok::Newline, 1, &mut toks)
                } else {
                    1
                }
            }
            c if c.is_whitespace() => 1,
            '#' => {
                let mut j = i;
                while j < chars.len() && chars[j].1 != '\n' {
                    j += 1;
                }
                j - i
            }
            '{' => push(Tok::LBrace, 1, &mut toks),
            '}' => push(Tok::RBrace, 1, &mut toks),
            '(' | '[' => {
                depth += 1;
                push(if c == '(' { Tok::LParen } else { Tok::LBracket }, 1, &mut toks)
            }
            ')' | ']' => {
                depth = depth.saturating_sub(1);
                push(if c == ')' { Tok::RParen } else { Tok::RBracket }, 1, &mut toks)
            }
            ',' => push(Tok::Comma, 1, &mut toks),
            ';' => push(Tok::Semi, 1, &mut toks),
            '~' => push(Tok::Tilde, 1, &mut toks),
            '+' if next == Some('=') => push(Tok::PlusEq, 2, &mut toks),
            '+' => push(Tok::Plus, 1, &mut toks),
            '-' => push(Tok::Minus, 1, &mut toks),
            '*' => push(Tok::Star, 1, &mut toks),
            '/' => push(Tok::Slash, 1, &mut toks),
            '%' => push(Tok::Percent, 1, &mut toks),
            '=' if next == Some('=') => push(Tok::EqEq, 2, &mut toks),
            '=' if next == Some('>') => push(Tok::FatArrow, 2, &mut toks),
            '=' => push(Tok::Assign, 1, &mut toks),
            '!' if next == Some('=') => push(Tok::NotEq, 2, &mut toks),
            '<' if next == Some('=') => push(Tok::Le, 2, &mut toks),
            '<' => push(Tok::Lt, 1, &mut toks),
            '>' if next == Some('=') => push(Tok::Ge, 2, &mut toks),
            '>' => push(Tok::Gt, 1, &mut toks),
            ':' if next == Some('=') => push(Tok::Walrus, 2, &mut toks),
            ':' if next.is_some_and(is_ident_start) => {
                let mut j = i + 1;
                while j < chars.len() && is_ident_char(chars[j].1) {
                    j += 1;
                }
                let name = src[chars[i + 1].0..end_of(j)].to_string();
                push(Tok::Sym(name), j - i, &mut toks)
            }
            ':' => push(Tok::Colon, 1, &mut toks),
            '"' => {
                let mut j = i + 1;
                let mut s = String::new();
                let mut closed = false;
                while j < chars.len() {
                    match chars[j].1 {
                        '"' => {
                            closed = true;
                            j += 1;
                            break;
                        }
                        '\n' => break,
                        '\\' if j + 1 < chars.len() => {
                            match chars[j + 1].1 {
                                'n' => s.push('\n'),
                                't' => s.push('\t'),
                                '\\' => s.push('\\'),
                                '"' => s.push('"'),
                                other => {
                                    diags.push(Diagnostic::error(
                                        DiagCode::Syntax,
                                        Span::new(chars[j].0, end_of(j + 2)),
                                        format!("unknown escape `\\{other}`"),
                                    ));
                                }
                            }
                            j += 2;
                        }
                        other => {
                            s.push(other);
                            j += 1;
                        }
                    }
                }
                if closed {
                    push(Tok::Str(s), j - i, &mut toks)
                } else {
                    diags.push(Diagnostic::error(DiagCode::Syntax, Span::new(start, end_of(j)), "unterminated string literal"));
                    j - i
                }
            }
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].1.is_ascii_digit() {
                    j += 1;
                }
                let mut real = false;
                if j + 1 < chars.len() && chars[j].1 == '.' && chars[j + 1].1.is_ascii_digit() {
                    real = true;
                    j += 1;
                    while j < chars.len() && chars[j].1.is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < chars.len() && matches!(chars[j].1, 'e' | 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && matches!(chars[k].1, '+' | '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].1.is_ascii_digit() {
                        real = true;
                        while k < chars.len() && chars[k].1.is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text = &src[start..end_of(j)];
                if real {
                    match text.parse::<f64>() {
                        Ok(r) if r.is_finite() => push(Tok::Real(r), j - i, &mut toks),
                        _ => {
                            diags.push(Diagnostic::error(DiagCode::Syntax, Span::new(start, end_of(j)), format!("real literal `{text}` is out of range")));
                            j - i
                        }
                    }
                } else {
                    match text.parse::<u64>() {
                        Ok(n) => push(Tok::Int(n), j - i, &mut toks),
                        Err(_) => {
                            diags.push(Diagnostic::error(
                                DiagCode::Syntax,
                                Span::new(start, end_of(j)),
                                format!("integer literal `{text}` is out of range"),
                            ));
                            j - i
                        }
                    }
                }
            }
            c if is_ident_start(c) => {
                let mut j = i;
                while j < chars.len() && is_ident_char(chars[j].1) {
                    j += 1;
                }
                push(Tok::Ident(src[start..end_of(j)].to_string()), j - i, &mut toks)
            }
            other => {
                diags.push(Diagnostic::error(DiagCode::Syntax, Span::new(start, end_of(i + 1)), format!("unexpected character `{}`", other.escape_debug())));
                1
            }
        };
        i += consumed.max(1);
    }
    toks.push(Token { tok: Tok::Eof, span: Span::new(src.len(), src.len()) });
    (toks, diags)
}
