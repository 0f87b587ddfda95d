use super::ast::Span;
use super::error::{ErrorKind, EvalError};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Int(i64),
    Float(f64),
    Text(String),
    Ident(String),
    True,
    False,
    Null,
    And,
    Or,
    Not,
    Plus,
    Minus,
    Star,
    StarStar,
    Slash,
    Percent,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Assign,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Newline,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Int(i) => format!("integer {i}"),
            Tok::Float(f) => format!("number {f}"),
            Tok::Text(_) => "text literal".into(),
            Tok::Ident(n) => format!("identifier `{n}`"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::True => "true",
            Tok::False => "false",
            Tok::Null => "null",
            Tok::And => "and",
            Tok::Or => "or",
            Tok::Not => "not",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::StarStar => "**",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Assign => "=",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: u32,
    col: u32,
    depth: usize,
}

impl<'a> Lexer<'a> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn pos(&mut self) -> usize {
        self.chars.peek().map(|&(i, _)| i).unwrap_or(self.src.len())
    }
}

/// Splits source into tokens. Newlines inside `()` or `[]` are insignificant.
pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, EvalError> {
    let mut lx = Lexer {
        chars: src.char_indices().peekable(),
        src,
        line: 1,
        col: 1,
        depth: 0,
    };
    let mut out = Vec::new();
    loop {
        let span = Span::new(lx.line, lx.col);
        let Some(c) = lx.peek() else {
            out.push(Token { tok: Tok::Eof, span });
            return Ok(out);
        };
        let tok = match c {
            ' ' | '\t' | '\r' => {
                lx.bump();
                continue;
            }
            '#' => {
                while matches!(lx.peek(), Some(c) if c != '\n') {
                    lx.bump();
                }
                continue;
            }
            '\n' => {
                lx.bump();
                if lx.depth > 0 {
                    continue;
                }
                Tok::Newline
            }
            '0'..='9' => number(&mut lx, span)?,
            '"' => text(&mut lx, span)?,
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = lx.pos();
                while matches!(lx.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    lx.bump();
                }
                let word = &src[start..lx.pos()];
                match word {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "null" => Tok::Null,
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "not" => Tok::Not,
                    _ => Tok::Ident(word.to_string()),
                }
            }
            _ => {
                lx.bump();
                match c {
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' if lx.peek() == Some('*') => {
                        lx.bump();
                        Tok::StarStar
                    }
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '%' => Tok::Percent,
                    '=' if lx.peek() == Some('=') => {
                        lx.bump();
                        Tok::EqEq
                    }
                    '=' => Tok::Assign,
                    '!' if lx.peek() == Some('=') => {
                        lx.bump();
                        Tok::NotEq
                    }
                    '<' if lx.peek() == Some('=') => {
                        lx.bump();
                        Tok::Le
                    }
                    '<' => Tok::Lt,
                    '>' if lx.peek() == Some('=') => {
                        lx.bump();
                        Tok::Ge
                    }
                    '>' => Tok::Gt,
                    '(' | '[' => {
                        lx.depth += 1;
                        if c == '(' {
                            Tok::LParen
                        } else {
                            Tok::LBracket
                        }
                    }
                    ')' | ']' => {
                        lx.depth = lx.depth.saturating_sub(1);
                        if c == ')' {
                            Tok::RParen
                        } else {
                            Tok::RBracket
                        }
                    }
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    other => {
                        return Err(EvalError::new(
                            ErrorKind::LexError,
                            format!("unexpected character {other:?}"),
                            span,
                        ))
                    }
                }
            }
        };
        out.push(Token { tok, span });
    }
}

fn number(lx: &mut Lexer<'_>, span: Span) -> Result<Tok, EvalError> {
    let start = lx.pos();
    while matches!(lx.peek(), Some('0'..='9')) {
        lx.bump();
    }
    let mut is_float = false;
    if lx.peek() == Some('.') {
        // only a float if a digit follows the dot
        let mut ahead = lx.chars.clone();
        ahead.next();
        if matches!(ahead.peek(), Some(&(_, '0'..='9'))) {
            is_float = true;
            lx.bump();
            while matches!(lx.peek(), Some('0'..='9')) {
                lx.bump();
            }
        }
    }
    let text = &lx.src[start..lx.pos()];
    if is_float {
        text.parse::<f64>()
            .map(Tok::Float)
            .map_err(|_| EvalError::new(ErrorKind::LexError, format!("bad number {text}"), span))
    } else {
        text.parse::<i64>().map(Tok::Int).map_err(|_| {
            EvalError::new(
                ErrorKind::LexError,
                format!("integer literal {text} out of range"),
                span,
            )
        })
    }
}

fn text(lx: &mut Lexer<'_>, span: Span) -> Result<Tok, EvalError> {
    lx.bump();
    let mut s = String::new();
    loop {
        match lx.bump() {
            None => {
                return Err(EvalError::new(
                    ErrorKind::LexError,
                    "unterminated text literal",
                    span,
                ))
            }
            Some('"') => return Ok(Tok::Text(s)),
            Some('\\') => match lx.bump() {
                Some('"') => s.push('"'),
                Some('\\') => s.push('\\'),
                Some('n') => s.push('\n'),
                Some(other) => {
                    return Err(EvalError::new(
                        ErrorKind::LexError,
                        format!("unknown escape \\{other}"),
                        span,
                    ))
                }
                None => {
                    return Err(EvalError::new(
                        ErrorKind::LexError,
                        "unterminated text literal",
                        span,
                    ))
                }
            },
            Some(c) => s.push(c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn operators_and_literals() {
        assert_eq!(
            toks("a = 2**3 <= 1.5 # note"),
            vec![
                Tok::Ident("a".into()),
                Tok::Assign,
                Tok::Int(2),
                Tok::StarStar,
                Tok::Int(3),
                Tok::Le,
                Tok::Float(1.5),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn newlines_inside_brackets_are_skipped() {
        assert_eq!(
            toks("[1,\n2]\nx"),
            vec![
                Tok::LBracket,
                Tok::Int(1),
                Tok::Comma,
                Tok::Int(2),
                Tok::RBracket,
                Tok::Newline,
                Tok::Ident("x".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn text_escapes() {
        assert_eq!(toks(r#""a\"b\\c\n""#)[0], Tok::Text("a\"b\\c\n".into()));
    }

    #[test]
    fn lex_errors_carry_span() {
        let e = tokenize("x = 1\ny = $").unwrap_err();
        assert_eq!(e.kind, ErrorKind::LexError);
        assert_eq!(e.span, Span::new(2, 5));
        let e = tokenize("\"open").unwrap_err();
        assert_eq!(e.kind, ErrorKind::LexError);
        assert!(e.message.contains("unterminated"));
        let e = tokenize("99999999999999999999").unwrap_err();
        assert_eq!(e.kind, ErrorKind::LexError);
    }
}
