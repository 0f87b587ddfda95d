use super::ast::{BinaryOp, Expr, ExprKind, Program, Span, Stmt, UnaryOp};
use super::error::{ErrorKind, EvalError};
use super::lexer::{tokenize, Tok, Token};

/// Parses a cell's source into a program.
///
/// Precedence, lowest first: `or`, `and`, `not`, comparisons
/// (non-associative), `+ -`, `* / %`, unary `-`, `**` (right-associative),
/// call and index, atoms.
pub fn parse(source: &str) -> Result<Program, EvalError> {
    let tokens = tokenize(source)?;
    Parser { tokens, pos: 0 }.program()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, EvalError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, expected: &str) -> EvalError {
        EvalError::new(
            ErrorKind::ParseError,
            format!("expected {expected}, found {}", self.peek().describe()),
            self.span(),
        )
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> PResult<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek(), Tok::Newline | Tok::Semi) {
            self.advance();
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut stmts = Vec::new();
        self.skip_separators();
        while *self.peek() != Tok::Eof {
            stmts.push(self.stmt()?);
            match self.peek() {
                Tok::Newline | Tok::Semi => self.skip_separators(),
                Tok::Eof => {}
                _ => return Err(self.unexpected("end of statement")),
            }
        }
        Ok(Program { stmts })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        if let (Tok::Ident(name), Tok::Assign) = (self.peek().clone(), self.peek_at(1)) {
            let span = self.span();
            self.advance();
            self.advance();
            let value = self.expr()?;
            return Ok(Stmt::Assign { name, value, span });
        }
        Ok(Stmt::Expr(self.expr()?))
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.or()
    }

    fn binary(op: BinaryOp, l: Expr, r: Expr) -> Expr {
        let span = l.span;
        Expr {
            kind: ExprKind::Binary(op, Box::new(l), Box::new(r)),
            span,
        }
    }

    fn or(&mut self) -> PResult<Expr> {
        let mut lhs = self.and()?;
        while self.eat(&Tok::Or) {
            let rhs = self.and()?;
            lhs = Self::binary(BinaryOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> PResult<Expr> {
        let mut lhs = self.not()?;
        while self.eat(&Tok::And) {
            let rhs = self.not()?;
            lhs = Self::binary(BinaryOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Not {
            let span = self.advance().span;
            let inner = self.not()?;
            return Ok(Expr {
                kind: ExprKind::Unary(UnaryOp::Not, Box::new(inner)),
                span,
            });
        }
        self.comparison()
    }

    fn comparison_op(&self) -> Option<BinaryOp> {
        Some(match self.peek() {
            Tok::EqEq => BinaryOp::Eq,
            Tok::NotEq => BinaryOp::Ne,
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            _ => return None,
        })
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let lhs = self.additive()?;
        let Some(op) = self.comparison_op() else {
            return Ok(lhs);
        };
        self.advance();
        let rhs = self.additive()?;
        if self.comparison_op().is_some() {
            return Err(EvalError::new(
                ErrorKind::ParseError,
                "comparison operators cannot be chained",
                self.span(),
            ));
        }
        Ok(Self::binary(op, lhs, rhs))
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.multiplicative()?;
            lhs = Self::binary(op, lhs, rhs);
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                Tok::Percent => BinaryOp::Rem,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.unary()?;
            lhs = Self::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            let span = self.advance().span;
            let inner = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::Unary(UnaryOp::Neg, Box::new(inner)),
                span,
            });
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.postfix()?;
        if self.eat(&Tok::StarStar) {
            // right operand may itself carry a unary minus: 2 ** -1
            let exponent = self.unary()?;
            return Ok(Self::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.atom()?;
        loop {
            match self.peek() {
                Tok::LParen => {
                    let ExprKind::Ident(name) = &e.kind else {
                        return Err(EvalError::new(
                            ErrorKind::ParseError,
                            "only named builtins can be called",
                            self.span(),
                        ));
                    };
                    let name = name.clone();
                    self.advance();
                    let args = self.items(Tok::RParen, "`)`")?;
                    e = Expr {
                        kind: ExprKind::Call(name, args),
                        span: e.span,
                    };
                }
                Tok::LBracket => {
                    self.advance();
                    let index = self.expr()?;
                    self.expect(Tok::RBracket, "`]`")?;
                    e = Expr {
                        span: e.span,
                        kind: ExprKind::Index(Box::new(e), Box::new(index)),
                    };
                }
                _ => return Ok(e),
            }
        }
    }

    /// Comma-separated expressions up to `close`; a trailing comma is allowed.
    fn items(&mut self, close: Tok, close_desc: &str) -> PResult<Vec<Expr>> {
        let mut items = Vec::new();
        if self.eat(&close) {
            return Ok(items);
        }
        loop {
            items.push(self.expr()?);
            if self.eat(&Tok::Comma) {
                if self.eat(&close) {
                    return Ok(items);
                }
                continue;
            }
            self.expect(close, &format!("`,` or {close_desc}"))?;
            return Ok(items);
        }
    }

    fn atom(&mut self) -> PResult<Expr> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(i) => ExprKind::Int(i),
            Tok::Float(f) => ExprKind::Float(f),
            Tok::Text(s) => ExprKind::Text(s),
            Tok::True => ExprKind::Bool(true),
            Tok::False => ExprKind::Bool(false),
            Tok::Null => ExprKind::Null,
            Tok::Ident(n) => ExprKind::Ident(n),
            Tok::LParen => {
                self.advance();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                return Ok(inner);
            }
            Tok::LBracket => {
                self.advance();
                let items = self.items(Tok::RBracket, "`]`")?;
                return Ok(Expr {
                    kind: ExprKind::List(items),
                    span,
                });
            }
            _ => return Err(self.unexpected("an expression")),
        };
        self.advance();
        Ok(Expr { kind, span })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip(e: &Expr) -> String {
        match &e.kind {
            ExprKind::Int(i) => i.to_string(),
            ExprKind::Float(f) => format!("{f:?}"),
            ExprKind::Ident(n) => n.clone(),
            ExprKind::Binary(op, l, r) => format!("({} {} {})", op.symbol(), strip(l), strip(r)),
            ExprKind::Unary(UnaryOp::Neg, e) => format!("(neg {})", strip(e)),
            ExprKind::Unary(UnaryOp::Not, e) => format!("(not {})", strip(e)),
            ExprKind::Call(n, a) => format!(
                "{n}({})",
                a.iter().map(strip).collect::<Vec<_>>().join(" ")
            ),
            ExprKind::Index(b, i) => format!("{}[{}]", strip(b), strip(i)),
            ExprKind::List(items) => {
                format!("[{}]", items.iter().map(strip).collect::<Vec<_>>().join(" "))
            }
            other => format!("{other:?}"),
        }
    }

    fn one(src: &str) -> String {
        let p = parse(src).unwrap();
        assert_eq!(p.stmts.len(), 1);
        match &p.stmts[0] {
            Stmt::Expr(e) => strip(e),
            Stmt::Assign { name, value, .. } => format!("{name} := {}", strip(value)),
        }
    }

    #[test]
    fn precedence() {
        assert_eq!(one("2+3*4"), "(+ 2 (* 3 4))");
        assert_eq!(one("-2**2"), "(neg (** 2 2))");
        assert_eq!(one("2**3**2"), "(** 2 (** 3 2))");
        assert_eq!(one("2**-1"), "(** 2 (neg 1))");
        assert_eq!(one("not a == b and c or d"), "(or (and (not (== a b)) c) d)");
        assert_eq!(one("1 - 2 - 3"), "(- (- 1 2) 3)");
        assert_eq!(one("f(x)[0][1]"), "f(x)[0][1]");
        assert_eq!(one("a = [1, 2,]"), "a := [1 2]");
    }

    #[test]
    fn exact_tree_for_simple_sum() {
        let p = parse("2+3*4").unwrap();
        let Stmt::Expr(e) = &p.stmts[0] else { panic!() };
        let ExprKind::Binary(BinaryOp::Add, l, r) = &e.kind else { panic!() };
        assert_eq!(l.kind, ExprKind::Int(2));
        assert!(matches!(&r.kind, ExprKind::Binary(BinaryOp::Mul, a, b)
            if a.kind == ExprKind::Int(3) && b.kind == ExprKind::Int(4)));
        assert_eq!(r.span, Span::new(1, 3));
    }

    #[test]
    fn statements_split_on_newline_and_semicolon() {
        assert_eq!(parse("a = [1, 2]\nshow(a[0])").unwrap().stmts.len(), 2);
        assert_eq!(parse("a=1; b=2;\n\n c").unwrap().stmts.len(), 3);
        assert!(parse("").unwrap().stmts.is_empty());
        assert!(parse("# only a comment\n").unwrap().stmts.is_empty());
    }

    #[test]
    fn incomplete_assignment_fails_at_end() {
        let e = parse("x = ").unwrap_err();
        assert_eq!(e.kind, ErrorKind::ParseError);
        assert_eq!(e.span, Span::new(1, 5));
        assert!(e.message.contains("end of input"));
    }

    #[test]
    fn chained_comparison_is_rejected() {
        let e = parse("1 < 2 < 3").unwrap_err();
        assert_eq!(e.kind, ErrorKind::ParseError);
    }

    #[test]
    fn junk_after_expression() {
        let e = parse("a b").unwrap_err();
        assert_eq!(e.kind, ErrorKind::ParseError);
        assert_eq!(e.span, Span::new(1, 3));
        assert!(parse("(1)(2)").is_err());
        assert!(parse("[1, 2").is_err());
    }
}
