use crate::model::{BinaryOp, Element, ElementKind, Expr, SourceSpan, TableBounds};
use crate::units::UnitExpr;

use super::lexer::{Tok, Token};
use super::LangError;

pub(crate) const KEYWORDS: &[&str] = &[
    "stock", "flow", "aux", "const", "table", "integ", "smooth", "step", "lookup", "bounds",
    "points", "domain", "range", "dimensionless",
];

pub(crate) struct LineParser<'a> {
    tokens: &'a [Token],
    pos: usize,
    /// Last character of the line, for "found end of line" errors.
    eol: SourceSpan,
}

impl<'a> LineParser<'a> {
    pub(crate) fn new(tokens: &'a [Token], line_no: usize, line_chars: usize) -> Self {
        LineParser { tokens, pos: 0, eol: SourceSpan::new(line_no, line_chars.max(1), 0) }
    }

    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn error(&self, expected: impl Into<String>) -> LangError {
        match self.peek() {
            Some(t) => LangError::Syntax { span: t.span, expected: expected.into(), found: t.tok.describe() },
            None => LangError::Syntax { span: self.eol, expected: expected.into(), found: "end of line".into() },
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<&'a Token, LangError> {
        match self.peek() {
            Some(t) if t.tok == tok => {
                self.pos += 1;
                Ok(t)
            }
            _ => Err(self.error(tok.describe())),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), LangError> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), .. }) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error(format!("`{kw}`"))),
        }
    }

    fn name(&mut self) -> Result<(String, SourceSpan), LangError> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), span }) if !KEYWORDS.contains(&s.as_str()) => {
                self.pos += 1;
                Ok((s.clone(), *span))
            }
            _ => Err(self.error("element name")),
        }
    }

    fn units(&mut self) -> Result<UnitExpr, LangError> {
        match self.peek() {
            Some(Token { tok: Tok::Units(raw), span }) => {
                self.pos += 1;
                UnitExpr::parse(raw).map_err(|message| LangError::BadUnits { span: *span, message })
            }
            _ => Err(self.error("units in `[...]`")),
        }
    }

    fn number(&mut self) -> Result<f64, LangError> {
        let negative = matches!(self.peek(), Some(Token { tok: Tok::Minus, .. }));
        if negative {
            self.pos += 1;
        }
        match self.peek() {
            Some(Token { tok: Tok::Number(n), .. }) => {
                self.pos += 1;
                Ok(if negative { -n } else { *n })
            }
            _ => Err(self.error("number")),
        }
    }

    fn pair(&mut self) -> Result<(f64, f64), LangError> {
        self.expect(Tok::LParen)?;
        let x = self.number()?;
        self.expect(Tok::Comma)?;
        let y = self.number()?;
        self.expect(Tok::RParen)?;
        Ok((x, y))
    }

    fn finish(&self) -> Result<(), LangError> {
        if self.pos < self.tokens.len() {
            Err(self.error("end of line"))
        } else {
            Ok(())
        }
    }

    /// Parses one declaration line. `span` covers the declaration text.
    pub(crate) fn declaration(&mut self, span: SourceSpan) -> Result<Element, LangError> {
        let keyword = match self.peek() {
            Some(Token { tok: Tok::Ident(s), .. })
                if matches!(s.as_str(), "stock" | "flow" | "aux" | "const" | "table") =>
            {
                self.pos += 1;
                s.as_str()
            }
            _ => return Err(self.error("`stock`, `flow`, `aux`, `const` or `table`")),
        };
        let (name, _) = self.name()?;
        let (kind, units) = match keyword {
            "stock" => {
                self.expect(Tok::Eq)?;
                self.expect_keyword("integ")?;
                self.expect(Tok::LParen)?;
                let net_flow = self.expr()?;
                self.expect(Tok::Comma)?;
                let initial = self.expr()?;
                self.expect(Tok::RParen)?;
                (ElementKind::Stock { net_flow, initial }, self.units()?)
            }
            "flow" | "aux" => {
                self.expect(Tok::Eq)?;
                let expr = self.expr()?;
                let units = self.units()?;
                let kind = if keyword == "flow" { ElementKind::Flow(expr) } else { ElementKind::Auxiliary(expr) };
                (kind, units)
            }
            "const" => {
                self.expect(Tok::Eq)?;
                let value = self.number()?;
                (ElementKind::Constant(value), self.units()?)
            }
            _ => self.table_rest(span)?,
        };
        self.finish()?;
        Ok(Element { name, kind, units, range: None, span })
    }

    fn table_rest(&mut self, span: SourceSpan) -> Result<(ElementKind, UnitExpr), LangError> {
        self.expect_keyword("bounds")?;
        let min = self.pair()?;
        self.expect(Tok::Minus)?;
        let max = self.pair()?;
        self.expect_keyword("points")?;
        let mut points = vec![self.pair()?];
        while matches!(self.peek(), Some(Token { tok: Tok::LParen, .. })) {
            points.push(self.pair()?);
        }
        self.expect_keyword("domain")?;
        let domain = self.units()?;
        self.expect_keyword("range")?;
        let range = self.units()?;
        if points.len() < 2 {
            return Err(LangError::BadTable { span, message: "a table needs at least two points".into() });
        }
        if let Some(w) = points.windows(2).find(|w| !(w[1].0 > w[0].0)) {
            return Err(LangError::BadTable {
                span,
                message: format!("x values must be strictly increasing ({} then {})", w[0].0, w[1].0),
            });
        }
        Ok((ElementKind::Table { bounds: TableBounds { min, max }, points, domain }, range))
    }

    pub(crate) fn expr(&mut self) -> Result<Expr, LangError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Plus) => BinaryOp::Add,
                Some(Tok::Minus) => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, LangError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().map(|t| &t.tok) {
                Some(Tok::Star) => BinaryOp::Mul,
                Some(Tok::Slash) => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, LangError> {
        if matches!(self.peek(), Some(Token { tok: Tok::Minus, .. })) {
            self.pos += 1;
            return Ok(match self.unary()? {
                Expr::Literal(v) => Expr::Literal(-v),
                other => Expr::Neg(Box::new(other)),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, LangError> {
        let Some(token) = self.peek() else {
            return Err(self.error("expression"));
        };
        match &token.tok {
            Tok::Number(n) => {
                self.pos += 1;
                Ok(Expr::Literal(*n))
            }
            Tok::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(word) => match word.as_str() {
                "smooth" | "step" => {
                    self.pos += 1;
                    self.expect(Tok::LParen)?;
                    let a = self.expr()?;
                    self.expect(Tok::Comma)?;
                    let b = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(if word == "smooth" {
                        Expr::Smooth { input: Box::new(a), time: Box::new(b) }
                    } else {
                        Expr::Step { height: Box::new(a), start: Box::new(b) }
                    })
                }
                "lookup" => {
                    self.pos += 1;
                    self.expect(Tok::LParen)?;
                    let (table, _) = self.name()?;
                    self.expect(Tok::Comma)?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(Expr::Lookup { table, arg: Box::new(arg) })
                }
                _ => {
                    let (name, _) = self.name().map_err(|_| self.error("expression"))?;
                    Ok(Expr::Ref(name))
                }
            },
            _ => Err(self.error("expression")),
        }
    }
}
