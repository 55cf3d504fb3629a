use super::ast::{Projection, SparqlQuery, Term, TriplePattern};
use super::SparqlError;
use crate::kb::{EntityId, RelationId};

const UNSUPPORTED: &[&str] = &[
    "OPTIONAL", "FILTER", "LIMIT", "OFFSET", "ORDER", "GROUP", "HAVING", "UNION", "MINUS",
    "SERVICE", "PREFIX", "BASE", "DISTINCT", "REDUCED", "VALUES", "BIND", "GRAPH", "ASK",
    "CONSTRUCT", "DESCRIBE", "FROM",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Select,
    Where,
    Count,
    As,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Dot,
    Var(String),
    Entity(EntityId),
    Relation(RelationId),
    Literal(String),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Select => "SELECT".into(),
            Tok::Where => "WHERE".into(),
            Tok::Count => "COUNT".into(),
            Tok::As => "AS".into(),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Dot => "'.'".into(),
            Tok::Var(v) => format!("?{v}"),
            Tok::Entity(id) => format!("wd:{id}"),
            Tok::Relation(id) => format!("wdt:{id}"),
            Tok::Literal(_) => "literal".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

fn err(offset: usize, expected: impl Into<String>) -> SparqlError {
    SparqlError::Parse {
        offset,
        expected: expected.into(),
    }
}

impl<'a> Lexer<'a> {
    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek_char().is_some_and(&pred) {
            self.bump();
        }
        &self.src[start..self.pos]
    }

    fn next_token(&mut self) -> Result<(usize, Tok), SparqlError> {
        self.take_while(char::is_whitespace);
        let start = self.pos;
        let Some(c) = self.bump() else {
            return Ok((start, Tok::Eof));
        };
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '.' => Tok::Dot,
            '?' => {
                let name = self.take_while(|c| c.is_alphanumeric() || c == '_');
                if name.is_empty() {
                    return Err(err(self.pos, "variable name after '?'"));
                }
                Tok::Var(name.to_string())
            }
            '"' => Tok::Literal(self.literal(start)?),
            c if c.is_ascii_alphabetic() => {
                let rest = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_' || c == ':');
                let word = &self.src[start..start + c.len_utf8() + rest.len()];
                self.word(start, word)?
            }
            other => {
                return Err(err(
                    start,
                    format!("a term, keyword or punctuation, found {other:?}"),
                ))
            }
        };
        Ok((start, tok))
    }

    fn literal(&mut self, start: usize) -> Result<String, SparqlError> {
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(err(start, "closing '\"' of literal")),
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    _ => return Err(err(self.pos, "escape sequence \\\" \\\\ \\n \\t or \\r")),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn word(&self, start: usize, word: &str) -> Result<Tok, SparqlError> {
        if let Some(id) = word.strip_prefix("wd:") {
            return id
                .parse()
                .map(Tok::Entity)
                .map_err(|_| err(start + 3, "entity id of the form Q<digits>"));
        }
        if let Some(id) = word.strip_prefix("wdt:") {
            return id
                .parse()
                .map(Tok::Relation)
                .map_err(|_| err(start + 4, "relation id of the form P<digits>"));
        }
        let upper = word.to_ascii_uppercase();
        match upper.as_str() {
            "SELECT" => Ok(Tok::Select),
            "WHERE" => Ok(Tok::Where),
            "COUNT" => Ok(Tok::Count),
            "AS" => Ok(Tok::As),
            kw if UNSUPPORTED.contains(&kw) => Err(err(
                start,
                format!("supported syntax, {kw} is not part of the query subset"),
            )),
            _ => Err(err(start, format!("wd:Q… or wdt:P… term, found {word:?}"))),
        }
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<(usize, Tok)>,
}

impl Parser<'_> {
    fn peek(&mut self) -> Result<&(usize, Tok), SparqlError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next_token()?);
        }
        Ok(self.peeked.as_ref().expect("peeked"))
    }

    fn next(&mut self) -> Result<(usize, Tok), SparqlError> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lexer.next_token(),
        }
    }

    fn expect(&mut self, want: Tok) -> Result<usize, SparqlError> {
        let (offset, tok) = self.next()?;
        if tok == want {
            Ok(offset)
        } else {
            Err(err(
                offset,
                format!("{}, found {}", want.describe(), tok.describe()),
            ))
        }
    }

    fn variable(&mut self) -> Result<String, SparqlError> {
        match self.next()? {
            (_, Tok::Var(v)) => Ok(v),
            (offset, tok) => Err(err(offset, format!("variable, found {}", tok.describe()))),
        }
    }

    fn projection(&mut self) -> Result<Projection, SparqlError> {
        match self.next()? {
            (_, Tok::Var(v)) => Ok(Projection::SelectVar(v)),
            (_, Tok::LParen) => {
                self.expect(Tok::Count)?;
                self.expect(Tok::LParen)?;
                let variable = self.variable()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::As)?;
                let alias = self.variable()?;
                self.expect(Tok::RParen)?;
                Ok(Projection::Count { variable, alias })
            }
            (offset, tok) => Err(err(
                offset,
                format!("?var or (COUNT(?var) AS ?alias), found {}", tok.describe()),
            )),
        }
    }

    fn term(&mut self, position: &str) -> Result<Term, SparqlError> {
        let (offset, tok) = self.next()?;
        let term = match tok {
            Tok::Var(v) => Term::Variable(v),
            Tok::Entity(id) if position != "predicate" => Term::Entity(id),
            Tok::Relation(id) if position == "predicate" => Term::Relation(id),
            Tok::Literal(s) if position == "object" => Term::Literal(s),
            other => {
                let allowed = match position {
                    "subject" => "?var or wd:Q…",
                    "predicate" => "?var or wdt:P…",
                    _ => "?var, wd:Q… or a literal",
                };
                return Err(err(
                    offset,
                    format!("{position} ({allowed}), found {}", other.describe()),
                ));
            }
        };
        Ok(term)
    }

    fn query(&mut self) -> Result<SparqlQuery, SparqlError> {
        self.expect(Tok::Select)?;
        let projection = self.projection()?;
        self.expect(Tok::Where)?;
        self.expect(Tok::LBrace)?;
        let mut patterns = Vec::new();
        loop {
            if matches!(self.peek()?, (_, Tok::RBrace)) && !patterns.is_empty() {
                self.next()?;
                break;
            }
            let subject = self.term("subject")?;
            let predicate = self.term("predicate")?;
            let object = self.term("object")?;
            patterns.push(TriplePattern::new(subject, predicate, object));
            if matches!(self.peek()?, (_, Tok::Dot)) {
                self.next()?;
            }
        }
        self.expect(Tok::Eof)?;
        let query = SparqlQuery {
            projection,
            patterns,
        };
        let var = query.projection.variable();
        if !query.pattern_variables().contains(var) {
            return Err(SparqlError::UnboundProjection(var.to_string()));
        }
        Ok(query)
    }
}

/// Parses query text into a [`SparqlQuery`].
pub fn parse(text: &str) -> Result<SparqlQuery, SparqlError> {
    Parser {
        lexer: Lexer { src: text, pos: 0 },
        peeked: None,
    }
    .query()
}
