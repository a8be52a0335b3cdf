//! Recursive-descent parser for the formula DSL.
//!
//! ```text
//! or    := and ('|' and)*
//! and   := unary ('&' unary)*
//! unary := '!' unary | '(' or ')' | atom
//! atom  := label ['@' position] ['#' count]
//! label := word (' ' word)*
//! ```

use super::{is_label_char, Atom, Formula, LogicError, Position, MAX_COUNT, MIN_COUNT};

pub fn parse_formula(text: &str) -> Result<Formula, LogicError> {
    let mut p = Parser { src: text, pos: 0 };
    p.skip_ws();
    if p.at_end() {
        return Err(p.error("empty formula"));
    }
    let f = p.parse_or()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(f)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn error(&self, message: &str) -> LogicError {
        LogicError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn parse_or(&mut self) -> Result<Formula, LogicError> {
        let mut children = vec![self.parse_and()?];
        while self.eat('|') {
            children.push(self.parse_and()?);
        }
        Ok(collapse(children, Formula::Or))
    }

    fn parse_and(&mut self) -> Result<Formula, LogicError> {
        let mut children = vec![self.parse_unary()?];
        while self.eat('&') {
            children.push(self.parse_unary()?);
        }
        Ok(collapse(children, Formula::And))
    }

    fn parse_unary(&mut self) -> Result<Formula, LogicError> {
        self.skip_ws();
        match self.peek() {
            Some('!') => {
                self.bump();
                Ok(Formula::not(self.parse_unary()?))
            }
            Some('(') => {
                self.bump();
                let inner = self.parse_or()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if is_label_char(c) => self.parse_atom(),
            Some(_) => Err(self.error("expected an atom, `!` or `(`")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn parse_atom(&mut self) -> Result<Formula, LogicError> {
        let start = self.pos;
        self.take_word();
        // A single space followed by another word continues the label.
        loop {
            let rest = self.rest();
            let mut chars = rest.chars();
            if chars.next() == Some(' ') && chars.next().is_some_and(is_label_char) {
                self.bump();
                self.take_word();
            } else {
                break;
            }
        }
        let label = &self.src[start..self.pos];

        let mut position = None;
        if self.peek() == Some('@') {
            self.bump();
            let at = self.pos;
            let name = self.take_word();
            position = Some(Position::from_name(&name.to_lowercase()).ok_or(LogicError::Syntax {
                offset: at,
                message: format!("unknown position {name:?}"),
            })?);
        }

        let mut count = None;
        if self.peek() == Some('#') {
            self.bump();
            let at = self.pos;
            let digits = self.take_while(|c| c.is_ascii_digit());
            if digits.is_empty() {
                return Err(LogicError::Syntax {
                    offset: at,
                    message: "expected a count after `#`".into(),
                });
            }
            let n: u64 = digits.parse().unwrap_or(u64::MAX);
            if !(u64::from(MIN_COUNT)..=u64::from(MAX_COUNT)).contains(&n) {
                return Err(LogicError::CountOutOfRange { offset: at, count: n });
            }
            count = Some(n as u8);
        }

        if self.peek().is_some_and(|c| is_label_char(c) || c == '@' || c == '#') {
            return Err(self.error("malformed atom"));
        }

        let atom = Atom::new(label, position, count).map_err(|_| LogicError::Syntax {
            offset: start,
            message: format!("invalid entity label {label:?}"),
        })?;
        Ok(Formula::Atom(atom))
    }

    fn take_word(&mut self) -> &'a str {
        self.take_while(is_label_char)
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&pred) {
            self.bump();
        }
        &self.src[start..self.pos]
    }
}

fn collapse(mut children: Vec<Formula>, build: fn(Vec<Formula>) -> Formula) -> Formula {
    if children.len() == 1 {
        children.pop().expect("one child")
    } else {
        build(children)
    }
}
