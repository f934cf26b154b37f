//! Tokenizer for the annotated record dialect.

use std::fmt;

use super::{ParseError, Position, SourceUnit};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    Keyword(Keyword),
    Integer(u64),
    Str(String),
    /// The `@` that introduces an annotation.
    Sigil,
    Equals,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Comma,
    Star,
    /// Any other C punctuation. Only meaningful in skipped lines.
    Punct(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Struct,
    Enum,
}

impl Keyword {
    fn from_ident(s: &str) -> Option<Keyword> {
        match s {
            "struct" => Some(Keyword::Struct),
            "enum" => Some(Keyword::Enum),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Struct => "struct",
            Keyword::Enum => "enum",
        }
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Keyword(k) => write!(f, "keyword `{}`", k.as_str()),
            TokenKind::Integer(n) => write!(f, "integer {n}"),
            TokenKind::Str(s) => write!(f, "string {s:?}"),
            TokenKind::Sigil => f.write_str("`@`"),
            TokenKind::Equals => f.write_str("`=`"),
            TokenKind::LBrace => f.write_str("`{`"),
            TokenKind::RBrace => f.write_str("`}`"),
            TokenKind::LParen => f.write_str("`(`"),
            TokenKind::RParen => f.write_str("`)`"),
            TokenKind::Semi => f.write_str("`;`"),
            TokenKind::Comma => f.write_str("`,`"),
            TokenKind::Star => f.write_str("`*`"),
            TokenKind::Punct(c) => write!(f, "`{c}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: Position,
    /// Byte offsets into the source text.
    pub start: usize,
    pub end: usize,
}

const OTHER_PUNCT: &str = "[].&<>+-/!?:|^~%#'";

/// Splits `unit.text` into tokens. Comments, whitespace and preprocessor
/// lines are dropped.
pub fn tokenize(unit: &SourceUnit) -> Result<Vec<Token>, ParseError> {
    Lexer::new(&unit.text).run()
}

struct Lexer<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    idx: usize,
    line: usize,
    col: usize,
    /// True until a token is produced on the current line.
    line_start: bool,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            chars: src.char_indices().collect(),
            idx: 0,
            line: 1,
            col: 1,
            line_start: true,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.idx).map(|&(_, c)| c)
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.chars.get(self.idx + n).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.idx).map_or(self.src.len(), |&(o, _)| o)
    }

    fn pos(&self) -> Position {
        Position {
            line: self.line,
            column: self.col,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.idx += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
            self.line_start = true;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn run(mut self) -> Result<Vec<Token>, ParseError> {
        let mut out = Vec::new();
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
                continue;
            }
            if c == '/' && self.peek_at(1) == Some('/') {
                self.skip_line();
                continue;
            }
            if c == '/' && self.peek_at(1) == Some('*') {
                self.skip_block_comment()?;
                continue;
            }
            if c == '#' && self.line_start {
                self.skip_line();
                continue;
            }
            let pos = self.pos();
            let start = self.offset();
            let kind = self.lex_token(c, pos)?;
            self.line_start = false;
            out.push(Token {
                kind,
                pos,
                start,
                end: self.offset(),
            });
        }
        Ok(out)
    }

    fn skip_line(&mut self) {
        while let Some(c) = self.peek() {
            if c == '\n' {
                break;
            }
            self.bump();
        }
    }

    fn skip_block_comment(&mut self) -> Result<(), ParseError> {
        let pos = self.pos();
        self.bump();
        self.bump();
        loop {
            match self.bump() {
                Some('*') if self.peek() == Some('/') => {
                    self.bump();
                    return Ok(());
                }
                Some(_) => {}
                None => return Err(ParseError::UnterminatedComment { pos }),
            }
        }
    }

    fn lex_token(&mut self, c: char, pos: Position) -> Result<TokenKind, ParseError> {
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(c) = self.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
            return Ok(match Keyword::from_ident(&s) {
                Some(k) => TokenKind::Keyword(k),
                None => TokenKind::Ident(s),
            });
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(c) = self.peek() {
                if c.is_ascii_digit() {
                    s.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
            let n = s
                .parse::<u64>()
                .map_err(|_| ParseError::IntegerOverflow { pos })?;
            return Ok(TokenKind::Integer(n));
        }
        if c == '"' {
            return self.lex_string(pos);
        }
        self.bump();
        Ok(match c {
            '@' => TokenKind::Sigil,
            '=' => TokenKind::Equals,
            '{' => TokenKind::LBrace,
            '}' => TokenKind::RBrace,
            '(' => TokenKind::LParen,
            ')' => TokenKind::RParen,
            ';' => TokenKind::Semi,
            ',' => TokenKind::Comma,
            '*' => TokenKind::Star,
            c if OTHER_PUNCT.contains(c) => TokenKind::Punct(c),
            c => return Err(ParseError::IllegalCharacter { ch: c, pos }),
        })
    }

    fn lex_string(&mut self, pos: Position) -> Result<TokenKind, ParseError> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(TokenKind::Str(s)),
                Some('\\') => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some(c @ ('"' | '\\')) => s.push(c),
                    Some(c) => {
                        s.push('\\');
                        s.push(c);
                    }
                    None => return Err(ParseError::UnterminatedString { pos }),
                },
                Some('\n') | None => return Err(ParseError::UnterminatedString { pos }),
                Some(c) => s.push(c),
            }
        }
    }
}
