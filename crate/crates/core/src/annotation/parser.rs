use std::collections::HashSet;

use super::lexer::{tokenize, Keyword, Token, TokenKind};
use super::{
    AnnotatedComponentModel, AnnotationKind, AnnotationNode, ArgValue, ComponentRecord,
    FunctionDef, MemberDecl, MemberKind, ParseError, Position, SourceUnit,
};

/// Parses an annotated source unit into records, members and their bound
/// annotations.
pub fn parse_component_source(unit: &SourceUnit) -> Result<AnnotatedComponentModel, ParseError> {
    let tokens = tokenize(unit)?;
    let mut p = Parser {
        src: &unit.text,
        toks: &tokens,
        idx: 0,
    };
    let mut model = AnnotatedComponentModel {
        source_name: unit.name.clone(),
        ..Default::default()
    };
    let mut record_names = HashSet::new();
    while !p.at_end() {
        match p.top_level_item()? {
            Item::Record(r) => {
                if !record_names.insert(r.name.clone()) {
                    return Err(ParseError::DuplicateRecord {
                        name: r.name,
                        pos: r.location,
                    });
                }
                model.records.push(r);
            }
            Item::Function(f) => model.functions.push(f),
            Item::Skipped => {}
        }
    }
    Ok(model)
}

enum Item {
    Record(ComponentRecord),
    Function(FunctionDef),
    Skipped,
}

/// What the previous item in a record body was; drives annotation binding.
#[derive(Clone, Copy)]
enum Previous {
    Open,
    ObjectAnnotation,
    Members { first: usize, count: usize },
    MemberAnnotation,
}

struct Parser<'a> {
    src: &'a str,
    toks: &'a [Token],
    idx: usize,
}

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.idx >= self.toks.len()
    }

    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.idx)
    }

    fn peek_kind(&self, n: usize) -> Option<&'a TokenKind> {
        self.toks.get(self.idx + n).map(|t| &t.kind)
    }

    fn next(&mut self, expected: &str) -> Result<&'a Token, ParseError> {
        let t = self.toks.get(self.idx).ok_or_else(|| ParseError::UnexpectedEof {
            expected: expected.to_string(),
        })?;
        self.idx += 1;
        Ok(t)
    }

    fn expect(&mut self, kind: &TokenKind, expected: &str) -> Result<&'a Token, ParseError> {
        let t = self.next(expected)?;
        if &t.kind == kind {
            Ok(t)
        } else {
            Err(unexpected(t, expected))
        }
    }

    fn expect_ident(&mut self, expected: &str) -> Result<(String, Position), ParseError> {
        let t = self.next(expected)?;
        match &t.kind {
            TokenKind::Ident(s) => Ok((s.clone(), t.pos)),
            _ => Err(unexpected(t, expected)),
        }
    }

    fn top_level_item(&mut self) -> Result<Item, ParseError> {
        let first = self.peek().expect("not at end");
        if first.kind == TokenKind::Sigil {
            return Err(ParseError::DanglingAnnotation { pos: first.pos });
        }
        if first.kind == TokenKind::Keyword(Keyword::Struct)
            && matches!(self.peek_kind(1), Some(TokenKind::Ident(_)))
            && self.peek_kind(2) == Some(&TokenKind::LBrace)
        {
            return self.record().map(Item::Record);
        }
        self.skip_statement()
    }

    /// Skips one top-level statement, keeping it if it is a function
    /// definition.
    fn skip_statement(&mut self) -> Result<Item, ParseError> {
        let start = self.idx;
        let mut depth = 0usize;
        loop {
            let Some(t) = self.peek() else {
                return Ok(Item::Skipped);
            };
            match &t.kind {
                TokenKind::Sigil => return Err(ParseError::DanglingAnnotation { pos: t.pos }),
                TokenKind::LParen => depth += 1,
                TokenKind::RParen => depth = depth.saturating_sub(1),
                TokenKind::Semi if depth == 0 => {
                    self.idx += 1;
                    return Ok(Item::Skipped);
                }
                TokenKind::LBrace if depth == 0 => {
                    let is_function = self.idx > start
                        && self.toks[self.idx - 1].kind == TokenKind::RParen;
                    let open = self.idx;
                    let close = self.matching_brace(open)?;
                    self.idx = close + 1;
                    if is_function {
                        return Ok(self.function_def(start, open, close));
                    }
                    if self.peek_kind(0) == Some(&TokenKind::Semi) {
                        self.idx += 1;
                    }
                    return Ok(Item::Skipped);
                }
                _ => {}
            }
            self.idx += 1;
        }
    }

    fn matching_brace(&self, open: usize) -> Result<usize, ParseError> {
        let mut depth = 0usize;
        for (i, t) in self.toks.iter().enumerate().skip(open) {
            match t.kind {
                TokenKind::LBrace => depth += 1,
                TokenKind::RBrace => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(i);
                    }
                }
                TokenKind::Sigil => return Err(ParseError::DanglingAnnotation { pos: t.pos }),
                _ => {}
            }
        }
        Err(ParseError::UnexpectedEof {
            expected: "`}`".into(),
        })
    }

    fn function_def(&self, start: usize, open: usize, close: usize) -> Item {
        // The name is the identifier in front of the parenthesis that opens
        // the parameter list.
        let mut depth = 0usize;
        let mut name = None;
        for i in (start..open).rev() {
            match self.toks[i].kind {
                TokenKind::RParen => depth += 1,
                TokenKind::LParen => {
                    depth -= 1;
                    if depth == 0 {
                        if let Some(TokenKind::Ident(n)) = i.checked_sub(1).map(|j| &self.toks[j].kind)
                        {
                            name = Some(n.clone());
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
        let Some(name) = name else {
            return Item::Skipped;
        };
        let sig_text = &self.src[self.toks[start].start..self.toks[open].start];
        let body_text = &self.src[self.toks[open].end..self.toks[close].start];
        Item::Function(FunctionDef {
            name,
            signature: collapse_ws(sig_text),
            body: body_text.trim().to_string(),
            location: self.toks[start].pos,
        })
    }

    fn record(&mut self) -> Result<ComponentRecord, ParseError> {
        let kw = self.next("`struct`")?;
        let (name, _) = self.expect_ident("record name")?;
        self.expect(&TokenKind::LBrace, "`{`")?;
        let mut record = ComponentRecord {
            name,
            object_annotation: None,
            members: Vec::new(),
            location: kw.pos,
        };
        let mut names = HashSet::new();
        let mut prev = Previous::Open;
        loop {
            let t = self.peek().ok_or_else(|| ParseError::UnexpectedEof {
                expected: "`}`".into(),
            })?;
            match t.kind {
                TokenKind::RBrace => {
                    self.idx += 1;
                    self.expect(&TokenKind::Semi, "`;` after record")?;
                    return Ok(record);
                }
                TokenKind::Sigil => {
                    let ann = self.annotation()?;
                    prev = bind(&mut record, prev, ann)?;
                }
                _ => {
                    let first = record.members.len();
                    for m in self.member_decl()? {
                        if !names.insert(m.name.clone()) {
                            return Err(ParseError::DuplicateMember {
                                name: m.name,
                                pos: m.location,
                            });
                        }
                        record.members.push(m);
                    }
                    prev = Previous::Members {
                        first,
                        count: record.members.len() - first,
                    };
                }
            }
        }
    }

    fn annotation(&mut self) -> Result<AnnotationNode, ParseError> {
        let sigil = self.expect(&TokenKind::Sigil, "`@`")?;
        let (name, pos) = self.expect_ident("annotation name")?;
        let kind = match name.as_str() {
            "ObjectType" => AnnotationKind::ObjectType,
            "ResourceDef" => AnnotationKind::ResourceDef,
            _ => return Err(ParseError::UnknownAnnotation { name, pos }),
        };
        self.expect(&TokenKind::LParen, "`(`")?;
        let mut args: Vec<(String, ArgValue)> = Vec::new();
        if self.peek_kind(0) == Some(&TokenKind::RParen) {
            self.idx += 1;
        } else {
            loop {
                let (key, key_pos) = self.expect_ident("annotation key")?;
                self.expect(&TokenKind::Equals, "`=`")?;
                let vt = self.next("annotation value")?;
                let value = match &vt.kind {
                    TokenKind::Ident(s) => ArgValue::Ident(s.clone()),
                    TokenKind::Integer(n) => ArgValue::Int(*n),
                    TokenKind::Str(s) => ArgValue::Str(s.clone()),
                    _ => return Err(unexpected(vt, "annotation value")),
                };
                if args.iter().any(|(k, _)| *k == key) {
                    return Err(ParseError::DuplicateKey { key, pos: key_pos });
                }
                args.push((key, value));
                let sep = self.next("`,` or `)`")?;
                match sep.kind {
                    TokenKind::Comma => continue,
                    TokenKind::RParen => break,
                    _ => return Err(unexpected(sep, "`,` or `)`")),
                }
            }
        }
        Ok(AnnotationNode {
            kind,
            args,
            location: sigil.pos,
        })
    }

    /// One declaration statement; may declare several members.
    fn member_decl(&mut self) -> Result<Vec<MemberDecl>, ParseError> {
        let start = self.idx;
        let mut end = start;
        loop {
            let t = self.toks.get(end).ok_or_else(|| ParseError::UnexpectedEof {
                expected: "`;`".into(),
            })?;
            match t.kind {
                TokenKind::Semi => break,
                TokenKind::Sigil | TokenKind::LBrace | TokenKind::RBrace => {
                    return Err(unexpected(t, "member declaration ending in `;`"))
                }
                _ => end += 1,
            }
        }
        let decl = &self.toks[start..end];
        self.idx = end + 1;
        if decl.iter().any(|t| t.kind == TokenKind::LParen) {
            self.behavior(decl).map(|m| vec![m])
        } else {
            self.fields(decl)
        }
    }

    fn behavior(&self, decl: &[Token]) -> Result<MemberDecl, ParseError> {
        // <type...> ( * name ) ( [void] )
        let lp = decl
            .iter()
            .position(|t| t.kind == TokenKind::LParen)
            .expect("caller checked");
        let ret = type_text(&decl[..lp])
            .ok_or_else(|| unexpected(&decl[lp], "return type before `(`"))?;
        let rest = &decl[lp..];
        let expected = "behavior member of the form `type (*name)(void)`";
        let name = match rest {
            [lp1, star, name, rp1, lp2, tail @ ..]
                if lp1.kind == TokenKind::LParen
                    && star.kind == TokenKind::Star
                    && rp1.kind == TokenKind::RParen
                    && lp2.kind == TokenKind::LParen =>
            {
                let TokenKind::Ident(n) = &name.kind else {
                    return Err(unexpected(name, expected));
                };
                let params_ok = match tail {
                    [rp] => rp.kind == TokenKind::RParen,
                    [v, rp] => {
                        v.kind == TokenKind::Ident("void".into()) && rp.kind == TokenKind::RParen
                    }
                    _ => false,
                };
                if !params_ok {
                    return Err(ParseError::BehaviorWithParameters {
                        name: n.clone(),
                        pos: name.pos,
                    });
                }
                n.clone()
            }
            _ => return Err(unexpected(&rest[0], expected)),
        };
        Ok(MemberDecl {
            name,
            kind: MemberKind::BehaviorMember,
            declared_type: ret,
            array_len: None,
            annotation: None,
            location: decl[0].pos,
        })
    }

    fn fields(&self, decl: &[Token]) -> Result<Vec<MemberDecl>, ParseError> {
        let segments: Vec<&[Token]> = decl.split(|t| t.kind == TokenKind::Comma).collect();
        let first = segments[0];
        // The base type is everything up to the first star or the declarator
        // name of the first segment.
        let base_len = declarator_split(first)?;
        let base = &first[..base_len];
        let base_type = type_text(base).ok_or_else(|| {
            first
                .first()
                .map(|t| unexpected(t, "member type"))
                .unwrap_or(ParseError::UnexpectedEof {
                    expected: "member type".into(),
                })
        })?;
        let aggregate = match base {
            [kw, name] if kw.kind == TokenKind::Keyword(Keyword::Struct) => match &name.kind {
                TokenKind::Ident(n) => Some(n.clone()),
                _ => None,
            },
            _ => None,
        };
        let mut out = Vec::new();
        for (i, seg) in segments.iter().enumerate() {
            let declarator = if i == 0 { &seg[base_len..] } else { seg };
            let (stars, name, array_len, pos) = parse_declarator(declarator, decl)?;
            let mut declared_type = base_type.clone();
            if stars > 0 {
                declared_type.push(' ');
                declared_type.push_str(&"*".repeat(stars));
            }
            out.push(MemberDecl {
                name,
                kind: match &aggregate {
                    Some(target) => MemberKind::AggregateMember {
                        target: target.clone(),
                    },
                    None => MemberKind::ScalarField,
                },
                declared_type,
                array_len,
                annotation: None,
                location: if i == 0 { seg[0].pos } else { pos },
            });
        }
        Ok(out)
    }
}

fn bind(
    record: &mut ComponentRecord,
    prev: Previous,
    ann: AnnotationNode,
) -> Result<Previous, ParseError> {
    let pos = ann.location;
    match ann.kind {
        AnnotationKind::ObjectType => match prev {
            Previous::Open => {
                record.object_annotation = Some(ann);
                Ok(Previous::ObjectAnnotation)
            }
            Previous::ObjectAnnotation => Err(ParseError::DuplicateAnnotation { pos }),
            _ if record.object_annotation.is_some() => {
                Err(ParseError::DuplicateAnnotation { pos })
            }
            _ => Err(ParseError::DanglingAnnotation { pos }),
        },
        AnnotationKind::ResourceDef => match prev {
            Previous::Members { first, count: 1 } => {
                record.members[first].annotation = Some(ann);
                Ok(Previous::MemberAnnotation)
            }
            Previous::MemberAnnotation => Err(ParseError::DuplicateAnnotation { pos }),
            _ => Err(ParseError::DanglingAnnotation { pos }),
        },
    }
}

/// Number of leading tokens of `seg` that form the base type.
fn declarator_split(seg: &[Token]) -> Result<usize, ParseError> {
    let star = seg.iter().position(|t| t.kind == TokenKind::Star);
    let name_idx = match star {
        Some(s) => s,
        None => {
            // base type tokens, then the name, then an optional `[n]`
            let bracket = seg
                .iter()
                .position(|t| t.kind == TokenKind::Punct('['))
                .unwrap_or(seg.len());
            bracket.checked_sub(1).ok_or_else(|| match seg.first() {
                Some(t) => unexpected(t, "member declaration"),
                None => ParseError::UnexpectedEof {
                    expected: "member declaration".into(),
                },
            })?
        }
    };
    if name_idx == 0 {
        return Err(unexpected(&seg[0], "member type"));
    }
    Ok(name_idx)
}

fn parse_declarator(
    seg: &[Token],
    whole: &[Token],
) -> Result<(usize, String, Option<u64>, Position), ParseError> {
    let err_tok = seg.first().or(whole.last()).expect("non-empty declaration");
    let stars = seg.iter().take_while(|t| t.kind == TokenKind::Star).count();
    let rest = &seg[stars..];
    let (name_tok, tail) = rest
        .split_first()
        .ok_or_else(|| unexpected(err_tok, "member name"))?;
    let TokenKind::Ident(name) = &name_tok.kind else {
        return Err(unexpected(name_tok, "member name"));
    };
    let array_len = match tail {
        [] => None,
        [lb, n, rb]
            if lb.kind == TokenKind::Punct('[') && rb.kind == TokenKind::Punct(']') =>
        {
            match n.kind {
                TokenKind::Integer(n) => Some(n),
                _ => return Err(unexpected(n, "array length")),
            }
        }
        [t, ..] => return Err(unexpected(t, "`;` or `,`")),
    };
    Ok((stars, name.clone(), array_len, name_tok.pos))
}

/// Joins identifier and keyword tokens with single spaces; `None` if any
/// other token appears.
fn type_text(toks: &[Token]) -> Option<String> {
    if toks.is_empty() {
        return None;
    }
    let mut parts = Vec::with_capacity(toks.len());
    let mut stars = 0;
    for t in toks {
        match &t.kind {
            TokenKind::Ident(s) if stars == 0 => parts.push(s.clone()),
            TokenKind::Keyword(k) if stars == 0 => parts.push(k.as_str().to_string()),
            TokenKind::Star => stars += 1,
            _ => return None,
        }
    }
    let mut out = parts.join(" ");
    if stars > 0 {
        out.push(' ');
        out.push_str(&"*".repeat(stars));
    }
    Some(out)
}

fn unexpected(t: &Token, expected: &str) -> ParseError {
    ParseError::Unexpected {
        expected: expected.to_string(),
        found: t.kind.to_string(),
        pos: t.pos,
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<AnnotatedComponentModel, ParseError> {
        parse_component_source(&SourceUnit::new("t.c", text))
    }

    #[test]
    fn empty_record() {
        let m = parse("struct empty{};").unwrap();
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.records[0].name, "empty");
        assert!(m.records[0].object_annotation.is_none());
        assert!(m.records[0].members.is_empty());
    }

    #[test]
    fn member_kinds() {
        let m = parse(
            "struct silo {\n enum silo_state state;\n void (*fill)(void);\n int (*empty)();\n \
             struct valve *in_valve, *out_valve;\n struct level_sensor high, low;\n int32_t t;\n char tag[8];\n};",
        )
        .unwrap();
        let r = &m.records[0];
        let kinds: Vec<_> = r
            .members
            .iter()
            .map(|m| (m.name.as_str(), m.declared_type.as_str()))
            .collect();
        assert_eq!(
            kinds,
            vec![
                ("state", "enum silo_state"),
                ("fill", "void"),
                ("empty", "int"),
                ("in_valve", "struct valve *"),
                ("out_valve", "struct valve *"),
                ("high", "struct level_sensor"),
                ("low", "struct level_sensor"),
                ("t", "int32_t"),
                ("tag", "char"),
            ]
        );
        assert!(r.members[1].is_behavior());
        assert_eq!(r.members[3].aggregate_target(), Some("valve"));
        assert_eq!(r.members[8].array_len, Some(8));
    }

    #[test]
    fn binds_following_annotations() {
        let m = parse(
            "struct valve{\n @ObjectType(name=\"valve\",id=1664,instanceType=multiple,mandatory=true)\n \
             int state;\n @ResourceDef(id=5850,name=\"state\",operations=R)\n int io;\n};",
        )
        .unwrap();
        let r = &m.records[0];
        let obj = r.object_annotation.as_ref().unwrap();
        assert_eq!(obj.id(), Some(1664));
        assert_eq!(obj.get_text("instanceType").as_deref(), Some("multiple"));
        assert_eq!(r.members[0].annotation.as_ref().unwrap().id(), Some(5850));
        assert!(r.members[1].annotation.is_none());
    }

    #[test]
    fn annotation_before_any_member_dangles() {
        let err = parse("struct a{\n @ResourceDef(id=1,name=\"x\",operations=R)\n int x;\n};").unwrap_err();
        assert!(matches!(err, ParseError::DanglingAnnotation { .. }));
    }

    #[test]
    fn annotation_outside_record_dangles() {
        let err = parse("@ObjectType(name=\"a\",id=1,instanceType=single,mandatory=true)\nstruct a{};")
            .unwrap_err();
        assert_eq!(
            err,
            ParseError::DanglingAnnotation {
                pos: Position { line: 1, column: 1 }
            }
        );
    }

    #[test]
    fn two_annotations_on_one_member() {
        let err = parse(
            "struct a{\n int x;\n @ResourceDef(id=1,name=\"x\",operations=R)\n @ResourceDef(id=2,name=\"y\",operations=R)\n};",
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::DuplicateAnnotation { .. }));
    }

    #[test]
    fn annotation_after_multi_declarator_dangles() {
        let err = parse("struct a{\n int x, y;\n @ResourceDef(id=1,name=\"x\",operations=R)\n};")
            .unwrap_err();
        assert!(matches!(err, ParseError::DanglingAnnotation { .. }));
    }

    #[test]
    fn object_type_must_follow_brace() {
        let err = parse(
            "struct a{\n int x;\n @ObjectType(name=\"a\",id=1,instanceType=single,mandatory=true)\n};",
        )
        .unwrap_err();
        assert!(matches!(err, ParseError::DanglingAnnotation { .. }));
    }

    #[test]
    fn unexpected_token() {
        let err = parse("struct a{\n int = 3;\n};").unwrap_err();
        assert!(matches!(err, ParseError::Unexpected { .. }), "{err:?}");
    }

    #[test]
    fn behavior_with_parameters_is_rejected() {
        let err = parse("struct a{\n void (*f)(int x);\n};").unwrap_err();
        assert!(matches!(err, ParseError::BehaviorWithParameters { .. }));
    }

    #[test]
    fn skips_top_level_statements_and_keeps_functions() {
        let m = parse(
            "#include \"silo.h\"\nstatic struct silo *silo;\nenum silo_state { IDLE, FILLING };\n\
             void\nset_filling_completed()\n{\n  silo->filling_completed = 1;\n}\nstruct a{ int x; };\n\
             static int v[2] = { 1, 2 };\n",
        )
        .unwrap();
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.functions.len(), 1);
        let f = &m.functions[0];
        assert_eq!(f.name, "set_filling_completed");
        assert_eq!(f.signature, "void set_filling_completed()");
        assert_eq!(f.body, "silo->filling_completed = 1;");
    }

    #[test]
    fn duplicate_member_and_record() {
        assert!(matches!(
            parse("struct a{ int x; int x; };").unwrap_err(),
            ParseError::DuplicateMember { .. }
        ));
        assert!(matches!(
            parse("struct a{}; struct a{};").unwrap_err(),
            ParseError::DuplicateRecord { .. }
        ));
    }

    #[test]
    fn deterministic() {
        let text = "struct a{\n int x;\n @ResourceDef(id=1,name=\"x\",operations=R)\n};";
        assert_eq!(parse(text).unwrap(), parse(text).unwrap());
    }
}
