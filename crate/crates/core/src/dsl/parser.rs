use crate::block::{self, Facing};
use crate::geom::Coord;

use super::lexer::{tokenize, Tok, Token};
use super::{DslError, DslProgram, Span, SpannedStatement, Statement};

/// Parses blueprint source text. Block ids are resolved against the registry.
pub fn parse(src: &str) -> Result<DslProgram, DslError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut statements = Vec::new();
    while !p.at_eof() {
        statements.push(p.statement()?);
    }
    if statements.is_empty() {
        let t = p.peek();
        return Err(DslError::Syntax {
            span: t.span,
            expected: "a statement".into(),
            found: t.tok.to_string(),
        });
    }
    Ok(DslProgram { statements })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn at_eof(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, DslError> {
        let t = self.peek();
        Err(DslError::Syntax {
            span: t.span,
            expected: expected.to_string(),
            found: t.tok.to_string(),
        })
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), DslError> {
        if self.peek().tok == tok {
            self.next();
            Ok(())
        } else {
            self.fail(expected)
        }
    }

    fn keyword_is(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn statement(&mut self) -> Result<SpannedStatement, DslError> {
        let span = self.peek().span;
        let kw = match &self.peek().tok {
            Tok::Ident(s) => s.clone(),
            _ => return self.fail("a statement keyword"),
        };
        let statement = match kw.as_str() {
            "place" => {
                self.next();
                let (block, block_span) = self.block_id()?;
                let at = self.coord()?;
                let facing = if self.keyword_is("facing") {
                    self.next();
                    Some(self.direction()?)
                } else {
                    None
                };
                if facing.is_some() && !block::lookup(&block).is_some_and(|d| d.orientable) {
                    return Err(DslError::NotOrientable {
                        span: block_span,
                        id: block,
                    });
                }
                Statement::Place { block, at, facing }
            }
            "fill" | "shell" | "line" => {
                self.next();
                let (block, _) = self.block_id()?;
                let from = self.coord()?;
                let to = self.coord()?;
                match kw.as_str() {
                    "fill" => Statement::Fill { block, from, to },
                    "shell" => Statement::Shell { block, from, to },
                    _ => Statement::Line { block, from, to },
                }
            }
            "pyramid" => {
                self.next();
                let (block, _) = self.block_id()?;
                let corner = self.coord()?;
                let base = self.positive("a base size >= 1")?;
                let step = if self.keyword_is("step") {
                    self.next();
                    self.positive("a step >= 1")?
                } else {
                    1
                };
                Statement::Pyramid {
                    block,
                    corner,
                    base,
                    step,
                }
            }
            _ => return self.fail("one of `place`, `fill`, `shell`, `line`, `pyramid`"),
        };
        Ok(SpannedStatement { statement, span })
    }

    fn block_id(&mut self) -> Result<(String, Span), DslError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Ident(id) => {
                if block::lookup(&id).is_none() {
                    return Err(DslError::UnknownBlockId { span: t.span, id });
                }
                self.next();
                Ok((id, t.span))
            }
            _ => self.fail("a block id"),
        }
    }

    fn int(&mut self) -> Result<i32, DslError> {
        match self.peek().tok {
            Tok::Int(n) if i32::try_from(n).is_ok() && n.abs() <= 1 << 20 => {
                self.next();
                Ok(n as i32)
            }
            _ => self.fail("an integer"),
        }
    }

    fn positive(&mut self, expected: &str) -> Result<u32, DslError> {
        match self.peek().tok {
            Tok::Int(n) if (1..=1 << 20).contains(&n) => {
                self.next();
                Ok(n as u32)
            }
            _ => self.fail(expected),
        }
    }

    fn coord(&mut self) -> Result<Coord, DslError> {
        let open = self.peek().span;
        self.expect(Tok::LParen, "`(`")?;
        let x = self.int()?;
        self.expect(Tok::Comma, "`,`")?;
        let y = self.int()?;
        self.expect(Tok::Comma, "`,`")?;
        let z = self.int()?;
        self.expect(Tok::RParen, &format!("`)` closing the `(` at {open}"))?;
        Ok(Coord::new(x, y, z))
    }

    fn direction(&mut self) -> Result<Facing, DslError> {
        if let Tok::Ident(s) = &self.peek().tok {
            if let Ok(f) = s.parse::<Facing>() {
                self.next();
                return Ok(f);
            }
        }
        self.fail("one of `north`, `south`, `east`, `west`")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn place_with_facing() {
        let p = parse("place oak_door (3,1,0) facing south").unwrap();
        assert_eq!(
            p.iter().collect::<Vec<_>>(),
            vec![&Statement::Place {
                block: "oak_door".into(),
                at: Coord::new(3, 1, 0),
                facing: Some(Facing::South)
            }]
        );
    }

    #[test]
    fn fill_corners() {
        let p = parse("fill stone (0,0,0) (1,0,1)").unwrap();
        assert_eq!(
            p.statements[0].statement,
            Statement::Fill {
                block: "stone".into(),
                from: Coord::new(0, 0, 0),
                to: Coord::new(1, 0, 1)
            }
        );
    }

    #[test]
    fn unclosed_paren() {
        let err = parse("fill stone (0,0,0 (1,0,1)").unwrap_err();
        assert_eq!(
            err,
            DslError::Syntax {
                span: Span { line: 1, column: 19 },
                expected: "`)` closing the `(` at 1:12".into(),
                found: "`(`".into()
            }
        );
    }

    #[test]
    fn unknown_block_at_parse_time() {
        let err = parse("# walls\nfill granite_bricks (0,0,0) (1,1,1)").unwrap_err();
        assert_eq!(
            err,
            DslError::UnknownBlockId {
                span: Span { line: 2, column: 6 },
                id: "granite_bricks".into()
            }
        );
        assert!(matches!(parse("place air (0,0,0)"), Err(DslError::UnknownBlockId { .. })));
    }

    #[test]
    fn pyramid_defaults_step_to_one() {
        let p = parse("pyramid snow_block (0,0,0) 5\npyramid ice (0,0,0) 5 step 2").unwrap();
        let steps: Vec<_> = p
            .iter()
            .map(|s| match s {
                Statement::Pyramid { step, .. } => *step,
                _ => 0,
            })
            .collect();
        assert_eq!(steps, vec![1, 2]);
        assert!(parse("pyramid ice (0,0,0) 0").is_err());
        assert!(parse("pyramid ice (0,0,0) 3 step 0").is_err());
    }

    #[test]
    fn facing_on_plain_block_rejected() {
        assert!(matches!(
            parse("place stone (0,0,0) facing east"),
            Err(DslError::NotOrientable { .. })
        ));
    }

    #[test]
    fn empty_and_comment_only_programs_rejected() {
        assert!(parse("").is_err());
        assert!(parse("# nothing here\n").is_err());
    }

    #[test]
    fn display_reparses_identically() {
        let src = "fill oak_planks (0,0,0) (7,0,7) # floor\nplace red_bed (2,1,2) facing east\nline glass (0,2,0) (3,2,0)\nshell stone (0,0,0) (2,2,2)\npyramid ice (0,0,0) 5 step 2\n";
        let p = parse(src).unwrap();
        let again = parse(&p.to_string()).unwrap();
        assert_eq!(
            p.iter().collect::<Vec<_>>(),
            again.iter().collect::<Vec<_>>()
        );
    }
}
