//! Line-oriented rule files, one rule per line, `#` comments.
//!
//! ```text
//! count relationship {head} min=1 max=1
//! bound sel(relationship in {spouse}).age >= 16
//! bound head.age >= 31 when exists(relationship in {grandchild})
//! pairdiff head.age >= sel(relationship in {biological_child}).age + 7
//! valuepair head.gender != sel(relationship in {spouse}).gender
//! valuepair each.a each.b forbid={(y,y)}
//! ```
//!
//! Roles are `head`, `hh` (household-level variables), `all`, `each` and
//! `sel(<var> in {<levels>})`.

use super::{Bound, CmpOp, PairSpec, Role, RuleTemplate};
use crate::error::{Error, Result};

pub fn parse_rules(text: &str) -> Result<Vec<RuleTemplate>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let rule = parse_line(line).map_err(|msg| Error::RuleSyntax { line: i + 1, msg })?;
        out.push(rule);
    }
    Ok(out)
}

/// Parses one rule (no comment, no trailing newline).
pub fn parse_line(line: &str) -> std::result::Result<RuleTemplate, String> {
    let mut c = Cursor { s: line, pos: 0 };
    let kind = c.word()?;
    let rule = match kind.as_str() {
        "count" => {
            let var = c.word()?;
            let levels = c.level_list()?;
            let mut min = 0;
            let mut max = usize::MAX;
            while !c.at_end() {
                let key = c.word()?;
                c.expect("=")?;
                let n = c.int()?;
                let n = usize::try_from(n).map_err(|_| format!("negative {key}"))?;
                match key.as_str() {
                    "min" => min = n,
                    "max" => max = n,
                    _ => return Err(format!("unknown count key {key:?}")),
                }
            }
            RuleTemplate::Count {
                var,
                levels,
                min,
                max,
            }
        }
        "bound" => {
            let (role, var) = c.role_var()?;
            let bound = if c.try_keyword("in") {
                Bound::In(c.level_list()?)
            } else {
                let op = c.op()?;
                Bound::Ordinal {
                    op,
                    value: c.int()?,
                }
            };
            let when = if c.try_keyword("when") {
                c.expect("exists")?;
                c.expect("(")?;
                let v = c.word()?;
                c.expect("in")?;
                let levels = c.level_list()?;
                c.expect(")")?;
                Some((v, levels))
            } else {
                None
            };
            RuleTemplate::AttrBound {
                role,
                var,
                bound,
                when,
            }
        }
        "pairdiff" => {
            let (a, var_a) = c.role_var()?;
            let op = c.op()?;
            let (b, var_b) = c.role_var()?;
            let offset = if c.try_keyword("+") {
                c.int()?
            } else if c.try_keyword("-") {
                -c.int()?
            } else {
                0
            };
            RuleTemplate::PairDiff {
                a,
                var_a,
                op,
                b,
                var_b,
                offset,
            }
        }
        "valuepair" => {
            let (a, var_a) = c.role_var()?;
            let spec = if c.try_keyword("!=") {
                Some(PairSpec::Differ)
            } else if c.try_keyword("==") {
                Some(PairSpec::Agree)
            } else {
                None
            };
            let (b, var_b) = c.role_var()?;
            let spec = match spec {
                Some(s) => s,
                None => {
                    c.expect("forbid")?;
                    c.expect("=")?;
                    c.expect("{")?;
                    let mut pairs = Vec::new();
                    loop {
                        c.expect("(")?;
                        let x = c.label()?;
                        c.expect(",")?;
                        let y = c.label()?;
                        c.expect(")")?;
                        pairs.push((x, y));
                        if !c.try_keyword(",") {
                            break;
                        }
                    }
                    c.expect("}")?;
                    PairSpec::Forbid(pairs)
                }
            };
            RuleTemplate::ValuePair {
                a,
                var_a,
                b,
                var_b,
                spec,
            }
        }
        other => return Err(format!("unknown rule kind {other:?}")),
    };
    if !c.at_end() {
        return Err(format!("trailing input {:?}", c.rest()));
    }
    Ok(rule)
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl Cursor<'_> {
    fn rest(&self) -> &str {
        &self.s[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.s.len() - trimmed.len();
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.s.len()
    }

    fn try_keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(kw) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kw: &str) -> std::result::Result<(), String> {
        if self.try_keyword(kw) {
            Ok(())
        } else {
            Err(format!("expected {kw:?} at {:?}", self.rest()))
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &str {
        self.skip_ws();
        let start = self.pos;
        let len = self
            .rest()
            .find(|ch: char| !f(ch))
            .unwrap_or(self.rest().len());
        self.pos += len;
        &self.s[start..self.pos]
    }

    fn word(&mut self) -> std::result::Result<String, String> {
        let w = self.take_while(|ch| ch.is_alphanumeric() || ch == '_');
        if w.is_empty() {
            Err(format!("expected a name at {:?}", self.rest()))
        } else {
            Ok(w.to_string())
        }
    }

    fn label(&mut self) -> std::result::Result<String, String> {
        let w = self.take_while(|ch| !ch.is_whitespace() && !",(){}".contains(ch));
        if w.is_empty() {
            Err(format!("expected a level label at {:?}", self.rest()))
        } else {
            Ok(w.to_string())
        }
    }

    fn int(&mut self) -> std::result::Result<i64, String> {
        self.skip_ws();
        let neg = self.try_keyword("-");
        let digits = self.take_while(|ch| ch.is_ascii_digit());
        let n: i64 = digits
            .parse()
            .map_err(|_| format!("expected an integer at {:?}", self.rest()))?;
        Ok(if neg { -n } else { n })
    }

    fn op(&mut self) -> std::result::Result<CmpOp, String> {
        for (sym, op) in [
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
        ] {
            if self.try_keyword(sym) {
                return Ok(op);
            }
        }
        Err(format!("expected a comparison at {:?}", self.rest()))
    }

    fn level_list(&mut self) -> std::result::Result<Vec<String>, String> {
        self.expect("{")?;
        let mut out = vec![self.label()?];
        while self.try_keyword(",") {
            out.push(self.label()?);
        }
        self.expect("}")?;
        Ok(out)
    }

    fn role(&mut self) -> std::result::Result<Role, String> {
        let w = self.word()?;
        Ok(match w.as_str() {
            "head" => Role::Head,
            "hh" => Role::Household,
            "all" => Role::All,
            "each" => Role::Each,
            "sel" => {
                self.expect("(")?;
                let var = self.word()?;
                self.expect("in")?;
                let levels = self.level_list()?;
                self.expect(")")?;
                Role::Sel { var, levels }
            }
            other => return Err(format!("unknown role {other:?}")),
        })
    }

    fn role_var(&mut self) -> std::result::Result<(Role, String), String> {
        let role = self.role()?;
        if !self.rest().starts_with('.') {
            return Err(format!("expected '.' after role at {:?}", self.rest()));
        }
        self.pos += 1;
        Ok((role, self.word()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_kind() {
        let rules = parse_rules(
            "# comment\n\
             count relationship {head} min=1 max=1\n\
             bound sel(relationship in {spouse,partner}).age >= 16\n\
             bound head.age >= 31 when exists(relationship in {grandchild})\n\
             pairdiff head.age >= sel(relationship in {biological_child}).age + 7\n\
             pairdiff head.age <= sel(relationship in {spouse}).age - 3\n\
             valuepair head.gender != sel(relationship in {spouse}).gender\n\
             valuepair each.a each.b forbid={(y,y),(x,y)}\n",
        )
        .unwrap();
        assert_eq!(rules.len(), 7);
        assert_eq!(
            rules[0],
            RuleTemplate::Count {
                var: "relationship".into(),
                levels: vec!["head".into()],
                min: 1,
                max: 1
            }
        );
        match &rules[4] {
            RuleTemplate::PairDiff { offset, op, .. } => {
                assert_eq!(*offset, -3);
                assert_eq!(*op, CmpOp::Le);
            }
            r => panic!("{r:?}"),
        }
        match &rules[6] {
            RuleTemplate::ValuePair {
                spec: PairSpec::Forbid(p),
                ..
            } => assert_eq!(p.len(), 2),
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(
            parse_rules("count a {x} min=0\nfrobnicate\n"),
            Err(Error::RuleSyntax { line: 2, .. })
        ));
        assert!(parse_rules("bound boss.age >= 3\n").is_err());
        assert!(parse_rules("bound head.age >= 3 extra\n").is_err());
    }
}
