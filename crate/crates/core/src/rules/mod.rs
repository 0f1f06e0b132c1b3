//! Structural-zero rules: which household configurations are impossible.
//!
//! Rules are written against the original household layout (the head as an
//! ordinary individual row). A [`RuleSet`] compiled for a head-moved schema
//! reads the head's values from the household-level copies, so the same rule
//! file serves both layouts.

mod count;
mod parse;

use std::fmt;

use crate::error::{Error, Result};
use crate::schema::{DatasetSchema, Household, MISSING};

pub(crate) use count::walk;
pub use count::{
    count_combinations, count_feasible, count_structural_zeros, enumerate_feasible, CountMethod,
    ENUMERATION_LIMIT, ORACLE_LIMIT,
};
pub use parse::parse_rules;

/// Who a rule clause talks about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Role {
    /// The household head (relationship at the head level).
    Head,
    /// The household record itself; its variables are household-level.
    Household,
    /// Every member, paired with every other member in pair rules.
    All,
    /// Every member, paired with itself in pair rules.
    Each,
    /// Members whose `var` takes one of `levels`.
    Sel { var: String, levels: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Ge,
    Lt,
    Gt,
}

impl CmpOp {
    #[inline]
    fn holds(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Le => a <= b,
            CmpOp::Ge => a >= b,
            CmpOp::Lt => a < b,
            CmpOp::Gt => a > b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Bound {
    /// Ordinal comparison against a constant.
    Ordinal { op: CmpOp, value: i64 },
    /// Membership in a level set.
    In(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairSpec {
    /// Values must differ (labels compared).
    Differ,
    /// Values must agree (labels compared).
    Agree,
    /// Explicit forbidden label pairs.
    Forbid(Vec<(String, String)>),
}

/// The closed set of rule templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleTemplate {
    /// The number of members with `var` in `levels` lies in `[min, max]`.
    Count {
        var: String,
        levels: Vec<String>,
        min: usize,
        max: usize,
    },
    /// Every member of `role` satisfies `bound` on `var`; with `when`, only
    /// when some member has the given variable in the given level set.
    AttrBound {
        role: Role,
        var: String,
        bound: Bound,
        when: Option<(String, Vec<String>)>,
    },
    /// `a.var_a op b.var_b + offset` for every pair of distinct members.
    PairDiff {
        a: Role,
        var_a: String,
        op: CmpOp,
        b: Role,
        var_b: String,
        offset: i64,
    },
    /// No pair of members takes a forbidden value combination.
    ValuePair {
        a: Role,
        var_a: String,
        b: Role,
        var_b: String,
        spec: PairSpec,
    },
}

/// How a rule behaves in the layout it was compiled for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleStatus {
    Active,
    /// Always satisfied in this layout (e.g. "exactly one head" after the
    /// head has been moved to the household level).
    Eliminated,
    /// Touches only the head's values, which are now household-level
    /// variables; still enforced.
    HeadOnly,
}

#[derive(Debug, Clone)]
struct LevelSet(Vec<bool>);

impl LevelSet {
    #[inline]
    fn contains(&self, code: u16) -> bool {
        self.0.get(code as usize).copied().unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy)]
enum VarRef {
    /// Individual variable, original coding.
    Ind(usize),
    /// Household variable of the compiled layout.
    Hh(usize),
}

#[derive(Debug, Clone)]
enum CRole {
    Head,
    Household,
    All,
    Each,
    Sel(usize, LevelSet),
}

#[derive(Debug, Clone)]
enum CBound {
    Ordinal(CmpOp, i64),
    In(LevelSet),
}

#[derive(Debug, Clone)]
enum Compiled {
    Count {
        var: usize,
        set: LevelSet,
        min: usize,
        max: usize,
    },
    AttrBound {
        role: CRole,
        var: VarRef,
        bound: CBound,
        when: Option<(usize, LevelSet)>,
    },
    PairDiff {
        a: CRole,
        var_a: VarRef,
        op: CmpOp,
        b: CRole,
        var_b: VarRef,
        offset: i64,
    },
    ValuePair {
        a: CRole,
        var_a: VarRef,
        b: CRole,
        var_b: VarRef,
        width: usize,
        forbidden: Vec<bool>,
    },
}

#[derive(Debug, Clone)]
enum Layout {
    /// Every member is a stored row; the head (if configured) is found by
    /// its relationship code.
    Flat { head: Option<(usize, u16)> },
    /// Member 0 is the head, read from household-level copies.
    Moved {
        rel: usize,
        head_code: u16,
        head_vars: Vec<Option<usize>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Member {
    Person(usize),
    Household,
}

/// Read-only view of one household in the compiled layout.
pub(crate) struct View<'a> {
    layout: &'a Layout,
    p: usize,
    hh: &'a [u16],
    rows: &'a [u16],
}

impl View<'_> {
    #[inline]
    fn persons(&self) -> usize {
        let stored = self.rows.len().checked_div(self.p).unwrap_or(0);
        match self.layout {
            Layout::Flat { .. } => stored,
            Layout::Moved { .. } => stored + 1,
        }
    }

    /// Individual variable `k` of member `person`, in original coding.
    #[inline]
    fn ind(&self, person: usize, k: usize) -> u16 {
        match self.layout {
            Layout::Flat { .. } => self.rows[person * self.p + k],
            Layout::Moved {
                rel,
                head_code,
                head_vars,
            } => {
                if person == 0 {
                    match head_vars[k] {
                        Some(idx) => self.hh[idx],
                        None => *head_code,
                    }
                } else {
                    let v = self.rows[(person - 1) * self.p + k];
                    if k == *rel && v >= *head_code {
                        v + 1
                    } else {
                        v
                    }
                }
            }
        }
    }

    #[inline]
    fn is_head(&self, person: usize) -> bool {
        match self.layout {
            Layout::Flat {
                head: Some((rel, code)),
            } => self.ind(person, *rel) == *code,
            Layout::Flat { head: None } => false,
            Layout::Moved { .. } => person == 0,
        }
    }

    #[inline]
    fn value(&self, m: Member, var: VarRef) -> u16 {
        match (m, var) {
            (Member::Person(p), VarRef::Ind(k)) => self.ind(p, k),
            (_, VarRef::Hh(k)) => self.hh[k],
            (Member::Household, VarRef::Ind(_)) => unreachable!("checked at compile time"),
        }
    }

    #[inline]
    fn is_member(&self, role: &CRole, person: usize) -> bool {
        match role {
            CRole::Head => self.is_head(person),
            CRole::All | CRole::Each => true,
            CRole::Sel(k, set) => set.contains(self.ind(person, *k)),
            CRole::Household => false,
        }
    }

    /// Calls `f` for each member of `role`; stops early when `f` is false.
    #[inline]
    fn all_members(&self, role: &CRole, mut f: impl FnMut(Member) -> bool) -> bool {
        if let CRole::Household = role {
            return f(Member::Household);
        }
        (0..self.persons()).all(|p| !self.is_member(role, p) || f(Member::Person(p)))
    }
}

#[derive(Debug, Clone)]
pub struct RuleSet {
    templates: Vec<RuleTemplate>,
    compiled: Vec<Compiled>,
    status: Vec<RuleStatus>,
    layout: Layout,
    p: usize,
}

impl RuleSet {
    pub fn empty(schema: &DatasetSchema) -> Self {
        Self::compile(Vec::new(), schema).expect("empty rule set always compiles")
    }

    /// Parses rule text and compiles it for `schema`.
    pub fn from_text(text: &str, schema: &DatasetSchema) -> Result<Self> {
        Self::compile(parse_rules(text)?, schema)
    }

    pub fn compile(templates: Vec<RuleTemplate>, schema: &DatasetSchema) -> Result<Self> {
        let layout = match &schema.head_move {
            Some(hm) => Layout::Moved {
                rel: hm.relationship,
                head_code: hm.head_code,
                head_vars: hm.head_vars.clone(),
            },
            None => Layout::Flat {
                head: schema.relationship_index().zip(schema.head_code()),
            },
        };
        let cx = Compiler {
            schema,
            layout: &layout,
        };
        let mut compiled = Vec::with_capacity(templates.len());
        let mut status = Vec::with_capacity(templates.len());
        for t in &templates {
            let c = cx.compile(t)?;
            status.push(cx.status(t, &c));
            compiled.push(c);
        }
        Ok(Self {
            templates,
            compiled,
            status,
            layout,
            p: schema.p(),
        })
    }

    /// Recompiles the same templates for another layout of the data.
    pub fn recompile(&self, schema: &DatasetSchema) -> Result<Self> {
        Self::compile(self.templates.clone(), schema)
    }

    pub fn templates(&self) -> &[RuleTemplate] {
        &self.templates
    }

    pub fn status(&self) -> &[RuleStatus] {
        &self.status
    }

    /// Indices of rules that can never fail in this layout.
    pub fn eliminated(&self) -> Vec<usize> {
        (0..self.status.len())
            .filter(|&i| self.status[i] == RuleStatus::Eliminated)
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.compiled.is_empty()
    }

    pub fn len(&self) -> usize {
        self.compiled.len()
    }

    /// True iff `h` satisfies every rule. Errors if `h` has missing cells.
    pub fn is_feasible(&self, h: &Household) -> Result<bool> {
        if !h.is_complete() {
            return Err(Error::IncompleteHousehold);
        }
        Ok(self.feasible_raw(&h.household_values, &h.flat_individuals()))
    }

    /// Indices of the rules `h` violates.
    pub fn violations(&self, h: &Household) -> Result<Vec<usize>> {
        if !h.is_complete() {
            return Err(Error::IncompleteHousehold);
        }
        let rows = h.flat_individuals();
        let view = self.view(&h.household_values, &rows);
        Ok((0..self.compiled.len())
            .filter(|&i| !eval(&self.compiled[i], &view))
            .collect())
    }

    /// Feasibility of a complete household given as household values and
    /// row-major individual values in the compiled layout.
    #[inline]
    pub fn feasible_raw(&self, hh: &[u16], rows: &[u16]) -> bool {
        debug_assert!(!hh.contains(&MISSING) && !rows.contains(&MISSING));
        let view = self.view(hh, rows);
        self.compiled
            .iter()
            .zip(&self.status)
            .all(|(c, s)| *s == RuleStatus::Eliminated || eval(c, &view))
    }

    /// Like [`feasible_raw`](Self::feasible_raw) but evaluates every rule,
    /// including eliminated ones.
    pub fn feasible_all_rules(&self, hh: &[u16], rows: &[u16]) -> bool {
        let view = self.view(hh, rows);
        self.compiled.iter().all(|c| eval(c, &view))
    }

    #[inline]
    fn view<'a>(&'a self, hh: &'a [u16], rows: &'a [u16]) -> View<'a> {
        View {
            layout: &self.layout,
            p: self.p,
            hh,
            rows,
        }
    }

    pub(crate) fn compiled_count_only(&self) -> Option<Vec<(usize, Vec<bool>, usize, usize)>> {
        self.compiled
            .iter()
            .map(|c| match c {
                Compiled::Count { var, set, min, max } => Some((*var, set.0.clone(), *min, *max)),
                _ => None,
            })
            .collect()
    }
}

#[inline]
fn eval(rule: &Compiled, v: &View) -> bool {
    match rule {
        Compiled::Count { var, set, min, max } => {
            let n = (0..v.persons())
                .filter(|&p| set.contains(v.ind(p, *var)))
                .count();
            *min <= n && n <= *max
        }
        Compiled::AttrBound {
            role,
            var,
            bound,
            when,
        } => {
            if let Some((k, set)) = when {
                if !(0..v.persons()).any(|p| set.contains(v.ind(p, *k))) {
                    return true;
                }
            }
            v.all_members(role, |m| {
                let x = v.value(m, *var);
                match bound {
                    CBound::Ordinal(op, c) => op.holds(x as i64, *c),
                    CBound::In(set) => set.contains(x),
                }
            })
        }
        Compiled::PairDiff {
            a,
            var_a,
            op,
            b,
            var_b,
            offset,
        } => v.all_members(a, |ma| {
            let xa = v.value(ma, *var_a) as i64;
            v.all_members(b, |mb| {
                ma == mb || op.holds(xa, v.value(mb, *var_b) as i64 + offset)
            })
        }),
        Compiled::ValuePair {
            a,
            var_a,
            b,
            var_b,
            width,
            forbidden,
        } => {
            let bad = |ma: Member, mb: Member| {
                forbidden[v.value(ma, *var_a) as usize * width + v.value(mb, *var_b) as usize]
            };
            if matches!((a, b), (CRole::Each, CRole::Each)) {
                (0..v.persons()).all(|p| !bad(Member::Person(p), Member::Person(p)))
            } else {
                v.all_members(a, |ma| v.all_members(b, |mb| ma == mb || !bad(ma, mb)))
            }
        }
    }
}

struct Compiler<'a> {
    schema: &'a DatasetSchema,
    layout: &'a Layout,
}

impl Compiler<'_> {
    fn original(&self) -> &DatasetSchema {
        self.schema.original()
    }

    fn ind_var(&self, name: &str) -> Result<usize> {
        self.original()
            .individual_index(name)
            .ok_or_else(|| Error::RuleReference(format!("unknown individual variable {name}")))
    }

    fn level_set(&self, k: usize, labels: &[String], household: bool) -> Result<LevelSet> {
        let spec = if household {
            &self.schema.household_vars[k]
        } else {
            &self.original().individual_vars[k]
        };
        let mut set = vec![false; spec.cardinality()];
        for l in labels {
            let c = spec.code_of(l).ok_or_else(|| {
                Error::RuleReference(format!("unknown level {l:?} of {}", spec.name))
            })?;
            set[c as usize] = true;
        }
        Ok(LevelSet(set))
    }

    fn role(&self, r: &Role) -> Result<CRole> {
        Ok(match r {
            Role::Head => {
                if matches!(self.layout, Layout::Flat { head: None }) {
                    return Err(Error::RuleReference(
                        "head, but no relationship variable is configured".into(),
                    ));
                }
                CRole::Head
            }
            Role::Household => CRole::Household,
            Role::All => CRole::All,
            Role::Each => CRole::Each,
            Role::Sel { var, levels } => {
                let k = self.ind_var(var)?;
                CRole::Sel(k, self.level_set(k, levels, false)?)
            }
        })
    }

    fn var(&self, role: &Role, name: &str) -> Result<VarRef> {
        match role {
            Role::Household => self
                .schema
                .household_index(name)
                .map(VarRef::Hh)
                .ok_or_else(|| Error::RuleReference(format!("unknown household variable {name}"))),
            _ => self.ind_var(name).map(VarRef::Ind),
        }
    }

    fn spec(&self, v: VarRef) -> &crate::schema::VariableSpec {
        match v {
            VarRef::Ind(k) => &self.original().individual_vars[k],
            VarRef::Hh(k) => &self.schema.household_vars[k],
        }
    }

    fn require_ordinal(&self, v: VarRef) -> Result<()> {
        let spec = self.spec(v);
        if spec.ordinal {
            Ok(())
        } else {
            Err(Error::RuleReference(format!(
                "{} in an ordinal comparison, but it is not ordinal",
                spec.name
            )))
        }
    }

    fn compile(&self, t: &RuleTemplate) -> Result<Compiled> {
        Ok(match t {
            RuleTemplate::Count {
                var,
                levels,
                min,
                max,
            } => {
                if min > max {
                    return Err(Error::RuleReference(format!("count bounds {min}>{max}")));
                }
                let k = self.ind_var(var)?;
                Compiled::Count {
                    var: k,
                    set: self.level_set(k, levels, false)?,
                    min: *min,
                    max: *max,
                }
            }
            RuleTemplate::AttrBound {
                role,
                var,
                bound,
                when,
            } => {
                let cvar = self.var(role, var)?;
                let bound = match bound {
                    Bound::Ordinal { op, value } => {
                        self.require_ordinal(cvar)?;
                        CBound::Ordinal(*op, *value)
                    }
                    Bound::In(labels) => match cvar {
                        VarRef::Ind(k) => CBound::In(self.level_set(k, labels, false)?),
                        VarRef::Hh(k) => CBound::In(self.level_set(k, labels, true)?),
                    },
                };
                let when = match when {
                    Some((w, labels)) => {
                        let k = self.ind_var(w)?;
                        Some((k, self.level_set(k, labels, false)?))
                    }
                    None => None,
                };
                Compiled::AttrBound {
                    role: self.role(role)?,
                    var: cvar,
                    bound,
                    when,
                }
            }
            RuleTemplate::PairDiff {
                a,
                var_a,
                op,
                b,
                var_b,
                offset,
            } => {
                let (va, vb) = (self.var(a, var_a)?, self.var(b, var_b)?);
                self.require_ordinal(va)?;
                self.require_ordinal(vb)?;
                Compiled::PairDiff {
                    a: self.role(a)?,
                    var_a: va,
                    op: *op,
                    b: self.role(b)?,
                    var_b: vb,
                    offset: *offset,
                }
            }
            RuleTemplate::ValuePair {
                a,
                var_a,
                b,
                var_b,
                spec,
            } => {
                if matches!(a, Role::Each) != matches!(b, Role::Each) {
                    return Err(Error::RuleReference(
                        "`each` must appear on both sides of a value pair".into(),
                    ));
                }
                let (va, vb) = (self.var(a, var_a)?, self.var(b, var_b)?);
                let (sa, sb) = (self.spec(va), self.spec(vb));
                let width = sb.cardinality();
                let mut forbidden = vec![false; sa.cardinality() * width];
                for (i, la) in sa.levels.iter().enumerate() {
                    for (j, lb) in sb.levels.iter().enumerate() {
                        forbidden[i * width + j] = match spec {
                            PairSpec::Differ => la == lb,
                            PairSpec::Agree => la != lb,
                            PairSpec::Forbid(_) => false,
                        };
                    }
                }
                if let PairSpec::Forbid(pairs) = spec {
                    for (la, lb) in pairs {
                        let i = sa.code_or_err(la)? as usize;
                        let j = sb.code_or_err(lb)? as usize;
                        forbidden[i * width + j] = true;
                    }
                }
                Compiled::ValuePair {
                    a: self.role(a)?,
                    var_a: va,
                    b: self.role(b)?,
                    var_b: vb,
                    width,
                    forbidden,
                }
            }
        })
    }

    fn status(&self, t: &RuleTemplate, c: &Compiled) -> RuleStatus {
        let Layout::Moved { rel, head_code, .. } = self.layout else {
            return RuleStatus::Active;
        };
        match c {
            Compiled::Count { var, set, min, max } if var == rel => {
                // Only the head can match: the count is fixed at 0 or 1.
                let others = set
                    .0
                    .iter()
                    .enumerate()
                    .any(|(code, &m)| m && code as u16 != *head_code);
                let fixed = usize::from(set.contains(*head_code));
                if !others && *min <= fixed && fixed <= *max {
                    RuleStatus::Eliminated
                } else {
                    RuleStatus::Active
                }
            }
            _ => match t {
                RuleTemplate::AttrBound {
                    role: Role::Head,
                    when: None,
                    ..
                } => RuleStatus::HeadOnly,
                _ => RuleStatus::Active,
            },
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Head => write!(f, "head"),
            Role::Household => write!(f, "hh"),
            Role::All => write!(f, "all"),
            Role::Each => write!(f, "each"),
            Role::Sel { var, levels } => write!(f, "sel({var} in {{{}}})", levels.join(",")),
        }
    }
}

impl fmt::Display for RuleTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleTemplate::Count {
                var,
                levels,
                min,
                max,
            } => write!(
                f,
                "count {var} {{{}}} min={min} max={max}",
                levels.join(",")
            ),
            RuleTemplate::AttrBound {
                role,
                var,
                bound,
                when,
            } => {
                write!(f, "bound {role}.{var} ")?;
                match bound {
                    Bound::Ordinal { op, value } => write!(f, "{} {value}", op.symbol())?,
                    Bound::In(l) => write!(f, "in {{{}}}", l.join(","))?,
                }
                if let Some((w, l)) = when {
                    write!(f, " when exists({w} in {{{}}})", l.join(","))?;
                }
                Ok(())
            }
            RuleTemplate::PairDiff {
                a,
                var_a,
                op,
                b,
                var_b,
                offset,
            } => {
                write!(f, "pairdiff {a}.{var_a} {} {b}.{var_b}", op.symbol())?;
                match offset {
                    0 => Ok(()),
                    o if *o > 0 => write!(f, " + {o}"),
                    o => write!(f, " - {}", -o),
                }
            }
            RuleTemplate::ValuePair {
                a,
                var_a,
                b,
                var_b,
                spec,
            } => match spec {
                PairSpec::Differ => write!(f, "valuepair {a}.{var_a} != {b}.{var_b}"),
                PairSpec::Agree => write!(f, "valuepair {a}.{var_a} == {b}.{var_b}"),
                PairSpec::Forbid(pairs) => {
                    let list: Vec<String> =
                        pairs.iter().map(|(x, y)| format!("({x},{y})")).collect();
                    write!(
                        f,
                        "valuepair {a}.{var_a} {b}.{var_b} forbid={{{}}}",
                        list.join(",")
                    )
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{head_moved_schema, parse_schema};

    pub(crate) const MINI: &str = "var sex scope=individual levels=m,f\n\
        var age scope=individual levels=0..95 ordinal\n\
        var rel scope=individual levels=head,spouse,child\n\
        sizes=2,3\nrelationship=rel\nhead=head\n";

    const RULES: &str = "count rel {head} min=1 max=1\n\
        count rel {spouse} min=0 max=1\n\
        bound head.age >= 16\n\
        bound sel(rel in {spouse}).age >= 16\n\
        valuepair head.sex != sel(rel in {spouse}).sex\n\
        pairdiff head.age <= sel(rel in {spouse}).age + 49\n\
        pairdiff head.age >= sel(rel in {spouse}).age - 49\n";

    fn hh(rows: &[[u16; 3]]) -> Household {
        Household {
            id: "x".into(),
            size: rows.len(),
            household_values: vec![(rows.len() - 2) as u16],
            individuals: rows.iter().map(|r| r.to_vec()).collect(),
        }
    }

    #[test]
    fn couples() {
        let s = parse_schema(MINI).unwrap();
        let r = RuleSet::from_text(RULES, &s).unwrap();
        assert!(r.is_feasible(&hh(&[[0, 30, 0], [1, 28, 1]])).unwrap());
        assert!(!r.is_feasible(&hh(&[[0, 30, 0], [1, 28, 0]])).unwrap());
        assert!(!r.is_feasible(&hh(&[[0, 20, 0], [1, 70, 1]])).unwrap());
        assert!(!r.is_feasible(&hh(&[[0, 30, 0], [0, 28, 1]])).unwrap());
        assert!(!r.is_feasible(&hh(&[[0, 30, 0], [1, 3, 1]])).unwrap());
    }

    #[test]
    fn missing_cells_are_an_error() {
        let s = parse_schema(MINI).unwrap();
        let r = RuleSet::from_text(RULES, &s).unwrap();
        let mut h = hh(&[[0, 30, 0], [1, 28, 1]]);
        h.individuals[1][1] = MISSING;
        assert!(matches!(r.is_feasible(&h), Err(Error::IncompleteHousehold)));
    }

    #[test]
    fn head_move_eliminates_unique_head_rule() {
        let s = parse_schema(MINI).unwrap();
        let moved = head_moved_schema(&s).unwrap();
        let r = RuleSet::from_text(RULES, &moved).unwrap();
        assert_eq!(r.eliminated(), vec![0]);
        assert_eq!(r.status()[2], RuleStatus::HeadOnly);
        // Household values: size, sex_of_HH, age_of_HH; rows: sex, age, rel(spouse=0).
        let ok = Household {
            id: "x".into(),
            size: 2,
            household_values: vec![0, 0, 30],
            individuals: vec![vec![1, 28, 0]],
        };
        assert!(r.is_feasible(&ok).unwrap());
        let young_head = Household {
            household_values: vec![0, 0, 12],
            ..ok.clone()
        };
        assert!(!r.is_feasible(&young_head).unwrap());
    }

    #[test]
    fn ordinal_rules_need_ordinal_vars() {
        let s = parse_schema(MINI).unwrap();
        assert!(RuleSet::from_text("pairdiff head.sex >= sel(rel in {spouse}).sex\n", &s).is_err());
        assert!(RuleSet::from_text("bound head.colour >= 3\n", &s).is_err());
    }

    #[test]
    fn templates_display_and_reparse() {
        let parsed = parse_rules(RULES).unwrap();
        let text: String = parsed.iter().map(|t| format!("{t}\n")).collect();
        assert_eq!(parse_rules(&text).unwrap(), parsed);
    }
}
