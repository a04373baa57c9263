//! Evaluators for three homomorphism-closed query classes: unions of
//! conjunctive queries, regular path queries with inverses, and negation-free
//! Datalog.
//!
//! All three classes are closed under homomorphisms by construction (and in
//! particular monotone), which the rewriting and reduction machinery relies
//! on.
//!
//! Text formats:
//!
//! - UCQ: one conjunctive query per line, `q :- r(W,X), s(X,Y).`; multiple
//!   lines are disjuncts.
//! - Datalog: one rule per line, `u(X) :- r(X,Y).`, with the 0-ary goal
//!   written `goal :- u(X), t(X,Y).`. Predicates are written in lowercase,
//!   variables in uppercase.
//! - RPQ: a single expression, e.g. `R S* T`; juxtaposition is
//!   concatenation, `|` is union, `*`/`+` are Kleene star and plus, and a
//!   `-` suffix on a relation token takes the inverse orientation.
//!
//! Query relation names are matched against instance relations exactly when
//! possible, otherwise case-insensitively (so the lowercase Datalog
//! convention works against instances with capitalized relation names).
//! Relation names that match nothing are allowed and simply never hold.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::hom::{find_homomorphism, SearchLimits};
use crate::instance::{
    statements, Constant, Fact, Instance, OrientedRel, Relation,
};
use crate::{Error, Result};

pub type Var = String;

/// A binary atom over variables.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Atom {
    pub relation: Relation,
    pub subject: Var,
    pub object: Var,
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.relation, self.subject, self.object)
    }
}

/// A conjunctive query: an existentially quantified conjunction of atoms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cq {
    pub atoms: Vec<Atom>,
}

impl Cq {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Invalid("a conjunctive query needs at least one atom".into()));
        }
        Ok(Cq { atoms })
    }

    /// The canonical instance: variables frozen into constants.
    pub fn canonical_instance(&self) -> Instance {
        Instance::new(
            self.atoms.iter().map(|a| Fact::new(&a.relation, &a.subject, &a.object)),
        )
    }
}

/// A union of conjunctive queries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ucq {
    pub disjuncts: Vec<Cq>,
}

impl Ucq {
    pub fn new(disjuncts: Vec<Cq>) -> Result<Self> {
        if disjuncts.is_empty() {
            return Err(Error::Invalid("a UCQ needs at least one disjunct".into()));
        }
        Ok(Ucq { disjuncts })
    }

    /// Parses one conjunctive query per statement; the head is a bare name.
    pub fn parse(text: &str) -> Result<Self> {
        let mut disjuncts = Vec::new();
        for stmt in statements(text) {
            let (head, body) = split_rule(&stmt)?;
            let head_atom = parse_query_atom(head)?;
            if !matches!(head_atom, QueryAtom::Nullary(_)) {
                return Err(Error::Parse(format!(
                    "UCQ head must be a bare name, got {head:?}"
                )));
            }
            let mut atoms = Vec::new();
            for part in split_atoms(body)? {
                match parse_query_atom(&part)? {
                    QueryAtom::Binary(relation, subject, object) => {
                        atoms.push(Atom { relation, subject, object })
                    }
                    other => {
                        return Err(Error::Parse(format!(
                            "UCQ atoms must be binary, got {other:?}"
                        )))
                    }
                }
            }
            disjuncts.push(Cq::new(atoms)?);
        }
        Ucq::new(disjuncts)
    }
}

impl fmt::Display for Ucq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for cq in &self.disjuncts {
            write!(f, "q :- ")?;
            for (i, atom) in cq.atoms.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{atom}")?;
            }
            writeln!(f, ".")?;
        }
        Ok(())
    }
}

/// Regular expression over the oriented alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegexNode {
    Symbol(OrientedRel),
    Concat(Vec<RegexNode>),
    Union(Vec<RegexNode>),
    Star(Box<RegexNode>),
    Plus(Box<RegexNode>),
}

impl fmt::Display for RegexNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegexNode::Symbol(r) => write!(f, "{r}"),
            RegexNode::Concat(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    if matches!(p, RegexNode::Union(_)) {
                        write!(f, "({p})")?;
                    } else {
                        write!(f, "{p}")?;
                    }
                }
                Ok(())
            }
            RegexNode::Union(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " | ")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
            RegexNode::Star(inner) => write_postfix(f, inner, '*'),
            RegexNode::Plus(inner) => write_postfix(f, inner, '+'),
        }
    }
}

fn write_postfix(f: &mut fmt::Formatter<'_>, inner: &RegexNode, op: char) -> fmt::Result {
    if matches!(inner, RegexNode::Symbol(_)) {
        write!(f, "{inner}{op}")
    } else {
        write!(f, "({inner}){op}")
    }
}

/// A regular path query with inverses. Holds on an instance when some pair
/// of constants is connected by a path whose oriented-label word is in the
/// language.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rpq {
    pub expr: RegexNode,
}

impl Rpq {
    pub fn parse(text: &str) -> Result<Self> {
        let cleaned: String = text
            .lines()
            .map(|l| match l.find('%') {
                Some(i) => &l[..i],
                None => l,
            })
            .collect::<Vec<_>>()
            .join(" ");
        let tokens = rpq_tokens(&cleaned)?;
        let mut parser = RpqParser { tokens, pos: 0 };
        let expr = parser.union()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Parse("trailing tokens in path expression".into()));
        }
        Ok(Rpq { expr })
    }
}

impl fmt::Display for Rpq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum RpqToken {
    Symbol(OrientedRel),
    LParen,
    RParen,
    Pipe,
    Star,
    Plus,
}

fn rpq_tokens(text: &str) -> Result<Vec<RpqToken>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let name: String = chars[start..i].iter().collect();
            // An immediately following '-' flips orientation.
            if i < chars.len() && chars[i] == '-' {
                i += 1;
                out.push(RpqToken::Symbol(OrientedRel::inverse(name)));
            } else {
                out.push(RpqToken::Symbol(OrientedRel::forward(name)));
            }
        } else {
            out.push(match c {
                '(' => RpqToken::LParen,
                ')' => RpqToken::RParen,
                '|' => RpqToken::Pipe,
                '*' => RpqToken::Star,
                '+' => RpqToken::Plus,
                other => {
                    return Err(Error::Parse(format!(
                        "unexpected character {other:?} in path expression"
                    )))
                }
            });
            i += 1;
        }
    }
    Ok(out)
}

struct RpqParser {
    tokens: Vec<RpqToken>,
    pos: usize,
}

impl RpqParser {
    fn peek(&self) -> Option<&RpqToken> {
        self.tokens.get(self.pos)
    }

    fn union(&mut self) -> Result<RegexNode> {
        let mut parts = vec![self.concat()?];
        while self.peek() == Some(&RpqToken::Pipe) {
            self.pos += 1;
            parts.push(self.concat()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { RegexNode::Union(parts) })
    }

    fn concat(&mut self) -> Result<RegexNode> {
        let mut parts = Vec::new();
        while matches!(self.peek(), Some(RpqToken::Symbol(_)) | Some(RpqToken::LParen)) {
            parts.push(self.postfix()?);
        }
        if parts.is_empty() {
            return Err(Error::Parse("empty path expression".into()));
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { RegexNode::Concat(parts) })
    }

    fn postfix(&mut self) -> Result<RegexNode> {
        let mut node = self.primary()?;
        loop {
            match self.peek() {
                Some(RpqToken::Star) => {
                    self.pos += 1;
                    node = RegexNode::Star(Box::new(node));
                }
                Some(RpqToken::Plus) => {
                    self.pos += 1;
                    node = RegexNode::Plus(Box::new(node));
                }
                _ => return Ok(node),
            }
        }
    }

    fn primary(&mut self) -> Result<RegexNode> {
        match self.peek().cloned() {
            Some(RpqToken::Symbol(rel)) => {
                self.pos += 1;
                Ok(RegexNode::Symbol(rel))
            }
            Some(RpqToken::LParen) => {
                self.pos += 1;
                let inner = self.union()?;
                if self.peek() != Some(&RpqToken::RParen) {
                    return Err(Error::Parse("missing ')' in path expression".into()));
                }
                self.pos += 1;
                Ok(inner)
            }
            other => Err(Error::Parse(format!("unexpected token {other:?} in path expression"))),
        }
    }
}

/// A nondeterministic automaton over the oriented alphabet with a single
/// start and a single accepting state.
#[derive(Clone, Debug)]
pub struct Nfa {
    pub start: usize,
    pub accept: usize,
    /// Epsilon edges per state.
    pub eps: Vec<Vec<usize>>,
    /// Labelled edges per state.
    pub steps: Vec<Vec<(OrientedRel, usize)>>,
}

impl Nfa {
    fn with_states(n: usize) -> Nfa {
        Nfa { start: 0, accept: 0, eps: vec![Vec::new(); n], steps: vec![Vec::new(); n] }
    }

    fn add_state(&mut self) -> usize {
        self.eps.push(Vec::new());
        self.steps.push(Vec::new());
        self.eps.len() - 1
    }

    pub fn state_count(&self) -> usize {
        self.eps.len()
    }

    /// Epsilon closure of a single state.
    pub fn closure(&self, state: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![state];
        while let Some(s) = stack.pop() {
            if seen.insert(s) {
                stack.extend(self.eps[s].iter().copied());
            }
        }
        seen
    }

    pub fn accepts_empty_word(&self) -> bool {
        self.closure(self.start).contains(&self.accept)
    }
}

/// Thompson construction for the path-expression language.
pub fn rpq_to_nfa(query: &Rpq) -> Nfa {
    let mut nfa = Nfa::with_states(0);
    let (start, accept) = build_nfa(&query.expr, &mut nfa);
    nfa.start = start;
    nfa.accept = accept;
    nfa
}

fn build_nfa(node: &RegexNode, nfa: &mut Nfa) -> (usize, usize) {
    match node {
        RegexNode::Symbol(rel) => {
            let s = nfa.add_state();
            let t = nfa.add_state();
            nfa.steps[s].push((rel.clone(), t));
            (s, t)
        }
        RegexNode::Concat(parts) => {
            let mut fragments = parts.iter().map(|p| build_nfa(p, nfa)).collect::<Vec<_>>();
            let (start, mut accept) = fragments.remove(0);
            for (s, t) in fragments {
                nfa.eps[accept].push(s);
                accept = t;
            }
            (start, accept)
        }
        RegexNode::Union(parts) => {
            let s = nfa.add_state();
            let t = nfa.add_state();
            for part in parts {
                let (ps, pt) = build_nfa(part, nfa);
                nfa.eps[s].push(ps);
                nfa.eps[pt].push(t);
            }
            (s, t)
        }
        RegexNode::Star(inner) => {
            let s = nfa.add_state();
            let t = nfa.add_state();
            let (is, it) = build_nfa(inner, nfa);
            nfa.eps[s].push(is);
            nfa.eps[s].push(t);
            nfa.eps[it].push(is);
            nfa.eps[it].push(t);
            (s, t)
        }
        RegexNode::Plus(inner) => {
            let s = nfa.add_state();
            let t = nfa.add_state();
            let (is, it) = build_nfa(inner, nfa);
            nfa.eps[s].push(is);
            nfa.eps[it].push(is);
            nfa.eps[it].push(t);
            (s, t)
        }
    }
}

/// Reachability on the product of the instance's oriented-edge graph with
/// the automaton, over all start constants.
fn eval_rpq(query: &Rpq, instance: &Instance) -> bool {
    let domain = instance.domain();
    if domain.is_empty() {
        return false;
    }
    let nfa = rpq_to_nfa(query);
    if nfa.accepts_empty_word() {
        return true;
    }
    let closures: Vec<BTreeSet<usize>> = (0..nfa.state_count()).map(|s| nfa.closure(s)).collect();

    let rebind = rebind_relations(rpq_symbols(&query.expr), instance);
    let mut adjacency: HashMap<&str, Vec<(OrientedRel, &str)>> = HashMap::new();
    for f in instance.facts() {
        adjacency
            .entry(f.subject.as_str())
            .or_default()
            .push((OrientedRel::forward(&f.relation), f.object.as_str()));
        adjacency
            .entry(f.object.as_str())
            .or_default()
            .push((OrientedRel::inverse(&f.relation), f.subject.as_str()));
    }

    let mut visited: HashSet<(&str, usize)> = HashSet::new();
    let mut stack: Vec<(&str, usize)> = Vec::new();
    for x in &domain {
        for s in &closures[nfa.start] {
            if visited.insert((x.as_str(), *s)) {
                stack.push((x.as_str(), *s));
            }
        }
    }
    while let Some((x, s)) = stack.pop() {
        for (rel, s_next) in &nfa.steps[s] {
            let bound = rebind.get(&rel.relation).map(String::as_str);
            let Some(target_rel) = bound else { continue };
            let Some(edges) = adjacency.get(x) else { continue };
            for (erel, y) in edges {
                if erel.orientation == rel.orientation && erel.relation == target_rel {
                    for s2 in &closures[*s_next] {
                        if *s2 == nfa.accept {
                            return true;
                        }
                        if visited.insert((y, *s2)) {
                            stack.push((y, *s2));
                        }
                    }
                }
            }
        }
    }
    false
}

fn rpq_symbols(node: &RegexNode) -> BTreeSet<Relation> {
    match node {
        RegexNode::Symbol(rel) => BTreeSet::from([rel.relation.clone()]),
        RegexNode::Concat(parts) | RegexNode::Union(parts) => {
            parts.iter().flat_map(rpq_symbols).collect()
        }
        RegexNode::Star(inner) | RegexNode::Plus(inner) => rpq_symbols(inner),
    }
}

/// Maps each query relation name to the instance relation it should match:
/// the exact spelling when present, otherwise the unique case-insensitive
/// match. Names with no match map to themselves and simply never hold;
/// ambiguous names are dropped from the map (same effect).
fn rebind_relations(names: BTreeSet<Relation>, instance: &Instance) -> BTreeMap<Relation, Relation> {
    let instance_relations: Vec<&Relation> = instance.relations().collect();
    let mut out = BTreeMap::new();
    for name in names {
        if instance_relations.iter().any(|r| **r == name) {
            out.insert(name.clone(), name);
            continue;
        }
        let matches: Vec<&&Relation> = instance_relations
            .iter()
            .filter(|r| r.eq_ignore_ascii_case(&name))
            .collect();
        if matches.len() == 1 {
            out.insert(name, (*matches[0]).clone());
        } else {
            out.insert(name.clone(), name);
        }
    }
    out
}

/// An atom of a Datalog rule; arity 0 to 2, arguments are variables.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum DlAtom {
    Nullary { predicate: String },
    Unary { predicate: String, arg: Var },
    Binary { predicate: String, subject: Var, object: Var },
}

impl DlAtom {
    pub fn predicate(&self) -> &str {
        match self {
            DlAtom::Nullary { predicate }
            | DlAtom::Unary { predicate, .. }
            | DlAtom::Binary { predicate, .. } => predicate,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            DlAtom::Nullary { .. } => 0,
            DlAtom::Unary { .. } => 1,
            DlAtom::Binary { .. } => 2,
        }
    }

    pub fn variables(&self) -> Vec<&Var> {
        match self {
            DlAtom::Nullary { .. } => vec![],
            DlAtom::Unary { arg, .. } => vec![arg],
            DlAtom::Binary { subject, object, .. } => vec![subject, object],
        }
    }
}

impl fmt::Display for DlAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DlAtom::Nullary { predicate } => write!(f, "{predicate}"),
            DlAtom::Unary { predicate, arg } => write!(f, "{predicate}({arg})"),
            DlAtom::Binary { predicate, subject, object } => {
                write!(f, "{predicate}({subject},{object})")
            }
        }
    }
}

/// A rule with a single head atom and a nonempty body; no negation and no
/// inequalities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DlRule {
    pub head: DlAtom,
    pub body: Vec<DlAtom>,
}

impl fmt::Display for DlRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :- ", self.head)?;
        for (i, atom) in self.body.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{atom}")?;
        }
        write!(f, ".")
    }
}

pub const GOAL_PREDICATE: &str = "goal";

/// A negation-free Datalog program. Predicates occurring in rule heads are
/// intensional; the others refer to instance relations. The program holds on
/// an instance when the 0-ary `goal` is derivable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatalogProgram {
    rules: Vec<DlRule>,
    intensional: BTreeSet<String>,
}

impl DatalogProgram {
    pub fn new(rules: Vec<DlRule>) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::Invalid("a Datalog program needs at least one rule".into()));
        }
        let intensional: BTreeSet<String> =
            rules.iter().map(|r| r.head.predicate().to_string()).collect();
        let mut arities: BTreeMap<&str, usize> = BTreeMap::new();
        let mut goal_in_head = false;
        for rule in &rules {
            if rule.body.is_empty() {
                return Err(Error::Invalid(format!("rule {rule} has an empty body")));
            }
            if rule.head.predicate() == GOAL_PREDICATE {
                if rule.head.arity() != 0 {
                    return Err(Error::Invalid("goal must be 0-ary".into()));
                }
                goal_in_head = true;
            }
            for atom in std::iter::once(&rule.head).chain(&rule.body) {
                match arities.entry(atom.predicate()) {
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(atom.arity());
                    }
                    std::collections::btree_map::Entry::Occupied(e) => {
                        if *e.get() != atom.arity() {
                            return Err(Error::Invalid(format!(
                                "predicate {} used with different arities",
                                atom.predicate()
                            )));
                        }
                    }
                }
            }
            let body_vars: BTreeSet<&Var> =
                rule.body.iter().flat_map(DlAtom::variables).collect();
            for v in rule.head.variables() {
                if !body_vars.contains(v) {
                    return Err(Error::Invalid(format!(
                        "rule {rule} is not range-restricted: head variable {v} not in body"
                    )));
                }
            }
        }
        if !goal_in_head {
            return Err(Error::Invalid("no rule derives goal".into()));
        }
        Ok(DatalogProgram { rules, intensional })
    }

    pub fn rules(&self) -> &[DlRule] {
        &self.rules
    }

    pub fn is_intensional(&self, predicate: &str) -> bool {
        self.intensional.contains(predicate)
    }

    /// Extensional predicate names used in rule bodies.
    pub fn extensional_predicates(&self) -> BTreeSet<Relation> {
        self.rules
            .iter()
            .flat_map(|r| &r.body)
            .filter(|a| !self.intensional.contains(a.predicate()))
            .map(|a| a.predicate().to_string())
            .collect()
    }

    /// Parses one rule per statement.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for stmt in statements(text) {
            let (head_text, body_text) = split_rule(&stmt)?;
            let head = parse_dl_atom(head_text)?;
            let mut body = Vec::new();
            for part in split_atoms(body_text)? {
                body.push(parse_dl_atom(&part)?);
            }
            rules.push(DlRule { head, body });
        }
        DatalogProgram::new(rules)
    }
}

impl fmt::Display for DatalogProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rule in &self.rules {
            writeln!(f, "{rule}")?;
        }
        Ok(())
    }
}

fn split_rule(stmt: &str) -> Result<(&str, &str)> {
    let Some(idx) = stmt.find(":-") else {
        return Err(Error::Parse(format!("expected `head :- body` in {stmt:?}")));
    };
    Ok((stmt[..idx].trim(), stmt[idx + 2..].trim()))
}

/// Splits a rule body on top-level commas.
fn split_atoms(body: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for c in body.chars() {
        match c {
            '(' => {
                depth += 1;
                current.push(c);
            }
            ')' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::Parse(format!("unbalanced ')' in {body:?}")))?;
                current.push(c);
            }
            ',' if depth == 0 => {
                out.push(current.trim().to_string());
                current.clear();
            }
            _ => current.push(c),
        }
    }
    if depth != 0 {
        return Err(Error::Parse(format!("unbalanced '(' in {body:?}")));
    }
    let last = current.trim();
    if !last.is_empty() {
        out.push(last.to_string());
    }
    if out.is_empty() || out.iter().any(String::is_empty) {
        return Err(Error::Parse(format!("empty atom in body {body:?}")));
    }
    Ok(out)
}

#[derive(Debug)]
enum QueryAtom {
    Nullary(String),
    Unary(String, Var),
    Binary(String, Var, Var),
}

fn is_predicate_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !s.starts_with(|c: char| c.is_ascii_uppercase())
}

fn is_variable_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && s.starts_with(|c: char| c.is_ascii_uppercase())
}

fn parse_query_atom(text: &str) -> Result<QueryAtom> {
    let text = text.trim();
    let Some(open) = text.find('(') else {
        if !is_predicate_name(text) {
            return Err(Error::Parse(format!("invalid predicate name {text:?}")));
        }
        return Ok(QueryAtom::Nullary(text.to_string()));
    };
    let name = text[..open].trim();
    if !is_predicate_name(name) {
        return Err(Error::Parse(format!(
            "invalid predicate name {name:?} (predicates are lowercase)"
        )));
    }
    let rest = text[open + 1..].trim_end();
    let inner = rest
        .strip_suffix(')')
        .ok_or_else(|| Error::Parse(format!("missing ')' in atom {text:?}")))?;
    let args: Vec<&str> = inner.split(',').map(str::trim).collect();
    for arg in &args {
        if !is_variable_name(arg) {
            return Err(Error::Parse(format!(
                "invalid variable {arg:?} in atom {text:?} (variables are uppercase)"
            )));
        }
    }
    match args.as_slice() {
        [a] => Ok(QueryAtom::Unary(name.to_string(), a.to_string())),
        [a, b] => Ok(QueryAtom::Binary(name.to_string(), a.to_string(), b.to_string())),
        _ => Err(Error::Parse(format!("atom {text:?} must have 1 or 2 arguments"))),
    }
}

/// Parses UCQ-style statements whose body atoms may be unary or binary;
/// used by the mixed-arity module.
pub(crate) fn parse_mixed_ucq_statements(text: &str) -> Result<Vec<Vec<DlAtom>>> {
    let mut out = Vec::new();
    for stmt in statements(text) {
        let (head, body) = split_rule(&stmt)?;
        if !matches!(parse_query_atom(head)?, QueryAtom::Nullary(_)) {
            return Err(Error::Parse(format!("UCQ head must be a bare name, got {head:?}")));
        }
        let mut atoms = Vec::new();
        for part in split_atoms(body)? {
            match parse_query_atom(&part)? {
                QueryAtom::Unary(predicate, arg) => atoms.push(DlAtom::Unary { predicate, arg }),
                QueryAtom::Binary(predicate, subject, object) => {
                    atoms.push(DlAtom::Binary { predicate, subject, object })
                }
                QueryAtom::Nullary(name) => {
                    return Err(Error::Parse(format!("unexpected 0-ary atom {name} in UCQ body")))
                }
            }
        }
        out.push(atoms);
    }
    Ok(out)
}

fn parse_dl_atom(text: &str) -> Result<DlAtom> {
    Ok(match parse_query_atom(text)? {
        QueryAtom::Nullary(predicate) => DlAtom::Nullary { predicate },
        QueryAtom::Unary(predicate, arg) => DlAtom::Unary { predicate, arg },
        QueryAtom::Binary(predicate, subject, object) => {
            DlAtom::Binary { predicate, subject, object }
        }
    })
}

/// A derived intensional fact.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct DerivedFact {
    pub predicate: String,
    pub args: Vec<Constant>,
}

impl fmt::Display for DerivedFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            write!(f, "{}", self.predicate)
        } else {
            write!(f, "{}({})", self.predicate, self.args.join(","))
        }
    }
}

/// Instance rows keyed by the relation spelling used in the program.
struct EdbIndex<'a> {
    by_relation: HashMap<String, Vec<(&'a str, &'a str)>>,
}

impl<'a> EdbIndex<'a> {
    fn new(program: &DatalogProgram, instance: &'a Instance) -> Self {
        let rebind = rebind_relations(program.extensional_predicates(), instance);
        let mut by_relation: HashMap<String, Vec<(&str, &str)>> = HashMap::new();
        for (query_name, instance_name) in rebind {
            let rows: Vec<(&str, &str)> = instance
                .facts()
                .filter(|f| f.relation == instance_name)
                .map(|f| (f.subject.as_str(), f.object.as_str()))
                .collect();
            by_relation.insert(query_name, rows);
        }
        EdbIndex { by_relation }
    }

    fn rows(&self, predicate: &str) -> &[(&'a str, &'a str)] {
        self.by_relation.get(predicate).map(Vec::as_slice).unwrap_or(&[])
    }
}

type IdbSet = BTreeMap<String, BTreeSet<Vec<Constant>>>;

fn idb_contains(idb: &IdbSet, predicate: &str, args: &[Constant]) -> bool {
    idb.get(predicate).is_some_and(|rows| rows.contains(args))
}

/// Matches the body atoms in order, extending `bindings`; `delta_at` forces
/// one intensional atom to match against the latest delta instead of the
/// full set.
#[allow(clippy::too_many_arguments)]
fn match_body(
    program: &DatalogProgram,
    edb: &EdbIndex<'_>,
    total: &IdbSet,
    delta: &IdbSet,
    delta_at: Option<usize>,
    body: &[DlAtom],
    position: usize,
    bindings: &mut HashMap<Var, Constant>,
    results: &mut Vec<HashMap<Var, Constant>>,
) {
    let Some(atom) = body.get(position) else {
        results.push(bindings.clone());
        return;
    };
    let intensional = program.is_intensional(atom.predicate());
    let source: Box<dyn Iterator<Item = Vec<Constant>>> = if intensional {
        let set = if delta_at == Some(position) { delta } else { total };
        match set.get(atom.predicate()) {
            Some(rows) => Box::new(rows.iter().cloned()),
            None => Box::new(std::iter::empty()),
        }
    } else {
        match atom {
            DlAtom::Binary { .. } => Box::new(
                edb.rows(atom.predicate())
                    .iter()
                    .map(|(s, o)| vec![s.to_string(), o.to_string()]),
            ),
            // Arity-0/1 extensional atoms cannot match a binary instance.
            _ => Box::new(std::iter::empty()),
        }
    };
    for row in source {
        let vars = atom.variables();
        debug_assert_eq!(vars.len(), row.len());
        let mut newly_bound = Vec::new();
        let mut ok = true;
        for (var, value) in vars.iter().zip(&row) {
            match bindings.get(*var) {
                Some(existing) if existing == value => {}
                Some(_) => {
                    ok = false;
                    break;
                }
                None => {
                    bindings.insert((*var).clone(), value.clone());
                    newly_bound.push((*var).clone());
                }
            }
        }
        if ok {
            match_body(program, edb, total, delta, delta_at, body, position + 1, bindings, results);
        }
        for var in newly_bound {
            bindings.remove(&var);
        }
    }
}

fn head_fact(head: &DlAtom, bindings: &HashMap<Var, Constant>) -> DerivedFact {
    DerivedFact {
        predicate: head.predicate().to_string(),
        args: head.variables().iter().map(|v| bindings[*v].clone()).collect(),
    }
}

fn insert_derived(idb: &mut IdbSet, fact: &DerivedFact) -> bool {
    idb.entry(fact.predicate.clone()).or_default().insert(fact.args.clone())
}

/// Least fixpoint of rule application, computed semi-naively with
/// per-predicate delta sets. Returns every derivable intensional fact.
pub fn datalog_fixpoint(program: &DatalogProgram, instance: &Instance) -> BTreeSet<DerivedFact> {
    let edb = EdbIndex::new(program, instance);
    let mut total: IdbSet = IdbSet::new();
    let mut delta: IdbSet = IdbSet::new();

    // First round: rules fire on the instance alone.
    for rule in program.rules() {
        let mut results = Vec::new();
        match_body(
            program,
            &edb,
            &total,
            &IdbSet::new(),
            None,
            &rule.body,
            0,
            &mut HashMap::new(),
            &mut results,
        );
        for bindings in results {
            let fact = head_fact(&rule.head, &bindings);
            insert_derived(&mut delta, &fact);
        }
    }
    for (pred, rows) in &delta {
        total.entry(pred.clone()).or_default().extend(rows.iter().cloned());
    }

    while delta.values().any(|rows| !rows.is_empty()) {
        let mut next: IdbSet = IdbSet::new();
        for rule in program.rules() {
            for (position, atom) in rule.body.iter().enumerate() {
                if !program.is_intensional(atom.predicate()) {
                    continue;
                }
                let mut results = Vec::new();
                match_body(
                    program,
                    &edb,
                    &total,
                    &delta,
                    Some(position),
                    &rule.body,
                    0,
                    &mut HashMap::new(),
                    &mut results,
                );
                for bindings in results {
                    let fact = head_fact(&rule.head, &bindings);
                    if !idb_contains(&total, &fact.predicate, &fact.args) {
                        insert_derived(&mut next, &fact);
                    }
                }
            }
        }
        for (pred, rows) in &next {
            total.entry(pred.clone()).or_default().extend(rows.iter().cloned());
        }
        delta = next;
    }

    total
        .into_iter()
        .flat_map(|(predicate, rows)| {
            rows.into_iter().map(move |args| DerivedFact { predicate: predicate.clone(), args })
        })
        .collect()
}

/// Naive fixpoint: applies every rule against the full set until nothing
/// changes. Kept as an independent route for cross-checking the semi-naive
/// engine; the least fixpoint does not depend on application order.
pub fn datalog_fixpoint_naive(
    program: &DatalogProgram,
    instance: &Instance,
) -> BTreeSet<DerivedFact> {
    let edb = EdbIndex::new(program, instance);
    let mut total: IdbSet = IdbSet::new();
    loop {
        let mut changed = false;
        for rule in program.rules() {
            let mut results = Vec::new();
            match_body(
                program,
                &edb,
                &total,
                &IdbSet::new(),
                None,
                &rule.body,
                0,
                &mut HashMap::new(),
                &mut results,
            );
            for bindings in results {
                let fact = head_fact(&rule.head, &bindings);
                changed |= insert_derived(&mut total, &fact);
            }
        }
        if !changed {
            break;
        }
    }
    total
        .into_iter()
        .flat_map(|(predicate, rows)| {
            rows.into_iter().map(move |args| DerivedFact { predicate: predicate.clone(), args })
        })
        .collect()
}

fn datalog_holds(program: &DatalogProgram, instance: &Instance) -> bool {
    datalog_fixpoint(program, instance)
        .iter()
        .any(|f| f.predicate == GOAL_PREDICATE && f.args.is_empty())
}

/// One of the three supported homomorphism-closed query classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Query {
    Ucq(Ucq),
    Rpq(Rpq),
    Datalog(DatalogProgram),
}

impl Query {
    /// Parses by format name: `ucq`, `rpq`, or `dl`/`datalog`.
    pub fn parse(kind: &str, text: &str) -> Result<Self> {
        match kind {
            "ucq" => Ok(Query::Ucq(Ucq::parse(text)?)),
            "rpq" => Ok(Query::Rpq(Rpq::parse(text)?)),
            "dl" | "datalog" => Ok(Query::Datalog(DatalogProgram::parse(text)?)),
            other => Err(Error::Parse(format!(
                "unknown query format {other:?} (expected ucq, rpq, or dl)"
            ))),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Ucq(q) => write!(f, "{q}"),
            Query::Rpq(q) => write!(f, "{q}"),
            Query::Datalog(q) => write!(f, "{q}"),
        }
    }
}

/// Whether the instance satisfies the query.
///
/// UCQs go through homomorphism search from each disjunct's canonical
/// instance and can therefore exhaust the search budget; RPQ and Datalog
/// evaluation are polynomial and never fail.
pub fn eval_query(query: &Query, instance: &Instance, limits: SearchLimits) -> Result<bool> {
    match query {
        Query::Ucq(ucq) => {
            for cq in &ucq.disjuncts {
                let canonical = canonical_rebound(cq, instance);
                if find_homomorphism(&canonical, instance, limits)?.is_some() {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Query::Rpq(rpq) => Ok(eval_rpq(rpq, instance)),
        Query::Datalog(program) => Ok(datalog_holds(program, instance)),
    }
}

fn canonical_rebound(cq: &Cq, instance: &Instance) -> Instance {
    let names: BTreeSet<Relation> = cq.atoms.iter().map(|a| a.relation.clone()).collect();
    let rebind = rebind_relations(names, instance);
    Instance::new(cq.atoms.iter().map(|a| {
        Fact::new(rebind.get(&a.relation).unwrap_or(&a.relation), &a.subject, &a.object)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(text: &str) -> Instance {
        Instance::parse(text).unwrap()
    }

    fn rst_rpq() -> Query {
        Query::Rpq(Rpq::parse("R S* T").unwrap())
    }

    #[test]
    fn rpq_matches_path_model() {
        assert!(eval_query(&rst_rpq(), &inst("R(a,b). S(b,c). T(c,d)."), SearchLimits::default())
            .unwrap());
        // No S steps needed.
        assert!(eval_query(&rst_rpq(), &inst("R(a,b). T(b,c)."), SearchLimits::default())
            .unwrap());
    }

    #[test]
    fn rpq_rejects_iterated_path() {
        let i = inst("R(a,b). S(b,c2). S(b2,c2). S(b2,c). T(c,d).");
        assert!(!eval_query(&rst_rpq(), &i, SearchLimits::default()).unwrap());
    }

    #[test]
    fn rpq_inverse_and_operators() {
        let q = Query::Rpq(Rpq::parse("R-").unwrap());
        assert!(eval_query(&q, &inst("R(b,a)."), SearchLimits::default()).unwrap());

        let q = Query::Rpq(Rpq::parse("(R | S)+ T").unwrap());
        assert!(eval_query(&q, &inst("S(a,b). R(b,c). T(c,d)."), SearchLimits::default())
            .unwrap());
        assert!(!eval_query(&q, &inst("T(c,d)."), SearchLimits::default()).unwrap());
    }

    #[test]
    fn rpq_nfa_language_samples() {
        let nfa = rpq_to_nfa(&Rpq::parse("R S* T").unwrap());
        let accepts = |word: &[&str]| {
            let mut states = nfa.closure(nfa.start);
            for sym in word {
                let rel = OrientedRel::parse(sym).unwrap();
                let mut next = BTreeSet::new();
                for s in &states {
                    for (r, t) in &nfa.steps[*s] {
                        if *r == rel {
                            next.extend(nfa.closure(*t));
                        }
                    }
                }
                states = next;
            }
            states.contains(&nfa.accept)
        };
        assert!(accepts(&["R", "T"]));
        assert!(accepts(&["R", "S", "S", "T"]));
        assert!(!accepts(&["R", "S"]));
        assert!(!accepts(&["R"]));
        assert!(!accepts(&[]));
    }

    #[test]
    fn empty_star_matches_nonempty_domain_only() {
        let q = Query::Rpq(Rpq::parse("S*").unwrap());
        assert!(eval_query(&q, &inst("R(a,b)."), SearchLimits::default()).unwrap());
        assert!(!eval_query(&q, &Instance::empty(), SearchLimits::default()).unwrap());
    }

    #[test]
    fn cq_on_empty_instance_is_false() {
        let q = Query::Ucq(Ucq::parse("q :- r(X,Y).").unwrap());
        assert!(!eval_query(&q, &Instance::empty(), SearchLimits::default()).unwrap());
    }

    #[test]
    fn ucq_disjuncts_and_case_insensitive_match() {
        let q = Query::Ucq(Ucq::parse("q :- r(W,X), s(X,Y), t(Y,Z).\nq :- u(X,X).").unwrap());
        assert!(eval_query(&q, &inst("R(a,b). S(b,c). T(c,d)."), SearchLimits::default())
            .unwrap());
        assert!(eval_query(&q, &inst("U(a,a)."), SearchLimits::default()).unwrap());
        assert!(!eval_query(&q, &inst("R(a,b). S(b,c)."), SearchLimits::default()).unwrap());
    }

    #[test]
    fn unknown_relations_never_match() {
        let q = Query::Ucq(Ucq::parse("q :- zz(X,Y).").unwrap());
        assert!(!eval_query(&q, &inst("R(a,b)."), SearchLimits::default()).unwrap());
    }

    fn example_program() -> DatalogProgram {
        DatalogProgram::parse("u(X) :- r(X,Y).\nu(Y) :- u(X), s(X,Y).\ngoal :- u(X), t(X,Y).")
            .unwrap()
    }

    #[test]
    fn datalog_fixpoint_derives_goal() {
        let derived = datalog_fixpoint(&example_program(), &inst("R(a,b). T(a,c)."));
        assert!(derived.contains(&DerivedFact { predicate: "u".into(), args: vec!["a".into()] }));
        assert!(derived.contains(&DerivedFact { predicate: GOAL_PREDICATE.into(), args: vec![] }));
    }

    #[test]
    fn datalog_fixpoint_empty_instance() {
        assert!(datalog_fixpoint(&example_program(), &Instance::empty()).is_empty());
    }

    fn zigzag_program() -> DatalogProgram {
        DatalogProgram::parse(
            "a(Y) :- r(X,Y).\nb(Y) :- a(X), s(X,Y).\na(Y) :- b(X), s(Y,X).\ngoal :- b(X), t(X,Y).",
        )
        .unwrap()
    }

    #[test]
    fn zigzag_program_partial_derivation() {
        let derived = datalog_fixpoint(&zigzag_program(), &inst("R(a,b). S(b,c)."));
        assert!(derived.contains(&DerivedFact { predicate: "a".into(), args: vec!["b".into()] }));
        assert!(derived.contains(&DerivedFact { predicate: "b".into(), args: vec!["c".into()] }));
        assert!(!derived.iter().any(|f| f.predicate == GOAL_PREDICATE));
    }

    #[test]
    fn zigzag_program_accepts_back_and_forth_paths() {
        let q = Query::Datalog(zigzag_program());
        let i = inst("R(a,b). S(b,c2). S(b2,c2). S(b2,c). T(c,d).");
        assert!(eval_query(&q, &i, SearchLimits::default()).unwrap());
    }

    #[test]
    fn naive_and_semi_naive_agree() {
        let instances = [
            inst("R(a,b). S(b,c). T(c,d)."),
            inst("R(a,b). S(b,c2). S(b2,c2). S(b2,c). T(c,d)."),
            inst("R(a,b). T(a,c)."),
            inst("S(a,a). R(a,a). T(a,a)."),
            Instance::empty(),
        ];
        for program in [example_program(), zigzag_program()] {
            for i in &instances {
                assert_eq!(datalog_fixpoint(&program, i), datalog_fixpoint_naive(&program, i));
            }
        }
    }

    #[test]
    fn datalog_validation_errors() {
        assert!(DatalogProgram::parse("u(X) :- r(X,Y).").is_err()); // no goal
        assert!(DatalogProgram::parse("goal :- u(X), r(X,Y).\nu(X) :- r(X,Y), u(X,Y).").is_err()); // arity clash
        assert!(DatalogProgram::parse("u(X) :- r(Y,Z).\ngoal :- u(X).").is_err()); // not range-restricted
        assert!(DatalogProgram::parse("goal :- r(a,Y).").is_err()); // lowercase argument
        assert!(DatalogProgram::parse("Goal :- r(X,Y).").is_err()); // uppercase predicate
    }

    #[test]
    fn rule_and_program_display_round_trip() {
        let p = zigzag_program();
        assert_eq!(DatalogProgram::parse(&p.to_string()).unwrap(), p);
        let u = Ucq::parse("q :- r(W,X), s(X,Y), t(Y,Z).\nq :- u(X,X).").unwrap();
        assert_eq!(Ucq::parse(&u.to_string()).unwrap(), u);
        let r = Rpq::parse("(R|S)+ T* U-").unwrap();
        assert_eq!(Rpq::parse(&r.to_string()).unwrap(), r);
    }
}
