//! Instances over arity-two signatures: facts, oriented views, edges,
//! covered facts, edge copying, and incident pairs.
//!
//! A fact `R(a, b)` is *unary* when `a = b` and non-unary otherwise. Every
//! instance can also be read over the inverse-closed alphabet where each
//! relation `R` is paired with `R-`: the fact `R(a, b)` is then visible both
//! as `R(a, b)` and as `R-(b, a)`. Oriented facts are what edge-local
//! constructions (incident pairs, covered facts) are defined on.
//!
//! Text format: one fact per line, `R(a,b).`, with `%` starting a comment.
//! Relation names and constants written by hand match `[A-Za-z0-9_]+`; the
//! rewrite operations generate constants containing the reserved separators
//! `#` and `@` (e.g. `c#2`, `u@alpha`), which the parser accepts back so that
//! emitted instances re-parse, but which it keeps out of relation names.
//! Freshness of generated names is enforced against the ambient domain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::{Error, Result};

pub type Constant = String;
pub type Relation = String;

/// True for names a user may write: `[A-Za-z0-9_]+`.
pub fn is_user_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// True for constants as they may appear after rewriting: the user charset
/// plus the reserved separators `#` and `@`.
pub fn is_constant_token(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '#' || c == '@')
}

/// A fact `R(subject, object)` over the base signature.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub relation: Relation,
    pub subject: Constant,
    pub object: Constant,
}

impl Fact {
    pub fn new(
        relation: impl Into<Relation>,
        subject: impl Into<Constant>,
        object: impl Into<Constant>,
    ) -> Self {
        Fact { relation: relation.into(), subject: subject.into(), object: object.into() }
    }

    /// A fact is unary when both positions hold the same constant.
    pub fn is_unary(&self) -> bool {
        self.subject == self.object
    }

    pub fn constants(&self) -> impl Iterator<Item = &Constant> {
        [&self.subject, &self.object].into_iter()
    }

    /// The two oriented readings of this fact: `R(a, b)` and `R-(b, a)`.
    pub fn oriented_views(&self) -> (OrientedFact, OrientedFact) {
        (
            OrientedFact {
                rel: OrientedRel::forward(&self.relation),
                source: self.subject.clone(),
                target: self.object.clone(),
            },
            OrientedFact {
                rel: OrientedRel::inverse(&self.relation),
                source: self.object.clone(),
                target: self.subject.clone(),
            },
        )
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.relation, self.subject, self.object)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Orientation {
    Forward,
    Inverse,
}

/// A relation symbol of the inverse-closed alphabet: `R` or `R-`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrientedRel {
    pub relation: Relation,
    pub orientation: Orientation,
}

impl OrientedRel {
    pub fn forward(relation: impl Into<Relation>) -> Self {
        OrientedRel { relation: relation.into(), orientation: Orientation::Forward }
    }

    pub fn inverse(relation: impl Into<Relation>) -> Self {
        OrientedRel { relation: relation.into(), orientation: Orientation::Inverse }
    }

    /// Swapping orientation is involutive: `(R-)- = R`.
    pub fn flipped(&self) -> Self {
        OrientedRel {
            relation: self.relation.clone(),
            orientation: match self.orientation {
                Orientation::Forward => Orientation::Inverse,
                Orientation::Inverse => Orientation::Forward,
            },
        }
    }

    /// Parses `R` or `R-`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, orientation) = match s.strip_suffix('-') {
            Some(prefix) => (prefix, Orientation::Inverse),
            None => (s, Orientation::Forward),
        };
        if !is_user_name(name) {
            return Err(Error::Parse(format!("invalid relation name {s:?}")));
        }
        Ok(OrientedRel { relation: name.to_string(), orientation })
    }
}

impl fmt::Display for OrientedRel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.orientation {
            Orientation::Forward => write!(f, "{}", self.relation),
            Orientation::Inverse => write!(f, "{}-", self.relation),
        }
    }
}

/// A fact read over the inverse-closed alphabet; `R-(b, a)` denotes the same
/// underlying fact as `R(a, b)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrientedFact {
    pub rel: OrientedRel,
    pub source: Constant,
    pub target: Constant,
}

impl OrientedFact {
    pub fn new(rel: OrientedRel, source: impl Into<Constant>, target: impl Into<Constant>) -> Self {
        OrientedFact { rel, source: source.into(), target: target.into() }
    }

    /// The underlying base fact. Converting to an oriented view and back is
    /// the identity.
    pub fn underlying(&self) -> Fact {
        match self.rel.orientation {
            Orientation::Forward => {
                Fact::new(&self.rel.relation, &self.source, &self.target)
            }
            Orientation::Inverse => {
                Fact::new(&self.rel.relation, &self.target, &self.source)
            }
        }
    }

    pub fn is_unary(&self) -> bool {
        self.source == self.target
    }

    /// The same oriented symbol placed on other endpoints, as a base fact.
    pub fn instantiate(&self, source: &str, target: &str) -> Fact {
        OrientedFact::new(self.rel.clone(), source, target).underlying()
    }

    /// Parses `R(a,b)` or `R-(a,b)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| Error::Parse(format!("expected fact of the form R(a,b), got {s:?}")))?;
        let rel = OrientedRel::parse(s[..open].trim())?;
        let rest = s[open + 1..].trim_end();
        let close = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::Parse(format!("missing ')' in fact {s:?}")))?;
        let mut parts = close.splitn(2, ',');
        let a = parts.next().unwrap_or("").trim();
        let b = parts
            .next()
            .ok_or_else(|| Error::Parse(format!("expected two constants in fact {s:?}")))?
            .trim();
        if !is_constant_token(a) || !is_constant_token(b) {
            return Err(Error::Parse(format!("invalid constant in fact {s:?}")));
        }
        Ok(OrientedFact::new(rel, a, b))
    }
}

impl fmt::Display for OrientedFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.rel, self.source, self.target)
    }
}

/// The relation names of an arity-two signature; the oriented alphabet is
/// derived from it by pairing each `R` with `R-`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Signature {
    relations: BTreeSet<Relation>,
}

impl Signature {
    pub fn new(relations: impl IntoIterator<Item = Relation>) -> Result<Self> {
        let relations: BTreeSet<Relation> = relations.into_iter().collect();
        for r in &relations {
            if !is_user_name(r) {
                return Err(Error::Parse(format!("invalid relation name {r:?}")));
            }
        }
        Ok(Signature { relations })
    }

    pub fn of_instance(instance: &Instance) -> Self {
        Signature { relations: instance.relations().cloned().collect() }
    }

    pub fn contains(&self, relation: &str) -> bool {
        self.relations.contains(relation)
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.iter()
    }

    /// Both orientations of every relation.
    pub fn oriented_alphabet(&self) -> Vec<OrientedRel> {
        self.relations
            .iter()
            .flat_map(|r| [OrientedRel::forward(r), OrientedRel::inverse(r)])
            .collect()
    }
}

/// A directed edge `(u, v)` of an instance; only meaningful when `{u, v}` is
/// an edge of the Gaifman graph.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DirectedEdge {
    pub source: Constant,
    pub target: Constant,
}

impl DirectedEdge {
    pub fn new(source: impl Into<Constant>, target: impl Into<Constant>) -> Self {
        DirectedEdge { source: source.into(), target: target.into() }
    }

    pub fn reversed(&self) -> Self {
        DirectedEdge::new(&self.target, &self.source)
    }

    pub fn contains(&self, x: &str) -> bool {
        self.source == x || self.target == x
    }
}

impl fmt::Display for DirectedEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.source, self.target)
    }
}

/// A finite set of facts. The domain, signature, and Gaifman graph are all
/// derived. Instances are immutable once built.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Instance {
    facts: BTreeSet<Fact>,
}

impl Instance {
    pub fn new(facts: impl IntoIterator<Item = Fact>) -> Self {
        Instance { facts: facts.into_iter().collect() }
    }

    pub fn empty() -> Self {
        Instance::default()
    }

    pub fn facts(&self) -> impl Iterator<Item = &Fact> {
        self.facts.iter()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.facts.contains(fact)
    }

    pub fn is_subinstance_of(&self, other: &Instance) -> bool {
        self.facts.is_subset(&other.facts)
    }

    /// The union of the domains of the facts.
    pub fn domain(&self) -> BTreeSet<Constant> {
        let mut out = BTreeSet::new();
        for f in &self.facts {
            out.insert(f.subject.clone());
            out.insert(f.object.clone());
        }
        out
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        let mut seen = BTreeSet::new();
        self.facts.iter().filter_map(move |f| seen.insert(&f.relation).then_some(&f.relation))
    }

    /// Undirected Gaifman edges, each reported as a sorted pair.
    pub fn undirected_edges(&self) -> BTreeSet<(Constant, Constant)> {
        let mut out = BTreeSet::new();
        for f in &self.facts {
            if !f.is_unary() {
                let (x, y) = (&f.subject, &f.object);
                let key = if x < y { (x.clone(), y.clone()) } else { (y.clone(), x.clone()) };
                out.insert(key);
            }
        }
        out
    }

    /// Number of distinct undirected edges each domain element occurs in.
    pub fn edge_degrees(&self) -> BTreeMap<Constant, usize> {
        let mut out: BTreeMap<Constant, usize> = BTreeMap::new();
        for c in self.domain() {
            out.insert(c, 0);
        }
        for (x, y) in self.undirected_edges() {
            *out.get_mut(&x).expect("edge endpoint in domain") += 1;
            *out.get_mut(&y).expect("edge endpoint in domain") += 1;
        }
        out
    }

    /// Whether `{u, v}` is an edge of the Gaifman graph.
    pub fn is_edge(&self, u: &str, v: &str) -> bool {
        u != v
            && self.facts.iter().any(|f| {
                !f.is_unary()
                    && ((f.subject == u && f.object == v) || (f.subject == v && f.object == u))
            })
    }

    pub fn check_edge(&self, e: &DirectedEdge) -> Result<()> {
        if self.is_edge(&e.source, &e.target) {
            Ok(())
        } else {
            Err(Error::NotAnEdge(e.source.clone(), e.target.clone()))
        }
    }

    /// Errors unless `e` is an edge with neither endpoint a leaf.
    pub fn check_non_leaf_edge(&self, e: &DirectedEdge) -> Result<()> {
        self.check_edge(e)?;
        let degrees = self.edge_degrees();
        let deg = |x: &str| degrees.get(x).copied().unwrap_or(0);
        if deg(&e.source) < 2 || deg(&e.target) < 2 {
            return Err(Error::LeafEdge(e.source.clone(), e.target.clone()));
        }
        Ok(())
    }

    /// The subinstance induced by a set of elements: all facts whose domain
    /// lies within it.
    pub fn induced(&self, elements: &BTreeSet<Constant>) -> Instance {
        Instance::new(
            self.facts
                .iter()
                .filter(|f| elements.contains(&f.subject) && elements.contains(&f.object))
                .cloned(),
        )
    }

    /// Connected components of the Gaifman graph, as element sets. Elements
    /// occurring only in unary facts form singleton components.
    pub fn components(&self) -> Vec<BTreeSet<Constant>> {
        let domain = self.domain();
        let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for c in &domain {
            adj.entry(c).or_default();
        }
        for f in &self.facts {
            if !f.is_unary() {
                adj.get_mut(f.subject.as_str()).unwrap().insert(&f.object);
                adj.get_mut(f.object.as_str()).unwrap().insert(&f.subject);
            }
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut out = Vec::new();
        for start in domain.iter() {
            if seen.contains(start.as_str()) {
                continue;
            }
            let mut component = BTreeSet::new();
            let mut stack = vec![start.as_str()];
            while let Some(x) = stack.pop() {
                if !seen.insert(x) {
                    continue;
                }
                component.insert(x.to_string());
                for y in &adj[x] {
                    if !seen.contains(y) {
                        stack.push(y);
                    }
                }
            }
            out.push(component);
        }
        out
    }

    /// Parses the instance text format. Facts are statements terminated by
    /// `.`; `%` comments run to end of line; whitespace is insignificant.
    pub fn parse(text: &str) -> Result<Self> {
        let mut facts = Vec::new();
        for stmt in statements(text) {
            let oriented = OrientedFact::parse(&stmt)?;
            if oriented.rel.orientation == Orientation::Inverse {
                return Err(Error::Parse(format!(
                    "inverse relations cannot be asserted as facts: {stmt:?}"
                )));
            }
            facts.push(oriented.underlying());
        }
        Ok(Instance::new(facts))
    }
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fact in &self.facts {
            writeln!(f, "{fact}.")?;
        }
        Ok(())
    }
}

impl FromIterator<Fact> for Instance {
    fn from_iter<T: IntoIterator<Item = Fact>>(iter: T) -> Self {
        Instance::new(iter)
    }
}

/// Splits text into `.`-terminated statements, dropping `%` comments. A `.`
/// terminates a statement only when followed by whitespace or end of input,
/// so decimals like `0.25` pass through intact.
pub(crate) fn statements(text: &str) -> Result<Vec<String>> {
    let mut cleaned = String::new();
    for line in text.lines() {
        let line = match line.find('%') {
            Some(i) => &line[..i],
            None => line,
        };
        cleaned.push_str(line);
        cleaned.push('\n');
    }
    let chars: Vec<char> = cleaned.chars().collect();
    let mut out = Vec::new();
    let mut current = String::new();
    for (i, c) in chars.iter().enumerate() {
        if *c == '.' && chars.get(i + 1).is_none_or(|n| n.is_whitespace()) {
            let stmt = current.trim();
            if !stmt.is_empty() {
                out.push(stmt.to_string());
            }
            current.clear();
        } else {
            current.push(*c);
        }
    }
    let rest = current.trim();
    if !rest.is_empty() {
        return Err(Error::Parse(format!("statement {rest:?} is not terminated by '.'")));
    }
    Ok(out)
}

/// The oriented facts of `I` covered by the directed edge `e = (u, v)`:
/// unary facts at `u`, unary facts at `v`, forward facts `S(u, v)`, and
/// reversed facts `S-(u, v)`, in that order, each group sorted by relation.
///
/// The reversed edge covers the same underlying facts with `S` and `S-`
/// swapped on the non-unary ones.
pub fn covered_facts(instance: &Instance, e: &DirectedEdge) -> Result<Vec<OrientedFact>> {
    instance.check_edge(e)?;
    let (u, v) = (&e.source, &e.target);
    let mut unary_u = Vec::new();
    let mut unary_v = Vec::new();
    let mut forward = Vec::new();
    let mut inverse = Vec::new();
    for f in instance.facts() {
        if &f.subject == u && &f.object == u {
            unary_u.push(OrientedFact::new(OrientedRel::forward(&f.relation), u, u));
        } else if &f.subject == v && &f.object == v {
            unary_v.push(OrientedFact::new(OrientedRel::forward(&f.relation), v, v));
        } else if &f.subject == u && &f.object == v {
            forward.push(OrientedFact::new(OrientedRel::forward(&f.relation), u, v));
        } else if &f.subject == v && &f.object == u {
            inverse.push(OrientedFact::new(OrientedRel::inverse(&f.relation), u, v));
        }
    }
    let mut out = unary_u;
    out.append(&mut unary_v);
    out.append(&mut forward);
    out.append(&mut inverse);
    Ok(out)
}

/// Underlying base facts covered by `e`, i.e. the facts whose domain lies
/// within `{u, v}`.
pub fn covered_base_facts(instance: &Instance, e: &DirectedEdge) -> Result<Vec<Fact>> {
    Ok(covered_facts(instance, e)?.iter().map(OrientedFact::underlying).collect())
}

/// Adds a copy of every fact covered by `src = (u, v)` with `u, v` replaced
/// by `dst = (u', v')`. Facts that already exist are not duplicated, and
/// `(u', v')` is an edge of the result.
pub fn copy_edge(instance: &Instance, src: &DirectedEdge, dst: (&str, &str)) -> Result<Instance> {
    instance.check_edge(src)?;
    let mut facts: Vec<Fact> = instance.facts().cloned().collect();
    facts.extend(copied_edge_facts(instance, src, dst)?);
    Ok(Instance::new(facts))
}

/// The facts a [`copy_edge`] call would add, without the rest of the instance.
pub(crate) fn copied_edge_facts(
    instance: &Instance,
    src: &DirectedEdge,
    dst: (&str, &str),
) -> Result<Vec<Fact>> {
    let covered = covered_facts(instance, src)?;
    Ok(map_covered_to(&covered, src, dst))
}

/// Places already-computed covered facts of `src` onto the pair `dst`.
pub(crate) fn map_covered_to(
    covered: &[OrientedFact],
    src: &DirectedEdge,
    dst: (&str, &str),
) -> Vec<Fact> {
    let (u, v) = (&src.source, &src.target);
    let (nu, nv) = dst;
    let rename = |x: &str| -> String {
        if x == u {
            nu.to_string()
        } else if x == v {
            nv.to_string()
        } else {
            x.to_string()
        }
    };
    covered
        .iter()
        .map(|of| of.instantiate(&rename(&of.source), &rename(&of.target)))
        .collect()
}

/// The undirected edges `{u, v}` whose endpoints both occur in at least two
/// undirected edges, in sorted order.
pub fn non_leaf_edges(instance: &Instance) -> Vec<(Constant, Constant)> {
    let degrees = instance.edge_degrees();
    instance
        .undirected_edges()
        .into_iter()
        .filter(|(u, v)| degrees[u] >= 2 && degrees[v] >= 2)
        .collect()
}

/// Oriented facts of the form `R(l, u)` with `l` outside `{u, v}`.
pub fn left_incident_facts(instance: &Instance, e: &DirectedEdge) -> Vec<OrientedFact> {
    let u = &e.source;
    let mut out = BTreeSet::new();
    for f in instance.facts() {
        if f.is_unary() {
            continue;
        }
        if &f.object == u && !e.contains(&f.subject) {
            out.insert(OrientedFact::new(OrientedRel::forward(&f.relation), &f.subject, u));
        }
        if &f.subject == u && !e.contains(&f.object) {
            out.insert(OrientedFact::new(OrientedRel::inverse(&f.relation), &f.object, u));
        }
    }
    out.into_iter().collect()
}

/// Oriented facts of the form `R(v, r)` with `r` outside `{u, v}`.
pub fn right_incident_facts(instance: &Instance, e: &DirectedEdge) -> Vec<OrientedFact> {
    let v = &e.target;
    let mut out = BTreeSet::new();
    for f in instance.facts() {
        if f.is_unary() {
            continue;
        }
        if &f.subject == v && !e.contains(&f.object) {
            out.insert(OrientedFact::new(OrientedRel::forward(&f.relation), v, &f.object));
        }
        if &f.object == v && !e.contains(&f.subject) {
            out.insert(OrientedFact::new(OrientedRel::inverse(&f.relation), v, &f.subject));
        }
    }
    out.into_iter().collect()
}

/// One left-incident and one right-incident oriented fact of a non-leaf edge.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IncidentPair {
    pub left: OrientedFact,
    pub right: OrientedFact,
}

impl IncidentPair {
    /// Validates the pair against the instance and edge: the left fact must
    /// be `R(l, u)` and the right fact `R(v, r)` with `l, r` outside the
    /// edge, both non-unary, both present in the instance, and distinct as
    /// underlying facts.
    pub fn validated(
        instance: &Instance,
        e: &DirectedEdge,
        left: OrientedFact,
        right: OrientedFact,
    ) -> Result<Self> {
        instance.check_non_leaf_edge(e)?;
        let fail = |msg: String| Err(Error::InvalidIncidentPair(msg));
        if left.target != e.source || e.contains(&left.source) {
            return fail(format!("{left} is not left-incident to {e}"));
        }
        if right.source != e.target || e.contains(&right.target) {
            return fail(format!("{right} is not right-incident to {e}"));
        }
        if left.is_unary() || right.is_unary() {
            return fail("incident facts cannot be unary".to_string());
        }
        if !instance.contains(&left.underlying()) || !instance.contains(&right.underlying()) {
            return fail(format!("{left} or {right} is not a fact of the instance"));
        }
        if left.underlying() == right.underlying() {
            return fail(format!("{left} and {right} are the same underlying fact"));
        }
        Ok(IncidentPair { left, right })
    }
}

impl fmt::Display for IncidentPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.left, self.right)
    }
}

/// All incident pairs of a non-leaf edge, in deterministic order. Non-leaf
/// edges always have at least one.
pub fn incident_pairs(instance: &Instance, e: &DirectedEdge) -> Result<Vec<IncidentPair>> {
    instance.check_non_leaf_edge(e)?;
    let left = left_incident_facts(instance, e);
    let right = right_incident_facts(instance, e);
    let mut out = Vec::new();
    for l in &left {
        for r in &right {
            out.push(IncidentPair { left: l.clone(), right: r.clone() });
        }
    }
    debug_assert!(!out.is_empty(), "non-leaf edge without an incident pair");
    Ok(out)
}

/// Returns `base` if it does not occur in `taken`, otherwise the first
/// `base@2`, `base@3`, ... that does not.
pub fn fresh_constant(base: &str, taken: &BTreeSet<Constant>) -> Constant {
    if !taken.contains(base) {
        return base.to_string();
    }
    for i in 2u64.. {
        let candidate = format!("{base}@{i}");
        if !taken.contains(&candidate) {
            return candidate;
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(text: &str) -> Instance {
        Instance::parse(text).unwrap()
    }

    #[test]
    fn parse_and_display_round_trip() {
        let i = inst("R(a,b). % a comment\n T(b,b).\nS(c,b). R(d,c).");
        assert_eq!(i.len(), 4);
        let again = Instance::parse(&i.to_string()).unwrap();
        assert_eq!(i, again);
    }

    #[test]
    fn parse_rejects_bad_tokens() {
        assert!(Instance::parse("R(a).").is_err());
        assert!(Instance::parse("R(a,b)").is_err());
        assert!(Instance::parse("R-(a,b).").is_err());
        assert!(Instance::parse("R(a,b c).").is_err());
        assert!(Instance::parse("(a,b).").is_err());
        // Generated constants re-parse; generated relation names do not exist.
        assert!(Instance::parse("R(a#2,b@c1).").is_ok());
        assert!(Instance::parse("R#x(a,b).").is_err());
    }

    #[test]
    fn oriented_views_normalize_back() {
        let f = Fact::new("R", "a", "b");
        let (fwd, inv) = f.oriented_views();
        assert_eq!(fwd.underlying(), f);
        assert_eq!(inv.underlying(), f);
        assert_eq!(inv.rel.flipped(), fwd.rel);
        assert_eq!(fwd.rel.flipped().flipped(), fwd.rel);
    }

    #[test]
    fn covered_facts_worked_example() {
        // Facts with domain inside {b, c}: the unary fact at b and S(c,b)
        // seen reversed.
        let i = inst("R(a,b). T(b,b). S(c,b). R(d,c).");
        let e = DirectedEdge::new("b", "c");
        let got = covered_facts(&i, &e).unwrap();
        let want = vec![
            OrientedFact::new(OrientedRel::forward("T"), "b", "b"),
            OrientedFact::new(OrientedRel::inverse("S"), "b", "c"),
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn covered_facts_single_fact() {
        let i = inst("R(u,v).");
        let got = covered_facts(&i, &DirectedEdge::new("u", "v")).unwrap();
        assert_eq!(got, vec![OrientedFact::new(OrientedRel::forward("R"), "u", "v")]);
    }

    #[test]
    fn covered_facts_reversed_edge_same_underlying() {
        let i = inst("R(a,b). T(b,b). S(c,b). R(d,c). S(b,c). U(c,c).");
        let e = DirectedEdge::new("b", "c");
        let fwd: BTreeSet<Fact> =
            covered_facts(&i, &e).unwrap().iter().map(OrientedFact::underlying).collect();
        let rev: BTreeSet<Fact> = covered_facts(&i, &e.reversed())
            .unwrap()
            .iter()
            .map(OrientedFact::underlying)
            .collect();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn covered_facts_rejects_non_edges() {
        let i = inst("R(a,b). S(c,d).");
        assert!(matches!(
            covered_facts(&i, &DirectedEdge::new("a", "c")),
            Err(Error::NotAnEdge(..))
        ));
        assert!(matches!(
            covered_facts(&i, &DirectedEdge::new("a", "a")),
            Err(Error::NotAnEdge(..))
        ));
    }

    #[test]
    fn copy_edge_examples() {
        let i = inst("R(u,v).");
        let copied = copy_edge(&i, &DirectedEdge::new("u", "v"), ("u", "v2")).unwrap();
        assert_eq!(copied, inst("R(u,v). R(u,v2)."));

        // Copying onto itself changes nothing.
        let same = copy_edge(&i, &DirectedEdge::new("u", "v"), ("u", "v")).unwrap();
        assert_eq!(same, i);

        // Unary facts at the endpoints are carried along.
        let i = inst("R(u,v). U(u,u).");
        let copied = copy_edge(&i, &DirectedEdge::new("u", "v"), ("x", "y")).unwrap();
        assert_eq!(copied, inst("R(u,v). U(u,u). R(x,y). U(x,x)."));
    }

    #[test]
    fn non_leaf_edges_examples() {
        assert_eq!(
            non_leaf_edges(&inst("R(a,b). S(b,c). T(c,d).")),
            vec![("b".to_string(), "c".to_string())]
        );
        assert!(non_leaf_edges(&inst("R(a,b). T(b,c).")).is_empty());
        assert!(non_leaf_edges(&inst("R(a,b).")).is_empty());
    }

    #[test]
    fn non_leaf_edges_agree_with_degree_counting() {
        let i = inst("R(a,b). T(b,b). S(c,b). R(d,c). S(b,c). U(e,b). R(e,d).");
        let degrees = i.edge_degrees();
        let by_degree: Vec<_> = i
            .undirected_edges()
            .into_iter()
            .filter(|(u, v)| degrees[u] > 1 && degrees[v] > 1)
            .collect();
        assert_eq!(non_leaf_edges(&i), by_degree);
    }

    #[test]
    fn incident_pair_worked_example() {
        let i = inst("R(a,b). T(b,b). S(c,b). R(d,c).");
        let e = DirectedEdge::new("b", "c");
        let pairs = incident_pairs(&i, &e).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].left, OrientedFact::new(OrientedRel::forward("R"), "a", "b"));
        assert_eq!(pairs[0].right, OrientedFact::new(OrientedRel::inverse("R"), "c", "d"));
    }

    #[test]
    fn incident_pair_simple_path() {
        let i = inst("R(a,b). S(b,c). T(c,d).");
        let pairs = incident_pairs(&i, &DirectedEdge::new("b", "c")).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].left, OrientedFact::new(OrientedRel::forward("R"), "a", "b"));
        assert_eq!(pairs[0].right, OrientedFact::new(OrientedRel::forward("T"), "c", "d"));
    }

    #[test]
    fn incident_pairs_reject_leaf_edges() {
        let i = inst("R(a,b). S(b,c).");
        assert!(matches!(
            incident_pairs(&i, &DirectedEdge::new("b", "c")),
            Err(Error::LeafEdge(..))
        ));
    }

    #[test]
    fn incident_pair_validation_errors() {
        let i = inst("R(a,b). T(b,b). S(c,b). R(d,c).");
        let e = DirectedEdge::new("b", "c");
        let left = OrientedFact::new(OrientedRel::forward("R"), "a", "b");
        let right = OrientedFact::new(OrientedRel::inverse("R"), "c", "d");
        assert!(IncidentPair::validated(&i, &e, left.clone(), right.clone()).is_ok());
        // Wrong target for the left fact.
        let bad_left = OrientedFact::new(OrientedRel::forward("R"), "a", "c");
        assert!(IncidentPair::validated(&i, &e, bad_left, right.clone()).is_err());
        // Absent fact.
        let missing = OrientedFact::new(OrientedRel::forward("Z"), "a", "b");
        assert!(IncidentPair::validated(&i, &e, missing, right).is_err());
    }

    #[test]
    fn fresh_constant_avoids_collisions() {
        let taken: BTreeSet<Constant> =
            ["u", "u@2"].iter().map(|s| s.to_string()).collect();
        assert_eq!(fresh_constant("v", &taken), "v");
        assert_eq!(fresh_constant("u", &taken), "u@3");
    }

    #[test]
    fn components_split_on_gaifman_connectivity() {
        let i = inst("R(a,b). S(b,c). R(x,y). U(z,z).");
        let comps = i.components();
        assert_eq!(comps.len(), 3);
        assert_eq!(comps[0].len(), 3); // a, b, c
        assert_eq!(comps[1].len(), 2); // x, y
        assert_eq!(comps[2].len(), 1); // z
    }
}
