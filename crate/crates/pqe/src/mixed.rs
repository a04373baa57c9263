//! Signatures mixing arity 1 and arity 2, and the translation onto the
//! pure arity-two setting.
//!
//! A unary relation `A` becomes a fresh binary relation `A_2`, a unary fact
//! `A(a)` becomes the self-loop `A_2(a,a)`, and unary query atoms `a(X)`
//! become `a_2(X,X)`; probabilities carry over unchanged. The translation
//! errors if the generated name collides with an existing binary relation.
//!
//! This module also carries its own direct evaluators for mixed instances
//! (conjunctive matching and a naive Datalog fixpoint), so that the
//! translation can be checked against an independent route: satisfaction and
//! query probability must be preserved exactly.
//!
//! Extended text format: `A(a).` for unary facts next to the usual
//! `R(a,b).`; each relation must be used at a single arity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num::{BigRational, One, Signed, Zero};

use crate::instance::{
    is_user_name, statements, Constant, Fact, Instance, Relation,
};
use crate::prob::{parse_probability, Rational, Tid};
use crate::query::{Atom, Cq, DatalogProgram, DlAtom, DlRule, Query, Rpq, Ucq, Var, GOAL_PREDICATE};
use crate::{Error, Result};

/// A fact over a signature with arities 1 and 2.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum MixedFact {
    Unary { relation: Relation, element: Constant },
    Binary(Fact),
}

impl MixedFact {
    pub fn relation(&self) -> &str {
        match self {
            MixedFact::Unary { relation, .. } => relation,
            MixedFact::Binary(f) => &f.relation,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            MixedFact::Unary { .. } => 1,
            MixedFact::Binary(_) => 2,
        }
    }

    pub fn constants(&self) -> Vec<&Constant> {
        match self {
            MixedFact::Unary { element, .. } => vec![element],
            MixedFact::Binary(f) => vec![&f.subject, &f.object],
        }
    }
}

impl fmt::Display for MixedFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MixedFact::Unary { relation, element } => write!(f, "{relation}({element})"),
            MixedFact::Binary(fact) => write!(f, "{fact}"),
        }
    }
}

fn parse_mixed_fact(text: &str) -> Result<MixedFact> {
    let text = text.trim();
    let open = text
        .find('(')
        .ok_or_else(|| Error::Parse(format!("expected a fact, got {text:?}")))?;
    let relation = text[..open].trim();
    if !is_user_name(relation) {
        return Err(Error::Parse(format!("invalid relation name in {text:?}")));
    }
    let inner = text[open + 1..]
        .trim_end()
        .strip_suffix(')')
        .ok_or_else(|| Error::Parse(format!("missing ')' in fact {text:?}")))?;
    let args: Vec<&str> = inner.split(',').map(str::trim).collect();
    match args.as_slice() {
        [a] if crate::instance::is_constant_token(a) => {
            Ok(MixedFact::Unary { relation: relation.to_string(), element: a.to_string() })
        }
        [a, b]
            if crate::instance::is_constant_token(a) && crate::instance::is_constant_token(b) =>
        {
            Ok(MixedFact::Binary(Fact::new(relation, *a, *b)))
        }
        _ => Err(Error::Parse(format!("invalid fact {text:?}"))),
    }
}

/// A finite set of mixed-arity facts; each relation has a single arity.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MixedInstance {
    facts: BTreeSet<MixedFact>,
}

impl MixedInstance {
    pub fn new(facts: impl IntoIterator<Item = MixedFact>) -> Result<Self> {
        let facts: BTreeSet<MixedFact> = facts.into_iter().collect();
        check_arities(facts.iter())?;
        Ok(MixedInstance { facts })
    }

    pub fn facts(&self) -> impl Iterator<Item = &MixedFact> {
        self.facts.iter()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn domain(&self) -> BTreeSet<Constant> {
        self.facts.iter().flat_map(|f| f.constants().into_iter().cloned()).collect()
    }

    /// Relation names with their arities.
    pub fn relation_arities(&self) -> BTreeMap<Relation, usize> {
        self.facts.iter().map(|f| (f.relation().to_string(), f.arity())).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        MixedInstance::new(
            statements(text).iter().map(|s| parse_mixed_fact(s)).collect::<Result<Vec<_>>>()?,
        )
    }
}

impl fmt::Display for MixedInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fact in &self.facts {
            writeln!(f, "{fact}.")?;
        }
        Ok(())
    }
}

fn check_arities<'a>(facts: impl Iterator<Item = &'a MixedFact>) -> Result<()> {
    let mut arities: BTreeMap<&str, usize> = BTreeMap::new();
    for f in facts {
        match arities.insert(f.relation(), f.arity()) {
            Some(a) if a != f.arity() => {
                return Err(Error::Invalid(format!(
                    "relation {} used with arities {a} and {}",
                    f.relation(),
                    f.arity()
                )));
            }
            _ => {}
        }
    }
    Ok(())
}

/// A mixed-arity tuple-independent database.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedTid {
    instance: MixedInstance,
    prob: BTreeMap<MixedFact, Rational>,
}

impl MixedTid {
    pub fn new(facts: impl IntoIterator<Item = (MixedFact, Rational)>) -> Result<Self> {
        let mut prob = BTreeMap::new();
        for (fact, p) in facts {
            if p.is_negative() || p > BigRational::one() {
                return Err(Error::Invalid(format!("probability {p} of {fact} is outside [0,1]")));
            }
            if let Some(previous) = prob.insert(fact.clone(), p.clone()) {
                if previous != p {
                    return Err(Error::Invalid(format!(
                        "fact {fact} listed twice with different probabilities"
                    )));
                }
            }
        }
        let instance = MixedInstance::new(prob.keys().cloned())?;
        Ok(MixedTid { instance, prob })
    }

    pub fn instance(&self) -> &MixedInstance {
        &self.instance
    }

    pub fn probabilities(&self) -> impl Iterator<Item = (&MixedFact, &Rational)> {
        self.prob.iter()
    }

    pub fn uncertain_facts(&self) -> Vec<&MixedFact> {
        self.prob
            .iter()
            .filter(|(_, p)| !p.is_zero() && !p.is_one())
            .map(|(f, _)| f)
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut facts = Vec::new();
        for stmt in statements(text) {
            let (fact_text, prob_text) = match stmt.split_once(':') {
                Some((f, p)) => (f.trim(), Some(p.trim())),
                None => (stmt.as_str(), None),
            };
            let fact = parse_mixed_fact(fact_text)?;
            let p = match prob_text {
                Some(p) => parse_probability(p)?,
                None => BigRational::one(),
            };
            facts.push((fact, p));
        }
        MixedTid::new(facts)
    }
}

impl fmt::Display for MixedTid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (fact, p) in &self.prob {
            writeln!(f, "{fact} : {p}.")?;
        }
        Ok(())
    }
}

/// An atom of arity 1 or 2 over variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MixedAtom {
    Unary { relation: Relation, arg: Var },
    Binary { relation: Relation, subject: Var, object: Var },
}

impl MixedAtom {
    fn relation(&self) -> &str {
        match self {
            MixedAtom::Unary { relation, .. } | MixedAtom::Binary { relation, .. } => relation,
        }
    }

    fn arity(&self) -> usize {
        match self {
            MixedAtom::Unary { .. } => 1,
            MixedAtom::Binary { .. } => 2,
        }
    }
}

impl fmt::Display for MixedAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MixedAtom::Unary { relation, arg } => write!(f, "{relation}({arg})"),
            MixedAtom::Binary { relation, subject, object } => {
                write!(f, "{relation}({subject},{object})")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedCq {
    pub atoms: Vec<MixedAtom>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedUcq {
    pub disjuncts: Vec<MixedCq>,
}

impl MixedUcq {
    pub fn parse(text: &str) -> Result<Self> {
        let ucq_like = crate::query::parse_mixed_ucq_statements(text)?;
        if ucq_like.is_empty() {
            return Err(Error::Invalid("a UCQ needs at least one disjunct".into()));
        }
        Ok(MixedUcq {
            disjuncts: ucq_like
                .into_iter()
                .map(|atoms| MixedCq {
                    atoms: atoms
                        .into_iter()
                        .map(|a| match a {
                            DlAtom::Unary { predicate, arg } => {
                                MixedAtom::Unary { relation: predicate, arg }
                            }
                            DlAtom::Binary { predicate, subject, object } => {
                                MixedAtom::Binary { relation: predicate, subject, object }
                            }
                            DlAtom::Nullary { .. } => unreachable!("filtered by parser"),
                        })
                        .collect(),
                })
                .collect(),
        })
    }
}

impl fmt::Display for MixedUcq {
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

/// A query over a mixed-arity signature. Path queries have no unary symbols,
/// so they pass through the translation unchanged.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MixedQuery {
    Ucq(MixedUcq),
    Rpq(Rpq),
    Datalog(DatalogProgram),
}

impl MixedQuery {
    pub fn parse(kind: &str, text: &str) -> Result<Self> {
        match kind {
            "ucq" => Ok(MixedQuery::Ucq(MixedUcq::parse(text)?)),
            "rpq" => Ok(MixedQuery::Rpq(Rpq::parse(text)?)),
            "dl" | "datalog" => Ok(MixedQuery::Datalog(DatalogProgram::parse(text)?)),
            other => Err(Error::Parse(format!("unknown query format {other:?}"))),
        }
    }
}

impl fmt::Display for MixedQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MixedQuery::Ucq(q) => write!(f, "{q}"),
            MixedQuery::Rpq(q) => write!(f, "{q}"),
            MixedQuery::Datalog(q) => write!(f, "{q}"),
        }
    }
}

/// The binary relation name standing in for a unary relation.
pub fn binary_relation_name(relation: &str) -> Relation {
    format!("{relation}_2")
}

/// Translates a mixed instance to pure arity two: `A(a)` becomes `A_2(a,a)`.
pub fn unary_to_binary_instance(mixed: &MixedInstance) -> Result<Instance> {
    let arities = mixed.relation_arities();
    let mut facts = Vec::new();
    for f in mixed.facts() {
        facts.push(translate_fact(f, &arities)?);
    }
    Ok(Instance::new(facts))
}

fn translate_fact(f: &MixedFact, arities: &BTreeMap<Relation, usize>) -> Result<Fact> {
    match f {
        MixedFact::Binary(fact) => Ok(fact.clone()),
        MixedFact::Unary { relation, element } => {
            let fresh = binary_relation_name(relation);
            if arities.get(&fresh) == Some(&2) {
                return Err(Error::NameClash(format!(
                    "translated relation {fresh} already exists with arity 2"
                )));
            }
            Ok(Fact::new(fresh, element, element))
        }
    }
}

/// Translates a mixed TID, carrying each probability over unchanged.
pub fn unary_to_binary_tid(mixed: &MixedTid) -> Result<Tid> {
    let arities = mixed.instance().relation_arities();
    let mut out = Vec::new();
    for (f, p) in mixed.probabilities() {
        out.push((translate_fact(f, &arities)?, p.clone()));
    }
    Tid::new(out)
}

/// Translates a mixed query: unary atoms `a(X)` become `a_2(X,X)`.
pub fn unary_to_binary_query(mixed: &MixedQuery) -> Result<Query> {
    match mixed {
        MixedQuery::Rpq(r) => Ok(Query::Rpq(r.clone())),
        MixedQuery::Ucq(u) => {
            let binary_relations: BTreeSet<&str> = u
                .disjuncts
                .iter()
                .flat_map(|cq| &cq.atoms)
                .filter(|a| a.arity() == 2)
                .map(MixedAtom::relation)
                .collect();
            let mut disjuncts = Vec::new();
            for cq in &u.disjuncts {
                let mut atoms = Vec::new();
                for atom in &cq.atoms {
                    match atom {
                        MixedAtom::Binary { relation, subject, object } => atoms.push(Atom {
                            relation: relation.clone(),
                            subject: subject.clone(),
                            object: object.clone(),
                        }),
                        MixedAtom::Unary { relation, arg } => {
                            let fresh = binary_relation_name(relation);
                            if binary_relations.contains(fresh.as_str()) {
                                return Err(Error::NameClash(fresh));
                            }
                            atoms.push(Atom {
                                relation: fresh,
                                subject: arg.clone(),
                                object: arg.clone(),
                            });
                        }
                    }
                }
                disjuncts.push(Cq::new(atoms)?);
            }
            Ok(Query::Ucq(Ucq::new(disjuncts)?))
        }
        MixedQuery::Datalog(program) => {
            let taken: BTreeSet<String> = program
                .rules()
                .iter()
                .flat_map(|r| std::iter::once(&r.head).chain(&r.body))
                .map(|a| a.predicate().to_string())
                .collect();
            let mut rules = Vec::new();
            for rule in program.rules() {
                let mut body = Vec::new();
                for atom in &rule.body {
                    match atom {
                        DlAtom::Unary { predicate, arg }
                            if !program.is_intensional(predicate) =>
                        {
                            let fresh = binary_relation_name(predicate);
                            if taken.contains(&fresh) {
                                return Err(Error::NameClash(fresh));
                            }
                            body.push(DlAtom::Binary {
                                predicate: fresh,
                                subject: arg.clone(),
                                object: arg.clone(),
                            });
                        }
                        other => body.push(other.clone()),
                    }
                }
                rules.push(DlRule { head: rule.head.clone(), body });
            }
            Ok(Query::Datalog(DatalogProgram::new(rules)?))
        }
    }
}

/// Relation-name rebinding for mixed instances: exact spelling first, then
/// the unique case-insensitive match of the same arity.
fn rebind_mixed(
    names: BTreeSet<(Relation, usize)>,
    instance: &MixedInstance,
) -> BTreeMap<(Relation, usize), Relation> {
    let arities = instance.relation_arities();
    let mut out = BTreeMap::new();
    for (name, arity) in names {
        if arities.get(&name) == Some(&arity) {
            out.insert((name.clone(), arity), name);
            continue;
        }
        let matches: Vec<&Relation> = arities
            .iter()
            .filter(|(r, a)| **a == arity && r.eq_ignore_ascii_case(&name))
            .map(|(r, _)| r)
            .collect();
        if matches.len() == 1 {
            out.insert((name, arity), matches[0].clone());
        } else {
            out.insert((name.clone(), arity), name);
        }
    }
    out
}

/// Direct satisfaction check on a mixed instance; this route never goes
/// through the binary translation.
pub fn eval_mixed_query(query: &MixedQuery, instance: &MixedInstance) -> bool {
    match query {
        MixedQuery::Ucq(u) => u.disjuncts.iter().any(|cq| match_mixed_cq(cq, instance)),
        MixedQuery::Rpq(r) => {
            // Unary facts never contribute edges; evaluate on the binary part.
            let binary = Instance::new(instance.facts().filter_map(|f| match f {
                MixedFact::Binary(fact) => Some(fact.clone()),
                MixedFact::Unary { .. } => None,
            }));
            let domain_nonempty = !instance.domain().is_empty();
            match crate::query::eval_query(
                &Query::Rpq(r.clone()),
                &binary,
                crate::hom::SearchLimits::default(),
            ) {
                Ok(v) => {
                    v || (domain_nonempty && crate::query::rpq_to_nfa(r).accepts_empty_word())
                }
                Err(_) => unreachable!("path evaluation does not use a budget"),
            }
        }
        MixedQuery::Datalog(p) => mixed_datalog_holds(p, instance),
    }
}

fn match_mixed_cq(cq: &MixedCq, instance: &MixedInstance) -> bool {
    let names: BTreeSet<(Relation, usize)> =
        cq.atoms.iter().map(|a| (a.relation().to_string(), a.arity())).collect();
    let rebind = rebind_mixed(names, instance);
    let mut bindings: HashMap<Var, Constant> = HashMap::new();
    match_mixed_atoms(&cq.atoms, 0, &rebind, instance, &mut bindings)
}

fn match_mixed_atoms(
    atoms: &[MixedAtom],
    position: usize,
    rebind: &BTreeMap<(Relation, usize), Relation>,
    instance: &MixedInstance,
    bindings: &mut HashMap<Var, Constant>,
) -> bool {
    let Some(atom) = atoms.get(position) else {
        return true;
    };
    let key = (atom.relation().to_string(), atom.arity());
    let target = rebind.get(&key).map(String::as_str).unwrap_or(atom.relation());
    for fact in instance.facts() {
        if fact.relation() != target || fact.arity() != atom.arity() {
            continue;
        }
        let (vars, values): (Vec<&Var>, Vec<&Constant>) = match (atom, fact) {
            (MixedAtom::Unary { arg, .. }, MixedFact::Unary { element, .. }) => {
                (vec![arg], vec![element])
            }
            (MixedAtom::Binary { subject, object, .. }, MixedFact::Binary(f)) => {
                (vec![subject, object], vec![&f.subject, &f.object])
            }
            _ => continue,
        };
        let mut newly = Vec::new();
        let mut ok = true;
        for (var, value) in vars.iter().zip(&values) {
            match bindings.get(*var) {
                Some(existing) if existing == *value => {}
                Some(_) => {
                    ok = false;
                    break;
                }
                None => {
                    bindings.insert((*var).clone(), (*value).clone());
                    newly.push((*var).clone());
                }
            }
        }
        if ok && match_mixed_atoms(atoms, position + 1, rebind, instance, bindings) {
            return true;
        }
        for var in newly {
            bindings.remove(&var);
        }
    }
    false
}

fn mixed_datalog_holds(program: &DatalogProgram, instance: &MixedInstance) -> bool {
    let names: BTreeSet<(Relation, usize)> = program
        .rules()
        .iter()
        .flat_map(|r| &r.body)
        .filter(|a| !program.is_intensional(a.predicate()) && a.arity() > 0)
        .map(|a| (a.predicate().to_string(), a.arity()))
        .collect();
    let rebind = rebind_mixed(names, instance);

    let mut total: BTreeSet<(String, Vec<Constant>)> = BTreeSet::new();
    loop {
        let mut changed = false;
        for rule in program.rules() {
            let mut results = Vec::new();
            mixed_rule_match(program, instance, &rebind, &total, &rule.body, 0, &mut HashMap::new(), &mut results);
            for bindings in results {
                let derived = (
                    rule.head.predicate().to_string(),
                    rule.head.variables().iter().map(|v| bindings[*v].clone()).collect::<Vec<_>>(),
                );
                changed |= total.insert(derived);
            }
        }
        if !changed {
            break;
        }
    }
    total.contains(&(GOAL_PREDICATE.to_string(), vec![]))
}

#[allow(clippy::too_many_arguments)]
fn mixed_rule_match(
    program: &DatalogProgram,
    instance: &MixedInstance,
    rebind: &BTreeMap<(Relation, usize), Relation>,
    total: &BTreeSet<(String, Vec<Constant>)>,
    body: &[DlAtom],
    position: usize,
    bindings: &mut HashMap<Var, Constant>,
    results: &mut Vec<HashMap<Var, Constant>>,
) {
    let Some(atom) = body.get(position) else {
        results.push(bindings.clone());
        return;
    };
    let rows: Vec<Vec<Constant>> = if program.is_intensional(atom.predicate()) {
        total
            .iter()
            .filter(|(p, args)| p == atom.predicate() && args.len() == atom.arity())
            .map(|(_, args)| args.clone())
            .collect()
    } else {
        let key = (atom.predicate().to_string(), atom.arity());
        let target = rebind.get(&key).map(String::as_str).unwrap_or(atom.predicate());
        instance
            .facts()
            .filter(|f| f.relation() == target && f.arity() == atom.arity())
            .map(|f| f.constants().into_iter().cloned().collect())
            .collect()
    };
    for row in rows {
        let vars = atom.variables();
        let mut newly = Vec::new();
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
                    newly.push((*var).clone());
                }
            }
        }
        if ok {
            mixed_rule_match(program, instance, rebind, total, body, position + 1, bindings, results);
        }
        for var in newly {
            bindings.remove(&var);
        }
    }
}

/// Exact query probability over a mixed TID, by direct enumeration with the
/// mixed evaluator.
pub fn mixed_pqe_exact(query: &MixedQuery, tid: &MixedTid, world_cap: u64) -> Result<Rational> {
    let uncertain = tid.uncertain_facts();
    let m = uncertain.len();
    if m >= 64 || (1u128 << m) > world_cap as u128 {
        return Err(Error::WorldCapExceeded { needed: 1u128 << m.min(127), cap: world_cap as u128 });
    }
    let base: Vec<MixedFact> = tid
        .probabilities()
        .filter(|(_, p)| p.is_one())
        .map(|(f, _)| f.clone())
        .collect();
    let mut total = BigRational::zero();
    for mask in 0..(1u64 << m) {
        let mut facts = base.clone();
        let mut weight = BigRational::one();
        for (bit, fact) in uncertain.iter().enumerate() {
            let p = tid.probabilities().find(|(f, _)| f == fact).map(|(_, p)| p.clone()).unwrap();
            if mask & (1 << bit) != 0 {
                facts.push((*fact).clone());
                weight *= p;
            } else {
                weight *= BigRational::one() - p;
            }
        }
        let world = MixedInstance::new(facts).expect("world inherits arity consistency");
        if eval_mixed_query(query, &world) {
            total += weight;
        }
    }
    Ok(total)
}
