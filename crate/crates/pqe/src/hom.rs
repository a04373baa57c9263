//! Budgeted backtracking search for homomorphisms between instances.
//!
//! A homomorphism from `I` to `I'` is a total function `h` on `dom(I)` such
//! that `R(h(a), h(b))` is a fact of `I'` for every fact `R(a, b)` of `I`.
//! The search problem is NP-hard in general, so every search carries a step
//! budget; running out of budget is a distinct outcome
//! ([`crate::Error::BudgetExhausted`]) and is never reported as "no
//! homomorphism exists".
//!
//! Elements are assigned most-constrained-first (preferring elements with
//! already-assigned neighbors, then higher fact degree), and candidates are
//! pruned by per-relation adjacency with everything assigned so far.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::instance::{Constant, Fact, Instance};
use crate::{Error, Result};

/// A verified or candidate mapping between instance domains.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Homomorphism {
    map: BTreeMap<Constant, Constant>,
}

impl Homomorphism {
    pub fn new(map: BTreeMap<Constant, Constant>) -> Self {
        Homomorphism { map }
    }

    /// The identity mapping on the domain of `instance`.
    pub fn identity(instance: &Instance) -> Self {
        Homomorphism { map: instance.domain().into_iter().map(|c| (c.clone(), c)).collect() }
    }

    pub fn apply(&self, x: &str) -> Option<&str> {
        self.map.get(x).map(String::as_str)
    }

    pub fn mapping(&self) -> &BTreeMap<Constant, Constant> {
        &self.map
    }

    /// Checks totality on `dom(src)` and preservation of every fact.
    pub fn verify(&self, src: &Instance, dst: &Instance) -> bool {
        for x in src.domain() {
            if !self.map.contains_key(&x) {
                return false;
            }
        }
        src.facts().all(|f| {
            dst.contains(&Fact::new(&f.relation, &self.map[&f.subject], &self.map[&f.object]))
        })
    }

    /// Composition `g ∘ self`: apply `self` first, then `g`.
    pub fn then(&self, g: &Homomorphism) -> Option<Homomorphism> {
        let mut map = BTreeMap::new();
        for (x, y) in &self.map {
            map.insert(x.clone(), g.apply(y)?.to_string());
        }
        Some(Homomorphism { map })
    }

    pub fn is_injective(&self) -> bool {
        let image: BTreeSet<&Constant> = self.map.values().collect();
        image.len() == self.map.len()
    }

    /// The inverse mapping, when this one is injective.
    pub fn inverted(&self) -> Option<Homomorphism> {
        if !self.is_injective() {
            return None;
        }
        Some(Homomorphism {
            map: self.map.iter().map(|(x, y)| (y.clone(), x.clone())).collect(),
        })
    }

    /// Applies the mapping to every fact of `instance`.
    pub fn image(&self, instance: &Instance) -> Instance {
        Instance::new(instance.facts().map(|f| {
            Fact::new(
                &f.relation,
                self.apply(&f.subject).unwrap_or(&f.subject),
                self.apply(&f.object).unwrap_or(&f.object),
            )
        }))
    }
}

impl fmt::Display for Homomorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        write!(f, "{{")?;
        for (x, y) in &self.map {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{x}->{y}")?;
            first = false;
        }
        write!(f, "}}")
    }
}

/// Step budget for a single search. One step is one candidate assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchLimits {
    pub budget: u64,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits { budget: 10_000_000 }
    }
}

impl SearchLimits {
    pub fn with_budget(budget: u64) -> Self {
        SearchLimits { budget }
    }
}

struct Search<'a> {
    src_elements: Vec<&'a str>,
    /// For each source element index, the facts it occurs in.
    src_facts: Vec<Vec<&'a Fact>>,
    /// Source adjacency as element indices (non-unary co-occurrence).
    src_adj: Vec<Vec<usize>>,
    index_of: HashMap<&'a str, usize>,
    dst_elements: Vec<&'a str>,
    dst_facts: HashSet<&'a Fact>,
    injective: bool,
    steps: u64,
    budget: u64,
}

impl<'a> Search<'a> {
    fn new(src: &'a Instance, dst: &'a Instance, limits: SearchLimits, injective: bool) -> Self {
        let element_refs = |i: &'a Instance| -> Vec<&'a str> {
            let set: BTreeSet<&str> =
                i.facts().flat_map(|f| [f.subject.as_str(), f.object.as_str()]).collect();
            set.into_iter().collect()
        };
        let src_elements = element_refs(src);
        let index_of: HashMap<&str, usize> =
            src_elements.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut src_facts: Vec<Vec<&Fact>> = vec![Vec::new(); src_elements.len()];
        let mut src_adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); src_elements.len()];
        for f in src.facts() {
            let s = index_of[f.subject.as_str()];
            let o = index_of[f.object.as_str()];
            src_facts[s].push(f);
            if s != o {
                src_facts[o].push(f);
                src_adj[s].insert(o);
                src_adj[o].insert(s);
            }
        }
        let dst_elements = element_refs(dst);
        Search {
            src_elements,
            src_facts,
            src_adj: src_adj.into_iter().map(|s| s.into_iter().collect()).collect(),
            index_of,
            dst_elements,
            dst_facts: dst.facts().collect(),
            injective,
            steps: 0,
            budget: limits.budget,
        }
    }

    /// Next unassigned element: most assigned neighbors first, then highest
    /// fact degree, then name order.
    fn pick(&self, assignment: &[Option<usize>]) -> Option<usize> {
        let mut best: Option<(usize, usize, usize)> = None;
        for (i, slot) in assignment.iter().enumerate() {
            if slot.is_some() {
                continue;
            }
            let assigned_neighbors =
                self.src_adj[i].iter().filter(|j| assignment[**j].is_some()).count();
            let degree = self.src_facts[i].len();
            let candidate = (assigned_neighbors, degree, i);
            best = match best {
                None => Some(candidate),
                Some((n, d, j)) => {
                    if (candidate.0, candidate.1) > (n, d)
                        || ((candidate.0, candidate.1) == (n, d) && i < j)
                    {
                        Some(candidate)
                    } else {
                        Some((n, d, j))
                    }
                }
            };
        }
        best.map(|(_, _, i)| i)
    }

    /// Whether mapping element `i` to dst element `y` respects every fact of
    /// `i` whose other endpoint is already assigned.
    fn consistent(&self, assignment: &[Option<usize>], i: usize, y: &str) -> bool {
        for f in &self.src_facts[i] {
            let s = self.index_of[f.subject.as_str()];
            let o = self.index_of[f.object.as_str()];
            let subject = if s == i { Some(y) } else { assignment[s].map(|k| self.dst_elements[k]) };
            let object = if o == i { Some(y) } else { assignment[o].map(|k| self.dst_elements[k]) };
            if let (Some(a), Some(b)) = (subject, object) {
                let mapped = Fact::new(&f.relation, a, b);
                if !self.dst_facts.contains(&mapped) {
                    return false;
                }
            }
        }
        true
    }

    fn solve(&mut self, assignment: &mut Vec<Option<usize>>) -> Result<bool> {
        let Some(i) = self.pick(assignment) else {
            return Ok(true);
        };
        for k in 0..self.dst_elements.len() {
            if self.injective && assignment.iter().any(|slot| *slot == Some(k)) {
                continue;
            }
            self.steps += 1;
            if self.steps > self.budget {
                return Err(Error::BudgetExhausted(self.steps));
            }
            if self.consistent(assignment, i, self.dst_elements[k]) {
                assignment[i] = Some(k);
                if self.solve(assignment)? {
                    return Ok(true);
                }
                assignment[i] = None;
            }
        }
        Ok(false)
    }

    fn run(&mut self) -> Result<Option<Homomorphism>> {
        if self.src_elements.is_empty() {
            return Ok(Some(Homomorphism::default()));
        }
        if self.dst_elements.is_empty() {
            return Ok(None);
        }
        let mut assignment: Vec<Option<usize>> = vec![None; self.src_elements.len()];
        if self.solve(&mut assignment)? {
            let map = assignment
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    (self.src_elements[i].to_string(), self.dst_elements[k.unwrap()].to_string())
                })
                .collect();
            Ok(Some(Homomorphism::new(map)))
        } else {
            Ok(None)
        }
    }
}

/// Searches for a homomorphism from `src` to `dst` within the step budget.
///
/// `Ok(None)` means the search space was exhausted and no homomorphism
/// exists; running out of budget surfaces as an error instead.
pub fn find_homomorphism(
    src: &Instance,
    dst: &Instance,
    limits: SearchLimits,
) -> Result<Option<Homomorphism>> {
    let found = Search::new(src, dst, limits, false).run()?;
    if let Some(h) = &found {
        debug_assert!(h.verify(src, dst));
    }
    Ok(found)
}

/// Searches for an isomorphism: an injective homomorphism between instances
/// of equal size whose inverse is also a homomorphism.
pub fn find_isomorphism(
    a: &Instance,
    b: &Instance,
    limits: SearchLimits,
) -> Result<Option<Homomorphism>> {
    if a.len() != b.len() || a.domain().len() != b.domain().len() {
        return Ok(None);
    }
    let Some(h) = Search::new(a, b, limits, true).run()? else {
        return Ok(None);
    };
    // Injective on equal domains, and fact counts match, so the fact image
    // is exactly `b`; double-check that the inverse verifies.
    let inverse = h.inverted().expect("injective search result");
    if inverse.verify(b, a) {
        Ok(Some(h))
    } else {
        Ok(None)
    }
}

pub fn is_isomorphic(a: &Instance, b: &Instance, limits: SearchLimits) -> Result<bool> {
    Ok(find_isomorphism(a, b, limits)?.is_some())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(text: &str) -> Instance {
        Instance::parse(text).unwrap()
    }

    #[test]
    fn subset_has_identity_style_homomorphism() {
        let small = inst("R(a,b). S(b,c).");
        let big = inst("R(a,b). S(b,c). T(c,d).");
        let h = find_homomorphism(&small, &big, SearchLimits::default()).unwrap().unwrap();
        assert!(h.verify(&small, &big));
    }

    #[test]
    fn relation_mismatch_has_none() {
        let src = inst("R(a,b).");
        let dst = inst("S(a,b).");
        assert!(find_homomorphism(&src, &dst, SearchLimits::default()).unwrap().is_none());
    }

    #[test]
    fn empty_source_maps_trivially() {
        let src = Instance::empty();
        let dst = inst("R(a,b).");
        assert!(find_homomorphism(&src, &dst, SearchLimits::default()).unwrap().is_some());
        assert!(find_homomorphism(&dst, &src, SearchLimits::default()).unwrap().is_none());
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let src = inst("R(a,b). R(b,c). R(c,d). R(d,e).");
        let dst = inst("R(x,y). R(y,z). R(z,x).");
        let result = find_homomorphism(&src, &dst, SearchLimits::with_budget(1));
        assert!(matches!(result, Err(Error::BudgetExhausted(_))));
    }

    #[test]
    fn composition_verifies() {
        let a = inst("R(a,b).");
        let b = inst("R(x,y). R(y,x).");
        let c = inst("R(s,s).");
        let ab = find_homomorphism(&a, &b, SearchLimits::default()).unwrap().unwrap();
        let bc = find_homomorphism(&b, &c, SearchLimits::default()).unwrap().unwrap();
        let ac = ab.then(&bc).unwrap();
        assert!(ac.verify(&a, &c));
    }

    #[test]
    fn unary_facts_constrain_targets() {
        let src = inst("R(a,b). U(a,a).");
        let dst_without = inst("R(x,y).");
        let dst_with = inst("R(x,y). U(x,x).");
        assert!(find_homomorphism(&src, &dst_without, SearchLimits::default())
            .unwrap()
            .is_none());
        assert!(find_homomorphism(&src, &dst_with, SearchLimits::default()).unwrap().is_some());
    }

    #[test]
    fn isomorphism_on_renamed_instance() {
        let a = inst("R(a,b). S(b,c). T(c,d).");
        let b = inst("R(p,q). S(q,r). T(r,s).");
        assert!(is_isomorphic(&a, &b, SearchLimits::default()).unwrap());
        let c = inst("R(p,q). S(q,r). T(q,s).");
        assert!(!is_isomorphic(&a, &c, SearchLimits::default()).unwrap());
    }

    #[test]
    fn homomorphic_but_not_isomorphic() {
        let a = inst("R(a,b). R(x,y).");
        let b = inst("R(a,b).");
        assert!(find_homomorphism(&a, &b, SearchLimits::default()).unwrap().is_some());
        assert!(!is_isomorphic(&a, &b, SearchLimits::default()).unwrap());
    }

    #[test]
    fn mapping_respects_fact_direction() {
        let src = inst("R(a,b). S(b,c).");
        let dst = inst("R(y,x). S(x,z).");
        let h = find_homomorphism(&src, &dst, SearchLimits::default()).unwrap().unwrap();
        assert_eq!(h.apply("a"), Some("y"));
        assert_eq!(h.apply("b"), Some("x"));
    }
}
