//! Instance transformations: edge iteration, dissociation, fine
//! dissociation, star collapse, and an exhaustive dissociation loop.
//!
//! All of them are defined relative to a non-leaf directed edge `e = (u, v)`
//! and operate on the oriented view of the incident facts. Fresh elements
//! are named deterministically from the endpoint they copy (`u#2`, `u#d`,
//! `u#f`), with a collision guard against the ambient domain, so repeated
//! rewrites stay reproducible. Instance equality downstream is checked up to
//! isomorphism, never on raw names.

use std::collections::BTreeSet;

use crate::hom::{find_isomorphism, Homomorphism, SearchLimits};
use crate::instance::{
    covered_facts, fresh_constant, left_incident_facts, map_covered_to, non_leaf_edges,
    right_incident_facts, Constant, DirectedEdge, Fact, IncidentPair, Instance, OrientedFact,
};
use crate::{Error, Result};

fn validated_pair(
    instance: &Instance,
    e: &DirectedEdge,
    pair: &IncidentPair,
) -> Result<IncidentPair> {
    IncidentPair::validated(instance, e, pair.left.clone(), pair.right.clone())
}

/// The n-th iterate of `e` in the instance relative to the incident pair:
/// `e` is replaced by a back-and-forth path of `2n - 1` copies between
/// copies `u_1..u_n` of `u` and `v_1..v_n` of `v` (with `u_1 = u` and
/// `v_n = v`), the pair's facts are kept only at `u_1` and `v_n`, and every
/// other incident fact is replicated at each copy.
///
/// For `n = 1` the result is the original instance. The domain grows by
/// exactly `2(n - 1)`.
pub fn iterate_edge(
    instance: &Instance,
    e: &DirectedEdge,
    pair: &IncidentPair,
    n: u32,
) -> Result<Instance> {
    if n == 0 {
        return Err(Error::Invalid("iterate count must be at least 1".into()));
    }
    let pair = validated_pair(instance, e, pair)?;
    let (u, v) = (&e.source, &e.target);

    let mut taken: BTreeSet<Constant> = instance.domain();
    let mut u_copies: Vec<Constant> = vec![u.clone()];
    for i in 2..=n {
        let name = fresh_constant(&format!("{u}#{i}"), &taken);
        taken.insert(name.clone());
        u_copies.push(name);
    }
    let mut v_copies: Vec<Constant> = Vec::new();
    for i in 1..n {
        let name = fresh_constant(&format!("{v}#{i}"), &taken);
        taken.insert(name.clone());
        v_copies.push(name);
    }
    v_copies.push(v.clone());

    let mut rest: BTreeSet<Constant> = instance.domain();
    rest.remove(u);
    rest.remove(v);
    let mut facts: Vec<Fact> = instance.induced(&rest).facts().cloned().collect();

    // The pair's facts live only at the ends of the path.
    facts.push(pair.left.instantiate(&pair.left.source, &u_copies[0]));
    facts.push(pair.right.instantiate(&v_copies[n as usize - 1], &pair.right.target));

    for other in left_incident_facts(instance, e) {
        if other == pair.left {
            continue;
        }
        for ui in &u_copies {
            facts.push(other.instantiate(&other.source, ui));
        }
    }
    for other in right_incident_facts(instance, e) {
        if other == pair.right {
            continue;
        }
        for vi in &v_copies {
            facts.push(other.instantiate(vi, &other.target));
        }
    }

    let covered = covered_facts(instance, e)?;
    for i in 0..n as usize {
        facts.extend(map_covered_to(&covered, e, (&u_copies[i], &v_copies[i])));
        if i + 1 < n as usize {
            facts.extend(map_covered_to(&covered, e, (&u_copies[i + 1], &v_copies[i])));
        }
    }
    Ok(Instance::new(facts))
}

/// Dissociation of a non-leaf edge: copy `e` onto `(u, v')` and `(u', v)`
/// with fresh `u'`, `v'`, then remove the non-unary facts covered by `e`.
/// The domain grows by exactly 2 and the number of non-leaf edges drops by
/// exactly 1.
pub fn dissociate_edge(instance: &Instance, e: &DirectedEdge) -> Result<Instance> {
    instance.check_non_leaf_edge(e)?;
    let (u, v) = (&e.source, &e.target);
    let mut taken = instance.domain();
    let u_new = fresh_constant(&format!("{u}#d"), &taken);
    taken.insert(u_new.clone());
    let v_new = fresh_constant(&format!("{v}#d"), &taken);

    let covered = covered_facts(instance, e)?;
    let removed: BTreeSet<Fact> = covered
        .iter()
        .filter(|of| !of.is_unary())
        .map(OrientedFact::underlying)
        .collect();
    let mut facts: Vec<Fact> =
        instance.facts().filter(|f| !removed.contains(f)).cloned().collect();
    facts.extend(map_covered_to(&covered, e, (u, &v_new)));
    facts.extend(map_covered_to(&covered, e, (&u_new, v)));
    Ok(Instance::new(facts))
}

/// Fine dissociation of `e` relative to an incident pair and a distinguished
/// non-unary covered fact `f_m`: the pair's facts stay only at `u` and `v`,
/// every other incident fact is replicated on the fresh copies `u'`, `v'` as
/// well, full copies of `e` go on `(u, v')` and `(u', v)`, and copies of `e`
/// *without* `f_m` go on `(u, v)` and `(u', v')`.
///
/// If `f_m` is the only non-unary fact covered by `e`, then `(u, v)` and
/// `(u', v')` are not edges of the result.
pub fn fine_dissociate(
    instance: &Instance,
    e: &DirectedEdge,
    pair: &IncidentPair,
    f_m: &Fact,
) -> Result<Instance> {
    let pair = validated_pair(instance, e, pair)?;
    if f_m.is_unary() {
        return Err(Error::Invalid(format!("{f_m} is unary; the distinguished fact cannot be")));
    }
    let covered = covered_facts(instance, e)?;
    if !covered.iter().any(|of| &of.underlying() == f_m) {
        return Err(Error::Invalid(format!("{f_m} is not covered by the edge {e}")));
    }
    let (u, v) = (&e.source, &e.target);
    let mut taken = instance.domain();
    let u_new = fresh_constant(&format!("{u}#f"), &taken);
    taken.insert(u_new.clone());
    let v_new = fresh_constant(&format!("{v}#f"), &taken);

    let mut rest: BTreeSet<Constant> = instance.domain();
    rest.remove(u);
    rest.remove(v);
    let mut facts: Vec<Fact> = instance.induced(&rest).facts().cloned().collect();

    facts.push(pair.left.underlying());
    facts.push(pair.right.underlying());

    for other in left_incident_facts(instance, e) {
        if other == pair.left {
            continue;
        }
        facts.push(other.underlying());
        facts.push(other.instantiate(&other.source, &u_new));
    }
    for other in right_incident_facts(instance, e) {
        if other == pair.right {
            continue;
        }
        facts.push(other.underlying());
        facts.push(other.instantiate(&v_new, &other.target));
    }

    let without_mid: Vec<OrientedFact> =
        covered.iter().filter(|of| &of.underlying() != f_m).cloned().collect();
    facts.extend(map_covered_to(&covered, e, (u, &v_new)));
    facts.extend(map_covered_to(&covered, e, (&u_new, v)));
    facts.extend(map_covered_to(&without_mid, e, (u, v)));
    facts.extend(map_covered_to(&without_mid, e, (&u_new, &v_new)));
    Ok(Instance::new(facts))
}

/// Repeatedly dissociates the first non-leaf edge until none remain.
/// Returns the final instance and the number of steps, which always equals
/// the initial number of non-leaf edges.
pub fn dissociate_until_leaf_only(instance: &Instance) -> Result<(Instance, usize)> {
    let mut current = instance.clone();
    let mut steps = 0usize;
    loop {
        let candidates = non_leaf_edges(&current);
        let Some((u, v)) = candidates.first() else {
            return Ok((current, steps));
        };
        current = dissociate_edge(&current, &DirectedEdge::new(u, v))?;
        steps += 1;
    }
}

/// Collapses an instance with no non-leaf edges onto a small subinstance:
/// within each star, leaf edges carrying identical fact sets are merged onto
/// one representative, and isomorphic connected components are merged onto
/// one representative. Returns the subinstance together with a verified
/// homomorphism from the input onto it.
pub fn collapse_stars(
    instance: &Instance,
    limits: SearchLimits,
) -> Result<(Instance, Homomorphism)> {
    if let Some((u, v)) = non_leaf_edges(instance).first() {
        return Err(Error::Invalid(format!(
            "instance has a non-leaf edge ({u},{v}); collapse applies only to star-shaped instances"
        )));
    }

    // Per-component collapse: keep one leaf edge per covered-fact signature.
    let mut collapsed: Vec<(Instance, Homomorphism)> = Vec::new();
    for component_elements in instance.components() {
        let component = instance.induced(&component_elements);
        collapsed.push(collapse_component(&component));
    }

    // Merge isomorphic components, keeping the first in serialized order.
    let mut order: Vec<usize> = (0..collapsed.len()).collect();
    order.sort_by_key(|i| collapsed[*i].0.to_string());
    let mut representatives: Vec<usize> = Vec::new();
    let mut final_facts: Vec<Fact> = Vec::new();
    let mut mapping = std::collections::BTreeMap::new();
    for idx in order {
        let (component, local) = &collapsed[idx];
        let mut target = None;
        for rep in &representatives {
            if let Some(iso) = find_isomorphism(component, &collapsed[*rep].0, limits)? {
                target = Some(iso);
                break;
            }
        }
        match target {
            None => {
                representatives.push(idx);
                final_facts.extend(component.facts().cloned());
                for (x, y) in local.mapping() {
                    mapping.insert(x.clone(), y.clone());
                }
            }
            Some(iso) => {
                let through = local.then(&iso).expect("iso covers collapsed component domain");
                for (x, y) in through.mapping() {
                    mapping.insert(x.clone(), y.clone());
                }
            }
        }
    }

    let result = Instance::new(final_facts);
    let hom = Homomorphism::new(mapping);
    debug_assert!(result.is_subinstance_of(instance));
    debug_assert!(hom.verify(instance, &result));
    Ok((result, hom))
}

/// Collapses one connected component with no non-leaf edge. Such a component
/// has at most one element occurring in two or more edges; every edge hangs
/// off it, and edges with the same covered-fact signature fold together.
fn collapse_component(component: &Instance) -> (Instance, Homomorphism) {
    let degrees = component.edge_degrees();
    let center = degrees.iter().find(|(_, d)| **d >= 2).map(|(c, _)| c.clone());
    let Some(center) = center else {
        // A single edge, a single element, or an isolated unary star.
        return (component.clone(), Homomorphism::identity(component));
    };

    let mut signature_to_rep: std::collections::BTreeMap<String, Constant> =
        std::collections::BTreeMap::new();
    let mut mapping = std::collections::BTreeMap::new();
    mapping.insert(center.clone(), center.clone());
    let mut kept: Vec<Fact> = Vec::new();

    // Unary facts at the center are covered by every edge; keep them once.
    for f in component.facts() {
        if f.subject == center && f.object == center {
            kept.push(f.clone());
        }
    }

    let mut leaves: Vec<Constant> = component
        .undirected_edges()
        .into_iter()
        .map(|(x, y)| if x == center { y } else { x })
        .collect();
    leaves.sort();
    for leaf in leaves {
        let edge = DirectedEdge::new(&center, &leaf);
        let covered = covered_facts(component, &edge).expect("star edge");
        let signature: Vec<String> = covered
            .iter()
            .map(|of| {
                let mark = |x: &Constant| if *x == leaf { "·" } else { "c" };
                format!("{}:{}:{}", of.rel, mark(&of.source), mark(&of.target))
            })
            .collect();
        let key = signature.join(";");
        match signature_to_rep.get(&key) {
            Some(rep) => {
                mapping.insert(leaf.clone(), rep.clone());
            }
            None => {
                signature_to_rep.insert(key, leaf.clone());
                mapping.insert(leaf.clone(), leaf.clone());
                for of in &covered {
                    kept.push(of.underlying());
                }
            }
        }
    }

    (Instance::new(kept), Homomorphism::new(mapping))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hom::{find_homomorphism, is_isomorphic};
    use crate::instance::incident_pairs;

    fn inst(text: &str) -> Instance {
        Instance::parse(text).unwrap()
    }

    fn path() -> Instance {
        inst("R(a,b). S(b,c). T(c,d).")
    }

    fn path_pair(i: &Instance) -> (DirectedEdge, IncidentPair) {
        let e = DirectedEdge::new("b", "c");
        let pairs = incident_pairs(i, &e).unwrap();
        (e, pairs[0].clone())
    }

    #[test]
    fn iterate_n1_is_identity() {
        let i = path();
        let (e, pair) = path_pair(&i);
        assert_eq!(iterate_edge(&i, &e, &pair, 1).unwrap(), i);

        let rich = inst("R(a,b). T(b,b). S(c,b). R(d,c).");
        let e = DirectedEdge::new("b", "c");
        let pair = incident_pairs(&rich, &e).unwrap()[0].clone();
        assert_eq!(iterate_edge(&rich, &e, &pair, 1).unwrap(), rich);
    }

    #[test]
    fn iterate_n2_matches_golden_instance() {
        let i = path();
        let (e, pair) = path_pair(&i);
        let got = iterate_edge(&i, &e, &pair, 2).unwrap();
        let want = inst("R(a,b). S(b,c1). S(b2,c1). S(b2,c). T(c,d).");
        assert!(is_isomorphic(&got, &want, SearchLimits::default()).unwrap());
        assert_eq!(got.domain().len(), i.domain().len() + 2);
    }

    #[test]
    fn iterate_n3_structure() {
        // Two incident edges per side; only the pair's facts stay at the ends.
        let i = inst("L(l,u). O(l1,u). E(u,v). F(v,r). P(v,r1).");
        let e = DirectedEdge::new("u", "v");
        let pair = IncidentPair::validated(
            &i,
            &e,
            OrientedFact::parse("L(l,u)").unwrap(),
            OrientedFact::parse("F(v,r)").unwrap(),
        )
        .unwrap();
        let got = iterate_edge(&i, &e, &pair, 3).unwrap();
        let want = inst(
            "L(l,u).
             O(l1,u). O(l1,u2). O(l1,u3).
             E(u,v1). E(u2,v1). E(u2,v2). E(u3,v2). E(u3,v).
             F(v,r).
             P(v1,r1). P(v2,r1). P(v,r1).",
        );
        assert!(is_isomorphic(&got, &want, SearchLimits::default()).unwrap());
        // 5 copies of the edge, one per E fact.
        assert_eq!(got.facts().filter(|f| f.relation == "E").count(), 5);
        assert_eq!(got.domain().len(), i.domain().len() + 4);
    }

    #[test]
    fn iterate_rejects_bad_input() {
        let i = path();
        let (e, pair) = path_pair(&i);
        assert!(iterate_edge(&i, &e, &pair, 0).is_err());
        let leaf = DirectedEdge::new("a", "b");
        assert!(iterate_edge(&i, &leaf, &pair, 2).is_err());
        let foreign = IncidentPair {
            left: OrientedFact::parse("Z(a,b)").unwrap(),
            right: pair.right.clone(),
        };
        assert!(iterate_edge(&i, &e, &foreign, 2).is_err());
    }

    #[test]
    fn iterates_map_homomorphically_to_smaller_ones() {
        let i = path();
        let (e, pair) = path_pair(&i);
        let iterates: Vec<Instance> =
            (1..=5).map(|n| iterate_edge(&i, &e, &pair, n).unwrap()).collect();
        for j in 0..iterates.len() {
            for k in 0..=j {
                let hom =
                    find_homomorphism(&iterates[j], &iterates[k], SearchLimits::default())
                        .unwrap();
                assert!(hom.is_some(), "no homomorphism from iterate {} to {}", j + 1, k + 1);
            }
        }
    }

    #[test]
    fn dissociation_golden_example() {
        let i = inst("R(a,b). S(b,a). T(b,a). R(a,c). S(c,b). S(d,b). U(a,a). U(b,b).");
        let got = dissociate_edge(&i, &DirectedEdge::new("a", "b")).unwrap();
        let want = inst(
            "R(a,b2). S(b2,a). T(b2,a).
             R(a2,b). S(b,a2). T(b,a2).
             R(a,c). S(c,b). S(d,b).
             U(a,a). U(a2,a2). U(b,b). U(b2,b2).",
        );
        assert!(is_isomorphic(&got, &want, SearchLimits::default()).unwrap());
        assert_eq!(got.domain().len(), i.domain().len() + 2);
    }

    #[test]
    fn dissociation_reduces_non_leaf_count_by_one() {
        let instances = [
            inst("R(a,b). S(b,a). T(b,a). R(a,c). S(c,b). S(d,b). U(a,a). U(b,b)."),
            path(),
            inst("R(a,b). S(b,c). S(c,d). T(d,e)."),
        ];
        for i in &instances {
            for (u, v) in non_leaf_edges(i) {
                let after = dissociate_edge(i, &DirectedEdge::new(&u, &v)).unwrap();
                assert_eq!(non_leaf_edges(&after).len(), non_leaf_edges(i).len() - 1);
            }
        }
    }

    #[test]
    fn dissociation_result_maps_back() {
        let i = path();
        let got = dissociate_edge(&i, &DirectedEdge::new("b", "c")).unwrap();
        let hom = find_homomorphism(&got, &i, SearchLimits::default()).unwrap();
        assert!(hom.is_some());
    }

    #[test]
    fn exhaustive_dissociation_terminates_in_initial_count() {
        let i = inst("R(a,b). S(b,c). S(c,d). T(d,e). U(b,d).");
        let initial = non_leaf_edges(&i).len();
        let (final_instance, steps) = dissociate_until_leaf_only(&i).unwrap();
        assert_eq!(steps, initial);
        assert!(non_leaf_edges(&final_instance).is_empty());
    }

    #[test]
    fn fine_dissociation_on_simple_path() {
        // Only covered fact is the middle one, so (u,v) and (u',v') are not
        // edges of the result and it matches the plain dissociation.
        let i = path();
        let (e, pair) = path_pair(&i);
        let got = fine_dissociate(&i, &e, &pair, &Fact::new("S", "b", "c")).unwrap();
        let want = dissociate_edge(&i, &e).unwrap();
        assert!(is_isomorphic(&got, &want, SearchLimits::default()).unwrap());
        assert!(!got.is_edge("b", "c"));
        assert_eq!(got.domain().len(), i.domain().len() + 2);
    }

    #[test]
    fn fine_dissociation_structure_with_side_facts() {
        let i = inst("L(l,u). O(l1,u). E(u,v). M(u,v). F(v,r). P(v,r1).");
        let e = DirectedEdge::new("u", "v");
        let pair = IncidentPair::validated(
            &i,
            &e,
            OrientedFact::parse("L(l,u)").unwrap(),
            OrientedFact::parse("F(v,r)").unwrap(),
        )
        .unwrap();
        let got = fine_dissociate(&i, &e, &pair, &Fact::new("M", "u", "v")).unwrap();
        let want = inst(
            "L(l,u).
             O(l1,u). O(l1,u2).
             E(u,v2). M(u,v2). E(u2,v). M(u2,v).
             E(u,v). E(u2,v2).
             F(v,r).
             P(v,r1). P(v2,r1).",
        );
        assert!(is_isomorphic(&got, &want, SearchLimits::default()).unwrap());
        // (u,v) stays an edge but with smaller weight.
        assert!(got.is_edge("u", "v"));
    }

    #[test]
    fn fine_dissociation_rejects_bad_mid_fact() {
        let i = inst("R(a,b). S(b,c). T(c,d). U(b,b).");
        let e = DirectedEdge::new("b", "c");
        let pair = incident_pairs(&i, &e).unwrap()[0].clone();
        assert!(fine_dissociate(&i, &e, &pair, &Fact::new("U", "b", "b")).is_err());
        assert!(fine_dissociate(&i, &e, &pair, &Fact::new("R", "a", "b")).is_err());
    }

    #[test]
    fn collapse_rejects_non_leaf_edges() {
        assert!(collapse_stars(&path(), SearchLimits::default()).is_err());
    }

    #[test]
    fn collapse_single_edge_is_identity() {
        let i = inst("R(a,b).");
        let (out, hom) = collapse_stars(&i, SearchLimits::default()).unwrap();
        assert_eq!(out, i);
        assert!(hom.verify(&i, &out));
    }

    #[test]
    fn collapse_merges_equal_leaf_edges() {
        let i = inst("R(c,x). R(c,y). S(c,z).");
        let (out, hom) = collapse_stars(&i, SearchLimits::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.is_subinstance_of(&i));
        assert!(hom.verify(&i, &out));
        // x and y fold together; z stays apart.
        assert_eq!(hom.apply("x"), hom.apply("y"));
        assert_ne!(hom.apply("x"), hom.apply("z"));
    }

    #[test]
    fn collapse_merges_isomorphic_components() {
        let i = inst("R(a,b). R(x,y).");
        let (out, hom) = collapse_stars(&i, SearchLimits::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert!(hom.verify(&i, &out));
    }

    #[test]
    fn collapse_keeps_distinct_signatures_apart() {
        // Same relation set but different orientation pattern.
        let i = inst("R(c,x). R(y,c). S(c,c).");
        let (out, hom) = collapse_stars(&i, SearchLimits::default()).unwrap();
        assert_eq!(out, i);
        assert!(hom.verify(&i, &out));
    }
}
