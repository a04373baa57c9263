//! Tuple-independent probabilistic databases with exact rational
//! probabilities, and exact query probability by possible-world enumeration.
//!
//! A TID pairs an instance with a keep-probability per fact; it induces a
//! product distribution over all sub-instances ("possible worlds"). The
//! query probability is the total probability of the worlds that satisfy
//! the query. Everything is computed in exact arbitrary-precision rational
//! arithmetic: the equalities checked downstream are exact, and floating
//! point would forge or mask failures.
//!
//! Text format: one fact per line, `R(a,b) : 1/2.` or `R(a,b) : 0.5.`;
//! an omitted probability defaults to 1. Probabilities print as reduced
//! fractions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::{BigInt, BigRational, One, Signed, Zero};

use crate::hom::SearchLimits;
use crate::instance::{statements, Fact, Instance, Orientation, OrientedFact};
use crate::query::{eval_query, Query};
use crate::{Error, Result};

/// Exact rational probability: arbitrary-precision, always reduced,
/// positive denominator.
pub type Rational = BigRational;

pub fn rational(numerator: i64, denominator: i64) -> Rational {
    BigRational::new(BigInt::from(numerator), BigInt::from(denominator))
}

pub fn rational_int(value: i64) -> Rational {
    BigRational::from_integer(BigInt::from(value))
}

/// Parses `p/q`, a decimal like `0.5`, or an integer. The result is reduced.
pub fn parse_probability(text: &str) -> Result<Rational> {
    let text = text.trim();
    let bad = || Error::Parse(format!("invalid probability {text:?}"));
    if let Some((num, den)) = text.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| bad())?;
        let d: BigInt = den.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int_part, frac_part)) = text.split_once('.') {
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let int_part = if int_part.is_empty() { "0" } else { int_part };
        let i: BigInt = int_part.parse().map_err(|_| bad())?;
        let f: BigInt = frac_part.parse().map_err(|_| bad())?;
        let scale = BigInt::from(10).pow(frac_part.len() as u32);
        return Ok(BigRational::new(i * &scale + f, scale));
    }
    let n: BigInt = text.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

/// A tuple-independent probabilistic database: an instance plus a total
/// probability map with every value in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tid {
    instance: Instance,
    prob: BTreeMap<Fact, Rational>,
}

impl Tid {
    pub fn new(facts: impl IntoIterator<Item = (Fact, Rational)>) -> Result<Self> {
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
        let instance = Instance::new(prob.keys().cloned());
        Ok(Tid { instance, prob })
    }

    /// Every fact with probability 1.
    pub fn certain(instance: &Instance) -> Self {
        Tid {
            instance: instance.clone(),
            prob: instance.facts().map(|f| (f.clone(), BigRational::one())).collect(),
        }
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn probability(&self, fact: &Fact) -> Option<&Rational> {
        self.prob.get(fact)
    }

    pub fn probabilities(&self) -> impl Iterator<Item = (&Fact, &Rational)> {
        self.prob.iter()
    }

    /// Facts with probability strictly between 0 and 1.
    pub fn uncertain_facts(&self) -> Vec<&Fact> {
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
            let oriented = OrientedFact::parse(fact_text)?;
            if oriented.rel.orientation == Orientation::Inverse {
                return Err(Error::Parse(format!(
                    "inverse relations cannot be asserted as facts: {stmt:?}"
                )));
            }
            let p = match prob_text {
                Some(p) => parse_probability(p)?,
                None => BigRational::one(),
            };
            facts.push((oriented.underlying(), p));
        }
        Tid::new(facts)
    }
}

impl fmt::Display for Tid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (fact, p) in &self.prob {
            writeln!(f, "{fact} : {p}.")?;
        }
        Ok(())
    }
}

/// The probability of one possible world: the product of `p` over kept facts
/// and `1 - p` over dropped facts.
pub fn world_probability(tid: &Tid, world: &BTreeSet<Fact>) -> Result<Rational> {
    let mut out = BigRational::one();
    for f in world {
        let Some(p) = tid.probability(f) else {
            return Err(Error::Invalid(format!("world fact {f} is not in the database")));
        };
        out *= p;
    }
    for (f, p) in tid.probabilities() {
        if !world.contains(f) {
            out *= BigRational::one() - p;
        }
    }
    Ok(out)
}

/// Default enumeration cap: at most this many possible worlds.
pub const DEFAULT_WORLD_CAP: u64 = 1 << 24;

/// Exact query probability by enumeration over the uncertain facts.
///
/// Facts with probability 1 are pinned into every world and facts with
/// probability 0 are pinned out; worlds violating either have probability 0
/// and are skipped. Exceeding the world cap is an explicit refusal rather
/// than a truncation.
pub fn pqe_exact(query: &Query, tid: &Tid, world_cap: u64, limits: SearchLimits) -> Result<Rational> {
    let uncertain: Vec<&Fact> = tid.uncertain_facts();
    let m = uncertain.len();
    if m >= 64 || (1u128 << m) > world_cap as u128 {
        return Err(Error::WorldCapExceeded {
            needed: if m >= 128 { u128::MAX } else { 1u128 << m },
            cap: world_cap as u128,
        });
    }
    let base: Vec<Fact> = tid
        .probabilities()
        .filter(|(_, p)| p.is_one())
        .map(|(f, _)| f.clone())
        .collect();

    let mut total = BigRational::zero();
    for mask in 0..(1u64 << m) {
        let mut facts = base.clone();
        let mut weight = BigRational::one();
        for (bit, fact) in uncertain.iter().enumerate() {
            let p = tid.probability(fact).expect("uncertain fact in database");
            if mask & (1 << bit) != 0 {
                facts.push((*fact).clone());
                weight *= p;
            } else {
                weight *= BigRational::one() - p;
            }
        }
        let world = Instance::new(facts);
        if eval_query(query, &world, limits)? {
            total += weight;
        }
    }
    Ok(total)
}

/// Whether every probability is 0, 1/2, or 1 — the generalized
/// model-counting restriction.
pub fn is_gfomc(tid: &Tid) -> bool {
    let half = rational(1, 2);
    tid.probabilities().all(|(_, p)| p.is_zero() || p.is_one() || *p == half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::Ucq;

    fn tid(text: &str) -> Tid {
        Tid::parse(text).unwrap()
    }

    #[test]
    fn parse_probability_forms() {
        assert_eq!(parse_probability("1/2").unwrap(), rational(1, 2));
        assert_eq!(parse_probability("0.5").unwrap(), rational(1, 2));
        assert_eq!(parse_probability("0.125").unwrap(), rational(1, 8));
        assert_eq!(parse_probability("2/4").unwrap(), rational(1, 2));
        assert_eq!(parse_probability("1").unwrap(), rational_int(1));
        assert!(parse_probability("1/0").is_err());
        assert!(parse_probability("0.a").is_err());
    }

    #[test]
    fn tid_parse_and_display_round_trip() {
        let t = tid("R(a,b) : 1/2.\nS(b,c) : 0.25. T(c,d).");
        assert_eq!(t.probability(&Fact::new("T", "c", "d")), Some(&rational_int(1)));
        assert_eq!(t.probability(&Fact::new("S", "b", "c")), Some(&rational(1, 4)));
        let again = Tid::parse(&t.to_string()).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn tid_rejects_out_of_range_and_conflicts() {
        assert!(Tid::parse("R(a,b) : 3/2.").is_err());
        assert!(Tid::parse("R(a,b) : -1/2.").is_err());
        assert!(Tid::parse("R(a,b) : 1/2. R(a,b) : 1/3.").is_err());
    }

    #[test]
    fn world_probability_products() {
        let t = tid("R(a,b).");
        let full: BTreeSet<Fact> = t.instance().facts().cloned().collect();
        assert_eq!(world_probability(&t, &full).unwrap(), rational_int(1));

        let t = tid("R(a,b) : 1/2.");
        assert_eq!(world_probability(&t, &BTreeSet::new()).unwrap(), rational(1, 2));
        let full: BTreeSet<Fact> = t.instance().facts().cloned().collect();
        assert_eq!(world_probability(&t, &full).unwrap(), rational(1, 2));

        let t = tid("R(a,b) : 1/2. S(b,c) : 1/3.");
        let first: BTreeSet<Fact> = [Fact::new("R", "a", "b")].into_iter().collect();
        assert_eq!(world_probability(&t, &first).unwrap(), rational(1, 3));
    }

    #[test]
    fn world_probabilities_sum_to_one() {
        let t = tid("R(a,b) : 1/2. S(b,c) : 1/3. T(c,d) : 2/7. U(d,d).");
        let facts: Vec<Fact> = t.instance().facts().cloned().collect();
        let mut sum = BigRational::zero();
        for mask in 0..(1u32 << facts.len()) {
            let world: BTreeSet<Fact> = facts
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, f)| f.clone())
                .collect();
            sum += world_probability(&t, &world).unwrap();
        }
        assert_eq!(sum, rational_int(1));
    }

    #[test]
    fn pqe_single_uncertain_fact() {
        let q = Query::Ucq(Ucq::parse("q :- r(X,Y).").unwrap());
        let t = tid("R(a,b) : 1/2.");
        assert_eq!(
            pqe_exact(&q, &t, DEFAULT_WORLD_CAP, SearchLimits::default()).unwrap(),
            rational(1, 2)
        );
    }

    #[test]
    fn pqe_with_all_certain_facts_is_zero_or_one() {
        let q = Query::Ucq(Ucq::parse("q :- r(X,Y), s(Y,Z).").unwrap());
        let yes = tid("R(a,b). S(b,c).");
        let no = tid("R(a,b).");
        assert_eq!(
            pqe_exact(&q, &yes, DEFAULT_WORLD_CAP, SearchLimits::default()).unwrap(),
            rational_int(1)
        );
        assert_eq!(
            pqe_exact(&q, &no, DEFAULT_WORLD_CAP, SearchLimits::default()).unwrap(),
            rational_int(0)
        );
    }

    #[test]
    fn pqe_agrees_with_world_by_world_oracle() {
        // Canonical model of R(x,x), S(x,y), T(y,y) with three 1/2-facts.
        let q = Query::Ucq(Ucq::parse("q :- r(X,X), s(X,Y), t(Y,Y).").unwrap());
        let t = tid("R(x,x) : 1/2. S(x,y) : 1/2. T(y,y) : 1/2.");
        let facts: Vec<Fact> = t.instance().facts().cloned().collect();
        let mut by_hand = BigRational::zero();
        let mut satisfying = 0u32;
        for mask in 0..(1u32 << facts.len()) {
            let world: Vec<Fact> = facts
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, f)| f.clone())
                .collect();
            let world_set: BTreeSet<Fact> = world.iter().cloned().collect();
            if eval_query(&q, &Instance::new(world), SearchLimits::default()).unwrap() {
                by_hand += world_probability(&t, &world_set).unwrap();
                satisfying += 1;
            }
        }
        assert_eq!(satisfying, 1); // only the full world satisfies it
        assert_eq!(by_hand, rational(1, 8));
        assert_eq!(
            pqe_exact(&q, &t, DEFAULT_WORLD_CAP, SearchLimits::default()).unwrap(),
            by_hand
        );
    }

    #[test]
    fn pqe_pins_zero_and_one_probabilities() {
        let q = Query::Ucq(Ucq::parse("q :- r(X,Y).").unwrap());
        let t = tid("R(a,b) : 0. R(c,d) : 1/2.");
        assert_eq!(
            pqe_exact(&q, &t, DEFAULT_WORLD_CAP, SearchLimits::default()).unwrap(),
            rational(1, 2)
        );
    }

    #[test]
    fn pqe_refuses_past_cap() {
        let facts: String = (0..8).map(|i| format!("R(a{i},b{i}) : 1/2.\n")).collect();
        let t = tid(&facts);
        let q = Query::Ucq(Ucq::parse("q :- r(X,Y).").unwrap());
        assert!(matches!(
            pqe_exact(&q, &t, 128, SearchLimits::default()),
            Err(Error::WorldCapExceeded { needed: 256, cap: 128 })
        ));
    }

    #[test]
    fn gfomc_detection() {
        assert!(is_gfomc(&tid("R(a,b) : 1/2. S(b,c) : 1/2.")));
        assert!(is_gfomc(&tid("R(a,b) : 0. S(b,c) : 1. T(a,a) : 0.5.")));
        assert!(!is_gfomc(&tid("R(a,b) : 1/3.")));
    }
}
