//! The rule catalog and one-way pattern matching.
//!
//! Patterns are ordinary [`Formula`] values in which every atom is a
//! metavariable. A rule may have several schemas (both directions of a
//! replacement rule); the first schema whose premises match wins.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use thiserror::Error;

use crate::formula::{entails, Formula};

/// Metavariable bindings produced by [`match_pattern`].
pub type Substitution = BTreeMap<String, Formula>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub premises: Vec<Formula>,
    pub conclusion: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub name: &'static str,
    pub arity: usize,
    /// Conclusion metavariable bound by a caller-supplied operand rather than
    /// by a premise (the added disjunct of `ADD`).
    pub parameter: Option<&'static str>,
    pub schemas: Vec<Schema>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleFamily {
    pub name: &'static str,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    families: Vec<RuleFamily>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("rule {rule} takes {expected} premises, got {found}")]
    ArityMismatch { rule: &'static str, expected: usize, found: usize },
    #[error("premises do not match rule {rule}")]
    PatternMismatch { rule: &'static str },
    #[error("rule {rule} needs an operand formula")]
    MissingOperand { rule: &'static str },
    #[error("rule {rule} takes no operand formula")]
    UnexpectedOperand { rule: &'static str },
}

impl RuleError {
    pub fn code(&self) -> &'static str {
        match self {
            RuleError::ArityMismatch { .. } => "arity-mismatch",
            RuleError::PatternMismatch { .. } => "pattern-mismatch",
            RuleError::MissingOperand { .. } => "missing-operand",
            RuleError::UnexpectedOperand { .. } => "unexpected-operand",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("rule {rule}: conclusion metavariable {var} is not bound by any premise")]
    UnboundMetavariable { rule: &'static str, var: String },
    #[error("rule {rule}: schema {schema} is unsound")]
    Unsound { rule: &'static str, schema: usize },
    #[error("rule {rule}: schema {schema} has {found} premises, rule arity is {arity}")]
    SchemaArity { rule: &'static str, schema: usize, found: usize, arity: usize },
}

impl Rule {
    pub fn takes_operand(&self) -> bool {
        self.parameter.is_some()
    }
}

impl Catalog {
    /// Builds the standard catalog and checks every schema for soundness.
    pub fn load() -> Result<Catalog, CatalogError> {
        let catalog = Catalog { families: standard_families() };
        catalog.check()?;
        Ok(catalog)
    }

    pub fn families(&self) -> &[RuleFamily] {
        &self.families
    }

    /// Every rule, in catalog order.
    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.families.iter().flat_map(|f| f.rules.iter())
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules().find(|r| r.name == name)
    }

    fn check(&self) -> Result<(), CatalogError> {
        for rule in self.rules() {
            for (i, schema) in rule.schemas.iter().enumerate() {
                if schema.premises.len() != rule.arity {
                    return Err(CatalogError::SchemaArity {
                        rule: rule.name,
                        schema: i,
                        found: schema.premises.len(),
                        arity: rule.arity,
                    });
                }
                let bound: BTreeSet<String> =
                    schema.premises.iter().flat_map(|p| p.atoms()).chain(rule.parameter.map(str::to_string)).collect();
                if let Some(var) = schema.conclusion.atoms().into_iter().find(|v| !bound.contains(v)) {
                    return Err(CatalogError::UnboundMetavariable { rule: rule.name, var });
                }
                // Metavariables are already distinct atoms, so the schema itself is
                // its own fresh-atom instance.
                if !entails(&schema.premises, &schema.conclusion).unwrap_or(false) {
                    return Err(CatalogError::Unsound { rule: rule.name, schema: i });
                }
            }
        }
        Ok(())
    }
}

/// The process-wide catalog. Panics only if the built-in schemas are unsound,
/// which the unit tests rule out.
pub fn catalog() -> &'static Catalog {
    static CATALOG: OnceLock<Catalog> = OnceLock::new();
    CATALOG.get_or_init(|| Catalog::load().expect("built-in rule catalog failed its soundness check"))
}

fn schema(premises: &[&str], conclusion: &str) -> Schema {
    let parse = |s: &str| Formula::parse(s).expect("built-in schema parses");
    Schema { premises: premises.iter().map(|p| parse(p)).collect(), conclusion: parse(conclusion) }
}

fn rule(name: &'static str, schemas: Vec<Schema>) -> Rule {
    Rule { name, arity: schemas[0].premises.len(), parameter: None, schemas }
}

fn family(name: &'static str, rules: Vec<Rule>) -> RuleFamily {
    RuleFamily { name, rules }
}

fn standard_families() -> Vec<RuleFamily> {
    vec![
        family("Modus Ponens", vec![rule("MP", vec![schema(&["X -> Y", "X"], "Y")])]),
        family("Modus Tollens", vec![rule("MT", vec![schema(&["X -> Y", "~Y"], "~X")])]),
        family(
            "Disjunctive Syllogism",
            vec![rule("DS", vec![schema(&["X \\/ Y", "~X"], "Y"), schema(&["X \\/ Y", "~Y"], "X")])],
        ),
        family("Hypothetical Syllogism", vec![rule("HS", vec![schema(&["X -> Y", "Y -> Z"], "X -> Z")])]),
        family(
            "Simplification",
            vec![rule("SIMP_L", vec![schema(&["X /\\ Y"], "X")]), rule("SIMP_R", vec![schema(&["X /\\ Y"], "Y")])],
        ),
        family("Conjunction", vec![rule("CONJ", vec![schema(&["X", "Y"], "X /\\ Y")])]),
        family("Addition", vec![Rule { parameter: Some("Y"), ..rule("ADD", vec![schema(&["X"], "X \\/ Y")]) }]),
        family("Constructive Dilemma", vec![rule("CD", vec![schema(&["X -> Y", "Z -> W", "X \\/ Z"], "Y \\/ W")])]),
        family(
            "Double Negation",
            vec![rule("DN_I", vec![schema(&["X"], "~~X")]), rule("DN_E", vec![schema(&["~~X"], "X")])],
        ),
        family(
            "De Morgan",
            vec![rule(
                "DEM",
                vec![
                    schema(&["~(X /\\ Y)"], "~X \\/ ~Y"),
                    schema(&["~(X \\/ Y)"], "~X /\\ ~Y"),
                    schema(&["~X \\/ ~Y"], "~(X /\\ Y)"),
                    schema(&["~X /\\ ~Y"], "~(X \\/ Y)"),
                ],
            )],
        ),
        family(
            "Material Implication",
            vec![rule("IMPL", vec![schema(&["X -> Y"], "~X \\/ Y"), schema(&["~X \\/ Y"], "X -> Y")])],
        ),
        family("Transposition", vec![rule("TRANS", vec![schema(&["X -> Y"], "~Y -> ~X")])]),
        family(
            "Biconditional Exchange",
            vec![rule(
                "BICOND",
                vec![schema(&["X <-> Y"], "(X -> Y) /\\ (Y -> X)"), schema(&["(X -> Y) /\\ (Y -> X)"], "X <-> Y")],
            )],
        ),
        family("Contradiction Introduction", vec![rule("CONTRA", vec![schema(&["X", "~X"], "_|_")])]),
    ]
}

/// One-way match: atoms of `pattern` are metavariables, `target` is ground.
pub fn match_pattern(pattern: &Formula, target: &Formula) -> Option<Substitution> {
    let mut subst = Substitution::new();
    match_into(pattern, target, &mut subst).then_some(subst)
}

fn match_into(pattern: &Formula, target: &Formula, subst: &mut Substitution) -> bool {
    match (pattern, target) {
        (Formula::Atom(var), _) => match subst.get(var) {
            Some(bound) => bound == target,
            None => {
                subst.insert(var.clone(), target.clone());
                true
            }
        },
        (Formula::Bottom, Formula::Bottom) => true,
        (Formula::Not(p), Formula::Not(t)) => match_into(p, t, subst),
        (Formula::And(pl, pr), Formula::And(tl, tr))
        | (Formula::Or(pl, pr), Formula::Or(tl, tr))
        | (Formula::Implies(pl, pr), Formula::Implies(tl, tr))
        | (Formula::Iff(pl, pr), Formula::Iff(tl, tr)) => match_into(pl, tl, subst) && match_into(pr, tr, subst),
        _ => false,
    }
}

/// Replaces metavariables in `pattern`. Returns `None` if one is unbound.
pub fn instantiate(pattern: &Formula, subst: &Substitution) -> Option<Formula> {
    Some(match pattern {
        Formula::Atom(var) => subst.get(var)?.clone(),
        Formula::Bottom => Formula::Bottom,
        Formula::Not(a) => Formula::not(instantiate(a, subst)?),
        Formula::And(a, b) => Formula::and(instantiate(a, subst)?, instantiate(b, subst)?),
        Formula::Or(a, b) => Formula::or(instantiate(a, subst)?, instantiate(b, subst)?),
        Formula::Implies(a, b) => Formula::implies(instantiate(a, subst)?, instantiate(b, subst)?),
        Formula::Iff(a, b) => Formula::iff(instantiate(a, subst)?, instantiate(b, subst)?),
    })
}

/// Applies `rule` to `inputs` in the given order.
pub fn apply_rule(rule: &Rule, inputs: &[Formula], operand: Option<&Formula>) -> Result<Formula, RuleError> {
    if inputs.len() != rule.arity {
        return Err(RuleError::ArityMismatch { rule: rule.name, expected: rule.arity, found: inputs.len() });
    }
    match (rule.parameter, operand) {
        (Some(_), None) => return Err(RuleError::MissingOperand { rule: rule.name }),
        (None, Some(_)) => return Err(RuleError::UnexpectedOperand { rule: rule.name }),
        _ => {}
    }
    for schema in &rule.schemas {
        let mut subst = Substitution::new();
        let matched = schema.premises.iter().zip(inputs).all(|(p, f)| match_into(p, f, &mut subst));
        if !matched {
            continue;
        }
        if let (Some(var), Some(op)) = (rule.parameter, operand) {
            subst.insert(var.to_string(), op.clone());
        }
        if let Some(out) = instantiate(&schema.conclusion, &subst) {
            return Ok(out);
        }
    }
    Err(RuleError::PatternMismatch { rule: rule.name })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> Formula {
        Formula::parse(s).unwrap()
    }

    fn apply(name: &str, inputs: &[&str]) -> Result<Formula, RuleError> {
        let rule = catalog().rule(name).unwrap();
        let inputs: Vec<Formula> = inputs.iter().map(|s| f(s)).collect();
        apply_rule(rule, &inputs, None)
    }

    #[test]
    fn catalog_shape() {
        let cat = Catalog::load().expect("catalog sound");
        assert_eq!(cat.families().len(), 14);
        let names: Vec<&str> = cat.rules().map(|r| r.name).collect();
        assert_eq!(
            names,
            [
                "MP", "MT", "DS", "HS", "SIMP_L", "SIMP_R", "CONJ", "ADD", "CD", "DN_I", "DN_E", "DEM", "IMPL",
                "TRANS", "BICOND", "CONTRA"
            ]
        );
        assert_eq!(cat.rule("MP").unwrap().arity, 2);
        assert_eq!(cat.rule("CD").unwrap().arity, 3);
        assert!(cat.rule("NOPE").is_none());
    }

    #[test]
    fn unsound_schema_rejected_at_load() {
        let bad =
            Catalog { families: vec![family("Converse", vec![rule("CONV", vec![schema(&["X -> Y", "Y"], "X")])])] };
        assert_eq!(bad.check(), Err(CatalogError::Unsound { rule: "CONV", schema: 0 }));
        let unbound = Catalog { families: vec![family("Magic", vec![rule("MAGIC", vec![schema(&["X"], "X \\/ Y")])])] };
        assert!(matches!(unbound.check(), Err(CatalogError::UnboundMetavariable { .. })));
    }

    #[test]
    fn matching() {
        let s = match_pattern(&f("X -> Y"), &f("p -> (q /\\ r)")).unwrap();
        assert_eq!(s["X"], f("p"));
        assert_eq!(s["Y"], f("q /\\ r"));
        assert_eq!(s.len(), 2);
        assert!(match_pattern(&f("X -> X"), &f("p -> q")).is_none());
        assert!(match_pattern(&f("X -> X"), &f("p -> p")).is_some());
        assert!(match_pattern(&f("~X"), &f("p")).is_none());
        assert!(match_pattern(&f("_|_"), &f("_|_")).is_some());
        assert!(match_pattern(&f("_|_"), &f("p")).is_none());
    }

    #[test]
    fn rule_schemas() {
        assert_eq!(apply("MP", &["p -> q", "p"]), Ok(f("q")));
        assert_eq!(apply("MT", &["p -> q", "~q"]), Ok(f("~p")));
        assert_eq!(apply("DEM", &["~(p /\\ q)"]), Ok(f("~p \\/ ~q")));
        assert_eq!(apply("DEM", &["~p /\\ ~q"]), Ok(f("~(p \\/ q)")));
        assert_eq!(apply("DS", &["p \\/ q", "~q"]), Ok(f("p")));
        assert_eq!(apply("HS", &["p -> q", "q -> r"]), Ok(f("p -> r")));
        assert_eq!(apply("CD", &["p -> q", "r -> s", "p \\/ r"]), Ok(f("q \\/ s")));
        assert_eq!(apply("IMPL", &["~p \\/ q"]), Ok(f("p -> q")));
        assert_eq!(apply("TRANS", &["p -> q"]), Ok(f("~q -> ~p")));
        assert_eq!(apply("BICOND", &["p <-> q"]), Ok(f("(p -> q) /\\ (q -> p)")));
        assert_eq!(apply("BICOND", &["(p -> q) /\\ (q -> p)"]), Ok(f("p <-> q")));
        assert_eq!(apply("BICOND", &["(p -> q) /\\ (r -> p)"]), Err(RuleError::PatternMismatch { rule: "BICOND" }));
        assert_eq!(apply("CONTRA", &["q", "~q"]), Ok(Formula::Bottom));
        assert_eq!(apply("DN_E", &["~~p"]), Ok(f("p")));
    }

    #[test]
    fn rule_errors() {
        assert_eq!(apply("MP", &["p -> q", "r"]), Err(RuleError::PatternMismatch { rule: "MP" }));
        assert_eq!(apply("MP", &["p", "p -> q"]), Err(RuleError::PatternMismatch { rule: "MP" }));
        assert_eq!(apply("MP", &["p -> q"]), Err(RuleError::ArityMismatch { rule: "MP", expected: 2, found: 1 }));
        let add = catalog().rule("ADD").unwrap();
        assert_eq!(apply_rule(add, &[f("p")], None), Err(RuleError::MissingOperand { rule: "ADD" }));
        assert_eq!(apply_rule(add, &[f("p")], Some(&f("q -> r"))), Ok(f("p \\/ (q -> r)")));
        let mp = catalog().rule("MP").unwrap();
        assert_eq!(
            apply_rule(mp, &[f("p -> q"), f("p")], Some(&f("r"))),
            Err(RuleError::UnexpectedOperand { rule: "MP" })
        );
    }
}
