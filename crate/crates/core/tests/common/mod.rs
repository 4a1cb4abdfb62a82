#![allow(dead_code)]

use proptest::prelude::*;
use rand::Rng;
use tutor_core::formula::{entails, Formula};
use tutor_core::rules::{apply_rule, catalog, Substitution};

pub const ATOMS: [&str; 8] = ["p", "q", "r", "s", "t", "u", "w", "x1"];

/// Formulas up to `depth` levels over the first `atoms` atom names.
pub fn arb_formula(depth: u32, atoms: usize) -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        8 => (0..atoms).prop_map(|i| Formula::atom(ATOMS[i])),
        1 => Just(Formula::Bottom),
    ];
    leaf.prop_recursive(depth, 64, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::and(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::or(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::implies(l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| Formula::iff(l, r)),
        ]
    })
}

pub fn random_formula<R: Rng>(rng: &mut R, depth: u32, atoms: usize) -> Formula {
    if depth == 0 || rng.random_bool(0.3) {
        return if rng.random_bool(0.05) { Formula::Bottom } else { Formula::atom(ATOMS[rng.random_range(0..atoms)]) };
    }
    let kind = rng.random_range(0..5);
    let l = random_formula(rng, depth - 1, atoms);
    if kind == 0 {
        return Formula::not(l);
    }
    let r = random_formula(rng, depth - 1, atoms);
    match kind {
        1 => Formula::and(l, r),
        2 => Formula::or(l, r),
        3 => Formula::implies(l, r),
        _ => Formula::iff(l, r),
    }
}

/// One rule application built by instantiating a random schema of a random
/// rule with random formulas; returns (rule, inputs, conclusion) after
/// checking the conclusion against the truth-table oracle.
pub fn fuzz_once<R: Rng>(rng: &mut R) -> Result<String, String> {
    let rules: Vec<_> = catalog().rules().collect();
    let rule = rules[rng.random_range(0..rules.len())];
    let schema = &rule.schemas[rng.random_range(0..rule.schemas.len())];
    let mut subst = Substitution::new();
    for p in &schema.premises {
        for a in p.atoms() {
            subst.entry(a).or_insert_with(|| random_formula(rng, 2, 4));
        }
    }
    let inputs: Vec<Formula> = schema
        .premises
        .iter()
        .map(|p| tutor_core::rules::instantiate(p, &subst).expect("all metavariables bound"))
        .collect();
    let operand = rule.parameter.map(|_| random_formula(rng, 2, 4));
    let out = apply_rule(rule, &inputs, operand.as_ref()).map_err(|e| format!("{}: {e}", rule.name))?;
    match entails(&inputs, &out) {
        Ok(true) => Ok(rule.name.to_string()),
        Ok(false) => Err(format!("{} produced {out} from {inputs:?}, not entailed", rule.name)),
        Err(e) => Err(format!("oracle failed: {e}")),
    }
}
