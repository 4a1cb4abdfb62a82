//! Bounded reference prover.
//!
//! The search runs in three phases:
//!
//! 1. Saturate: starting from the premises, apply every catalog rule for up to
//!    `depth_limit` rounds. Elimination and replacement rules fire freely under
//!    a formula-size bound; introduction rules (`CONJ`, `ADD`, `DN_I`) only
//!    build formulas from a pool derived from the subformulas of the premises
//!    and the target, which keeps the universe finite and small.
//! 2. Keep only applications that can contribute to the target.
//! 3. Iterative deepening over sets of derived formulas, pruned by the
//!    `h_max` lower bound and a transposition table.
//!
//! The result is the shortest proof inside that universe, which is what
//! "reference length" means for the curriculum.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::formula::Formula;
use crate::proof::{PremiseRef, Step};
use crate::rules::{apply_rule, catalog, instantiate, match_pattern, Rule, Substitution};

/// Hard ceiling on the search depth.
pub const MAX_DEPTH: usize = 12;

const INTRO_RULES: [&str; 3] = ["CONJ", "ADD", "DN_I"];
const REPLACEMENT_RULES: [&str; 4] = ["DEM", "IMPL", "TRANS", "BICOND"];
const SIZE_SLACK: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofStep {
    pub step: Step,
    pub formula: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proof {
    pub steps: Vec<ProofStep>,
}

impl Proof {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rule_names(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.step.rule.as_str()).collect()
    }
}

#[derive(Debug, Clone)]
struct Edge {
    rule: &'static Rule,
    parents: Vec<usize>,
    operand: Option<Formula>,
    result: usize,
}

struct Universe {
    formulas: Vec<Formula>,
    index: HashMap<Formula, usize>,
    edges: Vec<Edge>,
    seen_edges: HashSet<(&'static str, Vec<usize>, Option<Formula>)>,
    size_bound: usize,
    /// Formulas exempt from the size bound.
    pool: HashSet<Formula>,
}

impl Universe {
    fn intern(&mut self, f: Formula) -> usize {
        if let Some(&id) = self.index.get(&f) {
            return id;
        }
        let id = self.formulas.len();
        self.index.insert(f.clone(), id);
        self.formulas.push(f);
        id
    }

    fn id(&self, f: &Formula) -> Option<usize> {
        self.index.get(f).copied()
    }

    /// Records an application; returns true if its result is a new formula.
    fn add_edge(
        &mut self,
        rule: &'static Rule,
        parents: Vec<usize>,
        operand: Option<Formula>,
        result: Formula,
    ) -> bool {
        if result.size() > self.size_bound && result != Formula::Bottom && !self.pool.contains(&result) {
            return false;
        }
        if !self.seen_edges.insert((rule.name, parents.clone(), operand.clone())) {
            return false;
        }
        let fresh = self.id(&result).is_none();
        let result = self.intern(result);
        self.edges.push(Edge { rule, parents, operand, result });
        fresh
    }
}

/// Shortest proof of `target` from `premises` with at most `depth_limit` steps.
pub fn prove(premises: &[Formula], target: &Formula, depth_limit: usize) -> Option<Proof> {
    let depth_limit = depth_limit.min(MAX_DEPTH);
    if premises.contains(target) {
        return Some(Proof { steps: Vec::new() });
    }
    let universe = saturate(premises, target, depth_limit)?;
    let goal = universe.id(target)?;
    let relevant = relevant_edges(&universe, goal, premises.len());
    let edges: Vec<&Edge> = relevant.iter().map(|&i| &universe.edges[i]).collect();

    let mut known = Bits::new(universe.formulas.len());
    for p in premises {
        known.set(universe.id(p).expect("premises are interned"));
    }
    let mut search =
        Search { edges: &edges, goal, n: universe.formulas.len(), table: HashMap::new(), path: Vec::new() };
    let first = search.h_max(&known)?;
    for bound in first..=depth_limit {
        search.table.clear();
        if search.dfs(&known, bound) {
            let path = std::mem::take(&mut search.path);
            return Some(build_proof(&universe, premises, &path));
        }
    }
    None
}

fn saturate(premises: &[Formula], target: &Formula, rounds: usize) -> Option<Universe> {
    let pool = intro_pool(premises, target);
    let size_bound = premises.iter().chain(std::iter::once(target)).map(Formula::size).max().unwrap_or(1) + SIZE_SLACK;
    let mut u = Universe {
        formulas: Vec::new(),
        index: HashMap::new(),
        edges: Vec::new(),
        seen_edges: HashSet::new(),
        size_bound,
        pool: pool.iter().cloned().collect(),
    };
    for p in premises {
        u.intern(p.clone());
    }
    for _ in 0..rounds {
        let snapshot = u.formulas.len();
        let mut produced = false;
        for rule in catalog().rules() {
            produced |= if INTRO_RULES.contains(&rule.name) {
                fire_intro(&mut u, rule, &pool, snapshot)
            } else {
                fire_forward(&mut u, rule, snapshot)
            };
        }
        if !produced {
            break;
        }
    }
    u.id(target).map(|_| u)
}

/// Formulas introduction rules may build: subformulas of the premises and
/// target, their single and double negations, and one-step rewrites of those
/// under the replacement rules.
fn intro_pool(premises: &[Formula], target: &Formula) -> Vec<Formula> {
    let mut pool: Vec<Formula> = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |f: Formula, pool: &mut Vec<Formula>| {
        if seen.insert(f.clone()) {
            pool.push(f);
        }
    };
    for f in premises.iter().chain(std::iter::once(target)) {
        for sub in f.subformulas() {
            push(sub.clone(), &mut pool);
        }
    }
    let base = pool.clone();
    for f in &base {
        push(Formula::not(f.clone()), &mut pool);
        push(Formula::not(Formula::not(f.clone())), &mut pool);
    }
    let negated = pool.clone();
    for rule in REPLACEMENT_RULES.iter().filter_map(|n| catalog().rule(n)) {
        for f in &negated {
            if let Ok(g) = apply_rule(rule, std::slice::from_ref(f), None) {
                push(g, &mut pool);
            }
        }
    }
    pool
}

/// Introduction rules: only build formulas from the pool.
fn fire_intro(u: &mut Universe, rule: &'static Rule, pool: &[Formula], limit: usize) -> bool {
    let mut produced = false;
    for schema in &rule.schemas {
        for candidate in pool {
            let Some(subst) = match_pattern(&schema.conclusion, candidate) else {
                continue;
            };
            let parents: Option<Vec<usize>> = schema
                .premises
                .iter()
                .map(|p| instantiate(p, &subst).and_then(|f| u.id(&f)).filter(|&id| id < limit))
                .collect();
            let Some(parents) = parents else { continue };
            let operand = rule.parameter.map(|var| subst[var].clone());
            produced |= u.add_edge(rule, parents, operand, candidate.clone());
        }
    }
    produced
}

/// Elimination and replacement rules: match premises left to right, looking
/// up fully-instantiated premises directly.
fn fire_forward(u: &mut Universe, rule: &'static Rule, limit: usize) -> bool {
    let mut found: Vec<(Vec<usize>, Formula)> = Vec::new();
    for schema in &rule.schemas {
        extend_match(u, &schema.premises, &schema.conclusion, limit, Substitution::new(), &mut Vec::new(), &mut found);
    }
    let mut produced = false;
    for (parents, result) in found {
        produced |= u.add_edge(rule, parents, None, result);
    }
    produced
}

fn extend_match(
    u: &Universe,
    premises: &[Formula],
    conclusion: &Formula,
    limit: usize,
    subst: Substitution,
    parents: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, Formula)>,
) {
    let Some((first, rest)) = premises.split_first() else {
        if let Some(result) = instantiate(conclusion, &subst) {
            out.push((parents.clone(), result));
        }
        return;
    };
    if let Some(ground) = instantiate(first, &subst) {
        if let Some(id) = u.id(&ground).filter(|&id| id < limit) {
            parents.push(id);
            extend_match(u, rest, conclusion, limit, subst, parents, out);
            parents.pop();
        }
        return;
    }
    for id in 0..limit {
        let mut s = subst.clone();
        if let Some(extra) = match_pattern(first, &u.formulas[id]) {
            if extra.iter().any(|(k, v)| s.get(k).is_some_and(|b| b != v)) {
                continue;
            }
            s.extend(extra);
            parents.push(id);
            extend_match(u, rest, conclusion, limit, s, parents, out);
            parents.pop();
        }
    }
}

fn relevant_edges(u: &Universe, goal: usize, premise_count: usize) -> Vec<usize> {
    let premise_ids: HashSet<usize> = (0..premise_count.min(u.formulas.len())).collect();
    let mut wanted = vec![false; u.formulas.len()];
    wanted[goal] = true;
    let mut keep = vec![false; u.edges.len()];
    loop {
        let mut changed = false;
        for (i, e) in u.edges.iter().enumerate() {
            if keep[i] || !wanted[e.result] || premise_ids.contains(&e.result) {
                continue;
            }
            keep[i] = true;
            changed = true;
            for &p in &e.parents {
                wanted[p] = true;
            }
        }
        if !changed {
            break;
        }
    }
    (0..u.edges.len()).filter(|&i| keep[i]).collect()
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
}

struct Search<'a> {
    edges: &'a [&'a Edge],
    goal: usize,
    n: usize,
    /// Largest remaining budget already explored from a state.
    table: HashMap<Bits, usize>,
    path: Vec<&'a Edge>,
}

impl<'a> Search<'a> {
    /// Max-cost relaxation: a lower bound on the steps still needed.
    fn h_max(&self, known: &Bits) -> Option<usize> {
        const INF: usize = usize::MAX;
        let mut cost: Vec<usize> = (0..self.n).map(|i| if known.get(i) { 0 } else { INF }).collect();
        loop {
            let mut changed = false;
            for e in self.edges {
                let worst = e.parents.iter().map(|&p| cost[p]).max().unwrap_or(0);
                if worst == INF {
                    continue;
                }
                if worst + 1 < cost[e.result] {
                    cost[e.result] = worst + 1;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        (cost[self.goal] != INF).then_some(cost[self.goal])
    }

    fn dfs(&mut self, known: &Bits, remaining: usize) -> bool {
        if known.get(self.goal) {
            return true;
        }
        match self.h_max(known) {
            Some(h) if h <= remaining => {}
            _ => return false,
        }
        if self.table.get(known).is_some_and(|&r| r >= remaining) {
            return false;
        }
        self.table.insert(known.clone(), remaining);
        for i in 0..self.edges.len() {
            let e = self.edges[i];
            if known.get(e.result) || !e.parents.iter().all(|&p| known.get(p)) {
                continue;
            }
            let mut next = known.clone();
            next.set(e.result);
            self.path.push(e);
            if self.dfs(&next, remaining - 1) {
                return true;
            }
            self.path.pop();
        }
        false
    }
}

fn build_proof(u: &Universe, premises: &[Formula], path: &[&Edge]) -> Proof {
    let mut refs: HashMap<usize, PremiseRef> = HashMap::new();
    for (i, p) in premises.iter().enumerate() {
        refs.entry(u.id(p).expect("premises are interned")).or_insert(PremiseRef::Given(i));
    }
    let mut steps = Vec::with_capacity(path.len());
    for (j, e) in path.iter().enumerate() {
        let parents = e.parents.iter().map(|p| refs[p]).collect();
        let mut step = Step::new(e.rule.name, parents);
        step.operand = e.operand.clone();
        refs.insert(e.result, PremiseRef::Node(j));
        steps.push(ProofStep { step, formula: u.formulas[e.result].clone() });
    }
    Proof { steps }
}
