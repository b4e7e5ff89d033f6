//! Canonical form used for semantic query matching.
//!
//! Variables are renamed to `?var0`, `?var1`, ... and the WHERE elements are
//! treated as a multiset. Renaming follows first appearance: head first,
//! then the WHERE elements, then the tail. The element order used for that
//! scan is the one giving the lexicographically smallest sequence of
//! rendered elements, which makes the result independent of how the source
//! query ordered its triples.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::lexer::{SparqlToken, TokenKind};
use super::parser::{ParsedQuery, WhereElement};

/// Search nodes explored before falling back to a single greedy path.
const SEARCH_BUDGET: usize = 200_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CanonicalOptions {
    /// Also treat `s p o` and `o p s` as the same triple.
    pub within_triple_permutation: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanonicalQuery {
    pub head: String,
    /// Canonical WHERE elements, sorted (multiset representation).
    pub elements: Vec<String>,
    pub tail: String,
}

impl CanonicalQuery {
    /// SPARQL text of the canonical form.
    pub fn render(&self) -> String {
        let mut out = self.head.clone();
        if !out.is_empty() {
            out.push(' ');
        }
        out.push('{');
        if !self.elements.is_empty() {
            out.push(' ');
            out.push_str(&self.elements.join(" . "));
        }
        out.push_str(" }");
        if !self.tail.is_empty() {
            out.push(' ');
            out.push_str(&self.tail);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Atom {
    Fixed(String),
    Var(String),
}

fn canonical_literal(text: &str) -> String {
    let Some(quote) = text.chars().next().filter(|c| *c == '"' || *c == '\'') else {
        return text.to_string();
    };
    match text.rfind(quote) {
        Some(end) if end > 0 => {
            let (body, suffix) = text.split_at(end + 1);
            format!("{body}{}", suffix.to_lowercase())
        }
        _ => text.to_string(),
    }
}

fn token_atom(token: &SparqlToken) -> Atom {
    match token.kind {
        TokenKind::Variable => Atom::Var(token.text[1..].to_string()),
        TokenKind::Uri => Atom::Fixed(
            token
                .uri()
                .map(|q| q.canonical_text())
                .unwrap_or_else(|| token.text.to_lowercase()),
        ),
        TokenKind::Literal => Atom::Fixed(canonical_literal(&token.text)),
        _ => Atom::Fixed(token.text.to_lowercase()),
    }
}

fn atoms(tokens: &[SparqlToken]) -> Vec<Atom> {
    tokens
        .iter()
        .filter(|t| !t.is_trivia())
        .map(token_atom)
        .collect()
}

#[derive(Debug, Clone, Default)]
struct Names {
    map: HashMap<String, usize>,
}

impl Names {
    /// Renders `atoms`, returning the text and the names newly assigned.
    fn render(&self, atoms: &[Atom]) -> (String, Vec<String>) {
        let mut fresh: Vec<String> = Vec::new();
        let mut parts = Vec::with_capacity(atoms.len());
        for atom in atoms {
            match atom {
                Atom::Fixed(s) => parts.push(s.clone()),
                Atom::Var(name) => {
                    let n = match self.map.get(name) {
                        Some(&n) => n,
                        None => match fresh.iter().position(|f| f == name) {
                            Some(i) => self.map.len() + i,
                            None => {
                                fresh.push(name.clone());
                                self.map.len() + fresh.len() - 1
                            }
                        },
                    };
                    parts.push(format!("?var{n}"));
                }
            }
        }
        (parts.join(" "), fresh)
    }

    fn bind(&mut self, fresh: &[String]) {
        for name in fresh {
            let n = self.map.len();
            self.map.insert(name.clone(), n);
        }
    }
}

struct Search<'a> {
    elements: &'a [Vec<Vec<Atom>>],
    tail: &'a [Atom],
    nodes: usize,
    best: Option<(Vec<String>, String)>,
}

impl Search<'_> {
    fn run(&mut self, used: &mut Vec<bool>, names: &Names, seq: &mut Vec<String>) {
        self.nodes += 1;
        if seq.len() == self.elements.len() {
            let (tail, _) = names.render(self.tail);
            let candidate = (seq.clone(), tail);
            if self.best.as_ref().is_none_or(|b| candidate < *b) {
                self.best = Some(candidate);
            }
            return;
        }

        let mut options: Vec<(String, Vec<String>, usize, &Vec<Atom>)> = Vec::new();
        for (i, variants) in self.elements.iter().enumerate() {
            if used[i] {
                continue;
            }
            for variant in variants {
                let (text, fresh) = names.render(variant);
                options.push((text, fresh, i, variant));
            }
        }
        let min = options.iter().map(|o| &o.0).min().cloned().expect("non-empty");

        if let Some((best_seq, _)) = &self.best {
            let depth = seq.len();
            let ord = seq.as_slice().cmp(&best_seq[..depth]);
            if ord == std::cmp::Ordering::Greater
                || (ord == std::cmp::Ordering::Equal && min > best_seq[depth])
            {
                return;
            }
        }

        let mut tried: Vec<(&Vec<Atom>, &Vec<String>)> = Vec::new();
        for (text, fresh, i, variant) in options.iter().filter(|o| o.0 == min) {
            // identical elements lead to identical subtrees
            if tried.iter().any(|(a, f)| a == variant && *f == fresh) {
                continue;
            }
            tried.push((variant, fresh));
            let mut next = names.clone();
            next.bind(fresh);
            used[*i] = true;
            seq.push(text.clone());
            self.run(used, &next, seq);
            seq.pop();
            used[*i] = false;
            if self.nodes > SEARCH_BUDGET {
                break;
            }
        }
    }
}

pub fn canonicalize(parsed: &ParsedQuery) -> CanonicalQuery {
    canonicalize_with(parsed, CanonicalOptions::default())
}

pub fn canonicalize_with(parsed: &ParsedQuery, options: CanonicalOptions) -> CanonicalQuery {
    let mut names = Names::default();
    let head_atoms = atoms(&parsed.head_tokens);
    let (head, fresh) = names.render(&head_atoms);
    names.bind(&fresh);

    let elements: Vec<Vec<Vec<Atom>>> = parsed
        .elements
        .iter()
        .map(|element| match element {
            WhereElement::Triple(t) => {
                let [s, p, o] = t.term_tokens();
                let (s, p, o) = (atoms(s), atoms(p), atoms(o));
                let forward: Vec<Atom> = [s.clone(), p.clone(), o.clone()].concat();
                if options.within_triple_permutation {
                    let reversed: Vec<Atom> = [o, p, s].concat();
                    if reversed != forward {
                        return vec![forward, reversed];
                    }
                }
                vec![forward]
            }
            WhereElement::Opaque { tokens, .. } => vec![atoms(tokens)],
        })
        .collect();
    let tail_atoms = atoms(&parsed.tail_tokens);

    let mut search = Search {
        elements: &elements,
        tail: &tail_atoms,
        nodes: 0,
        best: None,
    };
    search.run(&mut vec![false; elements.len()], &names, &mut Vec::new());
    let (mut sequence, tail) = search.best.expect("search always completes one path");
    sequence.sort();
    CanonicalQuery {
        head,
        elements: sequence,
        tail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparql::parse;

    fn canon(q: &str) -> CanonicalQuery {
        canonicalize(&parse(q).unwrap())
    }

    #[test]
    fn variable_names_do_not_matter() {
        assert_eq!(
            canon("select ?value where { ?value wdt:p26 wd:q76 }"),
            canon("select ?uri where { ?uri wdt:p26 wd:q76 }")
        );
        assert_eq!(
            canon("select ?value where { ?value wdt:p26 wd:q76 }").head,
            "select ?var0 where"
        );
    }

    #[test]
    fn triple_order_does_not_matter() {
        let a = "select ?x where { ?x wdt:p1 ?y . ?x wdt:p2 ?z }";
        let b = "select ?x where { ?x wdt:p2 ?z . ?x wdt:p1 ?y }";
        assert_eq!(canon(a), canon(b));
        assert_ne!(parse(a).unwrap().elements, parse(b).unwrap().elements);
    }

    #[test]
    fn case_is_folded_except_inside_literals() {
        assert_eq!(
            canon("SELECT ?X WHERE { ?X WDT:P31 WD:Q5 }"),
            canon("select ?x where { ?x wdt:p31 wd:q5 }")
        );
        assert_ne!(
            canon(r#"select ?x where { ?x rdfs:label "Berlin"@EN }"#),
            canon(r#"select ?x where { ?x rdfs:label "berlin"@en }"#)
        );
        assert_eq!(
            canon(r#"select ?x where { ?x rdfs:label "Berlin"@EN }"#),
            canon(r#"select ?x where { ?x rdfs:label "Berlin"@en }"#)
        );
    }

    #[test]
    fn canonicalization_is_idempotent() {
        let c = canon("SELECT ?b ?a WHERE { ?a wdt:P1 ?b . FILTER(?b > 3) . ?b wdt:P2 ?c } LIMIT 3");
        let again = canon(&c.render());
        assert_eq!(c, again);
    }

    #[test]
    fn different_structure_differs() {
        assert_ne!(
            canon("select ?x where { ?x wdt:p1 ?y . ?y wdt:p2 ?z }"),
            canon("select ?x where { ?x wdt:p1 ?y . ?x wdt:p2 ?z }")
        );
    }

    #[test]
    fn within_triple_flag() {
        let a = parse("ask { wd:q1 wdt:p26 wd:q2 }").unwrap();
        let b = parse("ask { wd:q2 wdt:p26 wd:q1 }").unwrap();
        assert_ne!(canonicalize(&a), canonicalize(&b));
        let opts = CanonicalOptions {
            within_triple_permutation: true,
        };
        assert_eq!(canonicalize_with(&a, opts), canonicalize_with(&b, opts));
    }

    #[test]
    fn symmetric_patterns_stay_tractable() {
        let body: Vec<String> = (0..12).map(|i| format!("?a{i} wdt:p1 ?b{i}")).collect();
        let q = format!("select * where {{ {} }}", body.join(" . "));
        let c = canon(&q);
        assert_eq!(c.elements.len(), 12);
    }
}
