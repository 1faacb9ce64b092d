//! Shared fixtures for integration tests: seeded random graphs, questions
//! and an exhaustive simple-path enumerator that works on raw labelled
//! triples only (no kgstore code), used as the mining oracle.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use kgwalk::corpus::QuestionInstance;
use kgwalk::kgstore::{build_graph, GraphOptions, KnowledgeGraph, RawTriple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INV: &str = ".inv";

pub fn triple(h: &str, r: &str, t: &str) -> RawTriple {
    (h.to_string(), r.to_string(), t.to_string())
}

pub fn g1_raw() -> Vec<RawTriple> {
    vec![
        triple("A", "friend", "B"),
        triple("B", "child", "C"),
        triple("B", "child", "D"),
        triple("A", "friend", "E"),
        triple("E", "child", "F"),
    ]
}

pub fn g1() -> KnowledgeGraph {
    build_graph(&g1_raw(), &GraphOptions::default()).unwrap()
}

pub fn q1(g: &KnowledgeGraph) -> QuestionInstance {
    question(g, "q1", &["A"], &["C", "D", "F"])
}

pub fn question(g: &KnowledgeGraph, qid: &str, seeds: &[&str], answers: &[&str]) -> QuestionInstance {
    QuestionInstance {
        qid: qid.into(),
        text: format!("question {qid}"),
        seeds: seeds.iter().map(|s| g.entity_id(s).unwrap()).collect(),
        answers: answers.iter().map(|s| s.to_string()).collect(),
    }
}

/// Random triples over `e0..e{n}` and `r0..r{k}`. Self-loops and
/// duplicates are allowed; the store must cope with both.
pub fn random_triples(rng: &mut ChaCha8Rng, max_entities: usize, max_relations: usize, max_triples: usize) -> Vec<RawTriple> {
    let n = rng.gen_range(2..=max_entities);
    let k = rng.gen_range(1..=max_relations);
    let m = rng.gen_range(1..=max_triples);
    (0..m)
        .map(|_| {
            let h = rng.gen_range(0..n);
            let t = rng.gen_range(0..n);
            let r = rng.gen_range(0..k);
            (format!("e{h}"), format!("r{r}"), format!("e{t}"))
        })
        .collect()
}

/// Labelled adjacency with inverse edges, built directly from triples.
pub struct Adjacency {
    pub out: BTreeMap<String, BTreeSet<(String, String)>>,
}

impl Adjacency {
    pub fn augmented(raw: &[RawTriple]) -> Self {
        let mut out: BTreeMap<String, BTreeSet<(String, String)>> = BTreeMap::new();
        for (h, r, t) in raw {
            out.entry(h.clone()).or_default().insert((r.clone(), t.clone()));
            out.entry(t.clone()).or_default().insert((format!("{r}{INV}"), h.clone()));
        }
        Self { out }
    }

    pub fn edges(&self, v: &str) -> impl Iterator<Item = &(String, String)> {
        self.out.get(v).into_iter().flatten()
    }

    pub fn edge_count(&self) -> usize {
        self.out.values().map(BTreeSet::len).sum()
    }

    /// BFS hop distances from `seeds`, up to `limit`.
    pub fn distances(&self, seeds: &[String], limit: usize) -> BTreeMap<String, usize> {
        let mut dist = BTreeMap::new();
        let mut queue = VecDeque::new();
        for s in seeds {
            dist.insert(s.clone(), 0);
            queue.push_back(s.clone());
        }
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            if d == limit {
                continue;
            }
            for (_, u) in self.edges(&v) {
                if !dist.contains_key(u) {
                    dist.insert(u.clone(), d + 1);
                    queue.push_back(u.clone());
                }
            }
        }
        dist
    }

    /// Every simple path of at most `l_max` hops from a seed to an answer,
    /// as label sequences. Recursive DFS.
    pub fn brute_force_gold(&self, seeds: &[String], answers: &BTreeSet<String>, l_max: usize) -> BTreeSet<Vec<String>> {
        fn walk(
            adj: &Adjacency,
            path: &mut Vec<String>,
            on_path: &mut Vec<String>,
            answers: &BTreeSet<String>,
            hops_left: usize,
            out: &mut BTreeSet<Vec<String>>,
        ) {
            let here = path.last().unwrap().clone();
            if answers.contains(&here) {
                out.insert(path.clone());
            }
            if hops_left == 0 {
                return;
            }
            for (r, u) in adj.edges(&here) {
                if on_path.contains(u) {
                    continue;
                }
                path.push(r.clone());
                path.push(u.clone());
                on_path.push(u.clone());
                walk(adj, path, on_path, answers, hops_left - 1, out);
                on_path.pop();
                path.pop();
                path.pop();
            }
        }
        let mut out = BTreeSet::new();
        for s in seeds {
            let mut path = vec![s.clone()];
            let mut on_path = vec![s.clone()];
            walk(self, &mut path, &mut on_path, answers, l_max, &mut out);
        }
        out
    }
}

pub struct RandomCase {
    pub raw: Vec<RawTriple>,
    pub graph: KnowledgeGraph,
    pub questions: Vec<QuestionInstance>,
}

/// Random graph with `n_questions` questions whose answers are arbitrary
/// entities (possibly unreachable, possibly seeds, possibly absent).
pub fn random_case(seed: u64, max_entities: usize, max_relations: usize, max_triples: usize, n_questions: usize) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = random_triples(&mut rng, max_entities, max_relations, max_triples);
    let graph = build_graph(&raw, &GraphOptions::default()).unwrap();
    let labels: Vec<String> = graph.entities().map(|e| graph.entity_label(e).to_string()).collect();
    let questions = (0..n_questions)
        .map(|i| {
            let n_seeds = rng.gen_range(1..=2);
            let seeds: BTreeSet<_> = (0..n_seeds)
                .map(|_| graph.entity_id(&labels[rng.gen_range(0..labels.len())]).unwrap())
                .collect();
            let n_ans = rng.gen_range(1..=4);
            let mut answers: BTreeSet<String> = (0..n_ans)
                .map(|_| labels[rng.gen_range(0..labels.len())].clone())
                .collect();
            if rng.gen_bool(0.1) {
                answers.insert("not_in_graph".into());
            }
            QuestionInstance {
                qid: format!("g{seed}-q{i}"),
                text: format!("random question {i}"),
                seeds,
                answers,
            }
        })
        .collect();
    RandomCase { raw, graph, questions }
}

/// Random graph whose questions have all answers within `max_hops` hops of
/// the seeds and never equal to a seed. Questions with nothing reachable
/// are skipped.
pub fn reachable_case(seed: u64, max_entities: usize, max_relations: usize, max_triples: usize, n_questions: usize, max_hops: usize) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = random_triples(&mut rng, max_entities, max_relations, max_triples);
    let graph = build_graph(&raw, &GraphOptions::default()).unwrap();
    let adj = Adjacency::augmented(&raw);
    let labels: Vec<String> = graph.entities().map(|e| graph.entity_label(e).to_string()).collect();
    let mut questions = Vec::new();
    for i in 0..n_questions {
        let n_seeds = rng.gen_range(1..=2);
        let seeds: Vec<String> = (0..n_seeds)
            .map(|_| labels[rng.gen_range(0..labels.len())].clone())
            .collect();
        let reachable: Vec<String> = adj
            .distances(&seeds, max_hops)
            .into_iter()
            .filter(|(e, d)| *d >= 1 && !seeds.contains(e))
            .map(|(e, _)| e)
            .collect();
        if reachable.is_empty() {
            continue;
        }
        let n_ans = rng.gen_range(1..=reachable.len().min(5));
        let answers: BTreeSet<String> = (0..n_ans)
            .map(|_| reachable[rng.gen_range(0..reachable.len())].clone())
            .collect();
        questions.push(QuestionInstance {
            qid: format!("g{seed}-q{i}"),
            text: format!("reachable question {i}"),
            seeds: seeds.iter().map(|s| graph.entity_id(s).unwrap()).collect(),
            answers,
        });
    }
    RandomCase { raw, graph, questions }
}
