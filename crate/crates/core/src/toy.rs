//! Synthetic corpus with a planted citation structure, for tests and demos.
//!
//! Each paper builds on a few recent same-topic parents and re-cites part of
//! each parent's foundations, which makes those foundations core citations of
//! the parent. A few reference-free classics per topic seed the lineages.
//! Every paper also cites some other-topic work in passing. A passing
//! citation x of paper p is only allowed when it cannot end up co-cited with
//! p by a later paper: the citer shares no reference or citer with x, and
//! passing picks never cite each other. Abstracts mix topic vocabulary with
//! signature terms of cited work, so bag-of-words embeddings retrieve cores
//! well but not perfectly.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::corpus::{Field, PaperRecord};
use crate::seed::rng_for;

const TOPICS: [(Field, [&str; 10]); 8] = [
    (Field::Physics, ["quantum", "lattice", "spin", "phonon", "entanglement", "superconducting", "photon", "gauge", "plasma", "scattering"]),
    (Field::Biology, ["protein", "genome", "cell", "enzyme", "receptor", "transcription", "membrane", "mutation", "pathway", "microbial"]),
    (Field::Chemistry, ["catalyst", "polymer", "ligand", "oxidation", "synthesis", "solvent", "molecular", "crystal", "reaction", "electrolyte"]),
    (Field::ComputerScience, ["neural", "graph", "compiler", "retrieval", "transformer", "scheduling", "embedding", "kernel", "parallel", "inference"]),
    (Field::Medicine, ["clinical", "tumor", "therapy", "cohort", "vaccine", "diagnosis", "cardiac", "infection", "dosage", "trial"]),
    (Field::Mathematics, ["manifold", "theorem", "algebraic", "topology", "operator", "conjecture", "spectral", "integral", "combinatorial", "convex"]),
    (Field::Economics, ["market", "pricing", "inflation", "labor", "auction", "monetary", "trade", "welfare", "equilibrium", "fiscal"]),
    (Field::Sociology, ["community", "migration", "inequality", "network", "identity", "urban", "family", "education", "norms", "survey"]),
];

const GENERIC: [&str; 24] = [
    "we", "propose", "study", "novel", "approach", "results", "show", "improved", "performance",
    "analysis", "method", "data", "framework", "evaluate", "model", "effect", "robust", "new",
    "experiments", "demonstrate", "significant", "structure", "estimate", "general",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyConfig {
    pub papers: usize,
    pub seed: u64,
    /// Reference-free founding papers per topic.
    pub classics: usize,
    /// Same-topic parents per mainline paper.
    pub parents: usize,
    /// Parents are drawn from this many most recent same-topic papers.
    pub recent: usize,
    /// Foundations of each parent that are re-cited.
    pub co_cited: usize,
    /// Random older same-topic references.
    pub extra_same_topic: usize,
    /// Other-topic references cited in passing.
    pub passing: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            papers: 200,
            seed: 7,
            classics: 4,
            parents: 3,
            recent: 6,
            co_cited: 5,
            extra_same_topic: 1,
            passing: 6,
        }
    }
}

pub struct ToyCorpus {
    pub papers: Vec<PaperRecord>,
    /// (citing, cited), sorted.
    pub edges: Vec<(String, String)>,
}

fn id(i: usize) -> String {
    format!("T{i:03}")
}

fn signature(i: usize) -> String {
    format!("method{i:03}")
}

pub fn generate(config: &ToyConfig) -> ToyCorpus {
    let mut rng = rng_for(config.seed, "toy");
    let n = config.papers;
    let first = config.classics * TOPICS.len();
    let topic: Vec<usize> = (0..n).map(|i| i % TOPICS.len()).collect();

    let mut foundations: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut refs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut citers: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];

    for i in first..n {
        let same: Vec<usize> = (0..i).filter(|k| topic[*k] == topic[i]).collect();
        let recent = &same[same.len().saturating_sub(config.recent)..];
        let mut own = BTreeSet::new();
        for &p in recent.choose_multiple(&mut rng, config.parents) {
            own.insert(p);
            own.extend(foundations[p].choose_multiple(&mut rng, config.co_cited).copied());
        }
        own.extend(same.choose_multiple(&mut rng, config.extra_same_topic).copied());
        foundations[i] = own.iter().copied().collect();

        // Lightly cited candidates first, random among equals.
        let mut others: Vec<usize> = (0..i).filter(|k| topic[*k] != topic[i]).collect();
        others.shuffle(&mut rng);
        others.sort_by_key(|k| citers[*k].len());
        let mut picked: Vec<usize> = Vec::new();
        for x in others {
            if picked.len() == config.passing {
                break;
            }
            let clash = citers[x].iter().chain(&refs[x]).any(|c| own.contains(c))
                || picked.iter().any(|y| refs[*y].contains(&x) || refs[x].contains(y));
            if !clash {
                picked.push(x);
            }
        }
        own.extend(picked);
        for &r in &own {
            citers[r].insert(i);
        }
        refs[i] = own;
    }

    let papers = (0..n)
        .map(|i| {
            let (field, vocab) = &TOPICS[topic[i]];
            let pick = |rng: &mut _, k| -> Vec<&str> { vocab.choose_multiple(rng, k).copied().collect() };
            let t = pick(&mut rng, 3);
            let title = format!("On {} {} for {}", t[0], t[1], t[2]);

            let mut words: Vec<String> = Vec::new();
            for _ in 0..14 {
                words.push(vocab.choose(&mut rng).unwrap().to_string());
            }
            for _ in 0..16 {
                words.push(GENERIC.choose(&mut rng).unwrap().to_string());
            }
            words.push(signature(i));
            words.push(signature(i));
            // Mention about half of the cited same-topic work, and a little
            // of the rest, by signature.
            for &r in &refs[i] {
                let p = if topic[r] == topic[i] { 0.5 } else { 0.15 };
                if rng.random_bool(p) {
                    words.push(signature(r));
                }
            }
            words.shuffle(&mut rng);
            let mut abstract_text = words.join(" ");
            abstract_text.push('.');

            let mut keywords: Vec<String> = pick(&mut rng, 2).into_iter().map(String::from).collect();
            keywords.push(signature(i));
            let cited: Vec<&usize> = refs[i].iter().collect();
            keywords.extend(cited.choose_multiple(&mut rng, 2).map(|r| signature(**r)));

            PaperRecord {
                id: id(i),
                title,
                abstract_text,
                keywords,
                field: *field,
                year: 1990 + (i / 8) as i32,
            }
        })
        .collect();

    let mut edges: Vec<(String, String)> = refs
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().map(move |c| (id(i), id(*c))))
        .collect();
    edges.sort();
    ToyCorpus { papers, edges }
}

impl ToyCorpus {
    pub fn write_corpus<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.papers {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn write_edges<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["citing_id", "cited_id"])?;
        for (a, b) in &self.edges {
            w.write_record([a, b])?;
        }
        w.flush()
    }

    /// Writes `corpus.jsonl` and `edges.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_corpus(std::io::BufWriter::new(std::fs::File::create(dir.join("corpus.jsonl"))?))?;
        self.write_edges(std::io::BufWriter::new(std::fs::File::create(dir.join("edges.csv"))?))
    }
}
