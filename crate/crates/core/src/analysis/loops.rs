use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::graph::{CausalGraph, LinkKind, Polarity};
use super::AnalysisError;

pub const DEFAULT_LOOP_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopPolarity {
    Balancing,
    Reinforcing,
    Indeterminate,
}

impl LoopPolarity {
    pub fn badge(self) -> char {
        match self {
            LoopPolarity::Balancing => 'B',
            LoopPolarity::Reinforcing => 'R',
            LoopPolarity::Indeterminate => '?',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LoopLink {
    pub kind: LinkKind,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLoop {
    /// Starts at the alphabetically smallest member; the link from the last node closes the loop.
    pub nodes: Vec<String>,
    /// One per hop: `links[i]` leads from `nodes[i]` to the next node.
    pub links: Vec<LoopLink>,
    pub polarity: LoopPolarity,
    pub delayed: bool,
}

impl fmt::Display for FeedbackLoop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} : ", self.polarity.badge())?;
        for name in &self.nodes {
            write!(f, "{name} -> ")?;
        }
        write!(f, "{} (delayed: {})", self.nodes[0], if self.delayed { "yes" } else { "no" })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoopReport {
    pub loops: Vec<FeedbackLoop>,
}

impl LoopReport {
    pub fn count(&self, polarity: LoopPolarity) -> usize {
        self.loops.iter().filter(|l| l.polarity == polarity).count()
    }
}

pub fn enumerate_loops(graph: &CausalGraph) -> Result<LoopReport, AnalysisError> {
    enumerate_loops_with_cap(graph, DEFAULT_LOOP_CAP)
}

/// All simple directed cycles, classified by the product of their link polarities.
pub fn enumerate_loops_with_cap(graph: &CausalGraph, cap: usize) -> Result<LoopReport, AnalysisError> {
    // Work over names in sorted order so the result does not depend on insertion order.
    let names: Vec<&str> = {
        let set: BTreeSet<&str> = graph
            .nodes
            .iter()
            .map(String::as_str)
            .chain(graph.links.iter().flat_map(|l| [l.source.as_str(), l.target.as_str()]))
            .collect();
        set.into_iter().collect()
    };
    let id: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); names.len()];
    let mut parallel: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (k, link) in graph.links.iter().enumerate() {
        let (s, t) = (id[link.source.as_str()], id[link.target.as_str()]);
        adjacency[s].insert(t);
        parallel.entry((s, t)).or_default().push(k);
    }
    let adjacency: Vec<Vec<usize>> = adjacency.into_iter().map(|s| s.into_iter().collect()).collect();

    let cycles = simple_cycles(&adjacency, cap).ok_or(AnalysisError::LoopExplosion { cap })?;

    let mut loops = Vec::new();
    for cycle in cycles {
        // Each choice among parallel links is its own loop.
        let hops: Vec<&Vec<usize>> =
            (0..cycle.len()).map(|i| &parallel[&(cycle[i], cycle[(i + 1) % cycle.len()])]).collect();
        let mut choices: Vec<Vec<usize>> = vec![Vec::new()];
        for hop in hops {
            choices = choices
                .into_iter()
                .flat_map(|prefix| {
                    hop.iter().map(move |&l| {
                        let mut p = prefix.clone();
                        p.push(l);
                        p
                    })
                })
                .collect();
        }
        for links in choices {
            if loops.len() >= cap {
                return Err(AnalysisError::LoopExplosion { cap });
            }
            loops.push(classify(graph, &names, &cycle, links));
        }
    }
    loops.sort_by(|a, b| (a.nodes.len(), &a.nodes, &a.links).cmp(&(b.nodes.len(), &b.nodes, &b.links)));
    Ok(LoopReport { loops })
}

fn classify(graph: &CausalGraph, names: &[&str], cycle: &[usize], links: Vec<usize>) -> FeedbackLoop {
    let links: Vec<LoopLink> =
        links.iter().map(|&l| LoopLink { kind: graph.links[l].kind, polarity: graph.links[l].polarity }).collect();
    let mut negatives = 0;
    let mut determinate = true;
    for link in &links {
        match link.polarity {
            Polarity::Positive => {}
            Polarity::Negative => negatives += 1,
            Polarity::Zero | Polarity::Indeterminate => determinate = false,
        }
    }
    let polarity = if !determinate {
        LoopPolarity::Indeterminate
    } else if negatives % 2 == 1 {
        LoopPolarity::Balancing
    } else {
        LoopPolarity::Reinforcing
    };
    let delayed = links.iter().any(|l| l.kind == LinkKind::Integration);
    // Johnson's search roots each cycle at its smallest id, which is the smallest name.
    FeedbackLoop { nodes: cycle.iter().map(|&i| names[i].to_owned()).collect(), links, polarity, delayed }
}

/// Johnson's elementary circuit search. Each cycle is rooted at its smallest vertex.
/// Returns `None` once more than `cap` cycles are found.
fn simple_cycles(adjacency: &[Vec<usize>], cap: usize) -> Option<Vec<Vec<usize>>> {
    let n = adjacency.len();
    let mut out = Vec::new();
    for start in 0..n {
        let component = scc_containing(adjacency, start);
        let has_cycle = component.len() > 1 || adjacency[start].contains(&start);
        if !has_cycle {
            continue;
        }
        let mut search = Circuits {
            adjacency,
            allowed: component,
            start,
            blocked: vec![false; n],
            blocked_by: vec![BTreeSet::new(); n],
            stack: Vec::new(),
            out: &mut out,
            cap,
        };
        search.circuit(start)?;
    }
    Some(out)
}

struct Circuits<'a> {
    adjacency: &'a [Vec<usize>],
    allowed: BTreeSet<usize>,
    start: usize,
    blocked: Vec<bool>,
    blocked_by: Vec<BTreeSet<usize>>,
    stack: Vec<usize>,
    out: &'a mut Vec<Vec<usize>>,
    cap: usize,
}

impl Circuits<'_> {
    fn circuit(&mut self, v: usize) -> Option<bool> {
        let mut found = false;
        self.stack.push(v);
        self.blocked[v] = true;
        for &w in &self.adjacency[v] {
            if !self.allowed.contains(&w) {
                continue;
            }
            if w == self.start {
                self.out.push(self.stack.clone());
                if self.out.len() > self.cap {
                    return None;
                }
                found = true;
            } else if !self.blocked[w] && self.circuit(w)? {
                found = true;
            }
        }
        if found {
            self.unblock(v);
        } else {
            for &w in &self.adjacency[v] {
                if self.allowed.contains(&w) {
                    self.blocked_by[w].insert(v);
                }
            }
        }
        self.stack.pop();
        Some(found)
    }

    fn unblock(&mut self, u: usize) {
        self.blocked[u] = false;
        for w in std::mem::take(&mut self.blocked_by[u]) {
            if self.blocked[w] {
                self.unblock(w);
            }
        }
    }
}

/// Strongly connected component of `start` within the subgraph of vertices `>= start`.
fn scc_containing(adjacency: &[Vec<usize>], start: usize) -> BTreeSet<usize> {
    let reach = |forward: bool| {
        let mut seen = BTreeSet::from([start]);
        let mut todo = vec![start];
        while let Some(v) = todo.pop() {
            let next: Vec<usize> = if forward {
                adjacency[v].clone()
            } else {
                (0..adjacency.len()).filter(|&u| adjacency[u].contains(&v)).collect()
            };
            for w in next {
                if w >= start && seen.insert(w) {
                    todo.push(w);
                }
            }
        }
        seen
    };
    let forward = reach(true);
    let backward = reach(false);
    forward.intersection(&backward).copied().collect()
}
