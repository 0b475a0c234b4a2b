//! Disutility graph components and the exchange graph between them.

use num_traits::Signed;
use serde::Serialize;

use crate::model::{Instance, Market};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisutilityGraph {
    pub agents: usize,
    pub chores: usize,
    /// Finite-disutility chores of each agent, ascending.
    pub adjacency: Vec<Vec<usize>>,
}

impl DisutilityGraph {
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&j| (i, j)))
            .collect()
    }
}

pub fn build_disutility_graph(inst: &Instance) -> DisutilityGraph {
    DisutilityGraph {
        agents: inst.agents(),
        chores: inst.chores(),
        adjacency: (0..inst.agents()).map(|i| inst.finite_chores(i)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Component {
    pub agents: Vec<usize>,
    pub chores: Vec<usize>,
}

/// Connected components of the disutility graph. Agents with no finite
/// chore are kept aside instead of forming components of their own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentDecomposition {
    pub components: Vec<Component>,
    pub isolated_agents: Vec<usize>,
    /// Whether each component is complete bipartite.
    pub complete: Vec<bool>,
}

impl ComponentDecomposition {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component_of_chore(&self, chores: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; chores];
        for (k, c) in self.components.iter().enumerate() {
            for &j in &c.chores {
                out[j] = Some(k);
            }
        }
        out
    }

    pub fn component_of_agent(&self, agents: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; agents];
        for (k, c) in self.components.iter().enumerate() {
            for &i in &c.agents {
                out[i] = Some(k);
            }
        }
        out
    }
}

/// Splits the disutility graph into connected components. Chores without
/// any finite agent form chore-only components.
pub fn decompose(g: &DisutilityGraph) -> ComponentDecomposition {
    // Vertices: agents 0..n, chores n..n+m.
    let n = g.agents;
    let mut uf = UnionFind::new(n + g.chores);
    for (i, row) in g.adjacency.iter().enumerate() {
        for &j in row {
            uf.union(i, n + j);
        }
    }
    let mut by_root: Vec<Option<usize>> = vec![None; n + g.chores];
    let mut components: Vec<Component> = Vec::new();
    let mut isolated_agents = Vec::new();
    for i in 0..n {
        if g.adjacency[i].is_empty() {
            isolated_agents.push(i);
            continue;
        }
        let r = uf.find(i);
        let k = *by_root[r].get_or_insert_with(|| {
            components.push(Component {
                agents: Vec::new(),
                chores: Vec::new(),
            });
            components.len() - 1
        });
        components[k].agents.push(i);
    }
    for j in 0..g.chores {
        let r = uf.find(n + j);
        let k = *by_root[r].get_or_insert_with(|| {
            components.push(Component {
                agents: Vec::new(),
                chores: Vec::new(),
            });
            components.len() - 1
        });
        components[k].chores.push(j);
    }
    let complete = components
        .iter()
        .map(|c| {
            let edges: usize = c.agents.iter().map(|&i| g.adjacency[i].len()).sum();
            !c.agents.is_empty() && edges == c.agents.len() * c.chores.len()
        })
        .collect();
    ComponentDecomposition {
        components,
        isolated_agents,
        complete,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Condition1Failure {
    /// A component that is not complete bipartite, with one absent edge.
    MissingPair {
        component: Component,
        agent: usize,
        chore: usize,
    },
    /// No agent can do this chore.
    UnassignableChore { chore: usize },
    /// The agent has income but no chore it can do.
    StrandedAgent { agent: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Condition1 {
    Pass { decomposition: ComponentDecomposition },
    Fail { witness: Condition1Failure },
}

impl Condition1 {
    pub fn passed(&self) -> bool {
        matches!(self, Condition1::Pass { .. })
    }

    pub fn decomposition(&self) -> Option<&ComponentDecomposition> {
        match self {
            Condition1::Pass { decomposition } => Some(decomposition),
            Condition1::Fail { .. } => None,
        }
    }
}

/// Structural check on the graph alone: every component complete and every
/// chore doable.
pub fn check_condition1(g: &DisutilityGraph) -> Condition1 {
    let dec = decompose(g);
    for (c, complete) in dec.components.iter().zip(&dec.complete) {
        if c.agents.is_empty() {
            return Condition1::Fail {
                witness: Condition1Failure::UnassignableChore { chore: c.chores[0] },
            };
        }
        if !complete {
            for &i in &c.agents {
                if let Some(&j) = c.chores.iter().find(|j| g.adjacency[i].binary_search(j).is_err()) {
                    return Condition1::Fail {
                        witness: Condition1Failure::MissingPair {
                            component: c.clone(),
                            agent: i,
                            chore: j,
                        },
                    };
                }
            }
        }
    }
    Condition1::Pass { decomposition: dec }
}

/// Condition 1 including the income check for isolated agents.
pub fn check_condition1_for(inst: &Instance) -> Condition1 {
    let result = check_condition1(&build_disutility_graph(inst));
    if let Condition1::Pass { decomposition } = &result {
        if let Some(&agent) = decomposition.isolated_agents.iter().find(|&&i| inst.has_income(i)) {
            return Condition1::Fail {
                witness: Condition1Failure::StrandedAgent { agent },
            };
        }
    }
    result
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExchangeGraph {
    pub nodes: usize,
    /// Sorted edge list, self-loops included.
    pub edges: Vec<(usize, usize)>,
}

impl ExchangeGraph {
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes];
        for &(a, b) in &self.edges {
            out[a].push(b);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("the exchange graph is only defined for exchange markets")]
    WrongVariant,
}

/// Edge `k -> l` when the agents of component `k` jointly own a share of
/// every chore of component `l`.
pub fn build_exchange_graph(inst: &Instance, dec: &ComponentDecomposition) -> Result<ExchangeGraph, GraphError> {
    let Market::Exchange { endowment } = &inst.market else {
        return Err(GraphError::WrongVariant);
    };
    let d = dec.len();
    let mut edges = Vec::new();
    for (k, from) in dec.components.iter().enumerate() {
        for (l, to) in dec.components.iter().enumerate() {
            let owns_all = to
                .chores
                .iter()
                .all(|&j| from.agents.iter().any(|&i| endowment[i][j].is_positive()));
            if owns_all {
                edges.push((k, l));
            }
        }
    }
    Ok(ExchangeGraph { nodes: d, edges })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Condition2 {
    Pass,
    /// Strongly connected components in topological order, plus a pair
    /// `(from, to)` with no path from `from` to `to`.
    Fail {
        condensation: Vec<Vec<usize>>,
        unreachable: (usize, usize),
    },
}

impl Condition2 {
    pub fn passed(&self) -> bool {
        matches!(self, Condition2::Pass)
    }
}

pub fn check_condition2(g: &ExchangeGraph) -> Condition2 {
    let sccs = strongly_connected_components(&g.successors());
    if sccs.len() <= 1 {
        return Condition2::Pass;
    }
    // Nothing in the last component reaches the first one.
    let unreachable = (sccs[sccs.len() - 1][0], sccs[0][0]);
    Condition2::Fail {
        condensation: sccs,
        unreachable,
    }
}

/// Tarjan's algorithm, iterative. Components come out in topological order
/// of the condensation (sources first), each sorted ascending.
pub fn strongly_connected_components(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = succ.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < succ[v].len() {
                let w = succ[v][*pos];
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                out.push(comp);
            }
        }
    }
    // Tarjan emits sinks first.
    out.reverse();
    out
}

/// Both conditions for an instance, as reported by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionsReport {
    pub condition1: Condition1,
    /// `None` when condition 1 fails or the market has fixed earnings.
    pub condition2: Option<Condition2>,
    pub exchange_graph: Option<ExchangeGraph>,
}

impl ConditionsReport {
    pub fn passed(&self) -> bool {
        self.condition1.passed() && self.condition2.as_ref().is_none_or(Condition2::passed)
    }
}

pub fn check_conditions(inst: &Instance) -> ConditionsReport {
    let condition1 = check_condition1_for(inst);
    let (condition2, exchange_graph) = match condition1.decomposition() {
        Some(dec) => match build_exchange_graph(inst, dec) {
            Ok(g) => (Some(check_condition2(&g)), Some(g)),
            Err(GraphError::WrongVariant) => (None, None),
        },
        None => (None, None),
    };
    ConditionsReport {
        condition1,
        condition2,
        exchange_graph,
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Keep the smaller root so components stay keyed by low indices.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
