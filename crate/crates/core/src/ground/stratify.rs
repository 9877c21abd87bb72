//! Predicate-level stratification: positive dependencies may stay within a
//! stratum, negative ones must point strictly downwards.

use std::collections::BTreeMap;

use super::GroundError;

/// Dependency graph over predicate keys (`name/arity`).
#[derive(Debug, Default, Clone)]
pub struct DepGraph {
    nodes: Vec<String>,
    ids: BTreeMap<String, usize>,
    // (from, to, negative): `from` depends on `to`
    edges: Vec<(usize, usize, bool)>,
}

impl DepGraph {
    pub fn node(&mut self, key: &str) -> usize {
        if let Some(&i) = self.ids.get(key) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(key.to_string());
        self.ids.insert(key.to_string(), i);
        i
    }

    pub fn depend(&mut self, head: &str, body: &str, negative: bool) {
        let h = self.node(head);
        let b = self.node(body);
        self.edges.push((h, b, negative));
    }

    /// Assigns each predicate the least stratum consistent with its
    /// dependencies, or reports the predicates on a cycle through negation.
    pub fn stratify(&self) -> Result<BTreeMap<String, usize>, GroundError> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for &(h, b, neg) in &self.edges {
            adj[h].push((b, neg));
        }
        let comp = tarjan(&adj);
        for &(h, b, neg) in &self.edges {
            if neg && comp[h] == comp[b] {
                let mut cycle: Vec<String> = (0..n)
                    .filter(|&i| comp[i] == comp[h])
                    .map(|i| self.nodes[i].clone())
                    .collect();
                cycle.sort();
                return Err(GroundError::NotStratified { predicates: cycle });
            }
        }
        // Tarjan numbers components in reverse topological order: a component
        // only depends on components with smaller numbers.
        let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); ncomp];
        for (i, &c) in comp.iter().enumerate() {
            members[c].push(i);
        }
        let mut level = vec![0usize; ncomp];
        for c in 0..ncomp {
            let mut lv = 0;
            for &i in &members[c] {
                for &(b, neg) in &adj[i] {
                    if comp[b] != c {
                        lv = lv.max(level[comp[b]] + usize::from(neg));
                    }
                }
            }
            level[c] = lv;
        }
        Ok(self
            .ids
            .iter()
            .map(|(k, &i)| (k.clone(), level[comp[i]]))
            .collect())
    }
}

fn tarjan(adj: &[Vec<(usize, bool)>]) -> Vec<usize> {
    struct State<'a> {
        adj: &'a [Vec<(usize, bool)>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        comp: Vec<usize>,
        next_index: usize,
        next_comp: usize,
    }
    // iterative DFS; programs can have long dependency chains
    let n = adj.len();
    let mut st = State {
        adj,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        comp: vec![usize::MAX; n],
        next_index: 0,
        next_comp: 0,
    };
    for root in 0..n {
        if st.index[root].is_some() {
            continue;
        }
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        st.index[root] = Some(st.next_index);
        st.low[root] = st.next_index;
        st.next_index += 1;
        st.stack.push(root);
        st.on_stack[root] = true;
        while let Some(&mut (v, ref mut ei)) = work.last_mut() {
            if *ei < st.adj[v].len() {
                let w = st.adj[v][*ei].0;
                *ei += 1;
                match st.index[w] {
                    None => {
                        st.index[w] = Some(st.next_index);
                        st.low[w] = st.next_index;
                        st.next_index += 1;
                        st.stack.push(w);
                        st.on_stack[w] = true;
                        work.push((w, 0));
                    }
                    Some(wi) if st.on_stack[w] => {
                        st.low[v] = st.low[v].min(wi);
                    }
                    Some(_) => {}
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    st.low[parent] = st.low[parent].min(st.low[v]);
                }
                if Some(st.low[v]) == st.index[v] {
                    loop {
                        let w = st.stack.pop().expect("tarjan stack");
                        st.on_stack[w] = false;
                        st.comp[w] = st.next_comp;
                        if w == v {
                            break;
                        }
                    }
                    st.next_comp += 1;
                }
            }
        }
    }
    st.comp
}
