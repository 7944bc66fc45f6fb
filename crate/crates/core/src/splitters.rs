//! Train/test partitions, including schemes that respect temporal, group and
//! network dependence.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::Write;
use std::ops::Range;

use crate::error::{dim, Error, Result};
use crate::sampling::SeededStream;

/// Disjoint sorted index sets over `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    n: usize,
    train: Vec<usize>,
    test: Vec<usize>,
    discarded: Vec<usize>,
    scheme: String,
}

/// Role of an index in a [`SplitPlan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Train,
    Test,
    Discarded,
}

impl Assignment {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Test => "test",
            Self::Discarded => "discarded",
        }
    }
}

impl SplitPlan {
    /// Sorts the index sets and checks that they are disjoint, in range and
    /// that train and test are nonempty.
    pub fn new(
        n: usize,
        mut train: Vec<usize>,
        mut test: Vec<usize>,
        mut discarded: Vec<usize>,
        scheme: impl Into<String>,
    ) -> Result<Self> {
        let scheme = scheme.into();
        if train.is_empty() || test.is_empty() {
            return Err(Error::DegenerateInput(format!(
                "{scheme}: train ({}) and test ({}) must both be nonempty",
                train.len(),
                test.len()
            )));
        }
        let mut seen = vec![false; n];
        for set in [&mut train, &mut test, &mut discarded] {
            set.sort_unstable();
            for &i in set.iter() {
                if i >= n {
                    return Err(dim(format!("{scheme}: index {i} out of range for n = {n}")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidArgument(format!(
                        "{scheme}: index {i} assigned more than once"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            train,
            test,
            discarded,
            scheme,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn discarded(&self) -> &[usize] {
        &self.discarded
    }

    pub fn scheme(&self) -> &str {
        &self.scheme
    }

    /// Assignment of every index in `0..n`; `None` for indices the plan
    /// leaves out entirely.
    pub fn assignments(&self) -> Vec<Option<Assignment>> {
        let mut out = vec![None; self.n];
        for &i in &self.train {
            out[i] = Some(Assignment::Train);
        }
        for &i in &self.test {
            out[i] = Some(Assignment::Test);
        }
        for &i in &self.discarded {
            out[i] = Some(Assignment::Discarded);
        }
        out
    }

    /// Re-expresses a plan built over positions `0..n` of an ordering in
    /// terms of the original observation indices `order[pos]`.
    pub fn remap(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n {
            return Err(dim(format!("ordering length {} vs plan size {}", order.len(), self.n)));
        }
        let map = |v: &[usize]| v.iter().map(|&p| order[p]).collect::<Vec<_>>();
        Self::new(
            self.n,
            map(&self.train),
            map(&self.test),
            map(&self.discarded),
            self.scheme.clone(),
        )
    }

    /// CSV with header `index,assignment`, one row per assigned index.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,assignment")?;
        for (i, a) in self.assignments().iter().enumerate() {
            if let Some(a) = a {
                writeln!(out, "{i},{}", a.as_str())?;
            }
        }
        Ok(())
    }
}

/// All plans of a scheme in one CSV with header `plan,index,assignment`.
pub fn write_plans_csv<W: Write>(plans: &[SplitPlan], mut out: W) -> std::io::Result<()> {
    writeln!(out, "plan,index,assignment")?;
    for (p, plan) in plans.iter().enumerate() {
        for (i, a) in plan.assignments().iter().enumerate() {
            if let Some(a) = a {
                writeln!(out, "{p},{i},{}", a.as_str())?;
            }
        }
    }
    Ok(())
}

/// Symmetric adjacency without self loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    neighbours: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            neighbours: vec![Vec::new(); n],
        }
    }

    /// Undirected graph from an edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = Self::empty(n);
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(dim(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self loop at node {a}")));
            }
            if !adj.neighbours[a].contains(&b) {
                adj.neighbours[a].push(b);
                adj.neighbours[b].push(a);
            }
        }
        for list in &mut adj.neighbours {
            list.sort_unstable();
        }
        Ok(adj)
    }

    /// From a dense boolean matrix, which must be symmetric with a false diagonal.
    pub fn from_matrix(m: &[Vec<bool>]) -> Result<Self> {
        let n = m.len();
        let mut edges = Vec::new();
        for (i, row) in m.iter().enumerate() {
            if row.len() != n {
                return Err(dim(format!("adjacency row {i} has length {}", row.len())));
            }
            if row[i] {
                return Err(Error::InvalidArgument(format!("self loop at node {i}")));
            }
            for j in 0..n {
                if row[j] != m[j][i] {
                    return Err(Error::InvalidArgument(format!("adjacency not symmetric at ({i}, {j})")));
                }
                if row[j] && i < j {
                    edges.push((i, j));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Every pair within each group connected.
    pub fn cliques(groups: &[usize]) -> Self {
        let n = groups.len();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if groups[i] == groups[j] {
                    edges.push((i, j));
                }
            }
        }
        Self::from_edges(n, &edges).expect("clique edges are valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[i]
    }

    pub fn connected(&self, i: usize, j: usize) -> bool {
        self.neighbours[i].binary_search(&j).is_ok()
    }
}

/// Optional dependency structure attached to `n` observations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencyMetadata {
    /// `ordering[pos]` is the observation at time position `pos`.
    pub ordering: Option<Vec<usize>>,
    pub groups: Option<Vec<String>>,
    pub adjacency: Option<Adjacency>,
}

impl DependencyMetadata {
    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(order) = &self.ordering {
            let mut seen = vec![false; n];
            if order.len() != n
                || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true))
            {
                return Err(Error::InvalidArgument("ordering is not a permutation of 0..n".into()));
            }
        }
        if let Some(g) = &self.groups {
            if g.len() != n {
                return Err(dim(format!("{} group labels for {n} observations", g.len())));
            }
        }
        if let Some(a) = &self.adjacency {
            if a.n() != n {
                return Err(dim(format!("adjacency over {} nodes for {n} observations", a.n())));
            }
        }
        Ok(())
    }
}

/// Contiguous ranges covering `0..n`: the first `n % k` have size `⌈n/k⌉`,
/// the rest `⌊n/k⌋`.
pub fn fold_ranges(n: usize, k: usize) -> Vec<Range<usize>> {
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn check_folds(n: usize, k: usize) -> Result<()> {
    if k < 2 || k > n {
        return Err(dim(format!("need 2 <= k <= n, got k = {k}, n = {n}")));
    }
    Ok(())
}

/// Random k-fold cross-validation: a random permutation cut into `k` folds.
pub fn kfold(n: usize, k: usize, stream: &mut SeededStream) -> Result<Vec<SplitPlan>> {
    check_folds(n, k)?;
    let perm = stream.permutation(n);
    let scheme = if k == n { "loo".to_string() } else { format!("kfold{k}") };
    fold_ranges(n, k)
        .into_iter()
        .map(|r| {
            let test = perm[r.clone()].to_vec();
            let train = perm[..r.start].iter().chain(&perm[r.end..]).copied().collect();
            SplitPlan::new(n, train, test, Vec::new(), scheme.clone())
        })
        .collect()
}

/// Leave-one-out: k-fold with `k = n`; needs no randomness.
pub fn leave_one_out(n: usize) -> Result<Vec<SplitPlan>> {
    check_folds(n, n)?;
    (0..n)
        .map(|i| {
            let train = (0..n).filter(|&j| j != i).collect();
            SplitPlan::new(n, train, vec![i], Vec::new(), "loo")
        })
        .collect()
}

/// Final `⌈n·test_fraction⌉` positions as test; the `gap` positions just
/// before them are discarded; everything earlier is training.
pub fn temporal_block(n: usize, test_fraction: f64, gap: usize) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    // Guard against products like 0.3·10 = 3.0000000000000004 rounding up.
    let test_len = ((n as f64 * test_fraction) - 1e-9).ceil().max(1.0) as usize;
    let train_len = n
        .checked_sub(test_len + gap)
        .filter(|&t| t > 0)
        .ok_or_else(|| dim(format!("n = {n} leaves no training data with test {test_len} and gap {gap}")))?;
    SplitPlan::new(
        n,
        (0..train_len).collect(),
        (train_len + gap..n).collect(),
        (train_len..train_len + gap).collect(),
        format!("temporal_gap{gap}"),
    )
}

/// Contiguous k-fold along the time axis where every training position
/// within `gap` of the test block is discarded instead. `gap = 0` gives
/// plain contiguous-block k-fold.
pub fn non_dependent_cv(n: usize, k: usize, gap: usize) -> Result<Vec<SplitPlan>> {
    check_folds(n, k)?;
    fold_ranges(n, k)
        .into_iter()
        .map(|r| {
            let lo = r.start.saturating_sub(gap);
            let hi = (r.end + gap).min(n);
            let test: Vec<usize> = r.clone().collect();
            let discarded = (lo..r.start).chain(r.end..hi).collect();
            let train: Vec<usize> = (0..lo).chain(hi..n).collect();
            if train.is_empty() {
                return Err(dim(format!("gap {gap} exhausts training data for fold {r:?} of n = {n}")));
            }
            SplitPlan::new(n, train, test, discarded, format!("nondep{k}_gap{gap}"))
        })
        .collect()
}

/// One plan per distinct label (in order of first appearance) holding out
/// every observation with that label.
pub fn leave_one_group_out<L: Eq + Hash>(groups: &[L]) -> Result<Vec<SplitPlan>> {
    let mut order: Vec<&L> = Vec::new();
    let mut members: HashMap<&L, Vec<usize>> = HashMap::new();
    for (i, g) in groups.iter().enumerate() {
        members
            .entry(g)
            .or_insert_with(|| {
                order.push(g);
                Vec::new()
            })
            .push(i);
    }
    if order.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "leave-one-group-out needs at least 2 groups, got {}",
            order.len()
        )));
    }
    let n = groups.len();
    order
        .iter()
        .map(|g| {
            let test = members[g].clone();
            let train = (0..n).filter(|i| groups[*i] != **g).collect();
            SplitPlan::new(n, train, test, Vec::new(), "logo")
        })
        .collect()
}

/// Random test set of `round(n·test_fraction)` nodes (at least one, at most
/// `n − 1`) drawn uniformly without replacement; see
/// [`network_split_with_test`] for the buffer.
pub fn network_neighborhood_split(
    adjacency: &Adjacency,
    test_fraction: f64,
    buffer: bool,
    stream: &mut SeededStream,
) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = adjacency.n();
    if n < 2 {
        return Err(dim("network split needs at least 2 nodes"));
    }
    let size = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let perm = stream.permutation(n);
    network_split_with_test(adjacency, &perm[..size], buffer)
}

/// Uses the given test nodes; with `buffer`, every training node adjacent
/// to a test node is discarded so no edge joins train and test.
pub fn network_split_with_test(adjacency: &Adjacency, test: &[usize], buffer: bool) -> Result<SplitPlan> {
    let n = adjacency.n();
    let mut is_test = vec![false; n];
    for &t in test {
        if t >= n {
            return Err(dim(format!("test node {t} out of range for n = {n}")));
        }
        is_test[t] = true;
    }
    let mut discarded = Vec::new();
    let mut train = Vec::new();
    for i in (0..n).filter(|&i| !is_test[i]) {
        if buffer && adjacency.neighbours(i).iter().any(|&j| is_test[j]) {
            discarded.push(i);
        } else {
            train.push(i);
        }
    }
    if train.is_empty() {
        return Err(Error::DegenerateInput("buffering around the test nodes leaves no training data".into()));
    }
    let scheme = if buffer { "network_buffered" } else { "network" };
    SplitPlan::new(n, train, test.to_vec(), discarded, scheme)
}
