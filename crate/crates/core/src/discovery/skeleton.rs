use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::citest::{CiQuery, CiTest, CiVerdict, TestRecord};
use crate::error::Result;

/// Where a separating set came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SepsetOrigin {
    Pooled,
    Context(u32),
    /// Pair removed by link assumptions without a test; the set is unknown.
    Assumption,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sepset {
    pub set: BTreeSet<usize>,
    pub origin: SepsetOrigin,
    /// Size level at which the pair was removed.
    pub level: usize,
}

impl Sepset {
    /// `Some(set)` when the set is known.
    pub fn known(&self) -> Option<&BTreeSet<usize>> {
        match self.origin {
            SepsetOrigin::Assumption => None,
            _ => Some(&self.set),
        }
    }
}

/// How a candidate `(i, j, S)` becomes a CI query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestScope {
    /// Every test on all rows.
    Pooled,
    /// Every test on rows with `R = r`.
    Masked(u32),
    /// Rows with `R = r` when `R ∈ S` (with `R` dropped from `S`),
    /// all rows otherwise.
    Adaptive { context: u32, indicator: usize },
}

impl TestScope {
    fn query(&self, i: usize, j: usize, s: &[usize]) -> CiQuery {
        match *self {
            TestScope::Pooled => CiQuery::pooled(i, j, s.iter().copied()),
            TestScope::Masked(r) => CiQuery::in_context(i, j, s.iter().copied(), r),
            TestScope::Adaptive { context, indicator } => {
                if s.contains(&indicator) {
                    CiQuery::in_context(i, j, s.iter().copied().filter(|&v| v != indicator), context)
                } else {
                    CiQuery::pooled(i, j, s.iter().copied())
                }
            }
        }
        .normalized()
    }
}

/// Memoizes verdicts by normalized query so that repeated queries, within
/// one search or across the per-context searches of one method, execute
/// once. The number of entries is the executed-test count.
#[derive(Default)]
pub struct TestCache {
    entries: Mutex<BTreeMap<CiQuery, CiVerdict>>,
}

impl TestCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn run(&self, tester: &dyn CiTest, q: &CiQuery) -> Result<CiVerdict> {
        if let Some(v) = self.entries.lock().expect("cache lock").get(q) {
            return Ok(*v);
        }
        let v = tester.test(q)?;
        self.entries.lock().expect("cache lock").insert(q.clone(), v);
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Executed tests in query order.
    pub fn records(&self) -> Vec<TestRecord> {
        self.entries
            .lock()
            .expect("cache lock")
            .iter()
            .map(|(q, v)| TestRecord {
                query: q.clone(),
                verdict: *v,
            })
            .collect()
    }
}

/// Skeleton-search inputs besides the tester.
#[derive(Clone, Debug)]
pub struct SkeletonSpec<'a> {
    /// Nodes taking part, ascending.
    pub nodes: &'a [usize],
    pub scope: TestScope,
    pub alpha: f64,
    pub max_sepset_size: Option<usize>,
    /// Adjacent pairs `(a, b)`, `a < b`, that are never tested or removed.
    pub fixed: &'a BTreeSet<(usize, usize)>,
    /// Pairs removed before the search without a test.
    pub forbidden: &'a BTreeSet<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonResult {
    /// Remaining adjacencies `(a, b)` with `a < b`.
    pub adjacencies: BTreeSet<(usize, usize)>,
    pub sepsets: BTreeMap<(usize, usize), Sepset>,
    /// Adjacency sets frozen at the start of each level.
    pub frozen: Vec<BTreeMap<usize, BTreeSet<usize>>>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Lexicographic `k`-subsets of `items` (ascending input).
fn for_each_subset(items: &[usize], k: usize, f: &mut dyn FnMut(&[usize]) -> Result<bool>) -> Result<bool> {
    let n = items.len();
    if k > n {
        return Ok(false);
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut current = vec![0; k];
    'outer: loop {
        for (c, &i) in current.iter_mut().zip(&idx) {
            *c = items[i];
        }
        if f(&current)? {
            return Ok(true);
        }
        for pos in (0..k).rev() {
            if idx[pos] < pos + n - k {
                idx[pos] += 1;
                for q in pos + 1..k {
                    idx[q] = idx[q - 1] + 1;
                }
                continue 'outer;
            }
        }
        return Ok(false);
    }
}

/// PC-stable adjacency search. Levels grow from 0; at each level the
/// adjacency sets are frozen, every ordered pair `(i, j)` still adjacent is
/// tested against the `ℓ`-subsets of `frozen(i) \ {j}` in lexicographic
/// order, and the first affirmative independence removes the edge.
pub fn pc_stable_skeleton(tester: &dyn CiTest, spec: &SkeletonSpec<'_>, cache: &TestCache) -> Result<SkeletonResult> {
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = spec
        .nodes
        .iter()
        .map(|&v| (v, spec.nodes.iter().copied().filter(|&w| w != v).collect()))
        .collect();
    let mut sepsets = BTreeMap::new();
    for &(a, b) in spec.forbidden {
        if adj.contains_key(&a) && adj.contains_key(&b) && !spec.fixed.contains(&(a, b)) {
            adj.get_mut(&a).expect("node").remove(&b);
            adj.get_mut(&b).expect("node").remove(&a);
            sepsets.insert(
                (a, b),
                Sepset {
                    set: BTreeSet::new(),
                    origin: SepsetOrigin::Assumption,
                    level: 0,
                },
            );
        }
    }

    let mut frozen_levels = Vec::new();
    let mut level = 0usize;
    loop {
        if spec.max_sepset_size.is_some_and(|m| level > m) {
            break;
        }
        let frozen = adj.clone();
        frozen_levels.push(frozen.clone());
        let mut any_candidate = false;
        for &i in spec.nodes {
            for &j in &frozen[&i] {
                if spec.fixed.contains(&key(i, j)) || !adj[&i].contains(&j) {
                    continue;
                }
                let candidates: Vec<usize> = frozen[&i].iter().copied().filter(|&v| v != j).collect();
                if candidates.len() < level {
                    continue;
                }
                any_candidate = true;
                let mut found: Option<(Vec<usize>, CiQuery)> = None;
                for_each_subset(&candidates, level, &mut |s| {
                    let q = spec.scope.query(i, j, s);
                    let verdict = cache.run(tester, &q)?;
                    if verdict.independent(spec.alpha) {
                        found = Some((s.to_vec(), q));
                        return Ok(true);
                    }
                    Ok(false)
                })?;
                if let Some((s, q)) = found {
                    adj.get_mut(&i).expect("node").remove(&j);
                    adj.get_mut(&j).expect("node").remove(&i);
                    let origin = match q.context {
                        Some(r) => SepsetOrigin::Context(r),
                        None => SepsetOrigin::Pooled,
                    };
                    sepsets.insert(
                        key(i, j),
                        Sepset {
                            set: s.into_iter().collect(),
                            origin,
                            level,
                        },
                    );
                }
            }
        }
        if !any_candidate {
            break;
        }
        level += 1;
    }

    let mut adjacencies = BTreeSet::new();
    for (&a, ns) in &adj {
        for &b in ns {
            if a < b {
                adjacencies.insert((a, b));
            }
        }
    }
    Ok(SkeletonResult {
        adjacencies,
        sepsets,
        frozen: frozen_levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_are_lexicographic() {
        let mut seen = Vec::new();
        for_each_subset(&[1, 3, 5, 7], 2, &mut |s| {
            seen.push(s.to_vec());
            Ok(false)
        })
        .unwrap();
        assert_eq!(
            seen,
            vec![vec![1, 3], vec![1, 5], vec![1, 7], vec![3, 5], vec![3, 7], vec![5, 7]]
        );
        let mut count = 0;
        for_each_subset(&[1, 2], 0, &mut |s| {
            assert!(s.is_empty());
            count += 1;
            Ok(false)
        })
        .unwrap();
        assert_eq!(count, 1);
        for_each_subset(&[1, 2], 3, &mut |_| panic!("no subsets")).unwrap();
        let mut all = 0;
        for_each_subset(&[0, 1, 2, 3, 4], 3, &mut |_| {
            all += 1;
            Ok(false)
        })
        .unwrap();
        assert_eq!(all, 10);
    }

    #[test]
    fn adaptive_scope_routes_on_indicator() {
        let scope = TestScope::Adaptive {
            context: 2,
            indicator: 5,
        };
        assert_eq!(scope.query(3, 1, &[0, 5]), CiQuery::in_context(1, 3, [0], 2));
        assert_eq!(scope.query(1, 3, &[0]), CiQuery::pooled(1, 3, [0]));
        assert_eq!(TestScope::Masked(1).query(0, 1, &[]), CiQuery::in_context(0, 1, [], 1));
    }
}
