use thiserror::Error;

/// Largest graph [`enumerate_maximal_compatible_sets`] agrees to work on.
pub const MAX_ENUMERATION_EVENTS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("row {row} has {len} cells, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("event {0} conflicts with itself")]
    SelfConflict(usize),
    #[error("matrix is asymmetric at {cells:?}")]
    Asymmetric { cells: Vec<(usize, usize)> },
    #[error("event index {index} out of range for {n} events")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("refusing to enumerate maximal sets of {n} events (limit {max})")]
    TooLarge { n: usize, max: usize },
    #[error("geometry underdetermined: {0}")]
    GeometryUnderdetermined(String),
    #[error("graph has {graph} events but the event set has {events}")]
    SizeMismatch { graph: usize, events: usize },
}

/// Symmetric conflict relation; `true` means the two events may not be
/// green together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    n: usize,
    adj: Vec<bool>,
}

/// Cells `(i, j)` with `i < j` that were set only on one side.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RepairReport {
    pub repaired: Vec<(usize, usize)>,
}

impl RepairReport {
    pub fn is_clean(&self) -> bool {
        self.repaired.is_empty()
    }
}

impl ConflictGraph {
    pub fn empty(n: usize) -> Self {
        ConflictGraph { n, adj: vec![false; n * n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = Self::empty(n);
        for &(a, b) in edges {
            g.check(a)?;
            g.check(b)?;
            if a == b {
                return Err(GraphError::SelfConflict(a));
            }
            g.set(a, b);
        }
        Ok(g)
    }

    pub(crate) fn set(&mut self, a: usize, b: usize) {
        self.adj[a * self.n + b] = true;
        self.adj[b * self.n + a] = true;
    }

    fn check(&self, i: usize) -> Result<(), GraphError> {
        if i < self.n {
            Ok(())
        } else {
            Err(GraphError::IndexOutOfRange { index: i, n: self.n })
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Panics on out-of-range positions.
    pub fn conflicts(&self, a: usize, b: usize) -> bool {
        assert!(a < self.n && b < self.n, "event index out of range");
        self.adj[a * self.n + b]
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&c| c).count() / 2
    }

    pub fn rows(&self) -> Vec<Vec<bool>> {
        self.adj.chunks(self.n.max(1)).take(self.n).map(<[bool]>::to_vec).collect()
    }

    pub fn is_compatible_set(&self, subset: &[usize]) -> Result<bool, GraphError> {
        for &i in subset {
            self.check(i)?;
        }
        for (k, &a) in subset.iter().enumerate() {
            for &b in &subset[k + 1..] {
                if a != b && self.conflicts(a, b) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Whether `e` can join `set` without conflicts.
    pub fn compatible_with<'a>(&self, set: impl IntoIterator<Item = &'a usize>, e: usize) -> bool {
        set.into_iter().all(|&s| s == e || !self.conflicts(s, e))
    }
}

pub fn load_conflict_matrix(
    rows: &[Vec<bool>],
    symmetrize: bool,
) -> Result<(ConflictGraph, RepairReport), GraphError> {
    let n = rows.len();
    for (r, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(GraphError::NotSquare { row: r, len: row.len(), expected: n });
        }
        if row[r] {
            return Err(GraphError::SelfConflict(r));
        }
    }
    let mut asym = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rows[i][j] != rows[j][i] {
                asym.push((i, j));
            }
        }
    }
    if !asym.is_empty() && !symmetrize {
        return Err(GraphError::Asymmetric { cells: asym });
    }
    let mut g = ConflictGraph::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if rows[i][j] || rows[j][i] {
                g.set(i, j);
            }
        }
    }
    Ok((g, RepairReport { repaired: asym }))
}

/// All inclusion-maximal conflict-free subsets, each sorted, listed in
/// lexicographic order.
pub fn enumerate_maximal_compatible_sets(
    graph: &ConflictGraph,
) -> Result<Vec<Vec<usize>>, GraphError> {
    let n = graph.len();
    if n > MAX_ENUMERATION_EVENTS {
        return Err(GraphError::TooLarge { n, max: MAX_ENUMERATION_EVENTS });
    }
    if n == 0 {
        return Ok(vec![Vec::new()]);
    }
    let full: u32 = (1u32 << n) - 1;
    // compatibility neighbourhoods
    let nbr: Vec<u32> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && !graph.conflicts(i, j))
                .fold(0u32, |m, j| m | (1 << j))
        })
        .collect();
    let mut out = Vec::new();
    bron_kerbosch(0, full, 0, &nbr, &mut out);
    let mut sets: Vec<Vec<usize>> = out
        .into_iter()
        .map(|m| (0..n).filter(|&i| m & (1 << i) != 0).collect())
        .collect();
    sets.sort();
    Ok(sets)
}

fn bron_kerbosch(r: u32, mut p: u32, mut x: u32, nbr: &[u32], out: &mut Vec<u32>) {
    if p == 0 {
        if x == 0 {
            out.push(r);
        }
        return;
    }
    let pivot = (p | x).trailing_zeros() as usize;
    let mut cand = p & !nbr[pivot];
    while cand != 0 {
        let v = cand.trailing_zeros() as usize;
        let bit = 1u32 << v;
        cand &= !bit;
        bron_kerbosch(r | bit, p & nbr[v], x & nbr[v], nbr, out);
        p &= !bit;
        x |= bit;
    }
}
