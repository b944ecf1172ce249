//! Conversion of a user problem to the real primal standard form used by the
//! interior-point solver: real symmetric blocks, equalities, unbounded free
//! variables. Hermitian blocks are embedded as `[[Re, −Im], [Im, Re]]`;
//! bounded free variables become 1×1 slack blocks.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::SdpProblem;
use crate::algebra::{c, CMatrix};

pub(crate) type Entries = Vec<(usize, usize, f64)>;

#[derive(Clone, Debug)]
pub(crate) struct Row {
    pub terms: Vec<(usize, Entries)>,
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum VarMap {
    Free(usize),
    Fixed(f64),
    /// `u = lo + s`
    Lower { lo: f64, s: usize },
    /// `u = hi − t`
    Upper { hi: f64, t: usize },
    /// `u = lo + s`, `s + t = hi − lo`
    Boxed { lo: f64, s: usize, t: usize },
}

#[derive(Clone, Debug)]
pub(crate) struct Standard {
    pub sizes: Vec<usize>,
    pub user_blocks: usize,
    pub rows: Vec<Row>,
    /// User equality behind each row; `None` for bound rows.
    pub origin: Vec<Option<usize>>,
    pub c: Vec<DMatrix<f64>>,
    pub f: Vec<f64>,
    pub offset: f64,
    pub vars: Vec<VarMap>,
}

pub(crate) fn embed(m: &CMatrix) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = m[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

pub(crate) fn unembed(x: &DMatrix<f64>) -> CMatrix {
    let n = x.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| {
        c(
            0.5 * (x[(i, j)] + x[(i + n, j + n)]),
            0.5 * (x[(i + n, j)] - x[(i, j + n)]),
        )
    })
}

fn collect(acc: BTreeMap<(usize, usize), f64>) -> Entries {
    acc.into_iter().filter(|e| e.1 != 0.0).map(|((i, j), v)| (i, j, v)).collect()
}

impl Standard {
    /// Unbounded free variables that no equality uses are fixed at zero.
    pub fn new(p: &SdpProblem) -> Standard {
        let mut used = vec![false; p.free_vars];
        for e in &p.equalities {
            for &(i, v) in &e.functional.free {
                if v != 0.0 {
                    used[i] = true;
                }
            }
        }
        let mut sizes: Vec<usize> = p.block_dims.iter().map(|d| 2 * d).collect();
        let user_blocks = sizes.len();
        let mut vars = Vec::with_capacity(p.free_vars);
        let mut n_free = 0;
        let mut bound_rows = Vec::new();
        for i in 0..p.free_vars {
            let (lo, hi) = p.bounds(i);
            let v = match (lo.is_finite(), hi.is_finite()) {
                _ if lo == hi => VarMap::Fixed(lo),
                (false, false) if !used[i] => VarMap::Fixed(0.0),
                (false, false) => {
                    n_free += 1;
                    VarMap::Free(n_free - 1)
                }
                (true, false) => {
                    sizes.push(1);
                    VarMap::Lower { lo, s: sizes.len() - 1 }
                }
                (false, true) => {
                    sizes.push(1);
                    VarMap::Upper { hi, t: sizes.len() - 1 }
                }
                (true, true) => {
                    sizes.push(1);
                    sizes.push(1);
                    let (s, t) = (sizes.len() - 2, sizes.len() - 1);
                    bound_rows.push(Row {
                        terms: vec![(s, vec![(0, 0, 1.0)]), (t, vec![(0, 0, 1.0)])],
                        free: Vec::new(),
                        rhs: hi - lo,
                    });
                    VarMap::Boxed { lo, s, t }
                }
            };
            vars.push(v);
        }

        // Lowers one functional; returns (block terms, free terms, constant).
        let lower = |f: &super::LinearFunctional| {
            let mut blocks: BTreeMap<usize, BTreeMap<(usize, usize), f64>> = BTreeMap::new();
            for t in &f.blocks {
                let n = p.block_dims[t.block];
                let acc = blocks.entry(t.block).or_default();
                for &(i, j, v) in &t.entries {
                    let (a, b) = (0.5 * v.re, 0.5 * v.im);
                    *acc.entry((i, j)).or_default() += a;
                    *acc.entry((i + n, j + n)).or_default() += a;
                    *acc.entry((i, j + n)).or_default() -= b;
                    *acc.entry((i + n, j)).or_default() += b;
                }
            }
            let mut free: BTreeMap<usize, f64> = BTreeMap::new();
            let mut constant = 0.0;
            for &(i, v) in &f.free {
                match vars[i] {
                    VarMap::Free(k) => *free.entry(k).or_default() += v,
                    VarMap::Fixed(x) => constant += v * x,
                    VarMap::Lower { lo, s } | VarMap::Boxed { lo, s, .. } => {
                        constant += v * lo;
                        *blocks.entry(s).or_default().entry((0, 0)).or_default() += v;
                    }
                    VarMap::Upper { hi, t } => {
                        constant += v * hi;
                        *blocks.entry(t).or_default().entry((0, 0)).or_default() -= v;
                    }
                }
            }
            let terms: Vec<(usize, Entries)> = blocks
                .into_iter()
                .map(|(b, acc)| (b, collect(acc)))
                .filter(|t| !t.1.is_empty())
                .collect();
            let free: Vec<(usize, f64)> = free.into_iter().filter(|e| e.1 != 0.0).collect();
            (terms, free, constant)
        };

        let (obj_terms, obj_free, offset) = lower(&p.objective);
        let mut cmats: Vec<DMatrix<f64>> = sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (b, entries) in obj_terms {
            for (i, j, v) in entries {
                cmats[b][(i, j)] += v;
            }
        }
        let mut fvec = vec![0.0; n_free];
        for (k, v) in obj_free {
            fvec[k] += v;
        }

        let mut rows = Vec::new();
        let mut origin = Vec::new();
        for (j, e) in p.equalities.iter().enumerate() {
            let (terms, free, constant) = lower(&e.functional);
            rows.push(Row { terms, free, rhs: e.rhs - constant });
            origin.push(Some(j));
        }
        for r in bound_rows {
            rows.push(r);
            origin.push(None);
        }
        Standard {
            sizes,
            user_blocks,
            rows,
            origin,
            c: cmats,
            f: fvec,
            offset,
            vars,
        }
    }

    /// Rows grouped by shared blocks. Each group lists its rows and blocks.
    pub fn components(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let nb = self.sizes.len();
        let mut parent: Vec<usize> = (0..nb).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for r in &self.rows {
            for w in r.terms.windows(2) {
                let (a, b) = (find(&mut parent, w[0].0), find(&mut parent, w[1].0));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let mut groups: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        let mut empty = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            match r.terms.first() {
                Some(t) => {
                    let root = find(&mut parent, t.0);
                    groups.entry(root).or_default().0.push(i);
                }
                None => empty.push(i),
            }
        }
        for b in 0..nb {
            let root = find(&mut parent, b);
            if let Some(g) = groups.get_mut(&root) {
                g.1.push(b);
            }
        }
        let mut out: Vec<_> = groups.into_values().collect();
        if !empty.is_empty() {
            out.push((empty, Vec::new()));
        }
        out
    }
}
