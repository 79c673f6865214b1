//! Maximum-benefit partial assignment.
//!
//! [`auction`] is a Gauss–Seidel forward auction with ε-scaling on integer
//! benefits. Bidders and items may be left unassigned: the problem is
//! embedded into a square one with one dummy item per bidder and one dummy
//! bidder per item, all dummy edges worth zero, so every partial matching
//! corresponds to a perfect matching of the same value. Benefits are scaled by
//! `N + 1` (`N` = bidders + items) and the final phase runs at ε = 1, which
//! makes the result exactly optimal.
//!
//! [`exhaustive`] is a subset-DP reference solver for small instances.

use std::collections::VecDeque;

/// Benefits as adjacency lists: `rows[bidder]` holds `(item, benefit)` pairs.
/// Missing pairs are forbidden; non-positive benefits are ignored since
/// leaving both sides unassigned is never worse.
#[derive(Debug, Clone, Default)]
pub struct SparseBenefits {
    pub n_items: usize,
    pub rows: Vec<Vec<(usize, i64)>>,
}

impl SparseBenefits {
    pub fn new(n_bidders: usize, n_items: usize) -> Self {
        SparseBenefits {
            n_items,
            rows: vec![Vec::new(); n_bidders],
        }
    }

    pub fn from_dense(m: &[Vec<i64>]) -> Self {
        let n_items = m.first().map_or(0, Vec::len);
        let rows = m
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &b)| b > 0)
                    .map(|(j, &b)| (j, b))
                    .collect()
            })
            .collect();
        SparseBenefits { n_items, rows }
    }

    pub fn push(&mut self, bidder: usize, item: usize, benefit: i64) {
        self.rows[bidder].push((item, benefit));
    }

    pub fn n_bidders(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// Item won by each bidder.
    pub bidder_item: Vec<Option<usize>>,
    pub total: i64,
}

impl Assignment {
    pub fn item_bidder(&self, n_items: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n_items];
        for (i, j) in self.bidder_item.iter().enumerate() {
            if let Some(j) = *j {
                out[j] = Some(i);
            }
        }
        out
    }
}

/// Solves `max Σ b(i, a(i))` over one-to-one partial assignments.
pub fn auction(benefits: &SparseBenefits) -> Assignment {
    let m = benefits.n_bidders();
    let n = benefits.n_items;
    let size = m + n;
    let scale = size as i64 + 1;

    // square embedding: bidders [0, m) real, [m, m + n) dummies (one per item)
    // items [0, n) real, [n, n + m) dummies (one per bidder)
    let mut adj: Vec<Vec<(usize, i64)>> = Vec::with_capacity(size);
    let mut item_neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut max_b = 0i64;
    for (i, row) in benefits.rows.iter().enumerate() {
        let mut edges: Vec<(usize, i64)> = Vec::with_capacity(row.len() + 1);
        for &(j, b) in row {
            assert!(j < n, "item index {j} out of range");
            if b > 0 {
                let sb = b.checked_mul(scale).expect("benefit overflow");
                max_b = max_b.max(sb);
                edges.push((j, sb));
                item_neighbours[j].push(i);
            }
        }
        edges.push((n + i, 0));
        adj.push(edges);
    }
    for (j, neighbours) in item_neighbours.iter().enumerate() {
        let mut edges = Vec::with_capacity(neighbours.len() + 1);
        edges.push((j, 0));
        edges.extend(neighbours.iter().map(|&i| (n + i, 0)));
        adj.push(edges);
    }

    let mut price = vec![0i64; size];
    let mut owner: Vec<Option<usize>> = vec![None; size];
    let mut won: Vec<Option<usize>> = vec![None; size];
    let single_gap = max_b + 1;

    let mut eps = (max_b / 4).max(1);
    loop {
        owner.iter_mut().for_each(|o| *o = None);
        won.iter_mut().for_each(|w| *w = None);
        let mut queue: VecDeque<usize> = (0..size).collect();
        while let Some(i) = queue.pop_front() {
            let mut best: Option<(usize, i64)> = None;
            let mut second = i64::MIN;
            for &(j, b) in &adj[i] {
                let v = b - price[j];
                match best {
                    Some((_, bv)) if v > bv => {
                        second = bv;
                        best = Some((j, v));
                    }
                    Some(_) => second = second.max(v),
                    None => best = Some((j, v)),
                }
            }
            let (j, v1) = best.expect("every bidder has at least one edge");
            let v2 = if second == i64::MIN { v1 - single_gap } else { second };
            price[j] += v1 - v2 + eps;
            if let Some(prev) = owner[j].replace(i) {
                won[prev] = None;
                queue.push_back(prev);
            }
            won[i] = Some(j);
        }
        if eps == 1 {
            break;
        }
        eps = (eps / 4).max(1);
    }

    let mut total = 0;
    let bidder_item = (0..m)
        .map(|i| {
            let j = won[i].filter(|&j| j < n)?;
            let b = benefits.rows[i]
                .iter()
                .filter(|&&(jj, _)| jj == j)
                .map(|&(_, b)| b)
                .max()?;
            total += b;
            Some(j)
        })
        .collect();
    Assignment { bidder_item, total }
}

/// Dense convenience wrapper around [`auction`]; rows are bidders.
pub fn auction_dense(m: &[Vec<i64>]) -> Assignment {
    auction(&SparseBenefits::from_dense(m))
}

/// Exact reference solver by dynamic programming over subsets of items.
/// Intended for instances with at most ~16 items.
pub fn exhaustive(m: &[Vec<i64>]) -> Assignment {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    assert!(cols <= 20, "exhaustive solver limited to 20 items");
    let states = 1usize << cols;
    // best[r][mask]: best value using rows r.. with `mask` items already taken
    let mut best = vec![vec![0i64; states]; rows + 1];
    for r in (0..rows).rev() {
        for mask in 0..states {
            let mut v = best[r + 1][mask];
            for (j, &b) in m[r].iter().enumerate() {
                if b > 0 && mask & (1 << j) == 0 {
                    v = v.max(b + best[r + 1][mask | (1 << j)]);
                }
            }
            best[r][mask] = v;
        }
    }
    let mut mask = 0usize;
    let mut bidder_item = Vec::with_capacity(rows);
    for r in 0..rows {
        let target = best[r][mask];
        let pick = if best[r + 1][mask] == target {
            None
        } else {
            (0..cols).find(|&j| {
                let b = m[r][j];
                b > 0 && mask & (1 << j) == 0 && b + best[r + 1][mask | (1 << j)] == target
            })
        };
        if let Some(j) = pick {
            mask |= 1 << j;
        }
        bidder_item.push(pick);
    }
    Assignment {
        bidder_item,
        total: best[0][0],
    }
}
