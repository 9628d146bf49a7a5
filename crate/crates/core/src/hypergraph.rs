//! Affinity modeling and multiscale hyperedge forming.
//!
//! Everything here runs on detached host values; the discrete selection has
//! no gradient.

use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of candidate subsets the exhaustive solver will scan.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

/// Rows of `q` with a smaller norm are treated as zero vectors.
pub const AFFINITY_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub a: Array2<f64>,
    /// Evolving step the matrix belongs to.
    pub step: usize,
    /// Rows that fell below [`AFFINITY_EPS`].
    pub degenerate_rows: usize,
}

impl AffinityMatrix {
    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.a.nrows() == 0
    }
}

/// Cosine affinity of the rows of `q`, smoothed with `prev` when given:
/// `A <- (A + alpha * prev) / (1 + alpha)`.
pub fn affinity(q: ArrayView2<'_, f64>, prev: Option<&AffinityMatrix>, alpha: f64) -> Result<AffinityMatrix> {
    let n = q.nrows();
    let norms: Vec<f64> = q.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let degenerate_rows = norms.iter().filter(|&&v| v < AFFINITY_EPS).count();
    if degenerate_rows > 0 {
        log::debug!("{degenerate_rows} near-zero embedding rows in affinity");
    }
    let mut a = Array2::<f64>::eye(n);
    for i in 0..n {
        for j in i + 1..n {
            let v = if norms[i] < AFFINITY_EPS || norms[j] < AFFINITY_EPS {
                0.0
            } else {
                (q.row(i).dot(&q.row(j)) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    let step = match prev {
        Some(p) => {
            if p.len() != n {
                return Err(Error::Shape(format!(
                    "previous affinity is {}x{}, current has {n} agents",
                    p.len(),
                    p.len()
                )));
            }
            a = (&a + &(&p.a * alpha)) / (1.0 + alpha);
            p.step + 1
        }
        None => 0,
    };
    Ok(AffinityMatrix {
        a,
        step,
        degenerate_rows,
    })
}

/// Pairwise incidence `N x (N * m0)`: column `j * m0 + m` joins node `j` and
/// its `m`-th most affine neighbor (ties to the lower index).
pub fn form_pairwise(a: ArrayView2<'_, f64>, m0: usize) -> Result<Array2<f64>> {
    let n = a.nrows();
    if m0 == 0 || m0 >= n {
        return Err(Error::InvalidArgument(format!(
            "pairwise degree must be in 1..={}, got {m0}",
            n.saturating_sub(1)
        )));
    }
    let mut h = Array2::<f64>::zeros((n, n * m0));
    for j in 0..n {
        for (m, &k) in ranked_neighbors(a, j, false).iter().take(m0).enumerate() {
            h[[j, j * m0 + m]] = 1.0;
            h[[k, j * m0 + m]] = 1.0;
        }
    }
    Ok(h)
}

/// Nodes other than `i`, by decreasing affinity (or magnitude) to `i`; stable
/// so ties keep index order.
fn ranked_neighbors(a: ArrayView2<'_, f64>, i: usize, magnitude: bool) -> Vec<usize> {
    let key = |j: usize| {
        let v = a[[i, j]];
        if magnitude {
            v.abs()
        } else {
            v
        }
    };
    let mut others: Vec<usize> = (0..a.nrows()).filter(|&j| j != i).collect();
    others.sort_by(|&x, &y| key(y).total_cmp(&key(x)));
    others
}

/// `sum_{a, b in members} |A_ab|`, diagonal included.
pub fn objective(a: ArrayView2<'_, f64>, members: &[usize]) -> f64 {
    let mut s = 0.0;
    for &x in members {
        for &y in members {
            s += a[[x, y]].abs();
        }
    }
    s
}

fn check_group_args(n: usize, m: usize, i: usize) -> Result<()> {
    if i >= n {
        return Err(Error::InvalidArgument(format!("node {i} out of range for {n} agents")));
    }
    if m < 2 || m > n {
        return Err(Error::InvalidArgument(format!(
            "group size must be in 2..={n}, got {m}"
        )));
    }
    Ok(())
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for j in 0..k {
        c = c * (n - j) as u128 / (j + 1) as u128;
    }
    c
}

/// Size-`m` group containing `i` of maximal [`objective`], found by scanning
/// every candidate. Ties go to the lexicographically smallest sorted member
/// list.
pub fn form_group_exhaustive(a: ArrayView2<'_, f64>, m: usize, i: usize) -> Result<Vec<usize>> {
    form_group_exhaustive_with_budget(a, m, i, ENUMERATION_BUDGET)
}

pub fn form_group_exhaustive_with_budget(
    a: ArrayView2<'_, f64>,
    m: usize,
    i: usize,
    budget: u128,
) -> Result<Vec<usize>> {
    let n = a.nrows();
    check_group_args(n, m, i)?;
    let count = binomial(n - 1, m - 1);
    if count > budget {
        return Err(Error::BudgetExceeded {
            n: n - 1,
            k: m - 1,
            count,
            budget,
        });
    }
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let k = m - 1;
    let mut pick: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut members: Vec<usize> = pick.iter().map(|&p| others[p]).collect();
        members.push(i);
        members.sort_unstable();
        let score = objective(a, &members);
        let better = match &best {
            None => true,
            Some((b, bm)) => score > *b || (score == *b && members < *bm),
        };
        if better {
            best = Some((score, members));
        }
        // next k-combination of 0..others.len() in lexicographic order
        let Some(pos) = (0..k).rev().find(|&p| pick[p] < others.len() - k + p) else {
            break;
        };
        pick[pos] += 1;
        for p in pos + 1..k {
            pick[p] = pick[p - 1] + 1;
        }
    }
    Ok(best.expect("at least one candidate").1)
}

/// Grows `{i}` by repeatedly adding the remaining node of largest `|A|` to
/// `i` (ties to the lower index).
pub fn form_group_greedy(a: ArrayView2<'_, f64>, m: usize, i: usize) -> Result<Vec<usize>> {
    check_group_args(a.nrows(), m, i)?;
    let mut members: Vec<usize> = ranked_neighbors(a, i, true).into_iter().take(m - 1).collect();
    members.push(i);
    members.sort_unstable();
    Ok(members)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMode {
    Exhaustive,
    Greedy,
    #[default]
    Auto,
}

impl FromStr for SolverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(SolverMode::Exhaustive),
            "greedy" => Ok(SolverMode::Greedy),
            "auto" => Ok(SolverMode::Auto),
            other => Err(Error::InvalidArgument(format!("unknown solver mode `{other}`"))),
        }
    }
}

pub fn form_group(a: ArrayView2<'_, f64>, m: usize, i: usize, mode: SolverMode) -> Result<Vec<usize>> {
    match mode {
        SolverMode::Exhaustive => form_group_exhaustive(a, m, i),
        SolverMode::Greedy => form_group_greedy(a, m, i),
        SolverMode::Auto => {
            if binomial(a.nrows().saturating_sub(1), m.saturating_sub(1)) <= ENUMERATION_BUDGET {
                form_group_exhaustive(a, m, i)
            } else {
                form_group_greedy(a, m, i)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleHypergraph {
    /// `N x (N * m0)` pairwise incidence.
    pub h0: Array2<f64>,
    /// One `N x N` incidence per group scale; column `i` is node `i`'s group.
    pub hs: Vec<Array2<f64>>,
    pub m0: usize,
    pub scale_sizes: Vec<usize>,
    /// `groups[s][i]`: sorted members of hyperedge `i` at group scale `s`.
    pub groups: Vec<Vec<Vec<usize>>>,
}

impl MultiscaleHypergraph {
    pub fn num_agents(&self) -> usize {
        self.h0.nrows()
    }

    /// Incidence of scale `s`, where 0 is the pairwise scale.
    pub fn incidence(&self, s: usize) -> &Array2<f64> {
        if s == 0 {
            &self.h0
        } else {
            &self.hs[s - 1]
        }
    }

    pub fn num_scales(&self) -> usize {
        1 + self.hs.len()
    }

    /// Members of hyperedge `e` at scale `s`.
    pub fn members(&self, s: usize, e: usize) -> Vec<usize> {
        if s == 0 {
            let h = &self.h0;
            (0..h.nrows()).filter(|&r| h[[r, e]] != 0.0).collect()
        } else {
            self.groups[s - 1][e].clone()
        }
    }
}

pub fn validate_scales(n: usize, m0: usize, scale_sizes: &[usize]) -> Result<()> {
    if m0 == 0 || m0 >= n {
        return Err(Error::InvalidArgument(format!(
            "pairwise degree {m0} invalid for {n} agents"
        )));
    }
    if scale_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "scale sizes must be strictly increasing, got {scale_sizes:?}"
        )));
    }
    if let Some(&m) = scale_sizes.iter().find(|&&m| m < 2 || m > n) {
        return Err(Error::InvalidArgument(format!(
            "scale size {m} invalid for {n} agents"
        )));
    }
    Ok(())
}

pub fn infer_topology(
    a: ArrayView2<'_, f64>,
    m0: usize,
    scale_sizes: &[usize],
    mode: SolverMode,
) -> Result<MultiscaleHypergraph> {
    let n = a.nrows();
    validate_scales(n, m0, scale_sizes)?;
    let h0 = form_pairwise(a, m0)?;
    let mut hs = Vec::with_capacity(scale_sizes.len());
    let mut groups = Vec::with_capacity(scale_sizes.len());
    for &m in scale_sizes {
        let mut h = Array2::<f64>::zeros((n, n));
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let members = form_group(a, m, i, mode)?;
            for &j in &members {
                h[[j, i]] = 1.0;
            }
            g.push(members);
        }
        hs.push(h);
        groups.push(g);
    }
    Ok(MultiscaleHypergraph {
        h0,
        hs,
        m0,
        scale_sizes: scale_sizes.to_vec(),
        groups,
    })
}

/// JSON form of one evolving step's affinity and incidence matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyDump {
    pub step: usize,
    pub affinity: Vec<Vec<f64>>,
    /// Scale 0 first.
    pub incidence: Vec<Vec<Vec<u8>>>,
}

pub(crate) fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl TopologyDump {
    pub fn new(a: &AffinityMatrix, h: &MultiscaleHypergraph) -> Self {
        let bin = |m: &Array2<f64>| -> Vec<Vec<u8>> {
            m.rows()
                .into_iter()
                .map(|r| r.iter().map(|&v| u8::from(v != 0.0)).collect())
                .collect()
        };
        Self {
            step: a.step,
            affinity: rows(&a.a),
            incidence: (0..h.num_scales()).map(|s| bin(h.incidence(s))).collect(),
        }
    }
}
