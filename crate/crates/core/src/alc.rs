//! Reduction-in-variance (ALC) scoring of candidate design points.
//!
//! For a local state of size `j`, a reference location `x` and a candidate
//! `x'`, the score is `v_j(x) - v_{j+1}(x)` after `x'` joins the design:
//!
//! ```text
//! s     = 1 + η - k_j(x')ᵀ K⁻¹ k_j(x')        (Schur complement, m⁻¹)
//! g     = -K⁻¹ k_j(x') / s
//! Δ(x') = s (k_j(x)ᵀ g)² + 2 (k_j(x)ᵀ g) K(x', x) + K(x', x)² / s
//! ```
//!
//! Two evaluators are provided. [`alc_scores_serial`] is the straightforward
//! per-candidate loop. [`alc_scores_batch`] runs a staged, lane-tiled kernel
//! over candidates in parallel, with scratch confined to three `j`-vectors
//! and one `p`-vector per work item.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::error::{LagpError, Result};
use crate::gp::{LocalState, SCHUR_TOLERANCE};
use crate::linalg::sq_dist;

/// Largest number of candidates handed to one batch launch.
pub const DEFAULT_CHUNK: usize = 60_000;

/// Candidate rows `X_N \ X_j(x)` with their global row numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    rows: Vec<f64>,
    dim: usize,
    global_indices: Vec<usize>,
}

impl CandidateSet {
    pub fn new(rows: Vec<f64>, dim: usize, global_indices: Vec<usize>) -> Result<Self> {
        if global_indices.is_empty() {
            return Err(LagpError::Parameter("candidate set is empty".into()));
        }
        if dim == 0 || rows.len() != global_indices.len() * dim {
            return Err(LagpError::Dimension {
                expected: global_indices.len() * dim,
                got: rows.len(),
            });
        }
        let mut seen = HashSet::with_capacity(global_indices.len());
        if let Some(&dup) = global_indices.iter().find(|&&i| !seen.insert(i)) {
            return Err(LagpError::Parameter(format!("candidate {dup} listed twice")));
        }
        Ok(Self {
            rows,
            dim,
            global_indices,
        })
    }

    /// Rows of `design` at `indices`.
    pub fn from_design(design: &crate::Design, indices: &[usize]) -> Result<Self> {
        let sub = design.subset(indices);
        Self::new(sub.inputs().to_vec(), design.dim(), indices.to_vec())
    }

    pub fn len(&self) -> usize {
        self.global_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global_indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, b: usize) -> &[f64] {
        &self.rows[b * self.dim..(b + 1) * self.dim]
    }

    pub fn global_indices(&self) -> &[usize] {
        &self.global_indices
    }

    /// Drops candidate `b`, keeping the order of the rest.
    pub fn remove(&mut self, b: usize) -> usize {
        self.rows.drain(b * self.dim..(b + 1) * self.dim);
        self.global_indices.remove(b)
    }
}

/// Per-candidate reduction in variance. Excluded candidates hold `-∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlcScores {
    pub delta: Vec<f64>,
    /// Position of the largest score, lowest position on ties; `None` when
    /// every candidate is excluded.
    pub best: Option<usize>,
    pub normalized: bool,
}

/// Index of the maximum, ties to the lowest index, `-∞` entries skipped.
pub fn argmax(delta: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (b, &d) in delta.iter().enumerate() {
        if d == f64::NEG_INFINITY || d.is_nan() {
            continue;
        }
        match best {
            Some((_, v)) if d <= v => {}
            _ => best = Some((b, d)),
        }
    }
    best.map(|(b, _)| b)
}

/// Global design row of the best candidate.
pub fn select_next(scores: &AlcScores, cands: &CandidateSet) -> Result<usize> {
    scores
        .best
        .map(|b| cands.global_indices[b])
        .ok_or(LagpError::ExhaustedCandidates)
}

fn validate(state: &LocalState, x_ref: &[f64], cands: &CandidateSet, normalize: bool) -> Result<()> {
    if x_ref.len() != state.dim() {
        return Err(LagpError::Dimension {
            expected: state.dim(),
            got: x_ref.len(),
        });
    }
    if cands.dim() != state.dim() {
        return Err(LagpError::Dimension {
            expected: state.dim(),
            got: cands.dim(),
        });
    }
    if normalize && state.size() <= 2 {
        return Err(LagpError::Parameter(format!(
            "normalization needs j > 2, local design has {}",
            state.size()
        )));
    }
    let chosen: HashSet<usize> = state.chosen_indices().iter().copied().collect();
    if let Some(&clash) = cands.global_indices().iter().find(|i| chosen.contains(i)) {
        return Err(LagpError::Parameter(format!(
            "candidate {clash} is already in the local design"
        )));
    }
    Ok(())
}

/// `hᵀGh/m⁻¹ + 2 hᵀg K(x_b, x) + K(x_b, x)² m` with `m = 1/schur`.
///
/// The exact value is `(K(x_b, x) + schur hᵀg)² / schur >= 0`; the expanded
/// sum cancels when `schur` is small, so roundoff below zero is clipped.
#[inline]
fn assemble(first: f64, hg: f64, kappa: f64, schur: f64) -> f64 {
    (first + 2.0 * hg * kappa + kappa * kappa / schur).max(0.0)
}

fn normalizer(state: &LocalState, normalize: bool) -> f64 {
    if normalize {
        state.psi() / (state.size() as f64 - 2.0)
    } else {
        1.0
    }
}

/// Reference evaluator: one candidate at a time with plain dot products.
pub fn alc_scores_serial(
    state: &LocalState,
    x_ref: &[f64],
    cands: &CandidateSet,
    normalize: bool,
) -> Result<AlcScores> {
    validate(state, x_ref, cands, normalize)?;
    let j = state.size();
    let eta = state.hyper().eta();
    let kinv = state.k_inv();
    let scale = normalizer(state, normalize);

    let mut h = vec![0.0; j];
    state.cross_correlations(x_ref, &mut h);
    let mut kb = vec![0.0; j];
    let mut w = vec![0.0; j];
    let mut hg = vec![0.0; j];
    let mut work = vec![0.0; j];

    // Every sum below uses the same pairwise order as the batch kernel. The
    // assembled delta cancels heavily when the Schur complement is small, so
    // a different summation order would show up far above roundoff.
    let delta: Vec<f64> = (0..cands.len())
        .map(|b| {
            let xb = cands.row(b);
            state.cross_correlations(xb, &mut kb);
            // K⁻¹ is exactly symmetric, so accumulating its rows gives K⁻¹k
            w.fill(0.0);
            for (i, &ki) in kb.iter().enumerate() {
                for (wt, c) in w.iter_mut().zip(&kinv[i * j..(i + 1) * j]) {
                    *wt += ki * c;
                }
            }
            for t in 0..j {
                work[t] = w[t] * kb[t];
            }
            let schur = 1.0 + eta - tree_reduce_in_place(&mut work);
            if !(schur > SCHUR_TOLERANCE) {
                return f64::NEG_INFINITY;
            }
            // h_t g_t with g = -K⁻¹k / schur
            for t in 0..j {
                hg[t] = h[t] * (-w[t] / schur);
            }
            work.copy_from_slice(&hg);
            let c = tree_reduce_in_place(&mut work) * schur;
            // hᵀ (g gᵀ schur) h = Σ_t h_t g_t c
            for t in 0..j {
                work[t] = hg[t] * c;
            }
            let first = tree_reduce_in_place(&mut work);
            let hg_sum = tree_reduce_in_place(&mut hg);
            let kappa = state.hyper().corr(xb, x_ref);
            assemble(first, hg_sum, kappa, schur) * scale
        })
        .collect();

    let best = argmax(&delta);
    Ok(AlcScores {
        delta,
        best,
        normalized: normalize,
    })
}

/// Smallest power of two `>= n` (`n >= 1`).
fn nearest_power_of_two(n: usize) -> usize {
    n.next_power_of_two()
}

/// Tree reduction of one array in place, same shape as [`fused_dual_reduce`].
fn tree_reduce_in_place(data: &mut [f64]) -> f64 {
    let n = data.len();
    let half = nearest_power_of_two(n) >> 1;
    for t in 0..half {
        if t + half < n {
            data[t] += data[t + half];
        }
    }
    let mut s = half >> 1;
    while s > 0 {
        for t in 0..s {
            data[t] += data[t + s];
        }
        s >>= 1;
    }
    data[0]
}

/// Both sums of two equal-length arrays in one pass, destroying the inputs.
///
/// The arrays are padded to the next power of two by a first fold that adds
/// the upper half onto the lower half; the remaining power-of-two tree then
/// gives the lower quarter of lanes to `a` and the upper quarter to `b`, so
/// no lane idles while the two reductions proceed together.
pub fn fused_dual_reduce_in_place(a: &mut [f64], b: &mut [f64]) -> (f64, f64) {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let half = nearest_power_of_two(n) >> 1;
    for t in 0..half {
        let other = t + half;
        if other < n {
            a[t] += a[other];
            b[t] += b[other];
        }
    }
    let quarter = half >> 1;
    let mut s = quarter;
    while s > 0 {
        for lane in 0..half {
            if lane < quarter {
                if lane < s {
                    a[lane] += a[lane + s];
                }
            } else {
                let t = lane - quarter;
                if t < s {
                    b[t] += b[t + s];
                }
            }
        }
        s >>= 1;
    }
    (a[0], b[0])
}

/// `(Σ v1, Σ v2)` by the fused logarithmic reduction.
pub fn fused_dual_reduce(v1: &[f64], v2: &[f64]) -> Result<(f64, f64)> {
    if v1.len() != v2.len() {
        return Err(LagpError::Dimension {
            expected: v1.len(),
            got: v2.len(),
        });
    }
    if v1.is_empty() {
        return Err(LagpError::Parameter("cannot reduce empty vectors".into()));
    }
    let mut a = v1.to_vec();
    let mut b = v2.to_vec();
    Ok(fused_dual_reduce_in_place(&mut a, &mut b))
}

/// Knobs for [`alc_scores_batch_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchConfig {
    /// Width of the lane tiles used inside a work item; `None` means `j`.
    pub lane_width: Option<usize>,
    /// Candidates per launch; larger sets are processed chunk by chunk.
    pub chunk: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            lane_width: None,
            chunk: DEFAULT_CHUNK,
        }
    }
}

/// What a batch evaluation actually used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchStats {
    pub work_items: usize,
    pub launches: usize,
    pub lane_width: usize,
    /// Scratch `f64`s held by a single work item.
    pub scratch_per_item: usize,
}

/// Working memory of one work item: the staged candidate row and three
/// `j`-vectors that are reused across stages.
struct Scratch {
    xb: Vec<f64>,
    k: Vec<f64>,
    g: Vec<f64>,
    l: Vec<f64>,
}

impl Scratch {
    fn new(j: usize, p: usize) -> Self {
        Self {
            xb: vec![0.0; p],
            k: vec![0.0; j],
            g: vec![0.0; j],
            l: vec![0.0; j],
        }
    }

    fn len(&self) -> usize {
        self.xb.len() + self.k.len() + self.g.len() + self.l.len()
    }
}

struct Kernel<'a> {
    sub_design: &'a [f64],
    kinv: &'a [f64],
    h: &'a [f64],
    x_ref: &'a [f64],
    j: usize,
    p: usize,
    theta: f64,
    eta: f64,
    lane: usize,
    scale: f64,
}

impl Kernel<'_> {
    fn score(&self, candidate: &[f64], s: &mut Scratch) -> f64 {
        let (j, p, lane) = (self.j, self.p, self.lane);

        // 1. stage the candidate row
        s.xb.copy_from_slice(candidate);

        // 2. k[t] = K(x_b, X_t)
        for t0 in (0..j).step_by(lane) {
            for t in t0..(t0 + lane).min(j) {
                let row = &self.sub_design[t * p..(t + 1) * p];
                s.k[t] = (-sq_dist(&s.xb, row) / self.theta).exp();
            }
        }

        // 3. g[t] = (K⁻¹ k)_t, walking K⁻¹ one row at a time so each lane tile
        //    reads contiguous memory; l[t] = g[t] k[t]
        for t0 in (0..j).step_by(lane) {
            let t1 = (t0 + lane).min(j);
            s.g[t0..t1].fill(0.0);
            for i in 0..j {
                let ki = s.k[i];
                let col = &self.kinv[i * j + t0..i * j + t1];
                for (gt, c) in s.g[t0..t1].iter_mut().zip(col) {
                    *gt += ki * c;
                }
            }
            for t in t0..t1 {
                s.l[t] = s.g[t] * s.k[t];
            }
        }

        // 4. k_bᵀ K⁻¹ k_b
        let quad = tree_reduce_in_place(&mut s.l);

        // 5. Schur complement, finish g, and K(x_b, x)
        let schur = 1.0 + self.eta - quad;
        if !(schur > SCHUR_TOLERANCE) {
            return f64::NEG_INFINITY;
        }
        for gt in s.g.iter_mut() {
            *gt = -*gt / schur;
        }
        let kappa = (-sq_dist(&s.xb, self.x_ref) / self.theta).exp();

        // 6. k[t] = h[t] g[t], l[t] = h[t] (G s h)[t]. The inner sum of
        //    (G s h)[t] = g[t] s Σ_i g[i] h[i] is the same for every lane, so
        //    it is reduced once (in l) and broadcast.
        for t0 in (0..j).step_by(lane) {
            for t in t0..(t0 + lane).min(j) {
                s.k[t] = self.h[t] * s.g[t];
                s.l[t] = s.k[t];
            }
        }
        let c = tree_reduce_in_place(&mut s.l) * schur;
        for t0 in (0..j).step_by(lane) {
            for t in t0..(t0 + lane).min(j) {
                s.l[t] = s.k[t] * c;
            }
        }

        // 7. both dot products in one reduction pass
        let (first, hg) = fused_dual_reduce_in_place(&mut s.l, &mut s.k);

        // 8. assemble, 9. normalize
        assemble(first, hg, kappa, schur) * self.scale
    }
}

/// Batch evaluator with the default configuration (`lane_width` = `j`).
pub fn alc_scores_batch(
    state: &LocalState,
    x_ref: &[f64],
    cands: &CandidateSet,
    normalize: bool,
    lane_width: usize,
) -> Result<AlcScores> {
    let config = BatchConfig {
        lane_width: Some(lane_width),
        ..BatchConfig::default()
    };
    alc_scores_batch_with(state, x_ref, cands, normalize, &config).map(|(s, _)| s)
}

/// Data-parallel evaluator. Each candidate is one work item; work items run
/// on the current rayon pool and their results are written in candidate order.
pub fn alc_scores_batch_with(
    state: &LocalState,
    x_ref: &[f64],
    cands: &CandidateSet,
    normalize: bool,
    config: &BatchConfig,
) -> Result<(AlcScores, BatchStats)> {
    validate(state, x_ref, cands, normalize)?;
    let j = state.size();
    let p = state.dim();
    let lane = config.lane_width.unwrap_or(j);
    if lane == 0 {
        return Err(LagpError::Parameter("lane width must be >= 1".into()));
    }
    if config.chunk == 0 {
        return Err(LagpError::Parameter("chunk size must be >= 1".into()));
    }

    let mut h = vec![0.0; j];
    state.cross_correlations(x_ref, &mut h);
    let kernel = Kernel {
        sub_design: state.sub_design(),
        kinv: state.k_inv(),
        h: &h,
        x_ref,
        j,
        p,
        theta: state.hyper().theta(),
        eta: state.hyper().eta(),
        lane,
        scale: normalizer(state, normalize),
    };

    let n = cands.len();
    let mut delta = vec![0.0; n];
    let mut launches = 0;
    // small launches are not worth splitting across threads
    let min_len = (4096 / (j * j + 1)).max(1);
    for (c, out) in delta.chunks_mut(config.chunk).enumerate() {
        launches += 1;
        let offset = c * config.chunk;
        out.par_iter_mut()
            .with_min_len(min_len)
            .enumerate()
            .for_each_init(
                || Scratch::new(j, p),
                |scratch, (b, d)| *d = kernel.score(cands.row(offset + b), scratch),
            );
    }

    let best = argmax(&delta);
    let stats = BatchStats {
        work_items: n,
        launches,
        lane_width: lane,
        scratch_per_item: Scratch::new(j, p).len(),
    };
    Ok((
        AlcScores {
            delta,
            best,
            normalized: normalize,
        },
        stats,
    ))
}

/// Which evaluator a local design search uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlcBackend {
    #[default]
    Serial,
    Batch,
}

impl AlcBackend {
    pub fn scores(
        self,
        state: &LocalState,
        x_ref: &[f64],
        cands: &CandidateSet,
        normalize: bool,
    ) -> Result<AlcScores> {
        match self {
            AlcBackend::Serial => alc_scores_serial(state, x_ref, cands, normalize),
            AlcBackend::Batch => {
                alc_scores_batch_with(state, x_ref, cands, normalize, &BatchConfig::default())
                    .map(|(s, _)| s)
            }
        }
    }
}
