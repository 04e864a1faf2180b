//! Seeded synthetic landmark data and brute-force reference solvers.
//!
//! The reference solvers here share no code with the modules they are
//! checked against: covariances are recomputed two-pass, canonical
//! correlations are found by searching over projection angles, and format
//! search enumerates every subset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{Dataset, LandmarkSet, Point};
use crate::error::{Error, Result};
use crate::matrix::{AffinityMatrix, SquareMatrix};

/// Linear latent-factor model for landmark coordinates.
///
/// Each image draws `latent_dim` independent 2-D standard-normal factors.
/// Landmark `j` is `offset[j] + Σ_k L[j][k] · z_k + noise`, where each
/// `L[j][k]` is a 2×2 block. `loading` stores the `(2M) × (2·latent_dim)`
/// matrix row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModelSpec {
    pub m_size: usize,
    pub latent_dim: usize,
    pub loading: Vec<f64>,
    /// Mean shape; empty means all zeros.
    pub offsets: Vec<Point>,
    pub noise_sigma: f64,
    pub n: usize,
    pub seed: u64,
}

impl LatentModelSpec {
    /// Every landmark loads on every factor through a random well-conditioned
    /// 2×2 block: a rotation, a scale in [0.5, 2) and an anisotropic stretch
    /// in [0.5, 1).
    pub fn random(m_size: usize, latent_dim: usize, noise_sigma: f64, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_10ad);
        let cols = 2 * latent_dim;
        let mut loading = vec![0.0; 2 * m_size * cols];
        for j in 0..m_size {
            for k in 0..latent_dim {
                let block = conditioned_block(&mut rng);
                for r in 0..2 {
                    for c in 0..2 {
                        loading[(2 * j + r) * cols + 2 * k + c] = block[r][c];
                    }
                }
            }
        }
        Self {
            m_size,
            latent_dim,
            loading,
            offsets: Vec::new(),
            noise_sigma,
            n,
            seed,
        }
    }

    /// Landmark `j` loads only on factor `group_of[j]`.
    pub fn grouped(group_of: &[usize], noise_sigma: f64, n: usize, seed: u64) -> Self {
        let m_size = group_of.len();
        let latent_dim = group_of.iter().copied().max().map_or(1, |g| g + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6120_0b5e);
        let cols = 2 * latent_dim;
        let mut loading = vec![0.0; 2 * m_size * cols];
        for (j, &g) in group_of.iter().enumerate() {
            for r in 0..2 {
                for c in 0..2 {
                    loading[(2 * j + r) * cols + 2 * g + c] = normal(&mut rng);
                }
            }
        }
        Self {
            m_size,
            latent_dim,
            loading,
            offsets: Vec::new(),
            noise_sigma,
            n,
            seed,
        }
    }

    /// A face-like model: a ring-shaped mean shape split into `blocks`
    /// contiguous components, with two global factors shared by all
    /// landmarks and one factor per component.
    pub fn face_like(m_size: usize, blocks: usize, noise_sigma: f64, n: usize, seed: u64) -> Self {
        let latent_dim = 2 + blocks;
        let cols = 2 * latent_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xface);
        let mut loading = vec![0.0; 2 * m_size * cols];
        let mut offsets = Vec::with_capacity(m_size);
        for j in 0..m_size {
            let angle = std::f64::consts::TAU * j as f64 / m_size as f64;
            offsets.push([100.0 * angle.cos(), 120.0 * angle.sin()]);
            let block = j * blocks / m_size;
            for r in 0..2 {
                let row = (2 * j + r) * cols;
                for c in 0..4 {
                    loading[row + c] = 3.0 * normal(&mut rng);
                }
                for c in 0..2 {
                    loading[row + 4 + 2 * block + c] = 6.0 * normal(&mut rng);
                }
            }
        }
        Self {
            m_size,
            latent_dim,
            loading,
            offsets,
            noise_sigma,
            n,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(
                "latent_dim must be >= 1 and noise_sigma >= 0".into(),
            ));
        }
        if self.loading.len() != 4 * self.m_size * self.latent_dim {
            return Err(Error::DimensionMismatch(format!(
                "loading has {} entries, expected {}",
                self.loading.len(),
                4 * self.m_size * self.latent_dim
            )));
        }
        if !self.offsets.is_empty() && self.offsets.len() != self.m_size {
            return Err(Error::DimensionMismatch("offsets length differs from M".into()));
        }
        Ok(())
    }
}

fn conditioned_block(rng: &mut impl Rng) -> [[f64; 2]; 2] {
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let scale = rng.random_range(0.5..2.0);
    let stretch = rng.random_range(0.5..1.0);
    let (s, c) = angle.sin_cos();
    [[scale * c, -scale * stretch * s], [scale * s, scale * stretch * c]]
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Samples a dataset from the model; a pure function of the spec.
pub fn generate(spec: &LatentModelSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cols = 2 * spec.latent_dim;
    let mut records = Vec::with_capacity(spec.n);
    let mut z = vec![0.0; cols];
    for k in 0..spec.n {
        for zi in z.iter_mut() {
            *zi = normal(&mut rng);
        }
        let points = (0..spec.m_size)
            .map(|j| {
                let mut p = spec.offsets.get(j).copied().unwrap_or([0.0, 0.0]);
                for (r, coord) in p.iter_mut().enumerate() {
                    let row = &spec.loading[(2 * j + r) * cols..(2 * j + r + 1) * cols];
                    *coord += row.iter().zip(&z).map(|(l, zi)| l * zi).sum::<f64>();
                    *coord += spec.noise_sigma * normal(&mut rng);
                }
                p
            })
            .collect();
        records.push(LandmarkSet::new(format!("synth_{k:05}"), points));
    }
    Dataset::new("synthetic", records)
}

/// Independent pair of random 2-D columns with a tunable linear coupling:
/// `v = mix · (W u) + noise`.
pub fn random_column_pair(n: usize, seed: u64) -> (Vec<Point>, Vec<Point>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mix: f64 = rng.random_range(0.0..2.0);
    let w = [
        [normal(&mut rng), normal(&mut rng)],
        [normal(&mut rng), normal(&mut rng)],
    ];
    let stretch = [rng.random_range(0.2..3.0), rng.random_range(0.2..3.0)];
    let shear: f64 = normal(&mut rng);
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        let a = normal(&mut rng) * stretch[0];
        let b = normal(&mut rng) * stretch[1] + shear * a;
        let p = [a, b];
        let q = [
            mix * (w[0][0] * p[0] + w[0][1] * p[1]) + normal(&mut rng),
            mix * (w[1][0] * p[0] + w[1][1] * p[1]) + normal(&mut rng),
        ];
        u.push(p);
        v.push(q);
    }
    (u, v)
}

/// Random symmetric matrix with unit diagonal and off-diagonal entries in
/// [0, 1). With `levels`, entries are quantized to `k / levels` to force
/// ties.
pub fn random_affinity(m_size: usize, seed: u64, levels: Option<u32>) -> AffinityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = SquareMatrix::zeros(m_size);
    for i in 0..m_size {
        m.set(i, i, 1.0);
        for j in i + 1..m_size {
            let v = match levels {
                Some(l) => rng.random_range(0..l) as f64 / l as f64,
                None => rng.random::<f64>(),
            };
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    AffinityMatrix::try_from_matrix(m).expect("generated matrix satisfies affinity invariants")
}

/// Textbook two-pass sample cross-covariance with `1/(N-1)`.
pub fn two_pass_covariance(u: &[Point], v: &[Point]) -> [[f64; 2]; 2] {
    let n = u.len() as f64;
    let mean = |c: &[Point], k: usize| c.iter().map(|p| p[k]).sum::<f64>() / n;
    let mu = [mean(u, 0), mean(u, 1)];
    let mv = [mean(v, 0), mean(v, 1)];
    let mut out = [[0.0; 2]; 2];
    for (a, row) in out.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            let s: f64 = u.iter().zip(v).map(|(p, q)| (p[a] - mu[a]) * (q[b] - mv[b])).sum();
            *cell = s / (n - 1.0);
        }
    }
    out
}

const ORACLE_GRID: usize = 10_000;

/// Both canonical correlations by direct search over projection angles.
///
/// For each angle `θ` the projection `x = (cos θ, sin θ)ᵀ u` is regressed on
/// `v` by least squares; the multiple correlation of that fit is the best
/// correlation reachable with that `a`. The maximum over a grid of
/// `θ ∈ [0, π)`, refined by golden-section search, is the first
/// coefficient. The second comes from the directions orthogonal to the
/// first pair under each side's covariance.
pub fn oracle_cca_coefficients(u: &[Point], v: &[Point]) -> Result<(f64, f64)> {
    if u.len() != v.len() || u.len() < 3 {
        return Err(Error::InvalidArgument("oracle needs equal columns with N >= 3".into()));
    }
    let suu = two_pass_covariance(u, u);
    let svv = two_pass_covariance(v, v);
    let suv = two_pass_covariance(u, v);
    let inv = |m: &[[f64; 2]; 2]| -> Option<[[f64; 2]; 2]> {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let half = (m[0][0] + m[1][1]) / 2.0;
        if !(half > 0.0) || det <= 1e-13 * half * half {
            return None;
        }
        Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
    };
    if inv(&suu).is_none() {
        return Err(Error::DegenerateColumn(crate::error::ColumnSide::U));
    }
    let svv_inv = inv(&svv).ok_or(Error::DegenerateColumn(crate::error::ColumnSide::V))?;

    let quad = |m: &[[f64; 2]; 2], x: [f64; 2], y: [f64; 2]| {
        x[0] * (m[0][0] * y[0] + m[0][1] * y[1]) + x[1] * (m[1][0] * y[0] + m[1][1] * y[1])
    };
    let dir = |t: f64| [t.cos(), t.sin()];
    // Cross-covariance of the projection with v, as a row vector.
    let cross = |a: [f64; 2]| [a[0] * suv[0][0] + a[1] * suv[1][0], a[0] * suv[0][1] + a[1] * suv[1][1]];
    let corr_at = |t: f64| {
        let a = dir(t);
        let c = cross(a);
        let explained = quad(&svv_inv, c, c);
        (explained / quad(&suu, a, a)).max(0.0).sqrt()
    };

    let step = std::f64::consts::PI / ORACLE_GRID as f64;
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for k in 0..ORACLE_GRID {
        let val = corr_at(k as f64 * step);
        if val > best_val {
            best_val = val;
            best = k;
        }
    }
    let (mut lo, mut hi) = ((best as f64 - 1.0) * step, (best as f64 + 1.0) * step);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (corr_at(x1), corr_at(x2));
    while hi - lo > 1e-12 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = corr_at(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = corr_at(x1);
        }
    }
    let theta = (lo + hi) / 2.0;
    let rho1 = corr_at(theta).max(best_val);

    let a1 = dir(theta);
    let c1 = cross(a1);
    let b1 = [
        svv_inv[0][0] * c1[0] + svv_inv[0][1] * c1[1],
        svv_inv[1][0] * c1[0] + svv_inv[1][1] * c1[1],
    ];
    let perp = |m: &[[f64; 2]; 2], x: [f64; 2]| {
        let w = [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]];
        [-w[1], w[0]]
    };
    let a2 = perp(&suu, a1);
    let b2 = perp(&svv, b1);
    let rho2 = (quad(&suv, a2, b2) / (quad(&suu, a2, a2) * quad(&svv, b2, b2)).sqrt()).abs();
    Ok((rho1.min(1.0), rho2.min(1.0)))
}

/// Mean of both canonical correlations, by angle search.
pub fn oracle_cca(u: &[Point], v: &[Point]) -> Result<f64> {
    let (r1, r2) = oracle_cca_coefficients(u, v)?;
    Ok((r1 + r2) / 2.0)
}

/// Maximum number of subsets [`oracle_search`] will enumerate.
pub const ORACLE_SEARCH_LIMIT: u64 = 1_000_000;

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Exhaustive maximin search: the optimal coverage value and the
/// lexicographically smallest subset attaining it.
pub fn oracle_search(affinity: &SquareMatrix, budget_m: usize) -> Result<(f64, Vec<usize>)> {
    let m = affinity.m_size();
    if budget_m == 0 || budget_m > m {
        return Err(Error::InvalidArgument(format!("budget {budget_m} outside [1, {m}]")));
    }
    if binomial(m, budget_m) > ORACLE_SEARCH_LIMIT {
        return Err(Error::CombinatorialBudget {
            m_size: m,
            budget: budget_m,
            limit: ORACLE_SEARCH_LIMIT,
        });
    }
    let mut subset: Vec<usize> = (0..budget_m).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut c = 1.0f64;
        for j in 0..m {
            if subset.contains(&j) {
                continue;
            }
            let mut cover = f64::NEG_INFINITY;
            for &i in &subset {
                cover = cover.max(affinity.get(i, j));
            }
            c = c.min(cover);
        }
        if best.as_ref().is_none_or(|(b, _)| c > *b) {
            best = Some((c, subset.clone()));
        }
        // Next combination in lexicographic order.
        let mut pos = budget_m;
        loop {
            if pos == 0 {
                return Ok(best.expect("at least one subset"));
            }
            pos -= 1;
            if subset[pos] < m - budget_m + pos {
                break;
            }
        }
        subset[pos] += 1;
        for k in pos + 1..budget_m {
            subset[k] = subset[k - 1] + 1;
        }
    }
}
