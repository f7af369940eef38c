//! Brownian paths on equidistant grids.
//!
//! A path stores the cumulative values `W(t_0), …, W(t_N)` (with
//! `W(t_0) = 0`) built by left-to-right summation of `N(0, k)` draws.
//! Increments are differences of consecutive values. Coarsening by a
//! factor is plain subsampling, so a coarse path and the fine path it came
//! from agree bit-exactly at every shared grid point, and coarsening twice
//! is bit-identical to coarsening once by the product factor.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{MsdeError, Result};
use crate::stats::{KahanSum, MeanEstimate};

/// Equidistant partition `t_n = n·k` of `[0, T]` with `k = T / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    horizon: f64,
    steps: usize,
}

impl Grid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(MsdeError::invalid(format!("horizon T = {horizon} must be positive")));
        }
        if steps == 0 {
            return Err(MsdeError::invalid("grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    /// Grid with step size `k`, which must divide `horizon` up to rounding.
    pub fn with_step(horizon: f64, k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(MsdeError::invalid(format!("step size k = {k} must be positive")));
        }
        let n = (horizon / k).round();
        if n < 1.0 || ((n * k - horizon) / horizon).abs() > 1e-9 {
            return Err(MsdeError::invalid(format!(
                "step size {k} does not divide the horizon {horizon}"
            )));
        }
        Self::new(horizon, n as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.step_size()
        }
    }

    /// Index `n ≥ 1` of the cell `(t_{n−1}, t_n]` containing `t > 0`, and the
    /// local coordinate `(t − t_{n−1}) / k ∈ (0, 1]`.
    pub(crate) fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(MsdeError::invalid(format!(
                "time {t} outside [0, {}]",
                self.horizon
            )));
        }
        let k = self.step_size();
        let mut n = (t / k).ceil() as usize;
        n = n.clamp(1, self.steps);
        let theta = ((t - self.time(n - 1)) / k).clamp(0.0, 1.0);
        Ok((n, theta))
    }

    pub fn coarsen(&self, factor: usize) -> Result<Grid> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(MsdeError::invalid(format!(
                "factor {factor} does not divide N = {}",
                self.steps
            )));
        }
        Grid::new(self.horizon, self.steps / factor)
    }
}

/// RNG stream for the Wiener increments of one path.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// RNG stream for the initial value of one path, disjoint from
/// [`path_rng`] for the same `(seed, path_index)`.
pub fn initial_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(path_index);
    rng
}

/// An `m`-dimensional Wiener path sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: Grid,
    noise_dim: usize,
    /// Row-major `[(N + 1) × m]` values of `W(t_n)`.
    values: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
}

impl BrownianPath {
    /// Deterministic in `(seed, path_index, grid, m)`; distinct path indices
    /// use distinct ChaCha streams.
    pub fn sample(seed: u64, path_index: u64, grid: Grid, noise_dim: usize) -> Result<Self> {
        if noise_dim == 0 {
            return Err(MsdeError::invalid("noise dimension must be positive"));
        }
        let mut rng = path_rng(seed, path_index);
        let sd = grid.step_size().sqrt();
        let n = grid.steps();
        let mut values = vec![0.0; (n + 1) * noise_dim];
        for step in 1..=n {
            for c in 0..noise_dim {
                let z: f64 = rng.sample(StandardNormal);
                values[step * noise_dim + c] = values[(step - 1) * noise_dim + c] + sd * z;
            }
        }
        Ok(Self {
            grid,
            noise_dim,
            values,
            seed,
            path_index,
        })
    }

    /// Builds a path from explicit increments, summed left to right.
    pub fn from_increments(grid: Grid, noise_dim: usize, increments: &[f64]) -> Result<Self> {
        let n = grid.steps();
        if noise_dim == 0 || increments.len() != n * noise_dim {
            return Err(MsdeError::Dimension(format!(
                "expected {} increments, got {}",
                n * noise_dim,
                increments.len()
            )));
        }
        let mut values = vec![0.0; (n + 1) * noise_dim];
        for step in 1..=n {
            for c in 0..noise_dim {
                values[step * noise_dim + c] =
                    values[(step - 1) * noise_dim + c] + increments[(step - 1) * noise_dim + c];
            }
        }
        Ok(Self {
            grid,
            noise_dim,
            values,
            seed: 0,
            path_index: 0,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// `W(t_n)`; `cumulative(0)` is the zero vector.
    pub fn cumulative(&self, n: usize) -> DVector<f64> {
        DVector::from_column_slice(self.cumulative_slice(n))
    }

    fn cumulative_slice(&self, n: usize) -> &[f64] {
        &self.values[n * self.noise_dim..(n + 1) * self.noise_dim]
    }

    /// `ΔW^n = W(t_n) − W(t_{n−1})` for `n ∈ 1..=N`.
    pub fn increment(&self, n: usize) -> DVector<f64> {
        assert!(n >= 1 && n <= self.grid.steps(), "increment index {n} out of range");
        let hi = self.cumulative_slice(n);
        let lo = self.cumulative_slice(n - 1);
        DVector::from_iterator(self.noise_dim, hi.iter().zip(lo).map(|(a, b)| a - b))
    }

    /// All increments, row-major `[step][component]`.
    pub fn increments(&self) -> Vec<f64> {
        let m = self.noise_dim;
        (1..=self.grid.steps())
            .flat_map(|n| (0..m).map(move |c| (n, c)))
            .map(|(n, c)| self.values[n * m + c] - self.values[(n - 1) * m + c])
            .collect()
    }

    /// Subsamples the path onto the grid with `N / factor` steps.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianPath> {
        let grid = self.grid.coarsen(factor)?;
        let m = self.noise_dim;
        let values = (0..=grid.steps())
            .flat_map(|n| self.cumulative_slice(n * factor).iter().copied())
            .collect::<Vec<_>>();
        debug_assert_eq!(values.len(), (grid.steps() + 1) * m);
        Ok(BrownianPath {
            grid,
            noise_dim: m,
            values,
            seed: self.seed,
            path_index: self.path_index,
        })
    }

    /// Piecewise linear interpolant `𝒲(t)` of the grid values.
    pub fn interpolant(&self, t: f64) -> Result<DVector<f64>> {
        if t == 0.0 {
            return Ok(DVector::zeros(self.noise_dim));
        }
        let (n, theta) = self.grid.locate(t)?;
        let lo = self.cumulative_slice(n - 1);
        let hi = self.cumulative_slice(n);
        Ok(DVector::from_iterator(
            self.noise_dim,
            lo.iter().zip(hi).map(|(a, b)| a + theta * (b - a)),
        ))
    }

    /// Writes the increments as little-endian `f64`, row-major
    /// `[step][component]`.
    pub fn write_increments<W: Write>(&self, mut out: W) -> Result<()> {
        for v in self.increments() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_increments<R: Read>(grid: Grid, noise_dim: usize, mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 {
            return Err(MsdeError::invalid("increment dump length is not a multiple of 8"));
        }
        let increments = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect::<Vec<_>>();
        Self::from_increments(grid, noise_dim, &increments)
    }
}

/// Options for [`interpolation_error_mc`].
#[derive(Debug, Clone, Copy)]
pub struct InterpolationCheck {
    /// Fine sub-steps per coarse step; must be even.
    pub refinement: usize,
}

impl Default for InterpolationCheck {
    fn default() -> Self {
        Self { refinement: 32 }
    }
}

/// Monte Carlo estimate of `∫_0^T E|g0 (W(t) − 𝒲(t))|² dt`.
///
/// `W` is simulated on a grid `refinement` times finer than `grid`, `𝒲`
/// interpolates its values at the coarse knots, and the time integral uses
/// composite Simpson on the fine grid. The expected integrand is quadratic
/// on each coarse cell, so the quadrature adds no bias: the estimator's mean
/// is exactly `T |g0|² k / 6`.
pub fn interpolation_error_mc(
    g0: &DMatrix<f64>,
    grid: Grid,
    paths: usize,
    seed: u64,
    check: InterpolationCheck,
) -> Result<MeanEstimate> {
    if paths < 2 {
        return Err(MsdeError::invalid("need at least two paths"));
    }
    let r = check.refinement;
    if r < 2 || r % 2 != 0 {
        return Err(MsdeError::invalid(format!("refinement {r} must be even and >= 2")));
    }
    let m = g0.ncols();
    let fine = Grid::new(grid.horizon(), grid.steps() * r)?;
    let h = fine.step_size();

    let per_path = (0..paths as u64)
        .into_par_iter()
        .map(|p| -> Result<f64> {
            let path = BrownianPath::sample(seed, p, fine, m)?;
            let mut acc = KahanSum::new();
            for cell in 0..grid.steps() {
                let lo = path.cumulative_slice(cell * r);
                let hi = path.cumulative_slice((cell + 1) * r);
                let mut diff = DVector::zeros(m);
                // Simpson weights 1, 4, 2, 4, …, 4, 1 over the r sub-steps.
                for j in 0..=r {
                    let theta = j as f64 / r as f64;
                    let w = path.cumulative_slice(cell * r + j);
                    for c in 0..m {
                        diff[c] = w[c] - (lo[c] + theta * (hi[c] - lo[c]));
                    }
                    let sq = (g0 * &diff).norm_squared();
                    let weight = if j == 0 || j == r {
                        1.0
                    } else if j % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    acc.add(weight * sq);
                }
            }
            Ok(acc.total() * h / 3.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanEstimate::from_samples(&per_path))
}

/// Closed form `T |g0|_F² k / 6` of the interpolation error integral.
pub fn interpolation_error_exact(g0: &DMatrix<f64>, grid: Grid) -> f64 {
    grid.horizon() * g0.norm_squared() * grid.step_size() / 6.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t: f64, n: usize) -> Grid {
        Grid::new(t, n).unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = BrownianPath::sample(7, 3, grid(1.0, 16), 2).unwrap();
        let b = BrownianPath::sample(7, 3, grid(1.0, 16), 2).unwrap();
        assert_eq!(a, b);
        let c = BrownianPath::sample(7, 4, grid(1.0, 16), 2).unwrap();
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn cumulative_starts_at_zero() {
        let p = BrownianPath::sample(1, 0, grid(2.0, 5), 3).unwrap();
        assert_eq!(p.cumulative(0), DVector::zeros(3));
    }

    #[test]
    fn coarsen_identity_and_pairs() {
        let g = grid(1.0, 4);
        let p = BrownianPath::from_increments(g, 1, &[0.5, 0.25, -1.0, 0.125]).unwrap();
        assert_eq!(p.coarsen(1).unwrap(), p);
        let c = p.coarsen(2).unwrap();
        assert_eq!(c.grid().steps(), 2);
        // Dyadic values sum exactly.
        assert_eq!(c.increments(), vec![0.75, -0.875]);
    }

    #[test]
    fn coarsen_rejects_non_divisor() {
        let p = BrownianPath::sample(1, 0, grid(1.0, 6), 1).unwrap();
        assert!(p.coarsen(4).is_err());
        assert!(p.coarsen(0).is_err());
    }

    #[test]
    fn coarsen_composes_bit_exactly() {
        let p = BrownianPath::sample(11, 5, grid(1.0, 64), 2).unwrap();
        let twice = p.coarsen(2).unwrap().coarsen(2).unwrap();
        let once = p.coarsen(4).unwrap();
        assert_eq!(twice.values, once.values);
        for n in 0..=16 {
            assert_eq!(once.cumulative(n), p.cumulative(4 * n));
        }
    }

    #[test]
    fn interpolant_knots_and_midpoints() {
        let g = grid(1.0, 8);
        let p = BrownianPath::sample(2, 0, g, 2).unwrap();
        assert_eq!(p.interpolant(0.0).unwrap(), DVector::zeros(2));
        for n in 1..=8 {
            let t = g.time(n);
            assert_eq!(p.interpolant(t).unwrap(), p.cumulative(n));
            let mid = 0.5 * (g.time(n - 1) + t);
            let expect = (p.cumulative(n - 1) + p.cumulative(n)) / 2.0;
            assert!((p.interpolant(mid).unwrap() - expect).amax() < 1e-15);
        }
        assert!(p.interpolant(1.5).is_err());
        assert!(p.interpolant(-0.1).is_err());
    }

    #[test]
    fn increment_dump_roundtrip() {
        let g = grid(1.0, 10);
        let p = BrownianPath::sample(9, 2, g, 3).unwrap();
        let mut buf = Vec::new();
        p.write_increments(&mut buf).unwrap();
        assert_eq!(buf.len(), 10 * 3 * 8);
        let first = f64::from_le_bytes(buf[0..8].try_into().unwrap());
        assert_eq!(first, p.increment(1)[0]);
        let q = BrownianPath::read_increments(g, 3, &buf[..]).unwrap();
        assert!((0..=10).all(|n| (q.cumulative(n) - p.cumulative(n)).amax() < 1e-14));
    }

    #[test]
    fn zero_g0_gives_zero_error() {
        let g0 = DMatrix::zeros(1, 1);
        let est =
            interpolation_error_mc(&g0, grid(1.0, 8), 10, 0, InterpolationCheck::default()).unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn scaling_g0_quadruples_estimate() {
        let g = grid(1.0, 16);
        let check = InterpolationCheck { refinement: 8 };
        let one = interpolation_error_mc(&DMatrix::from_element(1, 1, 1.0), g, 200, 4, check).unwrap();
        let two = interpolation_error_mc(&DMatrix::from_element(1, 1, 2.0), g, 200, 4, check).unwrap();
        // Same paths, so the scaling is exact up to rounding.
        assert!((two.mean - 4.0 * one.mean).abs() < 1e-12 * two.mean);
    }

    #[test]
    fn odd_refinement_rejected() {
        let g0 = DMatrix::from_element(1, 1, 1.0);
        let check = InterpolationCheck { refinement: 3 };
        assert!(interpolation_error_mc(&g0, grid(1.0, 4), 10, 0, check).is_err());
    }
}
