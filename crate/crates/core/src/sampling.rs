//! Observation sets Ω, the multiplicity-weighted sampling operator `R_Ω`, and
//! the sample-size thresholds that go with them.
//!
//! Draw `k` of a sampler is read from word `2k` of the `(seed, SAMPLING)`
//! stream, so observation sets are reproducible independently of how the
//! surrounding work is scheduled. All logarithms are natural.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingModel {
    /// Size-m subset of the grid, no repeats.
    UniformNoReplace,
    /// m i.i.d. uniform draws.
    WithReplace,
    /// Each cell independently with probability p.
    Bernoulli,
}

impl SamplingModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::UniformNoReplace => "uniform-no-replace",
            Self::WithReplace => "with-replace",
            Self::Bernoulli => "bernoulli",
        }
    }
}

impl std::fmt::Display for SamplingModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SamplingModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-no-replace" | "uniform" => Ok(Self::UniformNoReplace),
            "with-replace" => Ok(Self::WithReplace),
            "bernoulli" => Ok(Self::Bernoulli),
            other => Err(Error::invalid(format!("unknown sampling model '{other}'"))),
        }
    }
}

/// One distinct observed cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedCell {
    pub row: usize,
    pub col: usize,
    pub multiplicity: u32,
    pub value: Option<f64>,
}

/// The multiset Ω. Cells are kept sorted row-major; for with-replacement sets
/// the raw draw sequence is kept as well because partitioning depends on it.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    n1: usize,
    n2: usize,
    model: SamplingModel,
    seed: u64,
    cells: Vec<ObservedCell>,
    draws: Vec<(u32, u32)>,
}

impl ObservationSet {
    /// Build from a draw sequence (with repeats allowed).
    pub fn from_draws(
        n1: usize,
        n2: usize,
        model: SamplingModel,
        seed: u64,
        draws: Vec<(u32, u32)>,
    ) -> Result<Self> {
        let mut counts: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        for &(a, b) in &draws {
            if a as usize >= n1 || b as usize >= n2 {
                return Err(Error::IndexOutOfRange {
                    row: a as usize,
                    col: b as usize,
                    n1,
                    n2,
                });
            }
            *counts.entry((a, b)).or_insert(0) += 1;
        }
        let cells = counts
            .into_iter()
            .map(|((a, b), c)| ObservedCell {
                row: a as usize,
                col: b as usize,
                multiplicity: c,
                value: None,
            })
            .collect::<Vec<_>>();
        let set = Self {
            n1,
            n2,
            model,
            seed,
            cells,
            draws,
        };
        set.check_model()?;
        Ok(set)
    }

    /// Build from distinct cells with multiplicities (as read from a file).
    /// The draw order is taken to be the row-major expansion of the cells.
    /// Repeated cells are merged; conflicting values are rejected.
    pub fn from_cells(
        n1: usize,
        n2: usize,
        model: SamplingModel,
        seed: u64,
        cells: impl IntoIterator<Item = ObservedCell>,
    ) -> Result<Self> {
        let mut merged: BTreeMap<(usize, usize), ObservedCell> = BTreeMap::new();
        for c in cells {
            if c.row >= n1 || c.col >= n2 {
                return Err(Error::IndexOutOfRange {
                    row: c.row,
                    col: c.col,
                    n1,
                    n2,
                });
            }
            if c.multiplicity == 0 {
                return Err(Error::invalid(format!(
                    "cell ({}, {}) has zero multiplicity",
                    c.row, c.col
                )));
            }
            match merged.get_mut(&(c.row, c.col)) {
                None => {
                    merged.insert((c.row, c.col), c);
                }
                Some(prev) => {
                    if prev.value != c.value {
                        return Err(Error::invalid(format!(
                            "inconsistent duplicate observations at ({}, {}): {:?} vs {:?}",
                            c.row, c.col, prev.value, c.value
                        )));
                    }
                    prev.multiplicity += c.multiplicity;
                }
            }
        }
        let cells: Vec<ObservedCell> = merged.into_values().collect();
        let draws = cells
            .iter()
            .flat_map(|c| std::iter::repeat_n((c.row as u32, c.col as u32), c.multiplicity as usize))
            .collect();
        let set = Self {
            n1,
            n2,
            model,
            seed,
            cells,
            draws,
        };
        set.check_model()?;
        Ok(set)
    }

    fn check_model(&self) -> Result<()> {
        if self.model != SamplingModel::WithReplace && self.cells.iter().any(|c| c.multiplicity != 1)
        {
            return Err(Error::invalid(format!(
                "model {} does not allow repeated cells",
                self.model
            )));
        }
        Ok(())
    }

    pub fn n1(&self) -> usize {
        self.n1
    }
    pub fn n2(&self) -> usize {
        self.n2
    }
    pub fn model(&self) -> SamplingModel {
        self.model
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn cells(&self) -> &[ObservedCell] {
        &self.cells
    }
    pub fn draws(&self) -> &[(u32, u32)] {
        &self.draws
    }
    /// Total draw count, with multiplicity.
    pub fn m(&self) -> usize {
        self.draws.len()
    }
    pub fn distinct(&self) -> usize {
        self.cells.len()
    }
    pub fn has_values(&self) -> bool {
        !self.cells.is_empty() && self.cells.iter().all(|c| c.value.is_some())
    }

    pub fn multiplicity(&self, a: usize, b: usize) -> u32 {
        self.cells
            .binary_search_by(|c| (c.row, c.col).cmp(&(a, b)))
            .map(|i| self.cells[i].multiplicity)
            .unwrap_or(0)
    }

    /// Multiplicities as a dense `n1 × n2` matrix.
    pub fn multiplicity_matrix(&self) -> Matrix {
        let mut w = Matrix::zeros(self.n1, self.n2);
        for c in &self.cells {
            w[(c.row, c.col)] = c.multiplicity as f64;
        }
        w
    }

    /// 0/1 support mask.
    pub fn support_mask(&self) -> Matrix {
        let mut w = Matrix::zeros(self.n1, self.n2);
        for c in &self.cells {
            w[(c.row, c.col)] = 1.0;
        }
        w
    }

    /// Attach the entries of `m` on every observed cell.
    pub fn with_values(&self, m: &Matrix) -> Result<Self> {
        linalg::ensure_shape(m, self.n1, self.n2)?;
        let mut out = self.clone();
        for c in &mut out.cells {
            c.value = Some(m[(c.row, c.col)]);
        }
        Ok(out)
    }

    /// Same draws with extra cells appended (used for superset checks).
    pub fn extended(&self, extra: &[(u32, u32)], values: Option<&Matrix>) -> Result<Self> {
        let mut draws = self.draws.clone();
        draws.extend_from_slice(extra);
        let model = if self.model == SamplingModel::WithReplace {
            SamplingModel::WithReplace
        } else {
            // dedupe: superset of a set is still a set
            let mut seen: std::collections::BTreeSet<(u32, u32)> = Default::default();
            draws.retain(|d| seen.insert(*d));
            self.model
        };
        let set = Self::from_draws(self.n1, self.n2, model, self.seed, draws)?;
        match values {
            Some(m) => set.with_values(m),
            None => Ok(set),
        }
    }
}

pub fn sample_with_replacement(n1: usize, n2: usize, m: usize, seed: u64) -> Result<ObservationSet> {
    check_grid(n1, n2)?;
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    let grid = (n1 * n2) as u64;
    let mut rng = rng::stream_rng(seed, streams::SAMPLING);
    let draws = (0..m)
        .map(|_| {
            let idx = rng::next_index(&mut rng, grid) as usize;
            ((idx / n2) as u32, (idx % n2) as u32)
        })
        .collect();
    ObservationSet::from_draws(n1, n2, SamplingModel::WithReplace, seed, draws)
}

/// Size-m subset by a partial Fisher–Yates shuffle of the grid. For a fixed
/// seed the sets are nested in m.
pub fn sample_uniform(n1: usize, n2: usize, m: usize, seed: u64) -> Result<ObservationSet> {
    check_grid(n1, n2)?;
    let grid = n1 * n2;
    if m > grid {
        return Err(Error::invalid(format!(
            "m = {m} exceeds the {grid} cells of the grid"
        )));
    }
    let mut rng = rng::stream_rng(seed, streams::SAMPLING);
    let mut perm: Vec<u32> = (0..grid as u32).collect();
    for i in 0..m {
        let j = i + rng::next_index(&mut rng, (grid - i) as u64) as usize;
        perm.swap(i, j);
    }
    let draws = perm[..m]
        .iter()
        .map(|&idx| (idx / n2 as u32, idx % n2 as u32))
        .collect();
    ObservationSet::from_draws(n1, n2, SamplingModel::UniformNoReplace, seed, draws)
}

pub fn sample_bernoulli(n1: usize, n2: usize, p: f64, seed: u64) -> Result<ObservationSet> {
    check_grid(n1, n2)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("p = {p} outside (0, 1]")));
    }
    let mut rng = rng::stream_rng(seed, streams::SAMPLING);
    let mut draws = Vec::new();
    for a in 0..n1 {
        for b in 0..n2 {
            if rng::next_unit(&mut rng) < p {
                draws.push((a as u32, b as u32));
            }
        }
    }
    ObservationSet::from_draws(n1, n2, SamplingModel::Bernoulli, seed, draws)
}

fn check_grid(n1: usize, n2: usize) -> Result<()> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("grid dimensions must be positive"));
    }
    if n1 * n2 > u32::MAX as usize {
        return Err(Error::invalid("grid too large"));
    }
    Ok(())
}

/// `(R_Ω Z)_ab = multiplicity(a,b) · Z_ab`, zero off Ω.
pub fn apply_r_omega(obs: &ObservationSet, z: &Matrix) -> Result<Matrix> {
    linalg::ensure_shape(z, obs.n1, obs.n2)?;
    Ok(apply_r_omega_unchecked(obs, z))
}

pub(crate) fn apply_r_omega_unchecked(obs: &ObservationSet, z: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(obs.n1, obs.n2);
    for c in &obs.cells {
        out[(c.row, c.col)] = c.multiplicity as f64 * z[(c.row, c.col)];
    }
    out
}

/// Main sample-size threshold `32 max{μ1², μ0} r (n1+n2) β ln²(2 n2)`, rounded up.
pub fn sample_size_threshold(
    n1: usize,
    n2: usize,
    r: usize,
    mu0: f64,
    mu1: f64,
    beta: f64,
) -> Result<u64> {
    if !(beta > 1.0) {
        return Err(Error::invalid(format!("beta = {beta} must exceed 1")));
    }
    let l = (2.0 * n2 as f64).ln();
    let value = 32.0 * (mu1 * mu1).max(mu0) * r as f64 * (n1 + n2) as f64 * beta * l * l;
    Ok(value.ceil() as u64)
}

pub fn max_multiplicity(obs: &ObservationSet) -> u32 {
    obs.cells.iter().map(|c| c.multiplicity).max().unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DuplicateBound {
    /// `(8/3) β ln n2`; the maximal repetition count stays strictly below it.
    pub bound: f64,
    /// `n2^(2 − 2β)`.
    pub failure_probability: f64,
}

pub fn duplicate_bound(n2: usize, beta: f64) -> Result<DuplicateBound> {
    if n2 < 9 {
        return Err(Error::PreconditionViolation(format!(
            "duplicate bound requires n2 >= 9, got {n2}"
        )));
    }
    if !(beta > 1.0) {
        return Err(Error::PreconditionViolation(format!(
            "duplicate bound requires beta > 1, got {beta}"
        )));
    }
    let n = n2 as f64;
    Ok(DuplicateBound {
        bound: 8.0 / 3.0 * beta * n.ln(),
        failure_probability: n.powf(2.0 - 2.0 * beta),
    })
}

/// Split a with-replacement draw sequence into `p` consecutive blocks. When
/// `p` does not divide `m`, the first `m mod p` blocks get one extra draw.
pub fn partition(obs: &ObservationSet, p: usize) -> Result<Vec<ObservationSet>> {
    if obs.model != SamplingModel::WithReplace {
        return Err(Error::invalid(format!(
            "partitioning needs a with-replace set, got {}",
            obs.model
        )));
    }
    let m = obs.m();
    if p == 0 || p > m {
        return Err(Error::invalid(format!("cannot split {m} draws into {p} blocks")));
    }
    let (q, rem) = (m / p, m % p);
    let mut out = Vec::with_capacity(p);
    let mut start = 0;
    for j in 0..p {
        let len = q + usize::from(j < rem);
        let block = obs.draws[start..start + len].to_vec();
        out.push(ObservationSet::from_draws(
            obs.n1,
            obs.n2,
            SamplingModel::WithReplace,
            obs.seed,
            block,
        )?);
        start += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_grid() {
        let obs = sample_with_replacement(1, 1, 5, 3).unwrap();
        assert_eq!(obs.cells().len(), 1);
        assert_eq!(obs.multiplicity(0, 0), 5);
        assert!(sample_with_replacement(2, 2, 0, 3).is_err());
    }

    #[test]
    fn uniform_exhaustive_and_nested() {
        let obs = sample_uniform(2, 2, 4, 1).unwrap();
        assert!(obs.cells().iter().all(|c| c.multiplicity == 1));
        assert_eq!(obs.distinct(), 4);
        assert!(sample_uniform(2, 2, 5, 1).is_err());
        let small = sample_uniform(6, 7, 10, 4).unwrap();
        let big = sample_uniform(6, 7, 25, 4).unwrap();
        assert!(small.cells().iter().all(|c| big.multiplicity(c.row, c.col) == 1));
    }

    #[test]
    fn bernoulli_full_probability() {
        let obs = sample_bernoulli(3, 4, 1.0, 2).unwrap();
        assert_eq!(obs.distinct(), 12);
        assert!(sample_bernoulli(3, 4, 0.0, 2).is_err());
        assert!(sample_bernoulli(3, 4, 1.5, 2).is_err());
    }

    #[test]
    fn r_omega_doubles_repeated_cell() {
        let obs =
            ObservationSet::from_draws(2, 2, SamplingModel::WithReplace, 0, vec![(0, 0), (0, 0)])
                .unwrap();
        let z = Matrix::from_row_slice(2, 2, &[1.5, 2.0, 3.0, 4.0]);
        let out = apply_r_omega(&obs, &z).unwrap();
        assert_eq!(out, Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]));
        assert!(apply_r_omega(&obs, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn full_cover_is_identity() {
        let obs = sample_uniform(3, 4, 12, 0).unwrap();
        let z = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 - 2.5);
        assert_eq!(apply_r_omega(&obs, &z).unwrap(), z);
    }

    #[test]
    fn threshold_values() {
        let t = sample_size_threshold(100, 100, 2, 1.0, 1.0, 1.0 + 1e-12).unwrap();
        // 12800 · ln²(200) = 359323.74 (mpmath, 30 digits)
        assert_eq!(t, 359324);
        assert!(sample_size_threshold(100, 100, 2, 1.0, 1.0, 1.0).is_err());
        // μ1² <= μ0: μ1 irrelevant
        let a = sample_size_threshold(20, 30, 2, 3.0, 1.0, 2.0).unwrap();
        let b = sample_size_threshold(20, 30, 2, 3.0, 1.5, 2.0).unwrap();
        assert_eq!(a, b);
        let c = sample_size_threshold(20, 30, 2, 3.0, 1.0, 4.0).unwrap();
        assert!(c == 2 * a || c + 1 == 2 * a);
    }

    #[test]
    fn duplicate_bound_values() {
        let d = duplicate_bound(9, 2.0).unwrap();
        assert!((d.bound - 16.0 / 3.0 * 9f64.ln()).abs() < 1e-12);
        assert!((d.bound - 11.718531).abs() < 1e-6);
        assert!((d.failure_probability - 1.0 / 81.0).abs() < 1e-15);
        assert!(matches!(
            duplicate_bound(8, 2.0),
            Err(Error::PreconditionViolation(_))
        ));
        assert!(duplicate_bound(9, 1.0).is_err());
    }

    #[test]
    fn partition_policy() {
        let obs = sample_with_replacement(4, 5, 10, 8).unwrap();
        let blocks = partition(&obs, 2).unwrap();
        assert_eq!(blocks[0].draws(), &obs.draws()[..5]);
        assert_eq!(blocks[1].draws(), &obs.draws()[5..]);
        let one = partition(&obs, 1).unwrap();
        assert_eq!(one[0].draws(), obs.draws());
        let sizes: Vec<usize> = partition(&obs, 3).unwrap().iter().map(|b| b.m()).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert!(partition(&obs, 11).is_err());
        let u = sample_uniform(4, 5, 10, 8).unwrap();
        assert!(partition(&u, 2).is_err());
    }

    #[test]
    fn inconsistent_duplicates_rejected() {
        let cell = |v| ObservedCell {
            row: 0,
            col: 1,
            multiplicity: 1,
            value: Some(v),
        };
        let err = ObservationSet::from_cells(2, 2, SamplingModel::WithReplace, 0, [cell(1.0), cell(2.0)]);
        assert!(err.is_err());
        let ok = ObservationSet::from_cells(2, 2, SamplingModel::WithReplace, 0, [cell(1.0), cell(1.0)])
            .unwrap();
        assert_eq!(ok.multiplicity(0, 1), 2);
        assert_eq!(ok.m(), 2);
    }
}
