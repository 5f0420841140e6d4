//! Exact discrete probability and information-measure kernels.
//!
//! Dense tables over products of finite alphabets, natural logarithms
//! throughout. Zero-probability cells contribute nothing to any measure
//! (`0 log 0 = 0`), and conditional rows with zero marginal mass are
//! excluded from spectra.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for "sums to one" checks on pmf tables and channel rows.
pub const SUM_TOL: f64 = 1e-12;

/// Atom values closer than this are merged when building a spectrum.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProbError {
    #[error("coordinate index {index} out of range (pmf has {count} coordinates)")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("coordinate groups must be disjoint (index {0} repeated)")]
    OverlappingGroups(usize),

    #[error("coordinate group must be nonempty")]
    EmptyGroup,

    #[error("alphabet sizes must be positive")]
    EmptyAlphabet,

    #[error("table length {len} does not match alphabet product {expected}")]
    LengthMismatch { len: usize, expected: usize },

    #[error("negative probability {value} at cell {index}")]
    NegativeMass { index: usize, value: f64 },

    #[error("probabilities sum to {sum}, expected 1 within {SUM_TOL}")]
    NotNormalized { sum: f64 },

    #[error("channel row {row} sums to {sum}, expected 1 within {SUM_TOL}")]
    RowNotNormalized { row: usize, sum: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("spectrum would need {required} atoms, limit is {limit}")]
    TooManyAtoms { required: usize, limit: usize },
}

type Result<T> = std::result::Result<T, ProbError>;

/// Compensated (Neumaier) summation; keeps the normalization check tight
/// even on large tables.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Exact joint probability mass function over a product of finite alphabets.
///
/// The table is row-major: the last coordinate varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPmf {
    sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(ProbError::EmptyAlphabet);
        }
        let expected: usize = sizes.iter().product();
        if probs.len() != expected {
            return Err(ProbError::LengthMismatch {
                len: probs.len(),
                expected,
            });
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(p >= 0.0) {
                return Err(ProbError::NegativeMass { index: i, value: p });
            }
        }
        let sum = neumaier_sum(probs.iter().copied());
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(ProbError::NotNormalized { sum });
        }
        Ok(Self { sizes, probs })
    }

    /// Builds the table cell by cell from a function of the index tuple.
    pub fn from_fn(sizes: Vec<usize>, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        let total: usize = sizes.iter().product();
        let mut probs = vec![0.0; total];
        let mut idx = vec![0usize; sizes.len()];
        for (flat, slot) in probs.iter_mut().enumerate() {
            unravel(&sizes, flat, &mut idx);
            *slot = f(&idx);
        }
        Self::new(sizes, probs)
    }

    pub fn uniform(sizes: Vec<usize>) -> Self {
        let total: usize = sizes.iter().product();
        let p = 1.0 / total as f64;
        Self {
            sizes,
            probs: vec![p; total],
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_coords(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.sizes.len());
        let mut flat = 0;
        for (i, &c) in idx.iter().enumerate() {
            debug_assert!(c < self.sizes[i]);
            flat = flat * self.sizes[i] + c;
        }
        flat
    }

    pub fn prob(&self, idx: &[usize]) -> f64 {
        self.probs[self.flat_index(idx)]
    }

    fn check_group(&self, group: &[usize]) -> Result<()> {
        for &g in group {
            if g >= self.sizes.len() {
                return Err(ProbError::IndexOutOfRange {
                    index: g,
                    count: self.sizes.len(),
                });
            }
        }
        let mut seen = vec![false; self.sizes.len()];
        for &g in group {
            if seen[g] {
                return Err(ProbError::OverlappingGroups(g));
            }
            seen[g] = true;
        }
        Ok(())
    }

    fn check_disjoint(&self, groups: &[&[usize]]) -> Result<()> {
        let mut seen = vec![false; self.sizes.len()];
        for group in groups {
            for &g in *group {
                if g >= self.sizes.len() {
                    return Err(ProbError::IndexOutOfRange {
                        index: g,
                        count: self.sizes.len(),
                    });
                }
                if seen[g] {
                    return Err(ProbError::OverlappingGroups(g));
                }
                seen[g] = true;
            }
        }
        Ok(())
    }

    /// Exact marginal over `keep`, output coordinates in the order given.
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointPmf> {
        if keep.is_empty() {
            return Err(ProbError::EmptyGroup);
        }
        self.check_group(keep)?;
        let out_sizes: Vec<usize> = keep.iter().map(|&k| self.sizes[k]).collect();
        let total: usize = out_sizes.iter().product();
        let mut out = vec![0.0; total];
        let mut idx = vec![0usize; self.sizes.len()];
        for (flat, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            unravel(&self.sizes, flat, &mut idx);
            let mut dst = 0;
            for (j, &k) in keep.iter().enumerate() {
                dst = dst * out_sizes[j] + idx[k];
            }
            out[dst] += p;
        }
        // Sums preserved exactly up to accumulation order; renormalization is
        // deliberately not applied.
        Ok(JointPmf {
            sizes: out_sizes,
            probs: out,
        })
    }

    /// Shannon entropy (nats) of the marginal on `group`.
    pub fn entropy(&self, group: &[usize]) -> Result<f64> {
        let marg = self.marginalize(group)?;
        Ok(entropy_table(&marg.probs))
    }

    /// Exact mutual information I(A;B) in nats.
    pub fn mutual_information(&self, group_a: &[usize], group_b: &[usize]) -> Result<f64> {
        if group_a.is_empty() || group_b.is_empty() {
            return Err(ProbError::EmptyGroup);
        }
        self.check_disjoint(&[group_a, group_b])?;
        let ha = self.entropy(group_a)?;
        let hb = self.entropy(group_b)?;
        let joint: Vec<usize> = group_a.iter().chain(group_b).copied().collect();
        let hab = self.entropy(&joint)?;
        Ok((ha + hb - hab).max(0.0))
    }

    /// Exact conditional mutual information I(A;B|C) in nats.
    pub fn conditional_mutual_information(
        &self,
        group_a: &[usize],
        group_b: &[usize],
        group_c: &[usize],
    ) -> Result<f64> {
        if group_a.is_empty() || group_b.is_empty() {
            return Err(ProbError::EmptyGroup);
        }
        if group_c.is_empty() {
            return self.mutual_information(group_a, group_b);
        }
        self.check_disjoint(&[group_a, group_b, group_c])?;
        let ac: Vec<usize> = group_a.iter().chain(group_c).copied().collect();
        let bc: Vec<usize> = group_b.iter().chain(group_c).copied().collect();
        let abc: Vec<usize> = group_a
            .iter()
            .chain(group_b)
            .chain(group_c)
            .copied()
            .collect();
        let h_ac = self.entropy(&ac)?;
        let h_bc = self.entropy(&bc)?;
        let h_abc = self.entropy(&abc)?;
        let h_c = self.entropy(group_c)?;
        Ok((h_ac + h_bc - h_abc - h_c).max(0.0))
    }

    /// Distribution of the (conditional) information density
    /// `log dP_{AB|C} / (dP_{A|C} dP_{B|C})` under the joint law.
    ///
    /// `group_c` may be empty, giving the unconditional density. Cells with
    /// zero joint probability are omitted; values within [`ATOM_MERGE_TOL`]
    /// are merged.
    pub fn density_spectrum(
        &self,
        group_a: &[usize],
        group_b: &[usize],
        group_c: &[usize],
    ) -> Result<DensitySpectrum> {
        if group_a.is_empty() || group_b.is_empty() {
            return Err(ProbError::EmptyGroup);
        }
        self.check_disjoint(&[group_a, group_b, group_c])?;

        // Work inside the marginal over A ++ B ++ C so index arithmetic stays
        // local to the three groups.
        let union: Vec<usize> = group_a
            .iter()
            .chain(group_b)
            .chain(group_c)
            .copied()
            .collect();
        let joint = self.marginalize(&union)?;
        let na = group_a.len();
        let nb = group_b.len();
        let a_local: Vec<usize> = (0..na).collect();
        let b_local: Vec<usize> = (na..na + nb).collect();
        let c_local: Vec<usize> = (na + nb..union.len()).collect();
        let ac: Vec<usize> = a_local.iter().chain(&c_local).copied().collect();
        let bc: Vec<usize> = b_local.iter().chain(&c_local).copied().collect();

        let p_ac = joint.marginalize(&ac)?;
        let p_bc = joint.marginalize(&bc)?;
        let p_c = if c_local.is_empty() {
            None
        } else {
            Some(joint.marginalize(&c_local)?)
        };

        let mut atoms: Vec<(f64, f64)> = Vec::new();
        let mut idx = vec![0usize; joint.num_coords()];
        let mut ac_idx = vec![0usize; ac.len()];
        let mut bc_idx = vec![0usize; bc.len()];
        let mut c_idx = vec![0usize; c_local.len()];
        for (flat, &p) in joint.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            unravel(&joint.sizes, flat, &mut idx);
            for (j, &k) in ac.iter().enumerate() {
                ac_idx[j] = idx[k];
            }
            for (j, &k) in bc.iter().enumerate() {
                bc_idx[j] = idx[k];
            }
            let mass_c = match &p_c {
                Some(pc) => {
                    for (j, &k) in c_local.iter().enumerate() {
                        c_idx[j] = idx[k];
                    }
                    pc.prob(&c_idx)
                }
                None => 1.0,
            };
            let value = (p * mass_c / (p_ac.prob(&ac_idx) * p_bc.prob(&bc_idx))).ln();
            atoms.push((value, p));
        }
        DensitySpectrum::from_atoms(atoms)
    }

    /// Unnormalized L1 distance `sum |p - q|`, in [0, 2].
    pub fn total_variation(&self, other: &JointPmf) -> Result<f64> {
        if self.sizes != other.sizes {
            return Err(ProbError::Shape(format!(
                "alphabets {:?} vs {:?}",
                self.sizes, other.sizes
            )));
        }
        Ok(self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(&p, &q)| (p - q).abs())
            .sum())
    }
}

/// Decodes a row-major flat index into per-coordinate indices.
pub fn unravel(sizes: &[usize], mut flat: usize, out: &mut [usize]) {
    for i in (0..sizes.len()).rev() {
        out[i] = flat % sizes[i];
        flat /= sizes[i];
    }
}

/// Entropy of a raw nonnegative table (nats); `0 log 0 = 0`.
pub(crate) fn entropy_table(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h.max(0.0)
}

/// Conditional pmf table: one output row per input tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    input_sizes: Vec<usize>,
    output_size: usize,
    /// `num_inputs x output_size`, row-major.
    rows: Vec<f64>,
}

impl Channel {
    pub fn new(input_sizes: Vec<usize>, output_size: usize, rows: Vec<f64>) -> Result<Self> {
        if input_sizes.is_empty() || input_sizes.contains(&0) || output_size == 0 {
            return Err(ProbError::EmptyAlphabet);
        }
        let num_inputs: usize = input_sizes.iter().product();
        if rows.len() != num_inputs * output_size {
            return Err(ProbError::LengthMismatch {
                len: rows.len(),
                expected: num_inputs * output_size,
            });
        }
        for (i, &p) in rows.iter().enumerate() {
            if !(p >= 0.0) {
                return Err(ProbError::NegativeMass { index: i, value: p });
            }
        }
        for r in 0..num_inputs {
            let sum = neumaier_sum(rows[r * output_size..(r + 1) * output_size].iter().copied());
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(ProbError::RowNotNormalized { row: r, sum });
            }
        }
        Ok(Self {
            input_sizes,
            output_size,
            rows,
        })
    }

    /// Deterministic channel from an input-tuple -> output-symbol map.
    pub fn deterministic(
        input_sizes: Vec<usize>,
        output_size: usize,
        f: impl Fn(&[usize]) -> usize,
    ) -> Result<Self> {
        let num_inputs: usize = input_sizes.iter().product();
        let mut rows = vec![0.0; num_inputs * output_size];
        let mut idx = vec![0usize; input_sizes.len()];
        for r in 0..num_inputs {
            unravel(&input_sizes, r, &mut idx);
            let o = f(&idx);
            if o >= output_size {
                return Err(ProbError::IndexOutOfRange {
                    index: o,
                    count: output_size,
                });
            }
            rows[r * output_size + o] = 1.0;
        }
        Self::new(input_sizes, output_size, rows)
    }

    pub fn identity(size: usize) -> Self {
        Self::deterministic(vec![size], size, |idx| idx[0]).expect("identity channel")
    }

    /// Channel that ignores its input and emits symbol 0.
    pub fn constant(input_sizes: Vec<usize>, output_size: usize) -> Self {
        Self::deterministic(input_sizes, output_size, |_| 0).expect("constant channel")
    }

    pub fn input_sizes(&self) -> &[usize] {
        &self.input_sizes
    }

    pub fn num_inputs(&self) -> usize {
        self.input_sizes.iter().product()
    }

    pub fn output_size(&self) -> usize {
        self.output_size
    }

    pub fn row(&self, input_flat: usize) -> &[f64] {
        &self.rows[input_flat * self.output_size..(input_flat + 1) * self.output_size]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn prob(&self, input_flat: usize, output: usize) -> f64 {
        self.rows[input_flat * self.output_size + output]
    }

    /// Reinterprets the input coordinates without touching the rows.
    /// The flattened input count must be unchanged.
    pub fn reshape_inputs(&self, input_sizes: Vec<usize>) -> Result<Self> {
        let n: usize = input_sizes.iter().product();
        if n != self.num_inputs() {
            return Err(ProbError::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.input_sizes, input_sizes
            )));
        }
        Ok(Self {
            input_sizes,
            output_size: self.output_size,
            rows: self.rows.clone(),
        })
    }

    /// Composes `self` with `next` acting on this channel's output:
    /// row'(x) = sum_y row(x)[y] next(y).
    pub fn compose(&self, next: &Channel) -> Result<Self> {
        if next.input_sizes != vec![self.output_size] {
            return Err(ProbError::Shape(format!(
                "composition expects input [{}], got {:?}",
                self.output_size, next.input_sizes
            )));
        }
        let num_inputs = self.num_inputs();
        let mut rows = vec![0.0; num_inputs * next.output_size];
        for x in 0..num_inputs {
            for y in 0..self.output_size {
                let p = self.prob(x, y);
                if p == 0.0 {
                    continue;
                }
                for z in 0..next.output_size {
                    rows[x * next.output_size + z] += p * next.prob(y, z);
                }
            }
        }
        Self::new(self.input_sizes.clone(), next.output_size, rows)
    }
}

/// Finite distribution of an information density: sorted atoms of
/// (value in nats, probability).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySpectrum {
    atoms: Vec<(f64, f64)>,
}

impl DensitySpectrum {
    /// Builds a spectrum from raw (value, probability) pairs: drops zero-mass
    /// atoms, sorts, and merges values within [`ATOM_MERGE_TOL`].
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        atoms.retain(|&(_, p)| p > 0.0);
        for (i, &(v, p)) in atoms.iter().enumerate() {
            if !v.is_finite() {
                return Err(ProbError::Shape(format!("non-finite atom value {v}")));
            }
            if !(p >= 0.0) {
                return Err(ProbError::NegativeMass { index: i, value: p });
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        let mut run_start = f64::NEG_INFINITY;
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if v - run_start <= ATOM_MERGE_TOL => {
                    // Probability-weighted value keeps the mean exact.
                    let total = last.1 + p;
                    last.0 = (last.0 * last.1 + v * p) / total;
                    last.1 = total;
                }
                _ => {
                    run_start = v;
                    merged.push((v, p));
                }
            }
        }
        let sum = neumaier_sum(merged.iter().map(|&(_, p)| p));
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(ProbError::NotNormalized { sum });
        }
        Ok(Self { atoms: merged })
    }

    /// Single atom with probability one.
    pub fn point(value: f64) -> Self {
        Self {
            atoms: vec![(value, 1.0)],
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// Expectation of the density; equals the corresponding (conditional)
    /// mutual information.
    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(v, p)| v * p).sum()
    }

    /// Strict upper tail P[value > gamma].
    pub fn tail_above(&self, gamma: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|&&(v, _)| v > gamma)
            .map(|&(_, p)| p)
            .sum()
    }

    /// Strict lower tail P[value < gamma].
    pub fn tail_below(&self, gamma: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|&&(v, _)| v < gamma)
            .map(|&(_, p)| p)
            .sum()
    }

    /// Spectrum of the sum of `n` independent copies (i.i.d. block density).
    ///
    /// `max_atoms` caps intermediate growth; lattice-valued densities stay
    /// compact because coinciding sums merge.
    pub fn iid_sum(&self, n: usize, max_atoms: usize) -> Result<Self> {
        if n == 0 {
            return Ok(Self::point(0.0));
        }
        // Square-and-multiply on the convolution.
        let mut result = Self::point(0.0);
        let mut base = self.clone();
        let mut k = n;
        loop {
            if k & 1 == 1 {
                result = result.convolve(&base, max_atoms)?;
            }
            k >>= 1;
            if k == 0 {
                break;
            }
            base = base.convolve(&base, max_atoms)?;
        }
        Ok(result)
    }

    fn convolve(&self, other: &Self, max_atoms: usize) -> Result<Self> {
        let required = self.atoms.len() * other.atoms.len();
        if required > max_atoms {
            return Err(ProbError::TooManyAtoms {
                required,
                limit: max_atoms,
            });
        }
        let mut atoms = Vec::with_capacity(required);
        for &(v1, p1) in &self.atoms {
            for &(v2, p2) in &other.atoms {
                atoms.push((v1 + v2, p1 * p2));
            }
        }
        Self::from_atoms(atoms)
    }
}
