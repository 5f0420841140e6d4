//! One-shot achievability bounds for the superposition / likelihood-encoder
//! scheme, driven by information-density spectra.
//!
//! The three bound ingredients are exact infima over a threshold parameter:
//! the spectra are finite, so the infima are resolved by scanning atom values
//! (with explicit left limits where the objective jumps).

use crate::probkit::DensitySpectrum;
use crate::regions::{joint_usl_z_xl, joint_uz, AuxScheme, SourceSpec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Cap on spectrum atoms when convolving block densities.
pub const MAX_BLOCK_ATOMS: usize = 4_000_000;

/// Codebook sizes I_0..I_m and J_1..J_m.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneShotParams {
    i_sizes: Vec<u64>,
    j_sizes: Vec<u64>,
}

impl OneShotParams {
    pub fn new(i_sizes: Vec<u64>, j_sizes: Vec<u64>) -> Result<Self> {
        if i_sizes.len() < 2 {
            return Err(Error::InvalidInput(
                "need I_0 plus one I_l per receiver".into(),
            ));
        }
        if j_sizes.len() != i_sizes.len() - 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} J sizes for {} receivers",
                j_sizes.len(),
                i_sizes.len() - 1
            )));
        }
        if i_sizes.iter().chain(&j_sizes).any(|&v| v == 0) {
            return Err(Error::InvalidInput("codebook sizes must be >= 1".into()));
        }
        let params = Self { i_sizes, j_sizes };
        params.total_index_count()?;
        Ok(params)
    }

    pub fn receivers(&self) -> usize {
        self.j_sizes.len()
    }

    pub fn i_sizes(&self) -> &[u64] {
        &self.i_sizes
    }

    pub fn j_sizes(&self) -> &[u64] {
        &self.j_sizes
    }

    pub fn key_size(&self) -> u64 {
        self.i_sizes[0]
    }

    /// I = prod of all I_l, with overflow checking.
    pub fn total_index_count(&self) -> Result<u128> {
        let mut acc: u128 = 1;
        for &v in &self.i_sizes {
            acc = acc
                .checked_mul(v as u128)
                .ok_or_else(|| Error::Overflow("product of I sizes".into()))?;
        }
        Ok(acc)
    }

    /// |W_l| = I_1 * ... * I_l * J_l (receiver index 0-based).
    pub fn message_size(&self, l: usize) -> Result<u128> {
        let mut acc: u128 = self.j_sizes[l] as u128;
        for &v in &self.i_sizes[1..=l + 1] {
            acc = acc
                .checked_mul(v as u128)
                .ok_or_else(|| Error::Overflow("message alphabet size".into()))?;
        }
        Ok(acc)
    }
}

/// Soft-covering residual: inf over gamma of
/// P[density > gamma] + exp(gamma/2) / (2 sqrt(size)).
///
/// The tail is a right-continuous step function, so the infimum is attained
/// at an atom value or in the gamma -> -inf limit (value 1).
pub fn soft_covering_term(spectrum: &DensitySpectrum, size: u128) -> f64 {
    let sqrt_size = (size as f64).sqrt();
    let atoms = spectrum.atoms();
    let mut best = 1.0f64;
    let mut tail_after = atoms.iter().map(|&(_, p)| p).sum::<f64>();
    for &(v, p) in atoms {
        tail_after -= p;
        let cand = tail_after + (0.5 * v).exp() / (2.0 * sqrt_size);
        best = best.min(cand);
    }
    best
}

/// Threshold-decoding residual: inf over gamma of
/// P[density <= ln(competitors) + gamma] + exp(-gamma).
///
/// The CDF jumps exactly at atoms, so the infimum is approached from the
/// left of an atom; candidates are the left limits plus the gamma -> inf
/// limit (value 1). Zero competitors means no wrong hypothesis exists.
pub fn decoding_error_term(spectrum: &DensitySpectrum, competitors: u128) -> f64 {
    if competitors == 0 {
        return 0.0;
    }
    let c = (competitors as f64).ln();
    let mut best = 1.0f64;
    let mut below = 0.0;
    for &(v, p) in spectrum.atoms() {
        let cand = below + (c - v).exp();
        best = best.min(cand);
        below += p;
    }
    best.clamp(0.0, 1.0)
}

/// Max over receivers of the decoding residual, with the I_0 - 1 competing
/// keys of the stated bound. A singleton key alphabet has no competitors and
/// yields zero.
pub fn decoding_error_max(spectra: &[DensitySpectrum], key_size: u64) -> f64 {
    let competitors = (key_size as u128).saturating_sub(1);
    spectra
        .iter()
        .map(|s| decoding_error_term(s, competitors))
        .fold(0.0, f64::max)
}

/// Secrecy residual: inf over 0 < delta < exp(ln_c - 1) of
/// 4m (a + 2 delta) (ln_c - ln delta), where a = 2T + T_l and
/// ln_c = (3/2) ln(I * J_l). Golden-section search on ln delta with a grid
/// refinement safeguard; the open right endpoint enters as a limit value.
pub fn secrecy_term(a: f64, m: usize, ln_c: f64) -> f64 {
    if a <= 0.0 {
        // 8 m delta (ln_c - ln delta) -> 0 as delta -> 0.
        return 0.0;
    }
    let scale = 4.0 * m as f64;
    let f = |t: f64| scale * (a + 2.0 * t.exp()) * (ln_c - t);
    let hi_limit = ln_c - 1.0;
    let (mut lo, mut hi) = (hi_limit - 80.0, hi_limit - 1.0);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..120 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let mut best = f(0.5 * (lo + hi));
    let (glo, ghi) = (hi_limit - 80.0, hi_limit);
    for k in 0..=1000 {
        let t = glo + (ghi - glo) * k as f64 / 1000.0;
        best = best.min(f(t));
    }
    best.max(0.0)
}

/// All bound quantities for one parameter choice, per receiver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OneShotBounds {
    /// Soft-covering residual of the U layer, in [0, 1].
    pub t: f64,
    /// Soft-covering residuals of the S_l layers, in [0, 1].
    pub t_list: Vec<f64>,
    /// Decoding residual (max over receivers), in [0, 1].
    pub epsilon: f64,
    /// 2m(epsilon + T + T_l); may exceed 1 (vacuous) and is reported as-is.
    pub error_raw: Vec<f64>,
    /// Error bounds clamped to [0, 1].
    pub error_effective: Vec<f64>,
    /// Key-leakage bounds in nats, unclamped.
    pub secrecy_raw: Vec<f64>,
    /// Leakage bounds clamped at the trivial cap ln |K|.
    pub secrecy_effective: Vec<f64>,
}

/// Per-letter spectra feeding the bounds for a (source, aux) pair.
pub struct BoundSpectra {
    pub u_z: DensitySpectrum,
    pub s_z_given_u: Vec<DensitySpectrum>,
    pub us_x: Vec<DensitySpectrum>,
}

pub fn bound_spectra(source: &SourceSpec, aux: &AuxScheme) -> Result<BoundSpectra> {
    aux.validate(source)?;
    let u_z = joint_uz(source, &aux.q_u_given_z).density_spectrum(&[0], &[1], &[])?;
    let mut s_z_given_u = Vec::with_capacity(source.receivers());
    let mut us_x = Vec::with_capacity(source.receivers());
    for l in 0..source.receivers() {
        let quad = joint_usl_z_xl(source, aux, l);
        s_z_given_u.push(quad.density_spectrum(&[1], &[2], &[0])?);
        us_x.push(quad.density_spectrum(&[0, 1], &[3], &[])?);
    }
    Ok(BoundSpectra {
        u_z,
        s_z_given_u,
        us_x,
    })
}

/// Bounds for the source treated as a single shot (blocklength 1).
pub fn one_shot_bounds(
    source: &SourceSpec,
    aux: &AuxScheme,
    params: &OneShotParams,
) -> Result<OneShotBounds> {
    bounds_for_blocklength(source, aux, params, 1)
}

/// Bounds for the n-fold i.i.d. block: densities add across letters, so the
/// block spectra are n-fold convolutions of the per-letter ones.
pub fn bounds_for_blocklength(
    source: &SourceSpec,
    aux: &AuxScheme,
    params: &OneShotParams,
    n: usize,
) -> Result<OneShotBounds> {
    let m = source.receivers();
    if params.receivers() != m {
        return Err(Error::ShapeMismatch(format!(
            "params cover {} receivers, source has {m}",
            params.receivers()
        )));
    }
    let spectra = bound_spectra(source, aux)?;
    let conv =
        |s: &DensitySpectrum| -> Result<DensitySpectrum> { Ok(s.iid_sum(n, MAX_BLOCK_ATOMS)?) };
    let total = params.total_index_count()?;
    let t = soft_covering_term(&conv(&spectra.u_z)?, total);
    let mut t_list = Vec::with_capacity(m);
    let mut decode_spectra = Vec::with_capacity(m);
    for l in 0..m {
        t_list.push(soft_covering_term(
            &conv(&spectra.s_z_given_u[l])?,
            params.j_sizes[l] as u128,
        ));
        decode_spectra.push(conv(&spectra.us_x[l])?);
    }
    let eps = decoding_error_max(&decode_spectra, params.key_size());
    Ok(assemble_bounds(params, t, t_list, eps))
}

/// Composes the displayed bounds from the three residuals.
pub fn assemble_bounds(
    params: &OneShotParams,
    t: f64,
    t_list: Vec<f64>,
    epsilon: f64,
) -> OneShotBounds {
    let m = t_list.len();
    let total = params.total_index_count().expect("validated params") as f64;
    let leak_cap = (params.key_size() as f64).ln();
    let mut error_raw = Vec::with_capacity(m);
    let mut secrecy_raw = Vec::with_capacity(m);
    for l in 0..m {
        error_raw.push(2.0 * m as f64 * (epsilon + t + t_list[l]));
        let ln_c = 1.5 * (total.ln() + (params.j_sizes[l] as f64).ln());
        secrecy_raw.push(secrecy_term(2.0 * t + t_list[l], m, ln_c));
    }
    OneShotBounds {
        t,
        t_list,
        epsilon,
        error_effective: error_raw.iter().map(|&e| e.clamp(0.0, 1.0)).collect(),
        secrecy_effective: secrecy_raw.iter().map(|&s| s.min(leak_cap)).collect(),
        error_raw,
        secrecy_raw,
    }
}

/// The mutual informations that drive the asymptotic parameter assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateTriple {
    /// I(U;Z).
    pub i_u_z: f64,
    /// I(U S_l; X_l) per receiver.
    pub i_us_x: Vec<f64>,
    /// I(S_l; X_l | U) per receiver.
    pub i_s_x_given_u: Vec<f64>,
}

/// Computes [`RateTriple`] exactly from the induced per-letter joints.
pub fn rates_for(source: &SourceSpec, aux: &AuxScheme) -> Result<RateTriple> {
    aux.validate(source)?;
    let i_u_z = joint_uz(source, &aux.q_u_given_z).mutual_information(&[0], &[1])?;
    let mut i_us_x = Vec::with_capacity(source.receivers());
    let mut i_s_x_given_u = Vec::with_capacity(source.receivers());
    for l in 0..source.receivers() {
        let quad = joint_usl_z_xl(source, aux, l);
        i_us_x.push(quad.mutual_information(&[0, 1], &[3])?);
        i_s_x_given_u.push(quad.conditional_mutual_information(&[1], &[3], &[0])?);
    }
    Ok(RateTriple {
        i_u_z,
        i_us_x,
        i_s_x_given_u,
    })
}

/// Codebook sizes for blocklength n with slack beta, plus the receiver
/// ordering that was applied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticAssignment {
    pub params: OneShotParams,
    /// `order[k]` = original receiver index placed at sorted position k
    /// (sorted by I(U S_l; X_l), non-increasing).
    pub order: Vec<usize>,
}

/// Integer codebook sizes from the rate exponents, with ceiling rounding.
/// Values within 1e-9 (relative) of an integer snap to it first, so exact
/// powers are not bumped by floating error; the beta slack absorbs the rest.
fn exp_ceil(exponent: f64) -> Result<u64> {
    if !exponent.is_finite() {
        return Err(Error::Overflow(format!("size exponent {exponent}")));
    }
    let x = exponent.exp();
    if x > 9.0e18 {
        return Err(Error::Overflow(format!(
            "codebook size exp({exponent}) exceeds representable integers"
        )));
    }
    let r = x.round();
    let snapped = if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        x.ceil()
    };
    Ok((snapped as u64).max(1))
}

/// Parameter assignment for blocklength `n` and slack `beta` (nats):
/// J_l = ceil(exp(n (I(S_l;X_l|U) + beta))),
/// I_0 = ceil(exp(n (min{I(U;Z), I(US_m;X_m)} - beta))),
/// I_1 and the intermediate I_l from the telescoping minima. Receivers are
/// ordered internally so I(US_l;X_l) is non-increasing; the applied
/// permutation is reported.
pub fn asymptotic_parameters(
    rates: &RateTriple,
    n: u64,
    beta: f64,
) -> Result<AsymptoticAssignment> {
    let m = rates.i_us_x.len();
    if m == 0 || rates.i_s_x_given_u.len() != m {
        return Err(Error::ShapeMismatch(
            "rate lists must cover the same receivers".into(),
        ));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidInput("beta must be positive".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("blocklength must be positive".into()));
    }
    let nf = n as f64;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        rates.i_us_x[b]
            .partial_cmp(&rates.i_us_x[a])
            .expect("finite rates")
            .then(a.cmp(&b))
    });

    let mins: Vec<f64> = order
        .iter()
        .map(|&l| rates.i_u_z.min(rates.i_us_x[l]))
        .collect();

    let mut i_sizes = Vec::with_capacity(m + 1);
    i_sizes.push(exp_ceil(nf * (mins[m - 1] - beta))?);
    i_sizes.push(exp_ceil(nf * (rates.i_u_z - mins[0]))?);
    for l in 1..m {
        i_sizes.push(exp_ceil(nf * (mins[l - 1] - mins[l]))?);
    }
    let j_sizes: Vec<u64> = order
        .iter()
        .map(|&l| exp_ceil(nf * (rates.i_s_x_given_u[l] + beta)))
        .collect::<Result<_>>()?;

    Ok(AsymptoticAssignment {
        params: OneShotParams::new(i_sizes, j_sizes)?,
        order,
    })
}
