//! Concrete implementation of the superposition coding scheme: random
//! layered codebooks, stochastic likelihood encoders, maximum-likelihood
//! decoders, and exact-enumeration / Monte Carlo evaluation of the
//! operational error, leakage, and key-distribution metrics.
//!
//! Index tuples are 0-based throughout; the key is the first component v_0
//! of the encoder's index tuple, and the message to receiver l carries
//! (w~_l, v_1..v_{l+1}) with the nested prefix structure.

use crate::oneshot::OneShotParams;
use crate::regions::{joint_usl_z_xl, joint_uz, AuxScheme, SourceSpec};
use crate::search::{sample_row, stream_rng};
use crate::{Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Memory / enumeration guards for codebooks and exact evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimBudget {
    /// Max stored table cells (codewords, decode memos).
    pub max_table_cells: u64,
    /// Max enumeration states visited by exact evaluation.
    pub max_states: u64,
}

impl Default for SimBudget {
    fn default() -> Self {
        Self {
            max_table_cells: 10_000_000,
            max_states: 10_000_000,
        }
    }
}

struct StateCharge {
    used: u64,
    budget: u64,
}

impl StateCharge {
    fn new(budget: u64) -> Self {
        Self { used: 0, budget }
    }

    fn add(&mut self, amount: u64) -> Result<()> {
        self.used = self.used.saturating_add(amount);
        if self.used > self.budget {
            return Err(Error::Resource {
                what: "exact enumeration (lower bound on states)".into(),
                required: self.used as u128,
                budget: self.budget as u128,
            });
        }
        Ok(())
    }
}

/// Per-letter conditional tables induced by (source, aux); everything the
/// codebook sampler, encoder, and decoders need, precomputed once.
pub struct PerLetter {
    pub m: usize,
    pub z_size: usize,
    pub x_sizes: Vec<usize>,
    pub x_cells: usize,
    pub u_size: usize,
    pub s_sizes: Vec<usize>,
    /// Flat source pmf over [Z, X_1..X_m] plus its inclusive prefix sums.
    source_probs: Vec<f64>,
    source_cum: Vec<f64>,
    /// P(Z = z).
    pz: Vec<f64>,
    /// Q_U marginal.
    u_marginal: Vec<f64>,
    /// Q_{Z|U}: row u, entry z.
    z_given_u: Vec<f64>,
    /// Per l, Q_{S_l|U}: row u, entry s.
    s_given_u: Vec<Vec<f64>>,
    /// Per l, Q_{Z|S_l U}: row (u * s_size + s), entry z.
    z_given_us: Vec<Vec<f64>>,
    /// Per l, Q_{X_l|U S_l}: row (u * s_size + s), entry x.
    x_given_us: Vec<Vec<f64>>,
    /// Per l, Q_{X_l|Z}: row z, entry x.
    xl_given_z: Vec<Vec<f64>>,
    /// Q_{X^m|Z}: row z, entry x-cell (row-major over receivers).
    x_all_given_z: Vec<f64>,
    /// x-cell -> per-receiver symbols.
    x_decomp: Vec<u16>,
}

impl PerLetter {
    pub fn new(source: &SourceSpec, aux: &AuxScheme) -> Result<Self> {
        aux.validate(source)?;
        let m = source.receivers();
        let z_size = source.z_size();
        let x_sizes = source.x_sizes().to_vec();
        let x_cells: usize = x_sizes.iter().product();
        let u_size = aux.u_size();
        let s_sizes: Vec<usize> = (0..m).map(|l| aux.s_size(l)).collect();

        let pz = source.z_marginal().probs().to_vec();
        let uz = joint_uz(source, &aux.q_u_given_z);
        let mut u_marginal = vec![0.0; u_size];
        for u in 0..u_size {
            for z in 0..z_size {
                u_marginal[u] += uz.prob(&[u, z]);
            }
        }
        let mut z_given_u = vec![0.0; u_size * z_size];
        for u in 0..u_size {
            if u_marginal[u] == 0.0 {
                continue;
            }
            for z in 0..z_size {
                z_given_u[u * z_size + z] = uz.prob(&[u, z]) / u_marginal[u];
            }
        }

        let mut s_given_u = Vec::with_capacity(m);
        let mut z_given_us = Vec::with_capacity(m);
        let mut x_given_us = Vec::with_capacity(m);
        for l in 0..m {
            let quad = joint_usl_z_xl(source, aux, l);
            let s_size = s_sizes[l];
            let x_size = x_sizes[l];
            let mut p_us = vec![0.0; u_size * s_size];
            let mut p_usz = vec![0.0; u_size * s_size * z_size];
            let mut p_usx = vec![0.0; u_size * s_size * x_size];
            let mut idx = [0usize; 4];
            for (flat, &p) in quad.probs().iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                crate::probkit::unravel(quad.sizes(), flat, &mut idx);
                let (u, s, z, x) = (idx[0], idx[1], idx[2], idx[3]);
                p_us[u * s_size + s] += p;
                p_usz[(u * s_size + s) * z_size + z] += p;
                p_usx[(u * s_size + s) * x_size + x] += p;
            }
            let mut sg = vec![0.0; u_size * s_size];
            let mut zg = vec![0.0; u_size * s_size * z_size];
            let mut xg = vec![0.0; u_size * s_size * x_size];
            for us in 0..u_size * s_size {
                let u = us / s_size;
                if u_marginal[u] > 0.0 {
                    sg[us] = p_us[us] / u_marginal[u];
                }
                if p_us[us] == 0.0 {
                    continue;
                }
                for z in 0..z_size {
                    zg[us * z_size + z] = p_usz[us * z_size + z] / p_us[us];
                }
                for x in 0..x_size {
                    xg[us * x_size + x] = p_usx[us * x_size + x] / p_us[us];
                }
            }
            s_given_u.push(sg);
            z_given_us.push(zg);
            x_given_us.push(xg);
        }

        let mut xl_given_z = Vec::with_capacity(m);
        for l in 0..m {
            let pair = source.pair_marginal(l);
            let x_size = x_sizes[l];
            let mut t = vec![0.0; z_size * x_size];
            for z in 0..z_size {
                if pz[z] == 0.0 {
                    continue;
                }
                for x in 0..x_size {
                    t[z * x_size + x] = pair.prob(&[z, x]) / pz[z];
                }
            }
            xl_given_z.push(t);
        }

        let source_probs = source.pmf().probs().to_vec();
        let mut source_cum = Vec::with_capacity(source_probs.len());
        let mut acc = 0.0;
        for &p in &source_probs {
            acc += p;
            source_cum.push(acc);
        }

        let mut x_all_given_z = vec![0.0; z_size * x_cells];
        let sizes = source.pmf().sizes().to_vec();
        let mut idx = vec![0usize; sizes.len()];
        for (flat, &p) in source_probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            crate::probkit::unravel(&sizes, flat, &mut idx);
            let z = idx[0];
            let mut cell = 0usize;
            for (j, &s) in x_sizes.iter().enumerate() {
                cell = cell * s + idx[j + 1];
            }
            x_all_given_z[z * x_cells + cell] = p / pz[z];
        }

        let mut x_decomp = vec![0u16; x_cells * m];
        let mut xi = vec![0usize; m];
        for cell in 0..x_cells {
            crate::probkit::unravel(&x_sizes, cell, &mut xi);
            for l in 0..m {
                x_decomp[cell * m + l] = xi[l] as u16;
            }
        }

        Ok(Self {
            m,
            z_size,
            x_sizes,
            x_cells,
            u_size,
            s_sizes,
            source_probs,
            source_cum,
            pz,
            u_marginal,
            z_given_u,
            s_given_u,
            z_given_us,
            x_given_us,
            xl_given_z,
            x_all_given_z,
            x_decomp,
        })
    }

    fn x_symbol(&self, cell: usize, l: usize) -> u16 {
        self.x_decomp[cell * self.m + l]
    }
}

/// Realized random codebooks at blocklength n.
///
/// Regenerating with the stored seed reproduces the tables bit-exactly:
/// the sampler draws u-codewords in flat tuple order, then the S-layer
/// codebooks receiver by receiver, tuple by tuple, index by index.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub n: usize,
    pub seed: u64,
    pub i_dims: Vec<usize>,
    pub j_dims: Vec<usize>,
    pub total_tuples: usize,
    /// `total_tuples x n`.
    u_words: Vec<u16>,
    /// Per l: `total_tuples x J_l x n`.
    s_words: Vec<Vec<u16>>,
}

impl Codebook {
    pub fn u_word(&self, tuple: usize) -> &[u16] {
        &self.u_words[tuple * self.n..(tuple + 1) * self.n]
    }

    pub fn s_word(&self, l: usize, tuple: usize, j: usize) -> &[u16] {
        let base = (tuple * self.j_dims[l] + j) * self.n;
        &self.s_words[l][base..base + self.n]
    }

    pub fn tuple_flat(&self, v: &[usize]) -> usize {
        let mut flat = 0;
        for (d, &c) in self.i_dims.iter().zip(v) {
            flat = flat * d + c;
        }
        flat
    }

    pub fn tuple_unflatten(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0usize; self.i_dims.len()];
        crate::probkit::unravel(&self.i_dims, flat, &mut out);
        out
    }

    /// Flat index of the known prefix (v_1..v_{l+1}) for receiver l.
    fn prefix_flat(&self, v_prefix: &[usize], l: usize) -> usize {
        let mut flat = 0;
        for (k, &c) in v_prefix.iter().enumerate() {
            flat = flat * self.i_dims[1 + k] + c;
        }
        debug_assert_eq!(v_prefix.len(), l + 1);
        flat
    }

    fn prefix_cells(&self, l: usize) -> usize {
        self.i_dims[1..=l + 1].iter().product()
    }
}

/// Samples the layered codebooks: u(i) i.i.d. per letter from Q_U, then
/// s_l(i, j) i.i.d. per letter from Q_{S_l | U = u(i)_t}, deterministic for
/// a given seed.
pub fn build_codebook(
    per: &PerLetter,
    params: &OneShotParams,
    n: usize,
    seed: u64,
    budget: &SimBudget,
) -> Result<Codebook> {
    if n == 0 {
        return Err(Error::InvalidInput("blocklength must be >= 1".into()));
    }
    if params.receivers() != per.m {
        return Err(Error::ShapeMismatch(format!(
            "params cover {} receivers, source has {}",
            params.receivers(),
            per.m
        )));
    }
    let total = params.total_index_count()?;
    let j_sum: u128 = params.j_sizes().iter().map(|&j| j as u128).sum();
    let cells = total
        .checked_mul(1 + j_sum)
        .and_then(|c| c.checked_mul(n as u128))
        .ok_or_else(|| Error::Overflow("codebook cell count".into()))?;
    if cells > budget.max_table_cells as u128 {
        return Err(Error::Resource {
            what: "codebook tables".into(),
            required: cells,
            budget: budget.max_table_cells as u128,
        });
    }
    let total = total as usize;
    let i_dims: Vec<usize> = params.i_sizes().iter().map(|&v| v as usize).collect();
    let j_dims: Vec<usize> = params.j_sizes().iter().map(|&v| v as usize).collect();

    let mut rng = stream_rng(seed, 0);
    let mut u_words = vec![0u16; total * n];
    for w in u_words.iter_mut() {
        *w = sample_row(&mut rng, &per.u_marginal) as u16;
    }
    let mut s_words = Vec::with_capacity(per.m);
    for l in 0..per.m {
        let s_size = per.s_sizes[l];
        let mut words = vec![0u16; total * j_dims[l] * n];
        for tuple in 0..total {
            for j in 0..j_dims[l] {
                for t in 0..n {
                    let u = u_words[tuple * n + t] as usize;
                    let row = &per.s_given_u[l][u * s_size..(u + 1) * s_size];
                    words[(tuple * j_dims[l] + j) * n + t] = sample_row(&mut rng, row) as u16;
                }
            }
        }
        s_words.push(words);
    }
    Ok(Codebook {
        n,
        seed,
        i_dims,
        j_dims,
        total_tuples: total,
        u_words,
        s_words,
    })
}

/// One stochastic encoding: sampled index tuple, per-receiver inner indices,
/// and the flags marking likelihood-encoder fallbacks to the uniform prior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncoderOutput {
    pub v: Vec<usize>,
    pub w_tilde: Vec<usize>,
    pub key: usize,
    pub fallback_v: bool,
    pub fallback_w: Vec<bool>,
}

/// Public message to receiver l: the inner index plus the nested v-prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Message {
    pub w_tilde: usize,
    pub v_prefix: Vec<usize>,
}

impl EncoderOutput {
    pub fn message(&self, l: usize) -> Message {
        Message {
            w_tilde: self.w_tilde[l],
            v_prefix: self.v[1..=l + 1].to_vec(),
        }
    }
}

/// Posterior over index tuples given a source block: proportional to
/// prod_t Q_{Z|U}(z_t | u(i)_t) under the uniform prior. Falls back to the
/// uniform distribution (flagged) when every likelihood vanishes.
pub fn v_posterior(cb: &Codebook, per: &PerLetter, z_block: &[u16]) -> (Vec<f64>, bool) {
    let mut loglik = vec![0.0f64; cb.total_tuples];
    for (tuple, ll) in loglik.iter_mut().enumerate() {
        let word = cb.u_word(tuple);
        let mut acc = 0.0;
        for t in 0..cb.n {
            let p = per.z_given_u[word[t] as usize * per.z_size + z_block[t] as usize];
            if p == 0.0 {
                acc = f64::NEG_INFINITY;
                break;
            }
            acc += p.ln();
        }
        *ll = acc;
    }
    normalize_loglik(loglik)
}

/// Posterior over the inner index j for receiver l, given the chosen tuple.
pub fn w_posterior(
    cb: &Codebook,
    per: &PerLetter,
    l: usize,
    tuple: usize,
    z_block: &[u16],
) -> (Vec<f64>, bool) {
    let s_size = per.s_sizes[l];
    let u_word = cb.u_word(tuple);
    let mut loglik = vec![0.0f64; cb.j_dims[l]];
    for (j, ll) in loglik.iter_mut().enumerate() {
        let s_word = cb.s_word(l, tuple, j);
        let mut acc = 0.0;
        for t in 0..cb.n {
            let us = u_word[t] as usize * s_size + s_word[t] as usize;
            let p = per.z_given_us[l][us * per.z_size + z_block[t] as usize];
            if p == 0.0 {
                acc = f64::NEG_INFINITY;
                break;
            }
            acc += p.ln();
        }
        *ll = acc;
    }
    normalize_loglik(loglik)
}

fn normalize_loglik(mut loglik: Vec<f64>) -> (Vec<f64>, bool) {
    let max = loglik.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        let u = 1.0 / loglik.len() as f64;
        loglik.iter_mut().for_each(|v| *v = u);
        return (loglik, true);
    }
    let mut sum = 0.0;
    for v in loglik.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    loglik.iter_mut().for_each(|v| *v /= sum);
    (loglik, false)
}

/// Stochastic likelihood encoder: samples v from its posterior, then each
/// inner index from its per-receiver posterior. Deterministic given the RNG.
pub fn encode(
    cb: &Codebook,
    per: &PerLetter,
    z_block: &[u16],
    rng: &mut impl Rng,
) -> EncoderOutput {
    let (post, fallback_v) = v_posterior(cb, per, z_block);
    let tuple = sample_row(rng, &post);
    let mut w_tilde = Vec::with_capacity(per.m);
    let mut fallback_w = Vec::with_capacity(per.m);
    for l in 0..per.m {
        let (post_w, fb) = w_posterior(cb, per, l, tuple, z_block);
        w_tilde.push(sample_row(rng, &post_w));
        fallback_w.push(fb);
    }
    let v = cb.tuple_unflatten(tuple);
    EncoderOutput {
        key: v[0],
        v,
        w_tilde,
        fallback_v,
        fallback_w,
    }
}

/// Maximum-likelihood decoder for receiver l: searches the unknown indices
/// (i_0, i_{l+2}.., 0-based positions) with the message-known ones fixed,
/// maximizing prod_t Q_{X_l|U S_l}(x_t | u(i)_t, s_l(i, w~_l)_t). Ties break
/// to the lexicographically smallest index tuple. Returns the key estimate.
pub fn decode(cb: &Codebook, per: &PerLetter, l: usize, x_block: &[u16], msg: &Message) -> usize {
    let s_size = per.s_sizes[l];
    let x_size = per.x_sizes[l];
    let mut v = vec![0usize; cb.i_dims.len()];
    for (k, &c) in msg.v_prefix.iter().enumerate() {
        v[1 + k] = c;
    }
    let unknown: Vec<usize> = std::iter::once(0).chain(l + 2..cb.i_dims.len()).collect();
    let mut best_key = 0usize;
    let mut best_ll = f64::NEG_INFINITY;
    let mut first = true;
    loop {
        let tuple = cb.tuple_flat(&v);
        let u_word = cb.u_word(tuple);
        let s_word = cb.s_word(l, tuple, msg.w_tilde);
        let mut ll = 0.0f64;
        for t in 0..cb.n {
            let us = u_word[t] as usize * s_size + s_word[t] as usize;
            let p = per.x_given_us[l][us * x_size + x_block[t] as usize];
            if p == 0.0 {
                ll = f64::NEG_INFINITY;
                break;
            }
            ll += p.ln();
        }
        if first || ll > best_ll {
            best_ll = ll;
            best_key = v[0];
            first = false;
        }
        // Advance the unknown coordinates lexicographically (last fastest).
        let mut pos = unknown.len();
        loop {
            if pos == 0 {
                return best_key;
            }
            pos -= 1;
            let d = unknown[pos];
            v[d] += 1;
            if v[d] < cb.i_dims[d] {
                break;
            }
            v[d] = 0;
        }
    }
}

/// Evaluation mode of a [`SimResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    Exact,
    MonteCarlo,
}

/// Operational metrics of one codebook (exact) or their empirical estimates
/// (Monte Carlo).
#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub mode: SimMode,
    /// P[K != K_l] per receiver.
    pub errors: Vec<f64>,
    /// Wilson-interval standard errors (zero in exact mode).
    pub error_std_errs: Vec<f64>,
    /// ln|K| - H(K|W_l) per receiver, nats.
    pub leakages: Vec<f64>,
    /// TV between the joint law of (K, K_l) and the ideal equal-uniform pair.
    pub pair_tvs: Vec<f64>,
    /// TV between the receivers' key tuple law and the equal-uniform ideal.
    pub joint_tv: f64,
    pub trials: u64,
    pub codebook_seed: u64,
    pub source_seed: Option<u64>,
    /// Probability (exact) or empirical rate (MC) of likelihood-encoder
    /// fallback events.
    pub encoder_fallback: f64,
    /// Set when leakage/TV figures are plug-in estimates from samples.
    pub estimates_biased: bool,
}

struct DecodeMemo {
    entries: Vec<u32>,
    prefix_cells: usize,
    x_states: usize,
}

const MEMO_UNSET: u32 = u32::MAX;

impl DecodeMemo {
    fn new(cb: &Codebook, per: &PerLetter, l: usize, charge_cells: &mut u64) -> Result<Self> {
        let prefix_cells = cb.prefix_cells(l);
        let mut x_states: usize = 1;
        for _ in 0..cb.n {
            x_states = x_states
                .checked_mul(per.x_sizes[l])
                .ok_or_else(|| Error::Overflow("decode memo size".into()))?;
        }
        let total = (cb.j_dims[l] as u128) * (prefix_cells as u128) * (x_states as u128);
        *charge_cells = charge_cells.saturating_add(total.min(u64::MAX as u128) as u64);
        if total > u32::MAX as u128 {
            return Err(Error::Resource {
                what: format!("decode memo for receiver {l}"),
                required: total,
                budget: u32::MAX as u128,
            });
        }
        Ok(Self {
            entries: vec![MEMO_UNSET; total as usize],
            prefix_cells,
            x_states,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn lookup(
        &mut self,
        cb: &Codebook,
        per: &PerLetter,
        l: usize,
        msg: &Message,
        x_block: &[u16],
        x_flat: usize,
        charge: &mut StateCharge,
    ) -> Result<usize> {
        let prefix = cb.prefix_flat(&msg.v_prefix, l);
        let idx = (msg.w_tilde * self.prefix_cells + prefix) * self.x_states + x_flat;
        if self.entries[idx] == MEMO_UNSET {
            let unknown: u64 = (cb.i_dims[0] as u64)
                * cb.i_dims[l + 2..]
                    .iter()
                    .map(|&d| d as u64)
                    .product::<u64>();
            charge.add(unknown.saturating_mul(cb.n as u64))?;
            self.entries[idx] = decode(cb, per, l, x_block, msg) as u32;
        } else {
            charge.add(1)?;
        }
        Ok(self.entries[idx] as usize)
    }
}

/// Exact operational metrics for one fixed codebook: enumerates source
/// blocks, encoder posteriors, and receiver observations, with the
/// (deterministic) decoders applied through a memo table.
pub fn exact_evaluate(
    source: &SourceSpec,
    aux: &AuxScheme,
    params: &OneShotParams,
    n: usize,
    codebook_seed: u64,
    budget: &SimBudget,
) -> Result<SimResult> {
    let per = PerLetter::new(source, aux)?;
    let cb = build_codebook(&per, params, n, codebook_seed, budget)?;
    let m = per.m;
    let i0 = cb.i_dims[0];
    let mut charge = StateCharge::new(budget.max_states);
    let mut table_cells = 0u64;

    let mut memos: Vec<DecodeMemo> = (0..m)
        .map(|l| DecodeMemo::new(&cb, &per, l, &mut table_cells))
        .collect::<Result<_>>()?;
    if table_cells > budget.max_table_cells {
        return Err(Error::Resource {
            what: "decode memo tables".into(),
            required: table_cells as u128,
            budget: budget.max_table_cells as u128,
        });
    }

    let z_support: Vec<usize> = (0..per.z_size).filter(|&z| per.pz[z] > 0.0).collect();
    // Per z, the supported x-cells of Q_{X^m|Z=z} and per-receiver supports.
    let x_joint_support: Vec<Vec<(usize, f64)>> = (0..per.z_size)
        .map(|z| {
            (0..per.x_cells)
                .filter_map(|c| {
                    let p = per.x_all_given_z[z * per.x_cells + c];
                    (p > 0.0).then_some((c, p))
                })
                .collect()
        })
        .collect();
    let xl_support: Vec<Vec<Vec<(u16, f64)>>> = (0..m)
        .map(|l| {
            (0..per.z_size)
                .map(|z| {
                    (0..per.x_sizes[l])
                        .filter_map(|x| {
                            let p = per.xl_given_z[l][z * per.x_sizes[l] + x];
                            (p > 0.0).then_some((x as u16, p))
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut errors = vec![0.0f64; m];
    let mut pair_hist: Vec<Vec<f64>> = vec![vec![0.0; i0 * i0]; m];
    let mut leak_hist: Vec<BTreeMap<(u32, u64), f64>> = vec![BTreeMap::new(); m];
    let mut joint_hist: BTreeMap<u64, f64> = BTreeMap::new();
    let mut fallback_p = 0.0f64;

    let mut z_odo = vec![0usize; n];
    let mut z_block = vec![0u16; n];
    'z_blocks: loop {
        for (t, &k) in z_odo.iter().enumerate() {
            z_block[t] = z_support[k] as u16;
        }
        let pz_block: f64 = z_block.iter().map(|&z| per.pz[z as usize]).product();
        charge.add((cb.total_tuples * n) as u64)?;
        let (post_v, fb_v) = v_posterior(&cb, &per, &z_block);
        if fb_v {
            fallback_p += pz_block;
        }

        for (tuple, &pv) in post_v.iter().enumerate() {
            if pv == 0.0 {
                continue;
            }
            let p_zv = pz_block * pv;
            let v = cb.tuple_unflatten(tuple);
            let key = v[0];
            let mut posts_w = Vec::with_capacity(m);
            let mut any_fb_w = false;
            for l in 0..m {
                charge.add((cb.j_dims[l] * n) as u64)?;
                let (pw, fb) = w_posterior(&cb, &per, l, tuple, &z_block);
                any_fb_w |= fb;
                posts_w.push(pw);
            }
            if any_fb_w && !fb_v {
                fallback_p += p_zv;
            }

            // Per-receiver error / leakage / pair-law pass.
            for l in 0..m {
                let msg_prefix: Vec<usize> = v[1..=l + 1].to_vec();
                let x_size = per.x_sizes[l];
                for (j, &pj) in posts_w[l].iter().enumerate() {
                    if pj == 0.0 {
                        continue;
                    }
                    let p_branch = p_zv * pj;
                    let msg = Message {
                        w_tilde: j,
                        v_prefix: msg_prefix.clone(),
                    };
                    let w_key = (cb.prefix_flat(&msg.v_prefix, l) * cb.j_dims[l] + j) as u64;
                    *leak_hist[l].entry((key as u32, w_key)).or_insert(0.0) += p_branch;

                    // Enumerate receiver-l observations in conditional support.
                    let mut x_odo = vec![0usize; n];
                    let mut x_block = vec![0u16; n];
                    loop {
                        let mut px = 1.0f64;
                        let mut x_flat = 0usize;
                        for t in 0..n {
                            let (sym, p) = xl_support[l][z_block[t] as usize][x_odo[t]];
                            x_block[t] = sym;
                            px *= p;
                            x_flat = x_flat * x_size + sym as usize;
                        }
                        charge.add(1)?;
                        let k_hat =
                            memos[l].lookup(&cb, &per, l, &msg, &x_block, x_flat, &mut charge)?;
                        let p_cell = p_branch * px;
                        if k_hat != key {
                            errors[l] += p_cell;
                        }
                        pair_hist[l][key * i0 + k_hat] += p_cell;

                        let mut t = n;
                        loop {
                            if t == 0 {
                                break;
                            }
                            t -= 1;
                            x_odo[t] += 1;
                            if x_odo[t] < xl_support[l][z_block[t] as usize].len() {
                                break;
                            }
                            x_odo[t] = 0;
                        }
                        if t == 0 && x_odo[0] == 0 {
                            break;
                        }
                    }
                }
            }

            // Joint receivers'-keys pass over inner-index combinations and
            // jointly supported observation blocks.
            let mut j_odo = vec![0usize; m];
            loop {
                let mut p_w = 1.0f64;
                for l in 0..m {
                    p_w *= posts_w[l][j_odo[l]];
                }
                if p_w > 0.0 {
                    let p_combo = p_zv * p_w;
                    let msgs: Vec<Message> = (0..m)
                        .map(|l| Message {
                            w_tilde: j_odo[l],
                            v_prefix: v[1..=l + 1].to_vec(),
                        })
                        .collect();
                    let mut c_odo = vec![0usize; n];
                    let mut cells = vec![0usize; n];
                    let mut x_blocks: Vec<Vec<u16>> = vec![vec![0u16; n]; m];
                    loop {
                        let mut px = 1.0f64;
                        for t in 0..n {
                            let (cell, p) = x_joint_support[z_block[t] as usize][c_odo[t]];
                            cells[t] = cell;
                            px *= p;
                        }
                        charge.add(m as u64)?;
                        let mut joint_flat = 0u64;
                        for l in (0..m).rev() {
                            let mut x_flat = 0usize;
                            for t in 0..n {
                                let sym = per.x_symbol(cells[t], l);
                                x_blocks[l][t] = sym;
                                x_flat = x_flat * per.x_sizes[l] + sym as usize;
                            }
                            let k_hat = memos[l].lookup(
                                &cb,
                                &per,
                                l,
                                &msgs[l],
                                &x_blocks[l],
                                x_flat,
                                &mut charge,
                            )?;
                            joint_flat = joint_flat * i0 as u64 + k_hat as u64;
                        }
                        *joint_hist.entry(joint_flat).or_insert(0.0) += p_combo * px;

                        let mut t = n;
                        loop {
                            if t == 0 {
                                break;
                            }
                            t -= 1;
                            c_odo[t] += 1;
                            if c_odo[t] < x_joint_support[z_block[t] as usize].len() {
                                break;
                            }
                            c_odo[t] = 0;
                        }
                        if t == 0 && c_odo[0] == 0 {
                            break;
                        }
                    }
                }
                let mut l = m;
                loop {
                    if l == 0 {
                        break;
                    }
                    l -= 1;
                    j_odo[l] += 1;
                    if j_odo[l] < cb.j_dims[l] {
                        break;
                    }
                    j_odo[l] = 0;
                }
                if l == 0 && j_odo[0] == 0 {
                    break;
                }
            }
        }

        let mut t = n;
        loop {
            if t == 0 {
                break 'z_blocks;
            }
            t -= 1;
            z_odo[t] += 1;
            if z_odo[t] < z_support.len() {
                break;
            }
            z_odo[t] = 0;
        }
    }

    // Enumeration must conserve probability exactly (up to accumulation).
    debug_assert!((joint_hist.values().sum::<f64>() - 1.0).abs() < 1e-9);
    for l in 0..m {
        debug_assert!((leak_hist[l].values().sum::<f64>() - 1.0).abs() < 1e-9);
        debug_assert!((pair_hist[l].iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    let leakages: Vec<f64> = (0..m)
        .map(|l| leakage_from_hist(&leak_hist[l], i0 as f64))
        .collect();
    let pair_tvs: Vec<f64> = (0..m).map(|l| pair_tv(&pair_hist[l], i0)).collect();
    let joint_tv = joint_tv_from_hist(&joint_hist, i0, m);

    Ok(SimResult {
        mode: SimMode::Exact,
        errors,
        error_std_errs: vec![0.0; m],
        leakages,
        pair_tvs,
        joint_tv,
        trials: 0,
        codebook_seed,
        source_seed: None,
        encoder_fallback: fallback_p,
        estimates_biased: false,
    })
}

fn leakage_from_hist(hist: &BTreeMap<(u32, u64), f64>, key_size: f64) -> f64 {
    let mut h_kw = 0.0f64;
    let mut w_marg: BTreeMap<u64, f64> = BTreeMap::new();
    for (&(_, w), &p) in hist {
        if p > 0.0 {
            h_kw -= p * p.ln();
            *w_marg.entry(w).or_insert(0.0) += p;
        }
    }
    let h_w: f64 = w_marg
        .values()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    key_size.ln() - (h_kw - h_w)
}

fn pair_tv(hist: &[f64], i0: usize) -> f64 {
    let mu = 1.0 / i0 as f64;
    let mut tv = 0.0;
    for k in 0..i0 {
        for k_hat in 0..i0 {
            let ideal = if k == k_hat { mu } else { 0.0 };
            tv += (hist[k * i0 + k_hat] - ideal).abs();
        }
    }
    tv
}

fn joint_tv_from_hist(hist: &BTreeMap<u64, f64>, i0: usize, m: usize) -> f64 {
    let mu = 1.0 / i0 as f64;
    // Flat index of the all-equal tuple (k, k, ..., k).
    let diag_stride: u64 = (0..m).map(|l| (i0 as u64).pow(l as u32)).sum();
    let mut tv = 0.0;
    for (&cell, &p) in hist {
        let on_diag = cell % diag_stride == 0 && cell / diag_stride < i0 as u64;
        let ideal = if on_diag { mu } else { 0.0 };
        tv += (p - ideal).abs();
    }
    for k in 0..i0 as u64 {
        let cell = k * diag_stride;
        if !hist.contains_key(&cell) {
            tv += mu;
        }
    }
    tv
}

/// Monte Carlo estimate of the operational metrics: i.i.d. source blocks,
/// per-trial encoding and decoding, Wilson-interval standard errors, and
/// plug-in leakage / TV estimates (flagged as biased). Trials run in
/// parallel with per-trial RNG streams; aggregation is integer-count based
/// and therefore order-independent.
#[allow(clippy::too_many_arguments)]
pub fn run_monte_carlo(
    source: &SourceSpec,
    aux: &AuxScheme,
    params: &OneShotParams,
    n: usize,
    trials: u64,
    codebook_seed: u64,
    source_seed: u64,
    budget: &SimBudget,
) -> Result<SimResult> {
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let per = PerLetter::new(source, aux)?;
    let cb = build_codebook(&per, params, n, codebook_seed, budget)?;
    let m = per.m;
    let i0 = cb.i_dims[0];

    #[derive(Clone)]
    struct Tally {
        errors: Vec<u64>,
        fallbacks: u64,
        leak: Vec<HashMap<(u32, u64), u64>>,
        pair: Vec<HashMap<(u32, u32), u64>>,
        joint: HashMap<u64, u64>,
    }
    impl Tally {
        fn new(m: usize) -> Self {
            Self {
                errors: vec![0; m],
                fallbacks: 0,
                leak: vec![HashMap::new(); m],
                pair: vec![HashMap::new(); m],
                joint: HashMap::new(),
            }
        }
        fn merge(mut self, other: Tally) -> Tally {
            for (a, b) in self.errors.iter_mut().zip(other.errors) {
                *a += b;
            }
            self.fallbacks += other.fallbacks;
            for (a, b) in self.leak.iter_mut().zip(other.leak) {
                for (k, v) in b {
                    *a.entry(k).or_insert(0) += v;
                }
            }
            for (a, b) in self.pair.iter_mut().zip(other.pair) {
                for (k, v) in b {
                    *a.entry(k).or_insert(0) += v;
                }
            }
            for (k, v) in other.joint {
                *self.joint.entry(k).or_insert(0) += v;
            }
            self
        }
    }

    let tally = (0..trials)
        .into_par_iter()
        .fold(
            || Tally::new(m),
            |mut tally, trial| {
                let mut rng = stream_rng(source_seed, trial);
                // Sample the source block letter by letter from the joint law.
                let mut z_block = vec![0u16; n];
                let mut x_blocks: Vec<Vec<u16>> = vec![vec![0u16; n]; m];
                let sizes = {
                    let mut s = vec![per.z_size];
                    s.extend_from_slice(&per.x_sizes);
                    s
                };
                let mut idx = vec![0usize; m + 1];
                for t in 0..n {
                    let u: f64 = rng.gen();
                    let cell = match per
                        .source_cum
                        .binary_search_by(|probe| probe.partial_cmp(&u).unwrap())
                    {
                        Ok(i) => i + 1,
                        Err(i) => i,
                    }
                    .min(per.source_probs.len() - 1);
                    let mut cell = cell;
                    while cell > 0 && per.source_probs[cell] == 0.0 {
                        cell -= 1;
                    }
                    crate::probkit::unravel(&sizes, cell, &mut idx);
                    z_block[t] = idx[0] as u16;
                    for l in 0..m {
                        x_blocks[l][t] = idx[l + 1] as u16;
                    }
                }
                let enc = encode(&cb, &per, &z_block, &mut rng);
                if enc.fallback_v || enc.fallback_w.iter().any(|&f| f) {
                    tally.fallbacks += 1;
                }
                let mut joint_flat = 0u64;
                for l in (0..m).rev() {
                    let msg = enc.message(l);
                    let k_hat = decode(&cb, &per, l, &x_blocks[l], &msg);
                    if k_hat != enc.key {
                        tally.errors[l] += 1;
                    }
                    let w_key =
                        (cb.prefix_flat(&msg.v_prefix, l) * cb.j_dims[l] + msg.w_tilde) as u64;
                    *tally.leak[l].entry((enc.key as u32, w_key)).or_insert(0) += 1;
                    *tally.pair[l]
                        .entry((enc.key as u32, k_hat as u32))
                        .or_insert(0) += 1;
                    joint_flat = joint_flat * i0 as u64 + k_hat as u64;
                }
                *tally.joint.entry(joint_flat).or_insert(0) += 1;
                tally
            },
        )
        .reduce(|| Tally::new(m), Tally::merge);

    let nf = trials as f64;
    let errors: Vec<f64> = tally.errors.iter().map(|&e| e as f64 / nf).collect();
    let error_std_errs: Vec<f64> = errors.iter().map(|&p| wilson_half_width(p, nf)).collect();
    let leakages: Vec<f64> = (0..m)
        .map(|l| {
            let hist: BTreeMap<(u32, u64), f64> = tally.leak[l]
                .iter()
                .map(|(&k, &c)| (k, c as f64 / nf))
                .collect();
            leakage_from_hist(&hist, i0 as f64)
        })
        .collect();
    let pair_tvs: Vec<f64> = (0..m)
        .map(|l| {
            let mut dense = vec![0.0; i0 * i0];
            for (&(k, k_hat), &c) in &tally.pair[l] {
                dense[k as usize * i0 + k_hat as usize] = c as f64 / nf;
            }
            pair_tv(&dense, i0)
        })
        .collect();
    let joint: BTreeMap<u64, f64> = tally
        .joint
        .iter()
        .map(|(&k, &c)| (k, c as f64 / nf))
        .collect();
    let joint_tv = joint_tv_from_hist(&joint, i0, m);

    Ok(SimResult {
        mode: SimMode::MonteCarlo,
        errors,
        error_std_errs,
        leakages,
        pair_tvs,
        joint_tv,
        trials,
        codebook_seed,
        source_seed: Some(source_seed),
        encoder_fallback: tally.fallbacks as f64 / nf,
        estimates_biased: true,
    })
}

/// Half-width of the Wilson score interval at one standard normal unit;
/// strictly positive even at empirical rates of exactly 0 or 1.
pub fn wilson_half_width(p_hat: f64, trials: f64) -> f64 {
    let z2 = 1.0;
    let denom = 1.0 + z2 / trials;
    (1.0 / denom) * (p_hat * (1.0 - p_hat) / trials + z2 / (4.0 * trials * trials)).sqrt()
}
