//! Achievable rate regions for key generation with one communicator.
//!
//! A source is a joint pmf over (Z, X_1, ..., X_m); an auxiliary scheme is a
//! channel Z -> U plus one channel (U, Z) -> S_l per receiver. Each evaluator
//! returns the extreme rate point attained by a given scheme; the optimizer
//! searches schemes for the best key rate under per-receiver communication
//! budgets.

use crate::probkit::{Channel, JointPmf};
use crate::search::{random_simplex, stream_rng, SearchConfig};
use crate::{Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Slack used when comparing communication rates against budgets.
pub const FEASIBILITY_TOL: f64 = 1e-9;

const BUDGET_PENALTY: f64 = 8.0;

/// Joint source Q_{Z X_1 ... X_m} with terminal roles.
///
/// Coordinate 0 of the pmf is Z; coordinate `l + 1` is X_{l+1}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSpec {
    m: usize,
    pmf: JointPmf,
    omniscient: bool,
}

impl SourceSpec {
    /// Validates coordinate counts and, when `omniscient` is set, that Z is
    /// exactly the tuple (X_1, ..., X_m) under the row-major identification.
    pub fn new(m: usize, pmf: JointPmf, omniscient: bool) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("need at least one receiver".into()));
        }
        if pmf.num_coords() != m + 1 {
            return Err(Error::ShapeMismatch(format!(
                "pmf has {} coordinates, expected {} (Z plus {} receivers)",
                pmf.num_coords(),
                m + 1,
                m
            )));
        }
        if omniscient {
            let x_cells: usize = pmf.sizes()[1..].iter().product();
            if pmf.sizes()[0] != x_cells {
                return Err(Error::InvalidInput(format!(
                    "omniscient flag requires |Z| = {} (product of receiver alphabets), got {}",
                    x_cells,
                    pmf.sizes()[0]
                )));
            }
            let sizes = pmf.sizes().to_vec();
            let mut idx = vec![0usize; sizes.len()];
            for (flat, &p) in pmf.probs().iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                crate::probkit::unravel(&sizes, flat, &mut idx);
                let mut x_flat = 0usize;
                for (j, &s) in sizes[1..].iter().enumerate() {
                    x_flat = x_flat * s + idx[j + 1];
                }
                if idx[0] != x_flat {
                    return Err(Error::InvalidInput(format!(
                        "omniscient flag inconsistent: mass {p} at Z={} but (X_1..X_m) maps to {x_flat}",
                        idx[0]
                    )));
                }
            }
        }
        Ok(Self { m, pmf, omniscient })
    }

    pub fn receivers(&self) -> usize {
        self.m
    }

    pub fn pmf(&self) -> &JointPmf {
        &self.pmf
    }

    pub fn omniscient(&self) -> bool {
        self.omniscient
    }

    pub fn z_size(&self) -> usize {
        self.pmf.sizes()[0]
    }

    pub fn x_sizes(&self) -> &[usize] {
        &self.pmf.sizes()[1..]
    }

    pub fn x_size(&self, l: usize) -> usize {
        self.pmf.sizes()[l + 1]
    }

    /// Marginal over (Z, X_l).
    pub fn pair_marginal(&self, l: usize) -> JointPmf {
        self.pmf
            .marginalize(&[0, l + 1])
            .expect("valid coordinates")
    }

    pub fn z_marginal(&self) -> JointPmf {
        self.pmf.marginalize(&[0]).expect("valid coordinate")
    }

    /// Marginal over (X_1, ..., X_m).
    pub fn x_marginal(&self) -> JointPmf {
        let keep: Vec<usize> = (1..=self.m).collect();
        self.pmf.marginalize(&keep).expect("valid coordinates")
    }

    /// H(Z | X_l) in nats.
    pub fn z_entropy_given_x(&self, l: usize) -> f64 {
        let pair = self.pair_marginal(l);
        pair.entropy(&[0, 1]).unwrap() - pair.entropy(&[1]).unwrap()
    }
}

/// Auxiliary channels Q_{U|Z} and Q_{S_l|UZ} parameterizing a coding scheme.
///
/// The S-channel rows are indexed by the input tuple (u, z), u-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuxScheme {
    pub q_u_given_z: Channel,
    pub q_s_given_uz: Vec<Channel>,
}

impl AuxScheme {
    pub fn validate(&self, source: &SourceSpec) -> Result<()> {
        let z = source.z_size();
        if self.q_u_given_z.input_sizes() != [z] {
            return Err(Error::ShapeMismatch(format!(
                "U-channel expects input [{z}], got {:?}",
                self.q_u_given_z.input_sizes()
            )));
        }
        if self.q_s_given_uz.len() != source.receivers() {
            return Err(Error::ShapeMismatch(format!(
                "{} S-channels for {} receivers",
                self.q_s_given_uz.len(),
                source.receivers()
            )));
        }
        let u = self.q_u_given_z.output_size();
        for (l, ch) in self.q_s_given_uz.iter().enumerate() {
            if ch.input_sizes() != [u, z] {
                return Err(Error::ShapeMismatch(format!(
                    "S-channel {l} expects input [{u}, {z}], got {:?}",
                    ch.input_sizes()
                )));
            }
        }
        Ok(())
    }

    pub fn u_size(&self) -> usize {
        self.q_u_given_z.output_size()
    }

    pub fn s_size(&self, l: usize) -> usize {
        self.q_s_given_uz[l].output_size()
    }

    /// Fully degenerate scheme: U and every S_l constant.
    pub fn degenerate(source: &SourceSpec) -> Self {
        let z = source.z_size();
        Self {
            q_u_given_z: Channel::constant(vec![z], 1),
            q_s_given_uz: (0..source.receivers())
                .map(|_| Channel::constant(vec![1, z], 1))
                .collect(),
        }
    }
}

/// Extreme point of a rate region: key rate and per-receiver communication
/// rates, all in nats per symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub key_rate: f64,
    pub comm_rates: Vec<f64>,
}

impl RatePoint {
    fn clamped(key_rate: f64, comm_rates: Vec<f64>) -> Self {
        Self {
            key_rate: key_rate.max(0.0),
            comm_rates: comm_rates.into_iter().map(|r| r.max(0.0)).collect(),
        }
    }
}

/// Induced joint over (U, Z).
pub(crate) fn joint_uz(source: &SourceSpec, q_u: &Channel) -> JointPmf {
    let pz = source.z_marginal();
    let u = q_u.output_size();
    let z = source.z_size();
    JointPmf::from_fn(vec![u, z], |idx| {
        pz.probs()[idx[1]] * q_u.prob(idx[1], idx[0])
    })
    .expect("induced (U,Z) joint")
}

/// Induced joint over (U, S_l, Z, X_l); S_j for j != l integrate out exactly.
pub(crate) fn joint_usl_z_xl(source: &SourceSpec, aux: &AuxScheme, l: usize) -> JointPmf {
    let pair = source.pair_marginal(l);
    let q_u = &aux.q_u_given_z;
    let q_s = &aux.q_s_given_uz[l];
    let (u, s) = (q_u.output_size(), q_s.output_size());
    let z = source.z_size();
    let x = source.x_size(l);
    JointPmf::from_fn(vec![u, s, z, x], |idx| {
        let (iu, is, iz, ix) = (idx[0], idx[1], idx[2], idx[3]);
        pair.prob(&[iz, ix]) * q_u.prob(iz, iu) * q_s.prob(iu * z + iz, is)
    })
    .expect("induced (U,S_l,Z,X_l) joint")
}

/// Induced joint over (U, X_1, ..., X_m) for a channel U given all sources.
pub(crate) fn joint_u_x_all(source: &SourceSpec, q_u: &Channel) -> Result<JointPmf> {
    let x_marg = source.x_marginal();
    let x_cells: usize = source.x_sizes().iter().product();
    if q_u.num_inputs() != x_cells {
        return Err(Error::ShapeMismatch(format!(
            "U-channel has {} input rows, expected {} (product of receiver alphabets)",
            q_u.num_inputs(),
            x_cells
        )));
    }
    let mut sizes = vec![q_u.output_size()];
    sizes.extend_from_slice(source.x_sizes());
    let x_sizes = source.x_sizes().to_vec();
    Ok(JointPmf::from_fn(sizes, |idx| {
        let mut x_flat = 0usize;
        for (j, &s) in x_sizes.iter().enumerate() {
            x_flat = x_flat * s + idx[j + 1];
        }
        x_marg.probs()[x_flat] * q_u.prob(x_flat, idx[0])
    })
    .expect("induced (U,X^m) joint"))
}

/// Full induced joint over (U, S_1..S_m, Z, X_1..X_m). Intended for
/// cross-checks on small instances; grows multiplicatively in every alphabet.
pub fn full_joint(source: &SourceSpec, aux: &AuxScheme) -> Result<JointPmf> {
    aux.validate(source)?;
    let m = source.receivers();
    let z = source.z_size();
    let mut sizes = vec![aux.u_size()];
    for l in 0..m {
        sizes.push(aux.s_size(l));
    }
    sizes.push(z);
    sizes.extend_from_slice(source.x_sizes());
    let cells: usize = sizes.iter().product();
    if cells > 50_000_000 {
        return Err(Error::Resource {
            what: "full induced joint".into(),
            required: cells as u128,
            budget: 50_000_000,
        });
    }
    let pmf = source.pmf().clone();
    let q_u = aux.q_u_given_z.clone();
    let q_s = aux.q_s_given_uz.clone();
    Ok(JointPmf::from_fn(sizes, move |idx| {
        let iu = idx[0];
        let iz = idx[m + 1];
        let mut p = pmf.prob(&idx[m + 1..]) * q_u.prob(iz, iu);
        for (l, ch) in q_s.iter().enumerate() {
            p *= ch.prob(iu * z + iz, idx[1 + l]);
        }
        p
    })
    .expect("full induced joint"))
}

/// Extreme point of the general achievable region for a given scheme:
/// R = min{I(U;Z), I(US_l;X_l)}, R_l = I(US_l;Z|X_l).
pub fn achievable_point(source: &SourceSpec, aux: &AuxScheme) -> Result<RatePoint> {
    aux.validate(source)?;
    let mut r = joint_uz(source, &aux.q_u_given_z).mutual_information(&[0], &[1])?;
    let mut comm = Vec::with_capacity(source.receivers());
    for l in 0..source.receivers() {
        let quad = joint_usl_z_xl(source, aux, l);
        r = r.min(quad.mutual_information(&[0, 1], &[3])?);
        comm.push(quad.conditional_mutual_information(&[0, 1], &[2], &[3])?);
    }
    Ok(RatePoint::clamped(r, comm))
}

/// Same key rate as [`achievable_point`], with the max-form communication
/// rates R_l = max{I(S_l;Z|U), I(US_l;Z|X_l)}.
pub fn achievable_point_maxform(source: &SourceSpec, aux: &AuxScheme) -> Result<RatePoint> {
    aux.validate(source)?;
    let mut r = joint_uz(source, &aux.q_u_given_z).mutual_information(&[0], &[1])?;
    let mut comm = Vec::with_capacity(source.receivers());
    for l in 0..source.receivers() {
        let quad = joint_usl_z_xl(source, aux, l);
        r = r.min(quad.mutual_information(&[0, 1], &[3])?);
        let a = quad.conditional_mutual_information(&[1], &[2], &[0])?;
        let b = quad.conditional_mutual_information(&[0, 1], &[2], &[3])?;
        comm.push(a.max(b));
    }
    Ok(RatePoint::clamped(r, comm))
}

/// Omniscient-helper region point for a channel U given (X_1, ..., X_m):
/// R = min{I(U;X^m), H(X_1), ..., H(X_m)}, R_l = I(U;X^m) - I(U;X_l).
pub fn omniscient_point(source: &SourceSpec, q_u: &Channel) -> Result<RatePoint> {
    if !source.omniscient() {
        return Err(Error::InvalidInput(
            "omniscient_point requires an omniscient source".into(),
        ));
    }
    let joint = joint_u_x_all(source, q_u)?;
    let m = source.receivers();
    let all: Vec<usize> = (1..=m).collect();
    let i_u_all = joint.mutual_information(&[0], &all)?;
    let mut r = i_u_all;
    let mut comm = Vec::with_capacity(m);
    for l in 0..m {
        r = r.min(joint.entropy(&[l + 1])?);
        comm.push(i_u_all - joint.mutual_information(&[0], &[l + 1])?);
    }
    Ok(RatePoint::clamped(r, comm))
}

/// One-way (m = 1) region point: R = I(U;X_1), R_1 = I(U;Z) - I(U;X_1),
/// clamped at zero.
pub fn one_way_point(source: &SourceSpec, q_u: &Channel) -> Result<RatePoint> {
    if source.receivers() != 1 {
        return Err(Error::InvalidInput(format!(
            "one-way point requires m = 1, got m = {}",
            source.receivers()
        )));
    }
    let triple = joint_u_z_xl(source, q_u, 0)?;
    let i_ux = triple.mutual_information(&[0], &[2])?;
    let i_uz = triple.mutual_information(&[0], &[1])?;
    Ok(RatePoint::clamped(i_ux, vec![i_uz - i_ux]))
}

/// Common-randomness region point: R = I(U;Z), R_l = I(U;Z) - I(U;X_l).
pub fn cr_point(source: &SourceSpec, q_u: &Channel) -> Result<RatePoint> {
    let i_uz = joint_uz_checked(source, q_u)?.mutual_information(&[0], &[1])?;
    let mut comm = Vec::with_capacity(source.receivers());
    for l in 0..source.receivers() {
        let triple = joint_u_z_xl(source, q_u, l)?;
        comm.push(i_uz - triple.mutual_information(&[0], &[2])?);
    }
    Ok(RatePoint::clamped(i_uz, comm))
}

/// Key rate with unconstrained communication: min over l of I(Z;X_l).
pub fn unconstrained_capacity(source: &SourceSpec) -> f64 {
    (0..source.receivers())
        .map(|l| {
            source
                .pair_marginal(l)
                .mutual_information(&[0], &[1])
                .expect("pair marginal")
        })
        .fold(f64::INFINITY, f64::min)
}

fn joint_uz_checked(source: &SourceSpec, q_u: &Channel) -> Result<JointPmf> {
    if q_u.input_sizes() != [source.z_size()] {
        return Err(Error::ShapeMismatch(format!(
            "U-channel expects input [{}], got {:?}",
            source.z_size(),
            q_u.input_sizes()
        )));
    }
    Ok(joint_uz(source, q_u))
}

/// Induced joint over (U, Z, X_l) for a channel Z -> U.
fn joint_u_z_xl(source: &SourceSpec, q_u: &Channel, l: usize) -> Result<JointPmf> {
    if q_u.input_sizes() != [source.z_size()] {
        return Err(Error::ShapeMismatch(format!(
            "U-channel expects input [{}], got {:?}",
            source.z_size(),
            q_u.input_sizes()
        )));
    }
    let pair = source.pair_marginal(l);
    let sizes = vec![q_u.output_size(), source.z_size(), source.x_size(l)];
    Ok(JointPmf::from_fn(sizes, |idx| {
        pair.prob(&[idx[1], idx[2]]) * q_u.prob(idx[1], idx[0])
    })
    .expect("induced (U,Z,X_l) joint"))
}

// ---------------------------------------------------------------------------
// Key-rate maximization
// ---------------------------------------------------------------------------

/// Source tables precomputed once per search; the inner loop evaluates
/// schemes directly on them instead of materializing induced joints.
struct EvalTables {
    m: usize,
    z_size: usize,
    x_sizes: Vec<usize>,
    pz: Vec<f64>,
    h_z: f64,
    /// Per receiver: flat (z, x_l) marginal.
    pairs: Vec<Vec<f64>>,
    h_zx: Vec<f64>,
    h_x: Vec<f64>,
}

impl EvalTables {
    fn new(source: &SourceSpec) -> Self {
        let m = source.receivers();
        let z_marg = source.z_marginal();
        let mut pairs = Vec::with_capacity(m);
        let mut h_zx = Vec::with_capacity(m);
        let mut h_x = Vec::with_capacity(m);
        for l in 0..m {
            let pair = source.pair_marginal(l);
            h_zx.push(pair.entropy(&[0, 1]).unwrap());
            h_x.push(pair.entropy(&[1]).unwrap());
            pairs.push(pair.probs().to_vec());
        }
        Self {
            m,
            z_size: source.z_size(),
            x_sizes: source.x_sizes().to_vec(),
            pz: z_marg.probs().to_vec(),
            h_z: crate::probkit::entropy_table(z_marg.probs()),
            pairs,
            h_zx,
            h_x,
        }
    }

    /// Same point as [`achievable_point`], via inline entropy accumulation:
    /// every cell of each induced joint is visited exactly once, so joint
    /// entropies accumulate without storing the tables.
    fn point(&self, aux: &AuxScheme) -> RatePoint {
        let u_size = aux.u_size();
        let q_u = &aux.q_u_given_z;

        let mut p_u = vec![0.0f64; u_size];
        let mut h_uz = 0.0f64;
        for z in 0..self.z_size {
            let pz = self.pz[z];
            if pz == 0.0 {
                continue;
            }
            for u in 0..u_size {
                let w = pz * q_u.prob(z, u);
                if w > 0.0 {
                    p_u[u] += w;
                    h_uz -= w * w.ln();
                }
            }
        }
        let h_u = crate::probkit::entropy_table(&p_u);
        let i_uz = (h_u + self.h_z - h_uz).max(0.0);

        let mut key_rate = i_uz;
        let mut comm = Vec::with_capacity(self.m);
        for l in 0..self.m {
            let s_size = aux.s_size(l);
            let x_size = self.x_sizes[l];
            let q_s = &aux.q_s_given_uz[l];
            let mut p_us = vec![0.0f64; u_size * s_size];
            let mut p_usx = vec![0.0f64; u_size * s_size * x_size];
            let mut h_uszx = 0.0f64;
            for z in 0..self.z_size {
                for x in 0..x_size {
                    let pair = self.pairs[l][z * x_size + x];
                    if pair == 0.0 {
                        continue;
                    }
                    for u in 0..u_size {
                        let base = pair * q_u.prob(z, u);
                        if base == 0.0 {
                            continue;
                        }
                        let row = q_s.row(u * self.z_size + z);
                        for (s, &qs) in row.iter().enumerate() {
                            let w = base * qs;
                            if w > 0.0 {
                                h_uszx -= w * w.ln();
                                p_us[u * s_size + s] += w;
                                p_usx[(u * s_size + s) * x_size + x] += w;
                            }
                        }
                    }
                }
            }
            let h_us = crate::probkit::entropy_table(&p_us);
            let h_usx = crate::probkit::entropy_table(&p_usx);
            let i_usx = (h_us + self.h_x[l] - h_usx).max(0.0);
            key_rate = key_rate.min(i_usx);
            comm.push((h_usx + self.h_zx[l] - h_uszx - self.h_x[l]).max(0.0));
        }
        RatePoint {
            key_rate,
            comm_rates: comm,
        }
    }
}

#[derive(Clone)]
struct Candidate {
    point: RatePoint,
    aux: AuxScheme,
}

/// Best key rate found subject to R_l <= budget_l, via analytic seed schemes
/// plus seeded random restarts with coordinate-wise perturbation descent on
/// the penalized objective R - sum_l max(0, R_l - budget_l).
///
/// Deterministic for a fixed (seed, restarts, iterations); the returned point
/// is always feasible and reproducible from the returned scheme through
/// [`achievable_point`]. Falls back to the degenerate R = 0 scheme when
/// nothing better is found.
pub fn maximize_key_rate(
    source: &SourceSpec,
    budgets: &[f64],
    cfg: &SearchConfig,
) -> Result<(RatePoint, AuxScheme)> {
    let m = source.receivers();
    if budgets.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "{} budgets for {} receivers",
            budgets.len(),
            m
        )));
    }
    if budgets.iter().any(|&b| !(b >= 0.0)) {
        return Err(Error::InvalidInput("budgets must be nonnegative".into()));
    }
    let u_size = cfg.u_size.unwrap_or(source.z_size() + m + 1);
    let s_sizes: Vec<usize> = match &cfg.s_sizes {
        Some(s) => {
            if s.len() != m {
                return Err(Error::ShapeMismatch(format!(
                    "{} S-cardinalities for {} receivers",
                    s.len(),
                    m
                )));
            }
            s.clone()
        }
        None => vec![u_size * source.z_size(); m],
    };
    if u_size == 0 || s_sizes.contains(&0) {
        return Err(Error::InvalidInput("cardinalities must be positive".into()));
    }

    let tables = EvalTables::new(source);
    let seeds = analytic_seeds(source, u_size, &s_sizes);
    let mut best = {
        let aux = AuxScheme::degenerate(source);
        let point = tables.point(&aux);
        Candidate { point, aux }
    };

    // Analytic seeds are always evaluated, independent of the restart budget.
    for aux in &seeds {
        let point = tables.point(aux);
        consider(&mut best, point, aux, budgets);
    }

    let per_restart: Vec<Option<Candidate>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(cfg.seed, r);
            let init = if (r as usize) < seeds.len() {
                seeds[r as usize].clone()
            } else {
                random_aux(source, u_size, &s_sizes, &mut rng)
            };
            descend(&tables, budgets, init, cfg.iterations, &mut rng)
        })
        .collect();

    // Deterministic reduction: earlier restarts win ties.
    for cand in per_restart.into_iter().flatten() {
        consider(&mut best, cand.point, &cand.aux, budgets);
    }
    // Report the point through the public evaluator so callers can reproduce
    // it from the returned scheme verbatim.
    let point = achievable_point(source, &best.aux)?;
    Ok((point, best.aux))
}

fn is_feasible(point: &RatePoint, budgets: &[f64]) -> bool {
    point
        .comm_rates
        .iter()
        .zip(budgets)
        .all(|(&r, &b)| r <= b + FEASIBILITY_TOL)
}

fn consider(best: &mut Candidate, point: RatePoint, aux: &AuxScheme, budgets: &[f64]) {
    if is_feasible(&point, budgets) && point.key_rate > best.point.key_rate {
        *best = Candidate {
            point,
            aux: aux.clone(),
        };
    }
}

fn penalized_objective(point: &RatePoint, budgets: &[f64]) -> f64 {
    let penalty: f64 = point
        .comm_rates
        .iter()
        .zip(budgets)
        .map(|(&r, &b)| (r - b).max(0.0))
        .sum();
    point.key_rate - BUDGET_PENALTY * penalty
}

fn descend(
    tables: &EvalTables,
    budgets: &[f64],
    init: AuxScheme,
    iterations: u64,
    rng: &mut impl Rng,
) -> Option<Candidate> {
    let mut current = init;
    let mut current_obj = {
        let point = tables.point(&current);
        penalized_objective(&point, budgets)
    };
    let mut best: Option<Candidate> = None;
    let mut track = |point: &RatePoint, aux: &AuxScheme| {
        if is_feasible(point, budgets)
            && best
                .as_ref()
                .map_or(true, |b| point.key_rate > b.point.key_rate)
        {
            best = Some(Candidate {
                point: point.clone(),
                aux: aux.clone(),
            });
        }
    };
    track(&tables.point(&current), &current);

    for _ in 0..iterations {
        let proposal = perturb(&current, rng);
        let point = tables.point(&proposal);
        track(&point, &proposal);
        let obj = penalized_objective(&point, budgets);
        if obj > current_obj {
            current = proposal;
            current_obj = obj;
        }
    }
    best
}

fn random_channel(input_sizes: Vec<usize>, output: usize, rng: &mut impl Rng) -> Channel {
    let inputs: usize = input_sizes.iter().product();
    let mut rows = Vec::with_capacity(inputs * output);
    for _ in 0..inputs {
        rows.extend(random_simplex(rng, output));
    }
    Channel::new(input_sizes, output, rows).expect("random channel")
}

fn random_aux(
    source: &SourceSpec,
    u_size: usize,
    s_sizes: &[usize],
    rng: &mut impl Rng,
) -> AuxScheme {
    let z = source.z_size();
    AuxScheme {
        q_u_given_z: random_channel(vec![z], u_size, rng),
        q_s_given_uz: s_sizes
            .iter()
            .map(|&s| random_channel(vec![u_size, z], s, rng))
            .collect(),
    }
}

fn perturb(aux: &AuxScheme, rng: &mut impl Rng) -> AuxScheme {
    let mut out = aux.clone();
    let m = out.q_s_given_uz.len();
    let which = rng.gen_range(0..=m);
    let ch = if which == 0 {
        &mut out.q_u_given_z
    } else {
        &mut out.q_s_given_uz[which - 1]
    };
    let inputs = ch.num_inputs();
    let output = ch.output_size();
    let row_idx = rng.gen_range(0..inputs);
    let mut rows = ch.rows().to_vec();
    {
        let row = &mut rows[row_idx * output..(row_idx + 1) * output];
        let alpha = *[0.5, 0.15, 0.03].get(rng.gen_range(0..3)).unwrap();
        if rng.gen_bool(0.5) {
            // Mix toward a random vertex of the simplex.
            let vertex = rng.gen_range(0..output);
            for (i, v) in row.iter_mut().enumerate() {
                *v *= 1.0 - alpha;
                if i == vertex {
                    *v += alpha;
                }
            }
        } else {
            let dir = random_simplex(rng, output);
            for (v, d) in row.iter_mut().zip(dir) {
                *v = (1.0 - alpha) * *v + alpha * d;
            }
        }
        let sum: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    let rebuilt = Channel::new(ch.input_sizes().to_vec(), output, rows).expect("perturbed channel");
    *ch = rebuilt;
    out
}

/// Deterministic seed schemes: U in {Z, constant, coordinate projections},
/// S_l in {constant, Z, the l-th projection}; projections only when the
/// source is omniscient (they are then deterministic functions of Z).
fn analytic_seeds(source: &SourceSpec, u_size: usize, s_sizes: &[usize]) -> Vec<AuxScheme> {
    const MAX_SEEDS: usize = 512;
    let z = source.z_size();
    let m = source.receivers();
    let x_sizes = source.x_sizes().to_vec();

    let project = |l: usize| {
        let x_sizes = x_sizes.clone();
        move |z_flat: usize| {
            let mut rest = z_flat;
            let mut coord = 0;
            for (j, &s) in x_sizes.iter().enumerate().rev() {
                let c = rest % s;
                rest /= s;
                if j == l {
                    coord = c;
                }
            }
            coord
        }
    };

    let mut u_options: Vec<Channel> = Vec::new();
    if u_size >= z {
        u_options.push(Channel::deterministic(vec![z], u_size, |idx| idx[0]).unwrap());
    }
    u_options.push(Channel::constant(vec![z], u_size));
    if source.omniscient() {
        for j in 0..m {
            if u_size >= x_sizes[j] {
                let f = project(j);
                u_options
                    .push(Channel::deterministic(vec![z], u_size, move |idx| f(idx[0])).unwrap());
            }
        }
    }

    let mut s_options: Vec<Vec<Channel>> = Vec::with_capacity(m);
    for l in 0..m {
        let s_size = s_sizes[l];
        let mut opts = vec![Channel::constant(vec![u_size, z], s_size)];
        if s_size >= z {
            opts.push(Channel::deterministic(vec![u_size, z], s_size, |idx| idx[1]).unwrap());
        }
        if source.omniscient() && s_size >= x_sizes[l] {
            let f = project(l);
            opts.push(
                Channel::deterministic(vec![u_size, z], s_size, move |idx| f(idx[1])).unwrap(),
            );
        }
        s_options.push(opts);
    }

    let mut seeds = Vec::new();
    let mut stack = vec![0usize; m];
    'outer: for u_ch in &u_options {
        stack.iter_mut().for_each(|v| *v = 0);
        loop {
            seeds.push(AuxScheme {
                q_u_given_z: u_ch.clone(),
                q_s_given_uz: (0..m).map(|l| s_options[l][stack[l]].clone()).collect(),
            });
            if seeds.len() >= MAX_SEEDS {
                break 'outer;
            }
            // Odometer over the per-receiver option lists.
            let mut pos = 0;
            loop {
                if pos == m {
                    break;
                }
                stack[pos] += 1;
                if stack[pos] < s_options[pos].len() {
                    break;
                }
                stack[pos] = 0;
                pos += 1;
            }
            if pos == m {
                break;
            }
        }
    }
    seeds
}
