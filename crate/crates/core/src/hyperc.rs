//! Hypercontractivity checking, strong data-processing coefficients, and the
//! zero-rate converse bound on the key / communication trade-off.
//!
//! An m-tuple is (p_1,...,p_m)-hypercontractive iff
//! I(U;X^m) >= sum_l (1/p_l) I(U;X_l) for every channel U given X^m; the
//! checker is a falsifier over channels, not a prover.

use crate::probkit::{Channel, JointPmf};
use crate::search::{random_simplex, stream_rng, SearchConfig};
use crate::{Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Margins below this count as violations.
pub const VIOLATION_TOL: f64 = 1e-6;

/// Channels with I(U;X_1) below this are excluded from the SDPI supremum.
pub const SDPI_GUARD: f64 = 1e-9;

/// Hypercontractivity exponents, each >= 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HcPoint(Vec<f64>);

impl HcPoint {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidInput("need at least one exponent".into()));
        }
        if p.iter().any(|&v| !(v >= 1.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "hypercontractivity exponents must be finite and >= 1".into(),
            ));
        }
        Ok(Self(p))
    }

    pub fn exponents(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// sum_l 1/p_l.
    pub fn inverse_sum(&self) -> f64 {
        self.0.iter().map(|&p| 1.0 / p).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HcStatus {
    /// No violating channel found within the search budget; not a proof.
    HoldsUpToSearch,
    Violated,
}

/// Outcome of a hypercontractivity check, with the most violating channel
/// found and its margin.
#[derive(Debug, Clone, Serialize)]
pub struct HcVerdict {
    pub status: HcStatus,
    /// Best (lowest) margin encountered.
    pub margin: f64,
    /// Channel achieving `margin`; present when the verdict is `Violated`.
    pub witness: Option<Channel>,
    /// Number of margin evaluations performed.
    pub evaluations: u64,
}

/// g = I(U;X^m) - sum_l (1/p_l) I(U;X_l) for a given channel U | X^m.
pub fn hc_margin(pmf: &JointPmf, q_u: &Channel, p: &HcPoint) -> Result<f64> {
    let m = pmf.num_coords();
    if p.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "{} exponents for {m} coordinates",
            p.len()
        )));
    }
    let cells = pmf.len();
    if q_u.num_inputs() != cells {
        return Err(Error::ShapeMismatch(format!(
            "channel has {} input rows, pmf has {cells} cells",
            q_u.num_inputs()
        )));
    }
    let joint = joint_with_u(pmf, q_u);
    let all: Vec<usize> = (1..=m).collect();
    let mut g = joint.mutual_information(&[0], &all)?;
    for (l, &pl) in p.exponents().iter().enumerate() {
        g -= joint.mutual_information(&[0], &[l + 1])? / pl;
    }
    Ok(g)
}

/// Joint (U, X_1..X_m) induced by a channel on the flattened cells.
fn joint_with_u(pmf: &JointPmf, q_u: &Channel) -> JointPmf {
    let mut sizes = vec![q_u.output_size()];
    sizes.extend_from_slice(pmf.sizes());
    let x_sizes = pmf.sizes().to_vec();
    JointPmf::from_fn(sizes, |idx| {
        let mut cell = 0usize;
        for (j, &s) in x_sizes.iter().enumerate() {
            cell = cell * s + idx[j + 1];
        }
        pmf.probs()[cell] * q_u.prob(cell, idx[0])
    })
    .expect("induced (U, X^m) joint")
}

/// Falsification search: minimizes [`hc_margin`] over channels with
/// |U| <= (number of cells + 1) unless overridden. Returns `Violated` with
/// the witness when the best margin is below -[`VIOLATION_TOL`].
pub fn check_hypercontractive(
    pmf: &JointPmf,
    p: &HcPoint,
    cfg: &SearchConfig,
) -> Result<HcVerdict> {
    let m = pmf.num_coords();
    if p.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "{} exponents for {m} coordinates",
            p.len()
        )));
    }
    let cells = pmf.len();
    let u_size = cfg.u_size.unwrap_or(cells + 1);

    let seeds = margin_seeds(pmf, u_size);
    let mut best_margin = f64::INFINITY;
    let mut witness: Option<Channel> = None;
    let mut evaluations = 0u64;
    for ch in &seeds {
        let g = hc_margin(pmf, ch, p)?;
        evaluations += 1;
        if g < best_margin {
            best_margin = g;
            witness = Some(ch.clone());
        }
    }

    let per_restart: Vec<(f64, Channel, u64)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(cfg.seed, r);
            let mut current = if (r as usize) < seeds.len() {
                seeds[r as usize].clone()
            } else {
                random_cell_channel(cells, u_size, &mut rng)
            };
            let mut current_g = hc_margin(pmf, &current, p).expect("validated shapes");
            let mut evals = 1u64;
            let mut best = (current_g, current.clone());
            for _ in 0..cfg.iterations {
                let proposal = perturb_channel(&current, &mut rng);
                let g = hc_margin(pmf, &proposal, p).expect("validated shapes");
                evals += 1;
                if g < best.0 {
                    best = (g, proposal.clone());
                }
                if g < current_g {
                    current = proposal;
                    current_g = g;
                }
            }
            (best.0, best.1, evals)
        })
        .collect();
    for (g, ch, evals) in per_restart {
        evaluations += evals;
        if g < best_margin {
            best_margin = g;
            witness = Some(ch);
        }
    }

    let violated = best_margin < -VIOLATION_TOL;
    Ok(HcVerdict {
        status: if violated {
            HcStatus::Violated
        } else {
            HcStatus::HoldsUpToSearch
        },
        margin: best_margin,
        witness: if violated { witness } else { None },
        evaluations,
    })
}

fn margin_seeds(pmf: &JointPmf, u_size: usize) -> Vec<Channel> {
    let cells = pmf.len();
    let sizes = pmf.sizes().to_vec();
    let m = sizes.len();
    let mut seeds = vec![Channel::constant(vec![cells], u_size)];
    if u_size >= cells {
        seeds.push(Channel::deterministic(vec![cells], u_size, |idx| idx[0]).unwrap());
    }
    for l in 0..m {
        if u_size >= sizes[l] {
            let sizes = sizes.clone();
            seeds.push(
                Channel::deterministic(vec![cells], u_size, move |idx| {
                    let mut coords = vec![0usize; sizes.len()];
                    crate::probkit::unravel(&sizes, idx[0], &mut coords);
                    coords[l]
                })
                .unwrap(),
            );
        }
    }
    seeds
}

fn random_cell_channel(cells: usize, u_size: usize, rng: &mut impl Rng) -> Channel {
    let mut rows = Vec::with_capacity(cells * u_size);
    for _ in 0..cells {
        rows.extend(random_simplex(rng, u_size));
    }
    Channel::new(vec![cells], u_size, rows).expect("random channel")
}

fn perturb_channel(ch: &Channel, rng: &mut impl Rng) -> Channel {
    let inputs = ch.num_inputs();
    let output = ch.output_size();
    let mut rows = ch.rows().to_vec();
    let row_idx = rng.gen_range(0..inputs);
    let row = &mut rows[row_idx * output..(row_idx + 1) * output];
    let alpha = [0.5, 0.15, 0.03][rng.gen_range(0..3)];
    if rng.gen_bool(0.5) {
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
    Channel::new(ch.input_sizes().to_vec(), output, rows).expect("perturbed channel")
}

/// One functional-form check: returns (E[prod f_l(X_l)], prod ||f_l||_{p_l},
/// and whether lhs <= rhs + 1e-12). Functions are nonnegative value tables.
#[derive(Debug, Clone, Serialize)]
pub struct FunctionalCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

pub fn functional_check(
    pmf: &JointPmf,
    p: &HcPoint,
    functions: &[Vec<f64>],
) -> Result<FunctionalCheck> {
    let m = pmf.num_coords();
    if p.len() != m || functions.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "{} exponents and {} functions for {m} coordinates",
            p.len(),
            functions.len()
        )));
    }
    for (l, f) in functions.iter().enumerate() {
        if f.len() != pmf.sizes()[l] {
            return Err(Error::ShapeMismatch(format!(
                "function {l} has {} values for alphabet of size {}",
                f.len(),
                pmf.sizes()[l]
            )));
        }
        if f.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "functions must be nonnegative and finite".into(),
            ));
        }
    }
    let sizes = pmf.sizes().to_vec();
    let mut idx = vec![0usize; m];
    let mut lhs = 0.0;
    for (flat, &prob) in pmf.probs().iter().enumerate() {
        if prob == 0.0 {
            continue;
        }
        crate::probkit::unravel(&sizes, flat, &mut idx);
        let mut term = prob;
        for l in 0..m {
            term *= functions[l][idx[l]];
        }
        lhs += term;
    }
    let mut rhs = 1.0;
    for l in 0..m {
        let marg = pmf.marginalize(&[l])?;
        let pl = p.exponents()[l];
        let moment: f64 = marg
            .probs()
            .iter()
            .zip(&functions[l])
            .map(|(&q, &v)| q * v.powf(pl))
            .sum();
        rhs *= moment.powf(1.0 / pl);
    }
    Ok(FunctionalCheck {
        lhs,
        rhs,
        satisfied: lhs <= rhs + 1e-12,
    })
}

/// Best found value of sup I(U;X_2) / I(U;X_1) over channels U | X_1 with
/// I(U;X_1) >= [`SDPI_GUARD`]. Returns 0 immediately for independent pairs.
pub fn sdpi_coefficient(pmf: &JointPmf, cfg: &SearchConfig) -> Result<f64> {
    if pmf.num_coords() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "SDPI needs a pair, pmf has {} coordinates",
            pmf.num_coords()
        )));
    }
    if pmf.mutual_information(&[0], &[1])? < 1e-14 {
        return Ok(0.0);
    }
    let x1 = pmf.sizes()[0];
    let u_size = cfg.u_size.unwrap_or(x1 + 1);

    let ratio = |ch: &Channel| -> f64 {
        let joint = sdpi_joint(pmf, ch);
        let i_ux = joint.mutual_information(&[0], &[1]).expect("valid groups");
        if i_ux < SDPI_GUARD {
            return f64::NEG_INFINITY;
        }
        let i_uy = joint.mutual_information(&[0], &[2]).expect("valid groups");
        i_uy / i_ux
    };

    // Identity and near-uniform perturbation seeds; the latter probe the
    // local (chi-squared) regime where the supremum often lives.
    let mut seeds: Vec<Channel> = Vec::new();
    if u_size >= x1 {
        seeds.push(Channel::deterministic(vec![x1], u_size, |idx| idx[0]).unwrap());
    }
    if u_size >= 2 {
        for &eps in &[1e-2, 1e-3] {
            for pattern in 1..(1usize << x1.min(10)) {
                let mut rows = vec![0.0; x1 * u_size];
                for x in 0..x1 {
                    let sign = if pattern >> x & 1 == 1 { 1.0 } else { -1.0 };
                    rows[x * u_size] = 0.5 + sign * eps;
                    rows[x * u_size + 1] = 0.5 - sign * eps;
                }
                seeds.push(Channel::new(vec![x1], u_size, rows).unwrap());
            }
        }
    }

    let mut best = 0.0f64;
    for ch in &seeds {
        best = best.max(ratio(ch));
    }
    let per_restart: Vec<f64> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(cfg.seed, r);
            let mut current = if (r as usize) < seeds.len() {
                seeds[r as usize].clone()
            } else {
                random_cell_channel(x1, u_size, &mut rng)
            };
            let mut current_v = ratio(&current);
            let mut best_v = current_v;
            for _ in 0..cfg.iterations {
                let proposal = perturb_channel(&current, &mut rng);
                let v = ratio(&proposal);
                if v > best_v {
                    best_v = v;
                }
                if v > current_v {
                    current = proposal;
                    current_v = v;
                }
            }
            best_v
        })
        .collect();
    for v in per_restart {
        best = best.max(v);
    }
    Ok(best.clamp(0.0, 1.0))
}

fn sdpi_joint(pmf: &JointPmf, q_u: &Channel) -> JointPmf {
    let sizes = vec![q_u.output_size(), pmf.sizes()[0], pmf.sizes()[1]];
    JointPmf::from_fn(sizes, |idx| pmf.prob(&idx[1..]) * q_u.prob(idx[1], idx[0]))
        .expect("induced (U,X_1,X_2) joint")
}

/// Lower bound on half the total variation between the receivers' key tuple
/// law and the equal-uniform ideal:
/// 1 - 1/|K| - [ |K| prod (|W_l|/|K|)^{1/p_l} ]^{1 / sum 1/p_l}.
///
/// Valid when the source is (p_1,...,p_m)-hypercontractive (the caller's
/// hypothesis). May be negative, i.e. vacuous; returned unclamped.
pub fn zero_rate_tv_bound(key_size: u64, w_sizes: &[u64], p: &HcPoint) -> Result<f64> {
    if key_size < 2 {
        return Err(Error::InvalidInput(
            "key alphabet must have size >= 2".into(),
        ));
    }
    if w_sizes.len() != p.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} message sizes for {} exponents",
            w_sizes.len(),
            p.len()
        )));
    }
    if w_sizes.contains(&0) {
        return Err(Error::InvalidInput(
            "message alphabets must be nonempty".into(),
        ));
    }
    let ln_k = (key_size as f64).ln();
    let mut exponent = ln_k;
    for (&w, &pl) in w_sizes.iter().zip(p.exponents()) {
        exponent += ((w as f64).ln() - ln_k) / pl;
    }
    Ok(1.0 - 1.0 / key_size as f64 - (exponent / p.inverse_sum()).exp())
}

/// ln|K| - sum_l (1/p_l)(ln|K| - ln|W_l|), in nats. Key agreement degrades
/// to total variation 2 along sequences where this tends to -infinity.
/// Accepts real-valued sizes so rate forms exp(nR) can be passed directly.
pub fn zero_rate_margin(key_size: f64, w_sizes: &[f64], p: &HcPoint) -> Result<f64> {
    if !(key_size > 0.0) || w_sizes.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidInput("sizes must be positive".into()));
    }
    if w_sizes.len() != p.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} message sizes for {} exponents",
            w_sizes.len(),
            p.len()
        )));
    }
    let ln_k = key_size.ln();
    let mut margin = ln_k;
    for (&w, &pl) in w_sizes.iter().zip(p.exponents()) {
        margin -= (ln_k - w.ln()) / pl;
    }
    Ok(margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::stream_rng;

    const LN_2: f64 = std::f64::consts::LN_2;

    fn correlated_bits() -> JointPmf {
        JointPmf::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap()
    }

    fn independent_bits() -> JointPmf {
        JointPmf::uniform(vec![2, 2])
    }

    /// Doubly symmetric binary source with the given crossover.
    fn dsbs(delta: f64) -> JointPmf {
        JointPmf::from_fn(vec![2, 2], |idx| {
            if idx[0] == idx[1] {
                0.5 * (1.0 - delta)
            } else {
                0.5 * delta
            }
        })
        .unwrap()
    }

    fn proj(coord: usize, u_size: usize) -> Channel {
        Channel::deterministic(vec![4], u_size, move |idx| {
            let cell = idx[0];
            if coord == 0 {
                cell / 2
            } else {
                cell % 2
            }
        })
        .unwrap()
    }

    #[test]
    fn margin_examples() {
        let pmf = correlated_bits();

        // Constant U: both sides vanish.
        let c = Channel::constant(vec![4], 1);
        let g = hc_margin(&pmf, &c, &HcPoint::new(vec![1.5, 1.5]).unwrap()).unwrap();
        assert!(g.abs() < 1e-15);

        // U = X_1 at p = (1.5, 1.5): ln 2 (1 - 2/1.5) = -(1/3) ln 2.
        let g = hc_margin(&pmf, &proj(0, 2), &HcPoint::new(vec![1.5, 1.5]).unwrap()).unwrap();
        assert!((g + LN_2 / 3.0).abs() < 1e-12, "margin {g}");

        // Independent pair at p = (1,1): margin = I(X_1;X_2|U) >= 0.
        let pmf = independent_bits();
        let p = HcPoint::new(vec![1.0, 1.0]).unwrap();
        for seed in 0..10u64 {
            let mut rng = stream_rng(seed, 33);
            let ch = random_cell_channel(4, 3, &mut rng);
            let g = hc_margin(&pmf, &ch, &p).unwrap();
            let joint = joint_with_u(&pmf, &ch);
            let identity = joint
                .conditional_mutual_information(&[1], &[2], &[0])
                .unwrap();
            assert!((g - identity).abs() < 1e-9);
            assert!(g >= -1e-12);
        }
    }

    #[test]
    fn check_boundary_behaviour() {
        let pmf = correlated_bits();
        let cfg = SearchConfig {
            restarts: 12,
            iterations: 60,
            ..SearchConfig::with_seed(0)
        };

        // Hoelder boundary p = (2,2): holds up to search.
        let v = check_hypercontractive(&pmf, &HcPoint::new(vec![2.0, 2.0]).unwrap(), &cfg).unwrap();
        assert_eq!(v.status, HcStatus::HoldsUpToSearch);
        assert!(v.margin >= -VIOLATION_TOL);
        assert!(v.witness.is_none());

        // p = (1.8, 1.8): violated; the witness margin equals the U = X_1
        // value ln 2 (1 - 2/1.8).
        let p = HcPoint::new(vec![1.8, 1.8]).unwrap();
        let v = check_hypercontractive(&pmf, &p, &cfg).unwrap();
        assert_eq!(v.status, HcStatus::Violated);
        let expected = LN_2 * (1.0 - 2.0 / 1.8);
        assert!((v.margin - expected).abs() < 1e-9, "margin {}", v.margin);
        let w = v.witness.expect("violated verdicts carry a witness");
        let replay = hc_margin(&pmf, &w, &p).unwrap();
        assert!(replay < -VIOLATION_TOL);
        assert!((replay - v.margin).abs() < 1e-15);

        // Independent bits at p = (1,1): holds (chain-rule identity).
        let v = check_hypercontractive(
            &independent_bits(),
            &HcPoint::new(vec![1.0, 1.0]).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(v.status, HcStatus::HoldsUpToSearch);
    }

    #[test]
    fn verdict_monotone_in_exponents() {
        // If (p_1,...,p_m) holds then any coordinatewise-larger point holds:
        // margins only grow when 1/p_l shrink. Check via margins at a fixed
        // channel family.
        let pmf = correlated_bits();
        for seed in 0..6u64 {
            let mut rng = stream_rng(seed, 44);
            let ch = random_cell_channel(4, 3, &mut rng);
            let g_small = hc_margin(&pmf, &ch, &HcPoint::new(vec![1.6, 2.1]).unwrap()).unwrap();
            let g_large = hc_margin(&pmf, &ch, &HcPoint::new(vec![1.9, 2.4]).unwrap()).unwrap();
            assert!(g_large >= g_small - 1e-12);
        }
    }

    #[test]
    fn functional_examples() {
        let pmf = correlated_bits();

        // Constants: equality at 1.
        let ones = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let r = functional_check(&pmf, &HcPoint::new(vec![2.0, 2.0]).unwrap(), &ones).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-15);
        assert!((r.rhs - 1.0).abs() < 1e-12);
        assert!(r.satisfied);

        // Indicators of 0 at p = (2,2): equality at 0.5.
        let ind = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let r = functional_check(&pmf, &HcPoint::new(vec![2.0, 2.0]).unwrap(), &ind).unwrap();
        assert!((r.lhs - 0.5).abs() < 1e-15);
        assert!((r.rhs - 0.5).abs() < 1e-12);
        assert!(r.satisfied);

        // Same functions at p = (1.8, 1.8): violated.
        let r = functional_check(&pmf, &HcPoint::new(vec![1.8, 1.8]).unwrap(), &ind).unwrap();
        assert!((r.lhs - 0.5).abs() < 1e-15);
        let expected_rhs = 0.5f64.powf(1.0 / 1.8) * 0.5f64.powf(1.0 / 1.8);
        assert!((r.rhs - expected_rhs).abs() < 1e-12);
        assert!(!r.satisfied);
    }

    #[test]
    fn functional_and_channel_views_agree_across_boundary() {
        // On the perfectly-correlated family, random functional probes find
        // violations exactly when the channel search does.
        let pmf = correlated_bits();
        let cfg = SearchConfig {
            restarts: 10,
            iterations: 50,
            ..SearchConfig::with_seed(7)
        };
        for &q in &[1.5f64, 1.8, 1.95, 2.0, 2.2, 3.0] {
            let p = HcPoint::new(vec![q, q]).unwrap();
            let verdict = check_hypercontractive(&pmf, &p, &cfg).unwrap();
            let mut found_violation = false;
            let mut rng = stream_rng(91, q.to_bits());
            for _ in 0..10_000 {
                let fs: Vec<Vec<f64>> = (0..2)
                    .map(|_| (0..2).map(|_| rng.gen::<f64>()).collect())
                    .collect();
                let r = functional_check(&pmf, &p, &fs).unwrap();
                if !r.satisfied {
                    found_violation = true;
                    break;
                }
            }
            assert_eq!(
                verdict.status == HcStatus::Violated,
                found_violation,
                "q = {q}"
            );
        }
    }

    #[test]
    fn sdpi_examples() {
        let cfg = SearchConfig {
            restarts: 10,
            iterations: 80,
            ..SearchConfig::with_seed(0)
        };
        let s = sdpi_coefficient(&correlated_bits(), &cfg).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "correlated: {s}");

        let s = sdpi_coefficient(&independent_bits(), &cfg).unwrap();
        assert_eq!(s, 0.0);

        let s = sdpi_coefficient(&dsbs(0.1), &cfg).unwrap();
        assert!((s - 0.64).abs() < 0.02, "dsbs(0.1): {s}");
    }

    #[test]
    fn zero_rate_bound_examples() {
        let p11 = HcPoint::new(vec![1.0, 1.0]).unwrap();
        let b = zero_rate_tv_bound(100, &[2, 2], &p11).unwrap();
        assert!((b - 0.79).abs() < 1e-12, "bound {b}");

        // |W_l| = |K|: no communication constraint, vacuous.
        let b = zero_rate_tv_bound(64, &[64, 64], &p11).unwrap();
        assert!(b < 0.0);

        // m = 1 is always vacuous: the lone receiver shares everything.
        let p1 = HcPoint::new(vec![1.0]).unwrap();
        let b = zero_rate_tv_bound(16, &[1], &p1).unwrap();
        assert!((b + 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_margin_examples() {
        let p11 = HcPoint::new(vec![1.0, 1.0]).unwrap();
        let m = zero_rate_margin(100.0, &[2.0, 2.0], &p11).unwrap();
        let expected = 100.0f64.ln() - 2.0 * (100.0f64.ln() - 2.0f64.ln());
        assert!((m - expected).abs() < 1e-12);
        assert!((m + 3.219).abs() < 1e-3);

        // |W_l| = |K|: margin is ln|K| > 0.
        let m = zero_rate_margin(100.0, &[100.0, 100.0], &p11).unwrap();
        assert!((m - 100.0f64.ln()).abs() < 1e-12);

        // Rate form: passing exp(nR) and dividing by n recovers
        // R - sum (1/p_l)(R - R_l).
        let (n, r, r1, r2) = (7.0f64, 0.9f64, 0.4f64, 0.2f64);
        let p = HcPoint::new(vec![1.5, 2.5]).unwrap();
        let m = zero_rate_margin((n * r).exp(), &[(n * r1).exp(), (n * r2).exp()], &p).unwrap();
        let direct = r - (r - r1) / 1.5 - (r - r2) / 2.5;
        assert!((m / n - direct).abs() < 1e-12);
    }

    #[test]
    fn bound_vacuity_matches_margin_sign_on_scaling_family() {
        // Exponential families |K| = 2^(na), |W_l| = 2^(nb): the bound is
        // non-vacuous in the tail exactly when the per-letter margin is
        // negative.
        let p = HcPoint::new(vec![1.0, 1.0]).unwrap();
        for &(a, b) in &[(3.0f64, 1.0f64), (1.0, 0.45), (1.0, 0.6)] {
            let margin =
                zero_rate_margin(2.0f64.powf(a), &[2.0f64.powf(b), 2.0f64.powf(b)], &p).unwrap();
            let n = 16u32;
            let k = (2.0f64.powf(a * n as f64) as u64).max(2);
            let w = (2.0f64.powf(b * n as f64) as u64).max(1);
            let bound = zero_rate_tv_bound(k, &[w, w], &p).unwrap();
            if margin < -1e-9 {
                assert!(bound > 0.0, "a={a} b={b}: margin {margin}, bound {bound}");
            } else if margin > 1e-9 {
                assert!(bound < 0.0, "a={a} b={b}: margin {margin}, bound {bound}");
            }
        }
    }

    #[test]
    fn bound_nonincreasing_in_message_sizes() {
        let p = HcPoint::new(vec![1.0, 1.0]).unwrap();
        let b1 = zero_rate_tv_bound(100, &[2, 2], &p).unwrap();
        let b2 = zero_rate_tv_bound(100, &[4, 2], &p).unwrap();
        let b3 = zero_rate_tv_bound(100, &[4, 4], &p).unwrap();
        assert!(b1 >= b2 && b2 >= b3);
    }
}
