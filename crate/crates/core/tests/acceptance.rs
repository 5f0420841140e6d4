//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//! Tolerances and runtime limits are pinned in the assertions.

use rand::Rng;
use skgen::cli::{dispatch, SourceFile};
use skgen::hyperc::{self, HcPoint, HcStatus};
use skgen::oneshot::{self, OneShotParams};
use skgen::probkit::{Channel, DensitySpectrum, JointPmf};
use skgen::protosim::{self, SimBudget};
use skgen::regions::{self, AuxScheme, SourceSpec};
use skgen::search::{stream_rng, SearchConfig};
use std::time::Instant;

const LN_2: f64 = std::f64::consts::LN_2;

fn criterion(name: &str, limit_secs: Option<f64>, body: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            if let Some(lim) = limit_secs {
                if elapsed > lim {
                    println!("acceptance {name}: FAIL runtime {elapsed:.1}s exceeds {lim}s");
                    panic!("{name}: runtime {elapsed:.1}s exceeds limit {lim}s");
                }
            }
            println!("acceptance {name}: PASS ({elapsed:.2}s) {detail}");
        }
        Err(msg) => {
            println!("acceptance {name}: FAIL {msg}");
            panic!("{name}: {msg}");
        }
    }
}

/// Omniscient source of two independent fair bits.
fn two_fair_bits() -> SourceSpec {
    let pmf = JointPmf::from_fn(vec![4, 2, 2], |idx| {
        if idx[0] == idx[1] * 2 + idx[2] {
            0.25
        } else {
            0.0
        }
    })
    .unwrap();
    SourceSpec::new(2, pmf, true).unwrap()
}

fn two_fair_bits_doc() -> SourceFile {
    let mut pmf = vec![0.0; 16];
    for x1 in 0..2 {
        for x2 in 0..2 {
            pmf[((x1 * 2 + x2) * 2 + x1) * 2 + x2] = 0.25;
        }
    }
    SourceFile {
        name: Some("two-fair-coins".into()),
        m: 2,
        z_size: 4,
        x_sizes: vec![2, 2],
        omniscient: true,
        pmf,
    }
}

/// Z fair bit, X_1 = BSC(delta)(Z).
fn bsc_source(delta: f64) -> SourceSpec {
    let pmf = JointPmf::from_fn(vec![2, 2], |idx| {
        if idx[0] == idx[1] {
            0.5 * (1.0 - delta)
        } else {
            0.5 * delta
        }
    })
    .unwrap();
    SourceSpec::new(1, pmf, false).unwrap()
}

/// Z = X_1 fair bit, U = Z, S_1 constant.
fn noiseless_setup() -> (SourceSpec, AuxScheme) {
    let source = bsc_source(0.0);
    let aux = AuxScheme {
        q_u_given_z: Channel::identity(2),
        q_s_given_uz: vec![Channel::constant(vec![2, 2], 1)],
    };
    (source, aux)
}

fn random_source(seed: u64) -> SourceSpec {
    let mut rng = stream_rng(seed, 1000);
    let m = 1 + (rng.gen::<u64>() % 2) as usize;
    let z = 2 + (rng.gen::<u64>() % 3) as usize;
    let mut sizes = vec![z];
    for _ in 0..m {
        sizes.push(2 + (rng.gen::<u64>() % 2) as usize);
    }
    let probs = skgen::search::random_simplex(&mut rng, sizes.iter().product());
    SourceSpec::new(m, JointPmf::new(sizes, probs).unwrap(), false).unwrap()
}

fn ok_if(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

#[test]
fn criterion_01_xor_helper_example() {
    criterion("c1 xor-helper", Some(60.0), || {
        // CLI route: region maximize with budgets (0, 1) bits, default search.
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let src_path = dir.path().join("two-fair-coins.json");
        std::fs::write(
            &src_path,
            serde_json::to_string(&two_fair_bits_doc()).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        let argv: Vec<String> = [
            "skgen",
            "region",
            "maximize",
            "--source",
            src_path.to_str().unwrap(),
            "--budgets",
            "0,1",
            "--seed",
            "0",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let report = dispatch(&argv).map_err(|e| e.to_string())?;
        let key_rate_bits = report.payload["key_rate"].as_f64().unwrap();
        ok_if(
            key_rate_bits >= 0.98,
            format!("maximize reached only {key_rate_bits} bits"),
        )?;

        // Library route: the U = X_1 point is exactly (1, 0, 1) bits.
        let source = two_fair_bits();
        let u_proj = Channel::deterministic(vec![2, 2], 2, |idx| idx[0]).unwrap();
        let point = regions::omniscient_point(&source, &u_proj).unwrap();
        let tol = 1e-9 * LN_2;
        ok_if(
            (point.key_rate - LN_2).abs() < tol
                && point.comm_rates[0].abs() < tol
                && (point.comm_rates[1] - LN_2).abs() < tol,
            format!("U = X_1 point off: {point:?}"),
        )?;
        Ok(format!("maximize R = {key_rate_bits:.4} bits"))
    });
}

#[test]
fn criterion_02_unconstrained_capacity_reached() {
    criterion("c2 unconstrained-capacity", Some(120.0), || {
        let mut worst: f64 = 0.0;
        for seed in 0..10u64 {
            let source = random_source(seed);
            let m = source.receivers();
            let budget = (0..m)
                .map(|l| source.z_entropy_given_x(l))
                .fold(0.0f64, f64::max)
                + 1e-9;
            let cfg = SearchConfig::with_seed(seed);
            let (point, aux) = regions::maximize_key_rate(&source, &vec![budget; m], &cfg).unwrap();
            let cap = regions::unconstrained_capacity(&source);
            let gap_bits = (point.key_rate - cap).abs() / LN_2;
            worst = worst.max(gap_bits);
            ok_if(
                gap_bits <= 1e-6,
                format!(
                    "seed {seed}: found {} vs capacity {cap} (gap {gap_bits} bits)",
                    point.key_rate
                ),
            )?;
            // The returned point re-verifies from the returned scheme.
            let replay = regions::achievable_point(&source, &aux).unwrap();
            ok_if(
                (replay.key_rate - point.key_rate).abs() < 1e-12,
                format!("seed {seed}: replay mismatch"),
            )?;
        }
        Ok(format!("10 sources, worst gap {worst:.2e} bits"))
    });
}

#[test]
fn criterion_03_one_way_reduction() {
    criterion("c3 one-way-reduction", None, || {
        let mut checked = 0;
        for (i, &delta) in [0.05, 0.11, 0.2, 0.35, 0.45].iter().enumerate() {
            let source = bsc_source(delta);
            for j in 0..10u64 {
                let u_size = 2 + (j % 3) as usize;
                let mut rng = stream_rng(7000 + i as u64 * 17 + j, 2);
                let mut rows = Vec::new();
                for _ in 0..2 {
                    rows.extend(skgen::search::random_simplex(&mut rng, u_size));
                }
                let q_u = Channel::new(vec![2], u_size, rows).unwrap();
                let aux = AuxScheme {
                    q_u_given_z: q_u.clone(),
                    q_s_given_uz: vec![Channel::constant(vec![u_size, 2], 1)],
                };
                let general = regions::achievable_point(&source, &aux).unwrap();
                let one_way = regions::one_way_point(&source, &q_u).unwrap();
                let tol = 1e-9 * LN_2;
                ok_if(
                    (general.key_rate - one_way.key_rate).abs() < tol
                        && (general.comm_rates[0] - one_way.comm_rates[0]).abs() < tol,
                    format!("delta {delta}, trial {j}: {general:?} vs {one_way:?}"),
                )?;
                checked += 1;
            }
        }
        Ok(format!("{checked} channel instances"))
    });
}

#[test]
fn criterion_04_cr_key_coincidence() {
    criterion("c4 cr-key-coincidence", None, || {
        let source = two_fair_bits();
        let mut low_rate_cases = 0;
        for seed in 0..12u64 {
            let mut rng = stream_rng(400 + seed, 5);
            let u_size = 2 + (seed % 3) as usize;
            let mut rows = Vec::new();
            for _ in 0..4 {
                rows.extend(skgen::search::random_simplex(&mut rng, u_size));
            }
            let q_u_x = Channel::new(vec![2, 2], u_size, rows).unwrap();
            let q_u_z = q_u_x.reshape_inputs(vec![4]).unwrap();
            let om = regions::omniscient_point(&source, &q_u_x).unwrap();
            let cr = regions::cr_point(&source, &q_u_z).unwrap();
            let min_h = LN_2; // H(X_l) = ln 2 for both receivers
            if om.key_rate <= min_h + 1e-12 {
                low_rate_cases += 1;
            }
            for l in 0..2 {
                ok_if(
                    (om.comm_rates[l] - cr.comm_rates[l]).abs() < 1e-9 * LN_2,
                    format!(
                        "seed {seed} receiver {l}: key {} vs cr {}",
                        om.comm_rates[l], cr.comm_rates[l]
                    ),
                )?;
            }
        }
        ok_if(
            low_rate_cases > 0,
            "no instance with R <= min H(X_l)".into(),
        )?;
        Ok(format!(
            "12 channels, {low_rate_cases} in the coincidence regime"
        ))
    });
}

/// Dense-grid reference for the covering residual: direct tail sums on a
/// uniform gamma grid plus the atom values themselves.
fn grid_covering(spectrum: &DensitySpectrum, size: u128, points: usize) -> f64 {
    let atoms = spectrum.atoms();
    let lo = atoms.first().unwrap().0 - 5.0;
    let hi = atoms.last().unwrap().0 + 5.0;
    let sqrt_size = (size as f64).sqrt();
    let eval = |g: f64| -> f64 {
        let tail: f64 = atoms.iter().filter(|&&(v, _)| v > g).map(|&(_, p)| p).sum();
        tail + (0.5 * g).exp() / (2.0 * sqrt_size)
    };
    let mut best = 1.0f64;
    for k in 0..=points {
        best = best.min(eval(lo + (hi - lo) * k as f64 / points as f64));
    }
    for &(v, _) in atoms {
        best = best.min(eval(v));
    }
    best
}

fn grid_decoding(spectrum: &DensitySpectrum, competitors: u128, points: usize) -> f64 {
    if competitors == 0 {
        return 0.0;
    }
    let atoms = spectrum.atoms();
    let c = (competitors as f64).ln();
    let lo = atoms.first().unwrap().0 - 5.0;
    let hi = atoms.last().unwrap().0 + 5.0;
    let eval = |t: f64| -> f64 {
        let cdf: f64 = atoms
            .iter()
            .filter(|&&(v, _)| v <= t)
            .map(|&(_, p)| p)
            .sum();
        cdf + (c - t).exp()
    };
    let mut best = 1.0f64;
    for k in 0..=points {
        best = best.min(eval(lo + (hi - lo) * k as f64 / points as f64));
    }
    for &(v, _) in atoms {
        best = best.min(eval(v - 1e-9));
    }
    best
}

#[test]
fn criterion_05_one_shot_bound_exactness() {
    criterion("c5 one-shot-exactness", None, || {
        // Frozen worked values.
        let ln2_atom = DensitySpectrum::point(LN_2);
        let t = oneshot::soft_covering_term(&ln2_atom, 4);
        ok_if(
            (t - 2.0f64.sqrt() / 4.0).abs() < 1e-15,
            format!("T worked value: {t}"),
        )?;
        let eps = oneshot::decoding_error_term(&ln2_atom, 1);
        ok_if(
            (eps - 0.5).abs() < 1e-15,
            format!("epsilon worked value: {eps}"),
        )?;

        // 100 seeded spectra against the dense-grid reference.
        let mut worst: f64 = 0.0;
        for seed in 0..100u64 {
            let mut rng = stream_rng(seed, 50);
            let k = 1 + (rng.gen::<u64>() % 8) as usize;
            let raw: Vec<(f64, f64)> = (0..k)
                .map(|_| (rng.gen_range(-3.0..3.0), rng.gen_range(0.05..1.0)))
                .collect();
            let total: f64 = raw.iter().map(|&(_, p)| p).sum();
            let spec =
                DensitySpectrum::from_atoms(raw.into_iter().map(|(v, p)| (v, p / total)).collect())
                    .unwrap();
            let size = 1u128 << (seed % 24);
            let scan = oneshot::soft_covering_term(&spec, size);
            let grid = grid_covering(&spec, size, 100_000);
            worst = worst.max((scan - grid).abs());
            ok_if(
                (scan - grid).abs() < 1e-6,
                format!("seed {seed}: covering scan {scan} vs grid {grid}"),
            )?;

            let competitors = (seed % 11) as u128;
            let scan = oneshot::decoding_error_term(&spec, competitors);
            let grid = grid_decoding(&spec, competitors, 100_000);
            worst = worst.max((scan - grid).abs());
            ok_if(
                (scan - grid).abs() < 1e-6,
                format!("seed {seed}: decoding scan {scan} vs grid {grid}"),
            )?;
        }
        Ok(format!("100 spectra, worst grid gap {worst:.2e}"))
    });
}

#[test]
fn criterion_06_simulator_ground_truth() {
    criterion("c6 simulator-ground-truth", Some(300.0), || {
        // Noiseless instance, via the CLI as well as the library.
        let (source, aux) = noiseless_setup();
        let params = OneShotParams::new(vec![2, 1], vec![1]).unwrap();
        let per = protosim::PerLetter::new(&source, &aux).unwrap();
        let seed = (0..64)
            .find(|&s| {
                let cb =
                    protosim::build_codebook(&per, &params, 1, s, &SimBudget::default()).unwrap();
                cb.u_word(0)[0] != cb.u_word(1)[0]
            })
            .expect("an injective seed exists");
        let exact =
            protosim::exact_evaluate(&source, &aux, &params, 1, seed, &SimBudget::default())
                .unwrap();
        ok_if(
            exact.errors[0].abs() < 1e-12
                && exact.leakages[0].abs() < 1e-12
                && exact.joint_tv.abs() < 1e-12,
            format!("noiseless instance: {exact:?}"),
        )?;

        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let src_path = dir.path().join("copy.json");
        std::fs::write(
            &src_path,
            serde_json::to_string(&SourceFile {
                name: None,
                m: 1,
                z_size: 2,
                x_sizes: vec![2],
                omniscient: true,
                pmf: vec![0.5, 0.0, 0.0, 0.5],
            })
            .unwrap(),
        )
        .map_err(|e| e.to_string())?;
        let aux_path = dir.path().join("aux.json");
        std::fs::write(
            &aux_path,
            serde_json::json!({
                "u_size": 2,
                "q_u_given_z": [[1.0, 0.0], [0.0, 1.0]],
                "s_channels": [ { "s_size": 1, "rows": vec![vec![1.0]; 4] } ],
            })
            .to_string(),
        )
        .map_err(|e| e.to_string())?;
        let argv: Vec<String> = [
            "skgen",
            "simulate",
            "exact",
            "--source",
            src_path.to_str().unwrap(),
            "--aux",
            aux_path.to_str().unwrap(),
            "--i-sizes",
            "2,1",
            "--j-sizes",
            "1",
            "--n",
            "1",
            "--codebook-seed",
            &seed.to_string(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let report = dispatch(&argv).map_err(|e| e.to_string())?;
        ok_if(
            report.payload["errors"][0].as_f64().unwrap().abs() < 1e-12
                && report.payload["leakages"][0].as_f64().unwrap().abs() < 1e-12,
            "CLI exact simulation of the noiseless instance not perfect".into(),
        )?;

        // Monte Carlo within 4 standard errors of exact on 10 instances.
        let budget = SimBudget {
            max_table_cells: 100_000_000,
            max_states: 200_000_000,
        };
        let mut instances: Vec<(SourceSpec, AuxScheme, OneShotParams, usize)> = Vec::new();
        for (k, &delta) in [0.1, 0.25].iter().enumerate() {
            let source = bsc_source(delta);
            let aux = AuxScheme {
                q_u_given_z: Channel::identity(2),
                q_s_given_uz: vec![Channel::constant(vec![2, 2], 1)],
            };
            for n in 1..=3usize {
                instances.push((
                    source.clone(),
                    aux.clone(),
                    OneShotParams::new(vec![2, 2], vec![1 + k as u64]).unwrap(),
                    n,
                ));
            }
        }
        {
            let source = SourceSpec::new(1, JointPmf::uniform(vec![2, 2]), false).unwrap();
            let aux = AuxScheme {
                q_u_given_z: Channel::identity(2),
                q_s_given_uz: vec![Channel::constant(vec![2, 2], 1)],
            };
            for n in [2usize, 4] {
                instances.push((
                    source.clone(),
                    aux.clone(),
                    OneShotParams::new(vec![2, 2], vec![2]).unwrap(),
                    n,
                ));
            }
        }
        {
            let (source, aux) = noiseless_setup();
            for n in [2usize, 4] {
                instances.push((
                    source.clone(),
                    aux.clone(),
                    OneShotParams::new(vec![2, 4], vec![2]).unwrap(),
                    n,
                ));
            }
        }
        ok_if(
            instances.len() >= 10,
            format!("only {} instances", instances.len()),
        )?;
        for (idx, (source, aux, params, n)) in instances.iter().enumerate() {
            let cb_seed = idx as u64;
            let exact =
                protosim::exact_evaluate(source, aux, params, *n, cb_seed, &budget).unwrap();
            let mc = protosim::run_monte_carlo(
                source,
                aux,
                params,
                *n,
                10_000,
                cb_seed,
                9000 + idx as u64,
                &budget,
            )
            .unwrap();
            for l in 0..source.receivers() {
                let diff = (mc.errors[l] - exact.errors[l]).abs();
                ok_if(
                    diff <= 4.0 * mc.error_std_errs[l],
                    format!(
                        "instance {idx} receiver {l}: |{} - {}| > 4 x {}",
                        mc.errors[l], exact.errors[l], mc.error_std_errs[l]
                    ),
                )?;
            }
        }
        Ok(format!("{} MC instances within 4 SE", instances.len()))
    });
}

#[test]
fn criterion_07_one_shot_bound_soundness() {
    criterion("c7 bound-soundness", None, || {
        struct Instance {
            name: &'static str,
            source: SourceSpec,
            aux: AuxScheme,
            params: OneShotParams,
            n: usize,
        }
        let copy2 = {
            let pmf = JointPmf::from_fn(vec![2, 2, 2], |idx| {
                if idx[0] == idx[1] && idx[1] == idx[2] {
                    0.5
                } else {
                    0.0
                }
            })
            .unwrap();
            SourceSpec::new(2, pmf, false).unwrap()
        };
        let instances = vec![
            Instance {
                name: "m1-n4",
                source: noiseless_setup().0,
                aux: noiseless_setup().1,
                params: OneShotParams::new(vec![2, 64], vec![16]).unwrap(),
                n: 4,
            },
            Instance {
                name: "m1-n6",
                source: noiseless_setup().0,
                aux: noiseless_setup().1,
                params: OneShotParams::new(vec![2, 256], vec![64]).unwrap(),
                n: 6,
            },
            Instance {
                name: "m2-n4",
                source: copy2.clone(),
                aux: AuxScheme {
                    q_u_given_z: Channel::identity(2),
                    q_s_given_uz: vec![
                        Channel::constant(vec![2, 2], 1),
                        Channel::constant(vec![2, 2], 1),
                    ],
                },
                params: OneShotParams::new(vec![2, 32, 32], vec![16, 16]).unwrap(),
                n: 4,
            },
        ];
        let budget = SimBudget {
            max_table_cells: 100_000_000,
            max_states: 2_000_000_000,
        };
        let mut lines = Vec::new();
        for inst in &instances {
            let m = inst.source.receivers();
            let bounds =
                oneshot::bounds_for_blocklength(&inst.source, &inst.aux, &inst.params, inst.n)
                    .unwrap();
            let mut avg_err = vec![0.0f64; m];
            let seeds = 20u64;
            for seed in 0..seeds {
                let r = protosim::exact_evaluate(
                    &inst.source,
                    &inst.aux,
                    &inst.params,
                    inst.n,
                    seed,
                    &budget,
                )
                .unwrap();
                for l in 0..m {
                    avg_err[l] += r.errors[l] / seeds as f64;
                }
            }
            for l in 0..m {
                if bounds.error_raw[l] >= 1.0 {
                    continue; // vacuous, nothing to check
                }
                if avg_err[l] <= bounds.error_raw[l] {
                    lines.push(format!(
                        "{} l={l}: err {:.4} <= bound {:.4}",
                        inst.name, avg_err[l], bounds.error_raw[l]
                    ));
                    continue;
                }
                // Exceedance: diagnose with the larger competing-codeword
                // count I_0 * prod_{j>l} I_j - 1 in the decoding residual.
                let spectra = oneshot::bound_spectra(&inst.source, &inst.aux).unwrap();
                let mut eps_variant = 0.0f64;
                for l2 in 0..m {
                    let mut competitors: u128 = inst.params.i_sizes()[0] as u128;
                    for j in (l2 + 2)..=m {
                        competitors *= inst.params.i_sizes()[j] as u128;
                    }
                    let block = spectra.us_x[l2]
                        .iid_sum(inst.n, oneshot::MAX_BLOCK_ATOMS)
                        .unwrap();
                    eps_variant =
                        eps_variant.max(oneshot::decoding_error_term(&block, competitors - 1));
                }
                let variant_bound = 2.0 * m as f64 * (eps_variant + bounds.t + bounds.t_list[l]);
                let diag = format!(
                    "{} l={l}: err {:.4} EXCEEDS stated bound {:.4}; competing-count \
                     variant bound {:.4} (I_0 vs I_0 * prod_(j>l) I_j diagnostic)",
                    inst.name, avg_err[l], bounds.error_raw[l], variant_bound
                );
                println!("acceptance c7 diagnostic: {diag}");
                if avg_err[l] > variant_bound {
                    return Err(diag);
                }
                lines.push(diag);
            }
        }
        Ok(lines.join("; "))
    });
}

#[test]
fn criterion_08_hypercontractivity_boundary() {
    criterion("c8 hc-boundary", None, || {
        let correlated = JointPmf::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let independent = JointPmf::uniform(vec![2, 2]);
        let cfg = SearchConfig::with_seed(0);

        let v22 = hyperc::check_hypercontractive(
            &correlated,
            &HcPoint::new(vec![2.0, 2.0]).unwrap(),
            &cfg,
        )
        .unwrap();
        ok_if(
            v22.status == HcStatus::HoldsUpToSearch,
            format!("p=(2,2) reported margin {}", v22.margin),
        )?;

        let p18 = HcPoint::new(vec![1.8, 1.8]).unwrap();
        let v18 = hyperc::check_hypercontractive(&correlated, &p18, &cfg).unwrap();
        let expected = LN_2 * (1.0 - 2.0 / 1.8);
        ok_if(
            v18.status == HcStatus::Violated,
            "p=(1.8,1.8) not flagged".into(),
        )?;
        ok_if(
            (v18.margin - expected).abs() < 1e-9,
            format!("witness margin {} vs {expected}", v18.margin),
        )?;
        let witness = v18.witness.ok_or("missing witness")?;
        let replay = hyperc::hc_margin(&correlated, &witness, &p18).unwrap();
        ok_if(
            (replay - v18.margin).abs() < 1e-12,
            "witness does not reproduce its margin".into(),
        )?;

        let v11 = hyperc::check_hypercontractive(
            &independent,
            &HcPoint::new(vec![1.0, 1.0]).unwrap(),
            &cfg,
        )
        .unwrap();
        ok_if(
            v11.status == HcStatus::HoldsUpToSearch,
            format!("independent p=(1,1) reported margin {}", v11.margin),
        )?;

        // Random functional probes agree with the verdicts on both sides.
        for (q, should_violate) in [(2.0f64, false), (1.8f64, true)] {
            let p = HcPoint::new(vec![q, q]).unwrap();
            let mut found = false;
            let mut rng = stream_rng(777, q.to_bits());
            for _ in 0..10_000 {
                let fs: Vec<Vec<f64>> = (0..2)
                    .map(|_| (0..2).map(|_| rng.gen::<f64>()).collect())
                    .collect();
                let r = hyperc::functional_check(&correlated, &p, &fs).unwrap();
                if !r.satisfied {
                    found = true;
                    break;
                }
            }
            ok_if(
                found == should_violate,
                format!("functional probes at q={q}: found={found}"),
            )?;
        }
        Ok(format!(
            "boundary margins {:.6} / {:.6}",
            v22.margin, v18.margin
        ))
    });
}

#[test]
fn criterion_09_zero_rate_converse() {
    criterion("c9 zero-rate-converse", None, || {
        let p11 = HcPoint::new(vec![1.0, 1.0]).unwrap();
        let bound = hyperc::zero_rate_tv_bound(100, &[2, 2], &p11).unwrap();
        ok_if(
            (bound - 0.79).abs() < 1e-12,
            format!("worked value: {bound}"),
        )?;

        // End-to-end: simulate omniscient independent fair bits with
        // matching |K| and |W_l| = 1; half the exact TV dominates the bound
        // whenever the bound is positive.
        let source = two_fair_bits();
        let mut checked = 0;
        for &i0 in &[4u64, 8] {
            let aux = AuxScheme {
                q_u_given_z: Channel::identity(4),
                q_s_given_uz: vec![
                    Channel::constant(vec![4, 4], 1),
                    Channel::constant(vec![4, 4], 1),
                ],
            };
            let params = OneShotParams::new(vec![i0, 1, 1], vec![1, 1]).unwrap();
            let w1 = params.message_size(0).unwrap() as u64;
            let w2 = params.message_size(1).unwrap() as u64;
            let bound = hyperc::zero_rate_tv_bound(i0, &[w1, w2], &p11).unwrap();
            if bound <= 0.0 {
                continue;
            }
            for n in 1..=2usize {
                for seed in 0..5u64 {
                    let r = protosim::exact_evaluate(
                        &source,
                        &aux,
                        &params,
                        n,
                        seed,
                        &SimBudget::default(),
                    )
                    .unwrap();
                    ok_if(
                        0.5 * r.joint_tv >= bound - 1e-9,
                        format!(
                            "K={i0} n={n} seed={seed}: half TV {} below bound {bound}",
                            0.5 * r.joint_tv
                        ),
                    )?;
                    checked += 1;
                }
            }
        }
        ok_if(checked > 0, "no positive-bound instances".into())?;
        Ok(format!("{checked} simulated instances dominate the bound"))
    });
}

#[test]
fn criterion_10_sdpi_sanity() {
    criterion("c10 sdpi", Some(60.0), || {
        let cfg = SearchConfig::with_seed(0);
        let correlated = JointPmf::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let s = hyperc::sdpi_coefficient(&correlated, &cfg).unwrap();
        ok_if((s - 1.0).abs() < 1e-9, format!("correlated: {s}"))?;

        let independent = JointPmf::uniform(vec![2, 2]);
        let s = hyperc::sdpi_coefficient(&independent, &cfg).unwrap();
        ok_if(s == 0.0, format!("independent: {s}"))?;

        let dsbs = JointPmf::from_fn(vec![2, 2], |idx| if idx[0] == idx[1] { 0.45 } else { 0.05 })
            .unwrap();
        let s = hyperc::sdpi_coefficient(&dsbs, &cfg).unwrap();
        ok_if((s - 0.64).abs() <= 0.02, format!("dsbs(0.1): {s}"))?;
        Ok(format!("dsbs coefficient {s:.4}"))
    });
}
