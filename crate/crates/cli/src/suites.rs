use std::time::Instant;

use heisenberg_hsp::cg::{branch, cg_unitary, character_defect};
use heisenberg_hsp::field::FieldPrime;
use heisenberg_hsp::group::{elements, GroupElement, SubgroupId};
use heisenberg_hsp::linalg::{max_abs_diff, sample_index, CMatrix, QuantumState, C64};
use heisenberg_hsp::pgm::{compare_to_cg, pgm_state, pgm_two_copy_via_quad};
use heisenberg_hsp::pipeline::{
    exact_success_distribution, expected_label, good_branch_closed_form,
    label_probability_closed_form, Pipeline, PipelineTrace, SolveConfig,
};
use heisenberg_hsp::reps::{IrrepLabel, Irreps, Side};
use heisenberg_hsp::states::{
    hidden_subgroup_state, hidden_subgroup_state_from_regular, hscp_state, irrep_distribution,
    two_copy_hscp_state, weak_fourier_sample, HiddenSubgroupInstance, TWO_COPY_DEFAULT_LIMIT,
};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{Command, ExperimentConfig, Mode};
use crate::report::{Aggregate, ChiSquare, Check, ExactRates, ExperimentReport, StageRates};
use crate::ExperimentError;

/// Fidelity threshold for the PGM equivalence.
pub const PGM_FIDELITY_TOLERANCE: f64 = 1e-10;

/// Runs one command. The result depends only on the configuration, apart
/// from `wall_time_seconds`.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let start = Instant::now();
    let (trials, mut aggregate) = match config.command {
        Command::RepVerify => (Vec::new(), rep_verify(config)),
        Command::StateVerify => (Vec::new(), state_verify(config)),
        Command::CgVerify => (Vec::new(), cg_verify(config)),
        Command::SampleIrreps => (Vec::new(), sample_irreps(config)),
        Command::SolveHscp => solve(config, false)?,
        Command::SolveHsp => solve(config, true)?,
        Command::PgmCompare => (Vec::new(), pgm_compare(config)?),
        Command::ExactDist => (Vec::new(), exact_dist(config)?),
    };
    aggregate.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(ExperimentReport {
        config: config.clone(),
        trials,
        aggregate,
    })
}

/// Every element for `p ≤ 5`; otherwise the three generators and a seeded
/// sample.
fn element_sample(config: &ExperimentConfig) -> Vec<GroupElement> {
    let prime = config.field();
    let all = elements(prime);
    if prime.get() <= 5 {
        return all;
    }
    let mut out = vec![
        GroupElement::new(prime, 1, 0, 0),
        GroupElement::new(prime, 0, 1, 0),
        GroupElement::new(prime, 0, 0, 1),
    ];
    let mut rng = config.trial_rng(0);
    out.extend((0..24).map(|_| all[rng.random_range(0..all.len())]));
    out
}

fn rep_verify(config: &ExperimentConfig) -> Aggregate {
    let prime = config.field();
    let tol = config.tolerance;
    let ir = Irreps::shared(prime);
    let sample = element_sample(config);
    let all = elements(prime);

    let (mut hom, mut anti, mut trace) = (0.0f64, 0.0f64, 0.0f64);
    for &label in ir.labels() {
        let d: Vec<CMatrix> = sample
            .iter()
            .map(|g| ir.irrep_matrix(label, g).expect("same prime").matrix())
            .collect();
        let s: Vec<CMatrix> = sample
            .iter()
            .map(|g| ir.display_matrix(label, g).expect("same prime").matrix())
            .collect();
        for (a, g) in sample.iter().enumerate() {
            let chi = ir.character(label, g).expect("same prime");
            trace = trace.max((d[a].trace() - chi).norm());
            for (b, h) in sample.iter().enumerate() {
                let gh = ir.irrep_matrix(label, &(*g * *h)).expect("same prime").matrix();
                let hg = ir.display_matrix(label, &(*h * *g)).expect("same prime").matrix();
                hom = hom.max(max_abs_diff(&(&d[a] * &d[b]), &gh));
                anti = anti.max(max_abs_diff(&(&s[a] * &s[b]), &hg));
            }
        }
    }

    let table: Vec<Vec<_>> = ir
        .labels()
        .iter()
        .map(|&l| all.iter().map(|g| ir.character(l, g).expect("same prime")).collect())
        .collect();
    let order = ir.group_order() as f64;
    let mut ortho = 0.0f64;
    for (a, ra) in table.iter().enumerate() {
        for (b, rb) in table.iter().enumerate() {
            let inner: C64 =
                ra.iter().zip(rb).map(|(x, y)| x * y.conj()).sum::<C64>() / order;
            let want = if a == b { 1.0 } else { 0.0 };
            ortho = ortho.max((inner.re - want).abs().max(inner.im.abs()));
        }
    }
    let dim_sum: usize = ir.labels().iter().map(|l| l.dim() * l.dim()).sum();

    let q = ir.qft_matrix();
    let q_dag = q.matrix().adjoint();
    let mut blocks = [0.0f64; 2];
    for g in &sample {
        for (slot, side) in [Side::Left, Side::Right].into_iter().enumerate() {
            let qr = q.compose(&ir.regular_rep(side, g)).expect("same dimension").matrix();
            let got = qr * &q_dag;
            blocks[slot] = blocks[slot].max(max_abs_diff(&got, &ir.fourier_block_form(side, g)));
        }
    }

    Aggregate::from_checks(vec![
        Check::zero("irrep_homomorphism", hom, tol),
        Check::zero("display_form_reverses_products", anti, tol),
        Check::zero("character_is_trace", trace, tol),
        Check::zero("character_orthogonality", ortho, tol),
        Check::new("dimension_sum", dim_sum as f64, order, 0.0),
        Check::zero("qft_unitarity", q.unitarity_defect(), tol),
        Check::zero("qft_left_regular_blocks", blocks[0], tol),
        Check::zero("qft_right_regular_blocks", blocks[1], tol),
    ])
}

fn state_verify(config: &ExperimentConfig) -> Aggregate {
    let prime = config.field();
    let tol = config.tolerance;
    let ir = Irreps::shared(prime);
    let order = ir.group_order() as f64;
    let catalogue = SubgroupId::catalogue(prime);

    let per_subgroup: Vec<[f64; 5]> = catalogue
        .par_iter()
        .map(|s| {
            let rho = hidden_subgroup_state(prime, s);
            let reg = hidden_subgroup_state_from_regular(prime, s);
            let coset = max_abs_diff(rho.entries(), reg.entries());
            let tr = (rho.trace().re - 1.0).abs();
            let ratio = s.order(prime) as f64 / order;
            let square = max_abs_diff(&(rho.entries() * rho.entries()), &rho.entries().scale(ratio));
            let (mut prob, mut cond) = (0.0f64, 0.0f64);
            if prime.get() <= 5 {
                let dense = weak_fourier_sample(&ir, s);
                let closed = irrep_distribution(&ir, s);
                for (a, b) in dense.iter().zip(&closed) {
                    prob = prob.max((a.probability - b.probability).abs());
                    if let (Some(x), Some(y)) = (&a.conditional_state, &b.conditional_state) {
                        cond = cond.max(max_abs_diff(x.entries(), y.entries()));
                    }
                }
            }
            [coset, tr, square, prob, cond]
        })
        .collect();
    let worst = |k: usize| per_subgroup.iter().map(|r| r[k]).fold(0.0, f64::max);

    let mut conj = 0.0f64;
    let families: Vec<Vec<SubgroupId>> = prime
        .residues()
        .map(|i| prime.residues().map(|j| SubgroupId::A(i, j)).collect())
        .chain(std::iter::once(
            prime.residues().map(SubgroupId::AInfinity).collect(),
        ))
        .collect();
    for family in &families {
        let base = hscp_state(prime, &family[0]);
        for s in &family[1..] {
            conj = conj.max(max_abs_diff(base.entries(), hscp_state(prime, s).entries()));
        }
    }

    let mut checks = vec![
        Check::zero("coset_form_equals_regular_form", worst(0), tol),
        Check::zero("unit_trace", worst(1), tol),
        Check::zero("square_is_scaled_state", worst(2), tol),
        Check::zero("hscp_state_constant_on_conjugacy_classes", conj, tol),
    ];
    if prime.get() <= 5 {
        checks.push(Check::zero("dense_and_character_probabilities_agree", worst(3), tol));
        checks.push(Check::zero("dense_and_character_states_agree", worst(4), tol));
    }
    if prime.get() == 3 {
        let mut inv = 0.0f64;
        for s in [SubgroupId::A(prime.one(), prime.zero()), SubgroupId::Trivial, SubgroupId::Center] {
            let two = two_copy_hscp_state(prime, &s, TWO_COPY_DEFAULT_LIMIT).expect("p = 3 fits");
            for g in elements(prime) {
                let r = ir.regular_rep(Side::Right, &g);
                let rr = r.tensor(&r);
                let moved = rr.conjugate_matrix(two.entries()).expect("same dimension");
                inv = inv.max(max_abs_diff(&moved, two.entries()));
            }
        }
        checks.push(Check::zero("two_copy_hscp_state_right_invariant", inv, tol));
    }
    Aggregate::from_checks(checks)
}

fn cg_verify(config: &ExperimentConfig) -> Aggregate {
    let prime = config.field();
    let tol = config.tolerance;
    let ir = Irreps::shared(prime);
    let labels = ir.labels().to_vec();
    let mut pairs = Vec::new();
    if prime.get() == 3 {
        for &a in &labels {
            for &b in &labels {
                pairs.push((a, b));
            }
        }
    } else {
        // every pair with a p-dimensional factor, plus a seeded sample of
        // one-dimensional pairs
        for &a in &labels {
            for &b in &labels {
                if a.is_pdim() || b.is_pdim() {
                    pairs.push((a, b));
                }
            }
        }
        let ones: Vec<_> = labels.iter().copied().filter(|l| !l.is_pdim()).collect();
        let mut rng = config.trial_rng(1);
        for _ in 0..16 {
            let a = ones[rng.random_range(0..ones.len())];
            let b = ones[rng.random_range(0..ones.len())];
            pairs.push((a, b));
        }
    }
    let sample = element_sample(config);

    let results: Vec<[f64; 4]> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let dec = cg_unitary(&ir, a, b);
            let mut conj = 0.0f64;
            let mut chars = 0.0f64;
            for g in &sample {
                conj = conj.max(max_abs_diff(
                    &dec.conjugated_product(&ir, g),
                    &dec.declared_blocks(&ir, g),
                ));
                chars = chars.max(character_defect(&ir, a, b, g));
            }
            let declared: usize = branch(a, b).iter().map(|e| e.multiplicity * e.output.dim()).sum();
            let segments: usize = dec.segments.iter().map(|s| s.len()).sum();
            let dims = (a.dim() * b.dim()) as f64;
            let accounting = (declared as f64 - dims).abs().max((segments as f64 - dims).abs());
            [conj, chars, accounting, dec.unitary.unitarity_defect()]
        })
        .collect();
    let worst = |k: usize| results.iter().map(|r| r[k]).fold(0.0, f64::max);
    Aggregate::from_checks(vec![
        Check::new("pairs_checked", pairs.len() as f64, pairs.len() as f64, 0.0),
        Check::zero("conjugation_gives_declared_blocks", worst(0), tol),
        Check::zero("character_accounting", worst(1), tol),
        Check::zero("dimension_accounting", worst(2), 0.0),
        Check::zero("unitarity", worst(3), tol),
    ])
}

/// `p_{a,b} = 1/p²` on `a + b i = 0` and `p_k = 1/p` for `A_{i,j}`;
/// `d_μ²/p³` for the trivial subgroup.
fn closed_form_irrep_probability(prime: FieldPrime, s: &SubgroupId, label: IrrepLabel) -> Option<f64> {
    let p = prime.get() as f64;
    match (s, label) {
        (SubgroupId::A(i, _), IrrepLabel::OneDim(a, b)) => {
            Some(if (a + b * *i).is_zero() { 1.0 / (p * p) } else { 0.0 })
        }
        (SubgroupId::A(..), IrrepLabel::PDim(_)) => Some(1.0 / p),
        (SubgroupId::Trivial, l) => Some((l.dim() * l.dim()) as f64 / (p * p * p)),
        _ => None,
    }
}

fn sample_irreps(config: &ExperimentConfig) -> Aggregate {
    let prime = config.field();
    let tol = config.tolerance;
    let ir = Irreps::shared(prime);
    let s = config.subgroup_id();
    let dist = irrep_distribution(&ir, &s);
    let probs: Vec<f64> = dist.iter().map(|o| o.probability).collect();
    let mut checks = vec![Check::zero(
        "total_probability",
        (probs.iter().sum::<f64>() - 1.0).abs(),
        tol,
    )];
    let closed: Option<Vec<f64>> = dist
        .iter()
        .map(|o| closed_form_irrep_probability(prime, &s, o.label))
        .collect();
    if let Some(closed) = &closed {
        let dev = probs.iter().zip(closed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        checks.push(Check::zero("closed_form", dev, tol));
    }
    if prime.get() <= 5 {
        let dense = weak_fourier_sample(&ir, &s);
        let dev = dense
            .iter()
            .zip(&probs)
            .map(|(a, b)| (a.probability - b).abs())
            .fold(0.0, f64::max);
        checks.push(Check::zero("dense_route_agrees", dev, tol));
    }
    match config.mode {
        Mode::Exact => {
            let mut agg = Aggregate::from_checks(checks);
            agg.distribution = Some(probs);
            agg
        }
        Mode::MonteCarlo => {
            let draws: Vec<usize> = (0..config.trials)
                .into_par_iter()
                .map(|t| sample_index(&probs, &mut config.trial_rng(t as u64)))
                .collect();
            let mut counts = vec![0usize; probs.len()];
            for d in draws {
                counts[d] += 1;
            }
            let chi = ChiSquare::from_counts(&counts, &probs);
            checks.push(Check::new("support", chi.is_some() as u8 as f64, 1.0, 0.0));
            let pdim: usize = dist
                .iter()
                .zip(&counts)
                .filter(|(o, _)| o.label.is_pdim())
                .map(|(_, c)| c)
                .sum();
            let pdim_exact: f64 = dist.iter().filter(|o| o.label.is_pdim()).map(|o| o.probability).sum();
            checks.push(Check::binomial("p_dimensional_rate", pdim, config.trials, pdim_exact));
            let mut agg = Aggregate::from_checks(checks);
            let n = config.trials.max(1) as f64;
            agg.distribution = Some(counts.iter().map(|&c| c as f64 / n).collect());
            agg.chi_square = chi;
            agg
        }
    }
}

/// Stage reached by one repetition, coarsest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Rejected,
    U2Failed,
    WrongLabel,
    Unverified,
    Verified,
}

fn stage(trace: &PipelineTrace, prime: FieldPrime, true_i: Option<u32>) -> Stage {
    if !trace.good_branch(prime) {
        Stage::Rejected
    } else if !trace.u2_succeeded {
        Stage::U2Failed
    } else if true_i.is_some() && trace.recovered_i != true_i {
        Stage::WrongLabel
    } else if !trace.verified {
        Stage::Unverified
    } else {
        Stage::Verified
    }
}

fn solve(config: &ExperimentConfig, full: bool) -> Result<(Vec<PipelineTrace>, Aggregate), ExperimentError> {
    let prime = config.field();
    let tol = config.tolerance;
    let s = config.subgroup_id();
    let pipe = Pipeline::new(HiddenSubgroupInstance::new(prime, s.clone()))?;
    let mode = config.u2_mode;
    let truth = match s {
        SubgroupId::A(i, j) => Some((i, j)),
        _ => None,
    };

    let good = pipe.good_branch_probability();
    let u2 = pipe.u2_success_probability(mode);
    let label = pipe.label_success_probability();
    let recover = truth.map(|(i, j)| pipe.recover_j_probability(i, j));
    let (one_shot, solve_prob) = match (full, truth) {
        (true, Some(_)) => {
            let q = pipe.one_shot_success_probability(mode);
            (q, Some(1.0 - (1.0 - q).powi(config.max_repetitions as i32)))
        }
        (true, None) => (0.0, Some(1.0)),
        (false, Some(_)) => (good * u2 * label.expect("A instance"), None),
        (false, None) => (0.0, None),
    };
    let exact = ExactRates {
        good_branch: good,
        u2_success: u2,
        label_correct: label,
        recover_j: recover,
        one_shot,
        solve: solve_prob,
    };

    let mut checks = vec![Check::new(
        "exact_good_branch_rate",
        good,
        good_branch_closed_form(prime),
        tol,
    )];
    let expected_u2 = match truth {
        Some(_) => mode.gate_probability(),
        None => {
            let p = prime.get() as f64;
            (p + 1.0) / (2.0 * p) * mode.gate_probability()
        }
    };
    checks.push(Check::new("exact_u2_success_rate", u2, expected_u2, tol));
    if let Some(l) = label {
        checks.push(Check::new(
            "exact_label_probability",
            l,
            label_probability_closed_form(prime),
            tol,
        ));
    }
    if let (true, Some(r)) = (full, recover) {
        checks.push(Check::new(
            "one_shot_factorizes",
            one_shot,
            good * u2 * label.expect("A instance") * r,
            tol,
        ));
    }

    if config.mode == Mode::Exact {
        let mut agg = Aggregate::from_checks(checks);
        agg.exact = Some(exact);
        return Ok((Vec::new(), agg));
    }

    let true_i = truth.map(|(i, _)| i.value());
    let solve_cfg = SolveConfig {
        u2_mode: mode,
        max_repetitions: config.max_repetitions,
    };
    // (first repetition, reported trace, solved correctly)
    let runs: Vec<(PipelineTrace, PipelineTrace, bool)> = (0..config.trials)
        .into_par_iter()
        .map(|t| -> Result<_, ExperimentError> {
            let mut rng = config.trial_rng(t as u64);
            if full {
                let sol = pipe.solve_hsp(&solve_cfg, &mut rng)?;
                let first = sol.traces[0];
                let last = *sol.traces.last().expect("at least one repetition");
                Ok((first, last, sol.subgroup == s))
            } else {
                let trace = pipe.run_trial(mode, &mut rng);
                let ok = true_i.is_some() && trace.good_branch(prime) && trace.recovered_i == true_i;
                Ok((trace, trace, ok))
            }
        })
        .collect::<Result<_, _>>()?;

    let n = runs.len();
    let stages: Vec<Stage> = runs.iter().map(|r| stage(&r.0, prime, true_i)).collect();
    let count = |f: &dyn Fn(Stage) -> bool| stages.iter().filter(|&&s| f(s)).count();
    let n_good = count(&|s| s > Stage::Rejected);
    let n_u2 = count(&|s| s > Stage::U2Failed);
    let n_label = count(&|s| s > Stage::WrongLabel);
    let successes = runs.iter().filter(|r| r.2).count();

    checks.push(Check::binomial("good_branch_rate", n_good, n, good));
    checks.push(Check::binomial("u2_success_rate", n_u2, n_good, u2));
    if let Some(l) = label {
        checks.push(Check::binomial("label_rate", n_label, n_u2, l));
    }
    let (cells, probs): (Vec<usize>, Vec<f64>) = match (truth, full) {
        (Some(_), true) => {
            let l = label.expect("A instance");
            let r = recover.expect("A instance");
            (
                vec![
                    n - n_good,
                    n_good - n_u2,
                    n_u2 - n_label,
                    n_label - count(&|s| s == Stage::Verified),
                    count(&|s| s == Stage::Verified),
                ],
                vec![
                    1.0 - good,
                    good * (1.0 - u2),
                    good * u2 * (1.0 - l),
                    good * u2 * l * (1.0 - r),
                    good * u2 * l * r,
                ],
            )
        }
        (Some(_), false) => {
            let l = label.expect("A instance");
            (
                vec![n - n_good, n_good - n_u2, n_u2 - n_label, n_label],
                vec![1.0 - good, good * (1.0 - u2), good * u2 * (1.0 - l), good * u2 * l],
            )
        }
        (None, _) => (
            vec![n - n_good, n_good - n_u2, n_u2],
            vec![1.0 - good, good * (1.0 - u2), good * u2],
        ),
    };
    let chi = ChiSquare::from_counts(&cells, &probs);
    checks.push(Check::new("support", chi.is_some() as u8 as f64, 1.0, 0.0));
    if full {
        let first_ok = runs
            .iter()
            .filter(|r| r.0.verified && truth.is_some() && stage(&r.0, prime, true_i) == Stage::Verified)
            .count();
        checks.push(Check::binomial("one_shot_success_rate", first_ok, n, one_shot));
        checks.push(Check::binomial("solve_success_rate", successes, n, solve_prob.expect("full")));
        let false_accepts = runs
            .iter()
            .filter(|r| r.1.verified && !r.2)
            .count();
        checks.push(Check::zero("false_verifications", false_accepts as f64, 0.0));
    } else if truth.is_some() {
        checks.push(Check::binomial("one_shot_success_rate", successes, n, one_shot));
    }

    let mut agg = Aggregate::from_checks(checks);
    agg.successes = Some(successes);
    agg.success_rate = (n > 0).then(|| successes as f64 / n as f64);
    agg.branch_rates = Some(StageRates {
        good_branch: if n == 0 { 0.0 } else { n_good as f64 / n as f64 },
        u2_success: (n_good > 0).then(|| n_u2 as f64 / n_good as f64),
        label_correct: (truth.is_some() && n_u2 > 0).then(|| n_label as f64 / n_u2 as f64),
    });
    agg.exact = Some(exact);
    agg.chi_square = chi;
    Ok((runs.into_iter().map(|r| r.1).collect(), agg))
}

fn pgm_compare(config: &ExperimentConfig) -> Result<Aggregate, ExperimentError> {
    let prime = config.field();
    let mut params = Vec::new();
    for i in prime.residues() {
        for k1 in prime.units() {
            for k2 in prime.units() {
                if !(k1 + k2).is_zero() {
                    params.push((i, k1, k2));
                }
            }
        }
    }
    let mut checks: Vec<Check> = params
        .par_iter()
        .map(|&(i, k1, k2)| {
            let f = compare_to_cg(prime, i, k1, k2)?;
            Ok(Check::at_least(
                format!("fidelity i={i} k1={k1} k2={k2}"),
                f,
                1.0 - PGM_FIDELITY_TOLERANCE,
            ))
        })
        .collect::<Result<_, ExperimentError>>()?;

    let mut rng = config.trial_rng(0);
    let mut quad = 0.0f64;
    for _ in 0..64 {
        let mut r = || prime.residue(rng.random_range(0..prime.get()) as i64);
        let (i, j, y1, z1, y2, z2) = (r(), r(), r(), r(), r(), r());
        let prod = pgm_state(i, j, y1, z1).tensor(&pgm_state(i, j, y2, z2));
        let via = pgm_two_copy_via_quad(i, j, (y1, z1), (y2, z2));
        quad = quad.max((prod.amplitudes() - via.amplitudes()).camax());
    }
    checks.push(Check::zero("quadratic_variables_reproduce_product", quad, config.tolerance));
    Ok(Aggregate::from_checks(checks))
}

fn exact_dist(config: &ExperimentConfig) -> Result<Aggregate, ExperimentError> {
    let prime = config.field();
    let SubgroupId::A(i, _) = config.subgroup_id() else {
        unreachable!("validated in config")
    };
    let expect = label_probability_closed_form(prime);
    let mut checks = Vec::new();
    let mut first = None;
    for k1 in prime.units() {
        for k2 in prime.units() {
            if (k1 + k2).is_zero() {
                continue;
            }
            let dist = exact_success_distribution(prime, i, k1, k2)?;
            let a = expected_label(i, k1, k2)?;
            checks.push(Check::new(
                format!("peak k1={k1} k2={k2} x={a}"),
                dist[a.as_usize()],
                expect,
                config.tolerance,
            ));
            first.get_or_insert(dist);
        }
    }
    let mut agg = Aggregate::from_checks(checks);
    agg.distribution = first;
    Ok(agg)
}
