//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary so the lines print even when every criterion passes.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use credit_pricer::baselines::{opt_policy, PricingPolicy};
use credit_pricer::eval::{alpha_ablation, AblationRow, EvalReport};
use credit_pricer::market::{build_market, to_transitions, DemandFamily, Market, Split, StateEncoder};
use credit_pricer::pipeline::{build_evaluators, evaluate_policies, run_pipeline, train_policy, uplift_range, TrainResult};
use credit_pricer::response::{PriceResponse, ResponseVariant};
use credit_pricer::reward::{expected_reward, MAX_RATE, MIN_RATE};
use credit_pricer::RunConfig;
use common::*;

const SEEDS: [u64; 3] = [333, 42, 3];

/// Criteria expected to fail at this scale; see the README.
const KNOWN_UNMET: [&str; 3] = ["1e", "3", "5"];

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Ledger(Vec<Outcome>);

impl Ledger {
    fn record(&mut self, id: &'static str, pass: bool, detail: String) {
        let status = if pass { "PASS" } else { "FAIL" };
        let known = if !pass && KNOWN_UNMET.contains(&id) { " (known)" } else { "" };
        println!("{status} {id}{known}: {detail}");
        self.0.push(Outcome { id, pass, detail });
    }
}

fn timed<T>(label: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    eprintln!("[{label}: {:.1}s]", start.elapsed().as_secs_f64());
    out
}

fn pct(reports: &[EvalReport], policy: &str, evaluator: &str) -> f64 {
    reports
        .iter()
        .find(|r| r.policy == policy && r.evaluator == evaluator)
        .and_then(|r| r.percent_of_optimal)
        .expect("policy evaluated under the truth")
}

fn mapd_of(reports: &[EvalReport], policy: &str) -> f64 {
    reports.iter().find(|r| r.policy == policy).expect("policy evaluated").mapd
}

struct SeedRun {
    market: Market,
    cql: TrainResult,
    reports: Vec<EvalReport>,
}

/// Trains CQL and π_Opt on one market and evaluates both under the truth.
fn seed_run(family: DemandFamily, seed: u64) -> SeedRun {
    let mut cfg = RunConfig::default().for_seed(seed);
    cfg.market.demand_family = family;
    let market = build_market(&cfg.market, &cfg.reward).unwrap();
    let cql = timed(&format!("cql {family} {seed}"), || train_policy(&cfg, &market.dataset).unwrap());
    let opt = opt_policy(&market.dataset, ResponseVariant::Logistic, &cfg.response.neural, &cfg.reward).unwrap();
    let test = market.dataset.rows_in(Split::Test);
    let truth: Vec<Box<dyn PriceResponse>> = vec![Box::new(market.truth.clone())];
    let policies: [&dyn PricingPolicy; 2] = [&cql.policy, &opt];
    let (_, reports) = evaluate_policies(&cfg, family.name(), seed, &policies, test, Some(&market.truth), &truth).unwrap();
    SeedRun { market, cql, reports }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean of the first and last `w` values of `xs`.
fn ends(xs: &[f64], w: usize) -> (f64, f64) {
    (mean(&xs[..w]), mean(&xs[xs.len() - w..]))
}

fn oracles(ledger: &mut Ledger) {
    let worst = timed("1a", || (0..100).map(gradient_check).fold(0.0, f64::max));
    ledger.record("1a", worst < 1e-4, format!("MLP gradient check, 100 nets, max rel. error {worst:.2e} (tol 1e-4)"));

    let worst = timed("1b", || annuity_check(1000, 1));
    ledger.record("1b", worst < 1e-6, format!("annuity vs amortization, 1000 loans, max error {worst:.2e} (tol 1e-6)"));

    let (gap, shortfall) = timed("1c", || fast_optimizer_check(1000, 1_000_001, 5));
    ledger.record(
        "1c",
        gap <= 0.005 && shortfall <= 0.01,
        format!("optimize_price vs 10^6-point grid, 1000 apps, argmax gap {gap:.5} APR, objective gap ${shortfall:.5}"),
    );

    let worst = timed("1d", || (0..10).map(|s| logsumexp_check(10_000, s)).fold(0.0, f64::max));
    ledger.record("1d", worst < 0.05, format!("log-sum-exp estimator vs quadrature, N=10^4, max error {worst:.4} (tol 0.05)"));

    let errs: Vec<f64> = timed("1e", || [21, 22, 23].iter().map(|s| irls_recovery(50_000, *s)).collect());
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    ledger.record(
        "1e",
        worst <= 0.05,
        format!("IRLS on 50k rows, max coefficient error {worst:.3} over 3 draws (tol 0.05)"),
    );
}

fn main() -> ExitCode {
    let mut ledger = Ledger::default();
    oracles(&mut ledger);

    // logistic market: criteria 2, 4, 5, 7
    let cfg = RunConfig::default();
    let kappa = cfg.cql.alpha_threshold;
    let mut c2 = [true; 4];
    let mut c2_detail: Vec<String> = Vec::new();
    let mut c5 = true;
    let mut c5_detail = Vec::new();
    let mut c7 = true;
    let mut c7_detail = Vec::new();
    let mut c4 = true;
    let mut c4_detail = Vec::new();
    let mut loss_ok = true;
    let mut loss_detail = Vec::new();
    let mut peak_ok = true;
    for seed in SEEDS {
        let run = seed_run(DemandFamily::Logistic, seed);
        let truth_id = run.market.truth.id();
        let (beh, cql, opt) = (
            pct(&run.reports, "behavioral", &truth_id),
            pct(&run.reports, "cql", &truth_id),
            pct(&run.reports, "opt", &truth_id),
        );
        let (m_cql, m_opt) = (mapd_of(&run.reports, "cql"), mapd_of(&run.reports, "opt"));
        c2[0] &= opt >= 0.97;
        c2[1] &= beh < cql && beh < opt;
        c2[2] &= cql >= 0.80 && cql - beh >= 0.05;
        c2[3] &= m_cql < m_opt;
        c2_detail.push(format!(
            "seed {seed}: beh {:.1}% cql {:.1}% opt {:.1}%, MAPD cql {:.1}% opt {:.1}%",
            100.0 * beh,
            100.0 * cql,
            100.0 * opt,
            100.0 * m_cql,
            100.0 * m_opt
        ));

        // five fitted evaluators, no truth
        let scfg = cfg.for_seed(seed);
        let evaluators = timed("sweep fits", || build_evaluators(&scfg, &run.market.dataset, None).unwrap());
        let opt_policy =
            opt_policy(&run.market.dataset, ResponseVariant::Logistic, &scfg.response.neural, &scfg.reward).unwrap();
        let test = run.market.dataset.rows_in(Split::Test);
        let policies: [&dyn PricingPolicy; 2] = [&run.cql.policy, &opt_policy];
        let (_, sweep) = evaluate_policies(&scfg, "logistic", seed, &policies, test, None, &evaluators).unwrap();
        let (w_cql, w_opt) = (
            uplift_range(&sweep, "cql").unwrap().width(),
            uplift_range(&sweep, "opt").unwrap().width(),
        );
        c5 &= w_cql < w_opt;
        c5_detail.push(format!("seed {seed}: cql {:.1} pts, opt {:.1} pts", 100.0 * w_cql, 100.0 * w_opt));

        let gap = run.cql.conservative_gap;
        c7 &= gap <= kappa;
        c7_detail.push(format!("seed {seed}: {gap:.3}"));

        // first-epoch loss trend, 20-step windows at either end
        let per_epoch = run.market.dataset.rows_in(Split::Train).len().div_ceil(scfg.cql.batch_size);
        let first = &run.cql.metrics[..per_epoch];
        let critic: Vec<f64> = first.iter().map(|m| m.critic_mse).collect();
        let actor: Vec<f64> = first.iter().map(|m| m.actor_loss).collect();
        let (c0, c1) = ends(&critic, 20);
        let (a0, a1) = ends(&actor, 20);
        loss_ok &= c1 < c0 && a1 < a0;
        loss_detail.push(format!("seed {seed}: critic {c0:.4}->{c1:.4}, actor {a0:.3}->{a1:.3}"));
        loss_ok &= run.cql.metrics.iter().all(|m| m.critic_loss.is_finite() && m.actor_loss.is_finite());

        for row in test {
            let f: Vec<f64> = (0..=1000)
                .map(|i| {
                    let a = MIN_RATE + (MAX_RATE - MIN_RATE) * i as f64 / 1000.0;
                    let p = run.market.truth.accept_probability(&row.app, a);
                    expected_reward(&row.app, a, p, &scfg.reward).unwrap()
                })
                .collect();
            let up: Vec<bool> = f.windows(2).filter(|w| w[1] != w[0]).map(|w| w[1] > w[0]).collect();
            peak_ok &= up.windows(2).filter(|s| s[0] != s[1]).count() <= 1;
        }

        // fixed-α ablation on the first 10k test rows of the same market
        let train_rows = run.market.dataset.rows_in(Split::Train);
        let encoder = StateEncoder::fit(train_rows).unwrap();
        let transitions = to_transitions(train_rows, &encoder).unwrap();
        let table = timed(&format!("ablation {seed}"), || {
            alpha_ablation::<f32>(
                &transitions,
                &encoder,
                test,
                &scfg.ablation_alphas,
                &[seed],
                &scfg.cql,
                &run.market.truth,
                &scfg.reward,
            )
            .unwrap()
        });
        let mut rows: Vec<&AblationRow> = table.seed_rows(seed);
        rows.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
        let lowest = rows[0];
        let highest_mapd = rows.iter().all(|r| r.mapd <= lowest.mapd);
        let lowest_reward = rows.iter().all(|r| r.cumulative_reward >= lowest.cumulative_reward);
        let inversions = rows.windows(2).filter(|w| w[1].mapd > w[0].mapd).count();
        c4 &= highest_mapd && lowest_reward && inversions <= 1;
        let cells: Vec<String> = rows
            .iter()
            .map(|r| format!("a={} mapd {:.1}% ret {:.0}", r.alpha, 100.0 * r.mapd, r.cumulative_reward))
            .collect();
        c4_detail.push(format!("seed {seed}: {}", cells.join(", ")));
        eprintln!("{}", c2_detail.last().unwrap());
    }
    ledger.record("2a", c2[0], format!("pi_Opt >= 97% of optimal | {}", c2_detail.join("; ")));
    ledger.record("2b", c2[1], "pi_beta below both pi_CQL and pi_Opt on every seed".into());
    ledger.record("2c", c2[2], "pi_CQL >= 80% of optimal and >= pi_beta + 5 pts on every seed".into());
    ledger.record("2d", c2[3], "MAPD(pi_CQL) < MAPD(pi_Opt) on every seed".into());

    // segmented market: criterion 3
    let mut c3 = true;
    let mut c3_detail = Vec::new();
    for seed in SEEDS {
        let run = seed_run(DemandFamily::Segmented, seed);
        let id = run.market.truth.id();
        let (cql, opt) = (pct(&run.reports, "cql", &id), pct(&run.reports, "opt", &id));
        c3 &= cql >= opt - 0.02;
        c3_detail.push(format!("seed {seed}: cql {:.1}% opt {:.1}%", 100.0 * cql, 100.0 * opt));
    }
    ledger.record("3", c3, format!("segmented, pi_CQL >= pi_Opt - 2 pts | {}", c3_detail.join("; ")));
    ledger.record("4", c4, format!("alpha ablation | {}", c4_detail.join("; ")));
    ledger.record("5", c5, format!("uplift range across 5 evaluators, CQL narrower | {}", c5_detail.join("; ")));

    // determinism of the whole pipeline on a small config
    let mut small = RunConfig::default();
    small.market.n_applications = 3000;
    small.cql.n_epochs = 2;
    small.seeds = vec![7];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    timed("6", || {
        run_pipeline(&small, a.path()).unwrap();
        run_pipeline(&small, b.path()).unwrap();
    });
    let same = ["report.csv", "summary.md", "seed_7/train/metrics.csv", "seed_7/data/dataset.csv"]
        .iter()
        .all(|f| std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap());
    ledger.record("6", same, "two full pipeline runs give identical reports, metrics and data".into());

    ledger.record("7", c7, format!("conservative gap <= kappa = {kappa} | {}", c7_detail.join("; ")));

    println!(
        "{} invariant: losses fall over the first epoch, all finite | {}",
        if loss_ok { "PASS" } else { "FAIL" },
        loss_detail.join("; ")
    );
    println!(
        "{} invariant: expected reward single-peaked on every logistic test row",
        if peak_ok { "PASS" } else { "FAIL" }
    );

    let unexpected: Vec<&Outcome> = ledger.0.iter().filter(|o| !o.pass && !KNOWN_UNMET.contains(&o.id)).collect();
    let passed = ledger.0.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", ledger.0.len());
    if unexpected.is_empty() && loss_ok && peak_ok {
        ExitCode::SUCCESS
    } else {
        for o in unexpected {
            eprintln!("unexpected failure {}: {}", o.id, o.detail);
        }
        ExitCode::FAILURE
    }
}
