//! Oracles shared by the oracle tests and the acceptance suite.
#![allow(dead_code)]

use credit_pricer::agent::actor::squashed_log_prob;
use credit_pricer::agent::importance_logsumexp;
use credit_pricer::baselines::{expected_profit, optimize_price};
use credit_pricer::market::{
    behavioral_prices, default_truth, generate_applications, sample_accepts_and_build_dataset, BehavioralRule,
    DemandFamily, LoanApplication, MarketConfig, TruthModel, TruthParams,
};
use credit_pricer::nn::{Activation, Matrix, Network};
use credit_pricer::response::fit_logistic;
use credit_pricer::reward::{total_payment, RewardParams, MAX_RATE, MIN_RATE};
use credit_pricer::market::FeatureSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn apps(n: usize, seed: u64) -> Vec<LoanApplication> {
    generate_applications(&MarketConfig {
        n_applications: n,
        seed,
        ..Default::default()
    })
    .unwrap()
}

/// Logistic truth with the default coefficients and a typical calibrated shift.
pub fn logistic_truth() -> TruthModel {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut t = TruthModel::new(default_truth(DemandFamily::Logistic, 3, 1.0, 1, &mut rng).unwrap());
    t.intercept_shift = 3.9;
    t
}

/// Max relative error between backprop and central differences, over every
/// parameter and input of one random network.
pub fn gradient_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.random_range(1..6);
    let hidden: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(1..9)).collect();
    let act = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Relu };
    let output = rng.random_range(1..4);
    let mut net = Network::<f64>::mlp(input, &hidden, output, act, 0.0, &mut rng).unwrap();
    // nonzero biases keep ReLU pre-activations off the kink at exactly 0
    let jittered: Vec<f64> = net.parameters().iter().map(|p| p + rng.random_range(-0.1..0.1)).collect();
    net.set_parameters(&jittered).unwrap();
    let batch = 3;
    let x: Vec<f64> = (0..batch * input).map(|_| rng.random_range(-2.0..2.0)).collect();
    let w: Vec<f64> = (0..batch * output).map(|_| rng.random_range(-1.0..1.0)).collect();
    let xm = Matrix::from_vec(batch, input, x.clone()).unwrap();
    let loss = |n: &Network<f64>, xm: &Matrix<f64>| -> f64 {
        n.predict(xm).unwrap().as_slice().iter().zip(&w).map(|(o, w)| o * w).sum()
    };
    let (_, cache) = net.forward_cached(&xm, &mut rng).unwrap();
    let (grads, gin) = net.backward(&cache, &Matrix::from_vec(batch, output, w.clone()).unwrap()).unwrap();
    let analytic = grads.flat();
    let params = net.parameters();
    let h = 1e-6;
    let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-4);
    // central difference, or None where the one-sided slopes disagree
    // (a ReLU kink inside the step)
    let numeric = |f0: f64, up: f64, down: f64| {
        let (fwd, bwd) = ((up - f0) / h, (f0 - down) / h);
        (rel(fwd, bwd) < 1e-2).then_some((up - down) / (2.0 * h))
    };
    let f0 = loss(&net, &xm);
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += h;
        let mut up = net.clone();
        up.set_parameters(&p).unwrap();
        p[i] -= 2.0 * h;
        let mut down = net.clone();
        down.set_parameters(&p).unwrap();
        if let Some(n) = numeric(f0, loss(&up, &xm), loss(&down, &xm)) {
            worst = worst.max(rel(analytic[i], n));
        }
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += h;
        let mut xn = x.clone();
        xn[i] -= h;
        let up = loss(&net, &Matrix::from_vec(batch, input, xp).unwrap());
        let down = loss(&net, &Matrix::from_vec(batch, input, xn).unwrap());
        if let Some(n) = numeric(f0, up, down) {
            worst = worst.max(rel(gin.as_slice()[i], n));
        }
    }
    worst
}

/// Total paid on a fully amortizing loan, found by bisecting the level
/// payment that clears the balance month by month.
pub fn amortized_total(amount: f64, apr: f64, term: u32) -> f64 {
    let r = apr / 1200.0;
    let residual = |pay: f64| {
        let mut bal = amount;
        for _ in 0..term {
            bal = bal * (1.0 + r) - pay;
        }
        bal
    };
    let (mut lo, mut hi) = (0.0, amount * (1.0 + r));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) * f64::from(term)
}

/// Max |closed form − amortization| over `n` random loans.
pub fn annuity_check(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let amount = rng.random_range(5_000.0..100_000.0);
            let apr = if rng.random_bool(0.05) { 0.0 } else { rng.random_range(0.1..15.0) };
            let term = rng.random_range(12..=84);
            (total_payment(amount, apr, term, 12).unwrap() - amortized_total(amount, apr, term)).abs()
        })
        .fold(0.0, f64::max)
}

/// `(max |argmax gap|, max objective shortfall)` of `optimize_price` against a
/// uniform grid of `points` rates, over `n` applications.
pub fn optimizer_check(n: usize, points: usize, seed: u64) -> (f64, f64) {
    let truth = logistic_truth();
    let reward = RewardParams::default();
    let step = (MAX_RATE - MIN_RATE) / (points - 1) as f64;
    let mut worst = (0.0f64, 0.0f64);
    for app in apps(n, seed) {
        let opt = optimize_price(&app, &truth, &reward, (MIN_RATE, MAX_RATE)).unwrap();
        let f_opt = expected_profit(&app, opt, &truth, &reward).unwrap();
        let (mut best, mut f_best) = (MIN_RATE, f64::NEG_INFINITY);
        for i in 0..points {
            let a = MIN_RATE + step * i as f64;
            let f = expected_profit(&app, a, &truth, &reward).unwrap();
            if f > f_best {
                best = a;
                f_best = f;
            }
        }
        worst.0 = worst.0.max((best - opt).abs());
        worst.1 = worst.1.max(f_best - f_opt);
    }
    worst
}

/// Same as [`optimizer_check`] but with the objective written out directly
/// (logit linear in rate, annuity with an integer power), fast enough for
/// million-point grids.
pub fn fast_optimizer_check(n: usize, points: usize, seed: u64) -> (f64, f64) {
    let truth = logistic_truth();
    let reward = RewardParams::default();
    let step = (MAX_RATE - MIN_RATE) / (points - 1) as f64;
    let mut worst = (0.0f64, 0.0f64);
    for app in apps(n, seed) {
        let offset = truth.logit(&app, 0.0);
        let slope = truth.logit(&app, 1.0) - offset;
        let k = app.term as i32;
        let total = |apr: f64| {
            let r = apr / 1200.0;
            if r == 0.0 {
                app.amount
            } else {
                app.amount * r / (1.0 - (1.0 + r).powi(-k)) * f64::from(app.term)
            }
        };
        let cc = total(app.prime_rate);
        let f = |apr: f64| {
            let p = 1.0 / (1.0 + (-(offset + slope * apr)).exp());
            p * ((1.0 - app.pd) * (total(apr) - cc) - app.pd * reward.lgd * cc)
        };
        let opt = optimize_price(&app, &truth, &reward, (MIN_RATE, MAX_RATE)).unwrap();
        let f_opt = expected_profit(&app, opt, &truth, &reward).unwrap();
        let (mut best, mut f_best) = (MIN_RATE, f64::NEG_INFINITY);
        for i in 0..points {
            let a = MIN_RATE + step * i as f64;
            let v = f(a);
            if v > f_best {
                best = a;
                f_best = v;
            }
        }
        worst.0 = worst.0.max((best - opt).abs());
        worst.1 = worst.1.max(f_best - f_opt);
    }
    worst
}

/// `|estimate − quadrature|` of the log-sum-exp estimator with `n` uniform
/// proposals for a random smooth Q on [−1, 1].
pub fn logsumexp_check(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
    let q = |a: f64| c[0] + c[1] * a + c[2] * a * a + c[3] * (3.0 * a).sin();
    let samples: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let qs: Vec<f64> = samples.iter().map(|a| q(*a)).collect();
    let est = importance_logsumexp(&qs, &vec![0.5f64.ln(); n]);
    let m = 20_000;
    let h = 2.0 / m as f64;
    let integral: f64 = (0..=m)
        .map(|i| {
            let a = -1.0 + h * i as f64;
            let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            w * q(a).exp()
        })
        .sum::<f64>()
        * h
        / 3.0;
    (est - integral.ln()).abs()
}

/// Max over bins of |empirical − integrated| probability of the squashed
/// Gaussian, from `n` draws.
pub fn log_prob_check(mean: f64, log_std: f64, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bins = 40;
    let mut counts = vec![0usize; bins];
    for _ in 0..n {
        let e: f64 = StandardNormal.sample(&mut rng);
        let a = (mean + log_std.exp() * e).tanh();
        counts[(((a + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let width = 2.0 / bins as f64;
    let sigma = log_std.exp();
    (0..bins)
        .map(|b| {
            // integrate the density over the bin in pre-squash coordinates,
            // where the saturated ends stay finite
            let lo = (-1.0 + width * b as f64).atanh().max(mean - 12.0 * sigma);
            let hi = (-1.0 + width * (b + 1) as f64).atanh().min(mean + 12.0 * sigma);
            if hi <= lo {
                return (counts[b] as f64 / n as f64).abs();
            }
            let k = 2000;
            let h = (hi - lo) / k as f64;
            let p: f64 = (0..k)
                .map(|i| {
                    let u: f64 = lo + h * (i as f64 + 0.5);
                    let jac = 1.0 - u.tanh().powi(2);
                    squashed_log_prob(u, mean, log_std).exp() * jac * h
                })
                .sum();
            (p - counts[b] as f64 / n as f64).abs()
        })
        .fold(0.0, f64::max)
}

/// Max |β̂ − β| of a plain logistic fit on `n` rows drawn from the logistic
/// truth, intercept included.
pub fn irls_recovery(n: usize, seed: u64) -> f64 {
    let apps = apps(n, seed);
    let prices = behavioral_prices(&apps, &BehavioralRule::default(), 1.0, seed);
    let truth = logistic_truth();
    let reward = RewardParams::default();
    let ds = sample_accepts_and_build_dataset(&apps, &prices, &truth, &reward, seed).unwrap();
    let fit = fit_logistic(&ds.rows, FeatureSpec::PLAIN, 0.0).unwrap();
    let TruthParams::Logistic { demand } = &truth.params else {
        unreachable!()
    };
    let mut worst = (fit.intercept - (demand.intercept + truth.intercept_shift)).abs();
    for (b, t) in fit.coefficients.iter().zip(&demand.coefficients) {
        worst = worst.max((b - t).abs());
    }

    worst
}
