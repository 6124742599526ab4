//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! and enforcing its runtime budget.
//!
//! Run with:
//!   cargo test -p dimcon --test acceptance -- --nocapture

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dimcon::augment::{
    eda_augment, make_views, shuffle_tokens, AugmentStrategy, Thesaurus, ViewSource,
};
use dimcon::cli::{aggregate_trials, percentile};
use dimcon::datakit::{synth_generate, SynthSpec};
use dimcon::encoder::{
    backward, encode, encode_batch, project_batch, tokenize, EncoderDims, Mode, Model,
    ModelParams, Vocab,
};
use dimcon::losses::{
    barlow_twins_loss, simcse_loss, vicreg_loss, BarlowConfig, LossResult, SimCseConfig,
    VicRegConfig,
};
use dimcon::mathcore::{
    average_ranks, cosine_similarity, covariance, cross_correlation, spearman, RealMatrix,
};
use dimcon::metrics::{alignment_of, uniformity, uniformity_of};
use dimcon::trainer::{
    enumerate_trials, train, AugmentKind, Objective, SweepSpace, SweepStrategy, TrainConfig,
    TrainData, TrainOutcome,
};

/// Prints the criterion verdict; panicking before `pass()` prints FAIL.
struct Criterion {
    name: &'static str,
    start: Instant,
    limit: Duration,
    done: bool,
}

impl Criterion {
    fn start(name: &'static str, limit_secs: u64) -> Self {
        Self {
            name,
            start: Instant::now(),
            limit: Duration::from_secs(limit_secs),
            done: false,
        }
    }

    fn pass(mut self) {
        self.done = true;
        let elapsed = self.start.elapsed();
        if elapsed > self.limit {
            println!(
                "acceptance {}: FAIL (runtime {elapsed:.2?} over budget {:?})",
                self.name, self.limit
            );
            panic!("{} exceeded its runtime budget", self.name);
        }
        println!("acceptance {}: PASS ({elapsed:.2?})", self.name);
    }
}

impl Drop for Criterion {
    fn drop(&mut self) {
        if !self.done && std::thread::panicking() {
            println!("acceptance {}: FAIL", self.name);
        }
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RealMatrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect();
    RealMatrix::from_vec(rows, cols, data).unwrap()
}

/// Central finite differences against analytic loss gradients; elements with
/// |analytic| < 1e-8 compared absolutely.
fn check_loss_gradients<F>(
    za: &RealMatrix,
    zb: &RealMatrix,
    result: &LossResult,
    step: f64,
    max_rel: f64,
    f: F,
) where
    F: Fn(&RealMatrix, &RealMatrix) -> f64,
{
    for (which, z, grad, a_side) in [
        ("grad_a", za, &result.grad_a, true),
        ("grad_b", zb, &result.grad_b, false),
    ] {
        for r in 0..z.rows() {
            for c in 0..z.cols() {
                let mut plus = z.clone();
                plus.set(r, c, z.get(r, c) + step);
                let mut minus = z.clone();
                minus.set(r, c, z.get(r, c) - step);
                let (fp, fm) = if a_side {
                    (f(&plus, zb), f(&minus, zb))
                } else {
                    (f(za, &plus), f(za, &minus))
                };
                let fd = (fp - fm) / (2.0 * step);
                let an = grad.get(r, c);
                if an.abs() < 1e-8 {
                    assert!((fd - an).abs() < max_rel, "{which}[{r}][{c}]: {fd} vs {an}");
                } else {
                    let rel = (fd - an).abs() / an.abs();
                    assert!(rel < max_rel, "{which}[{r}][{c}]: {fd} vs {an} rel {rel}");
                }
            }
        }
    }
}

#[test]
fn criterion_01_gradient_correctness() {
    let c = Criterion::start("1 (loss gradients vs finite differences)", 30);
    let simcse_cfg = SimCseConfig { temperature: 0.05 };
    let barlow_cfg = BarlowConfig { lambda_bt: 0.0051 };
    let vicreg_cfg = VicRegConfig {
        lambda_i: 1.0,
        lambda_v: 25.0,
        lambda_c: 0.04,
        eps: 1e-4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(20240501);
    let mut checked = [0usize; 3];
    let mut batch_seed = 0u64;
    while checked.iter().any(|&c| c < 100) {
        batch_seed += 1;
        let mut brng = ChaCha8Rng::seed_from_u64(rng.gen::<u64>() ^ batch_seed);
        let za = random_matrix(&mut brng, 8, 16);
        let zb = random_matrix(&mut brng, 8, 16);

        if checked[0] < 100 {
            // the sharp temperature needs the larger step: at 1e-5 the
            // f64 roundoff in the loss difference dominates small elements
            let res = simcse_loss(&za, &zb, &simcse_cfg).unwrap();
            check_loss_gradients(&za, &zb, &res, 1e-4, 1e-4, |a, b| {
                simcse_loss(a, b, &simcse_cfg).unwrap().value
            });
            checked[0] += 1;
        }
        if checked[1] < 100 {
            let res = barlow_twins_loss(&za, &zb, &barlow_cfg).unwrap();
            check_loss_gradients(&za, &zb, &res, 1e-5, 1e-4, |a, b| {
                barlow_twins_loss(a, b, &barlow_cfg).unwrap().value
            });
            checked[1] += 1;
        }
        if checked[2] < 100 {
            // exclude hinge-kink neighborhoods: any C_ii + eps within 1e-6 of 1
            let near_kink = [&za, &zb].iter().any(|z| {
                let cov = covariance(z).unwrap();
                (0..z.cols()).any(|i| (cov.get(i, i) + vicreg_cfg.eps - 1.0).abs() < 1e-6)
            });
            if !near_kink {
                let res = vicreg_loss(&za, &zb, &vicreg_cfg).unwrap();
                check_loss_gradients(&za, &zb, &res, 1e-5, 1e-4, |a, b| {
                    vicreg_loss(a, b, &vicreg_cfg).unwrap().value
                });
                checked[2] += 1;
            }
        }
    }
    c.pass();
}

#[test]
fn criterion_02_analytic_loss_cases() {
    let c = Criterion::start("2 (analytic loss values)", 1);
    let orthogonal = RealMatrix::from_rows(&[
        vec![1.0, 1.0],
        vec![-1.0, 1.0],
        vec![1.0, -1.0],
        vec![-1.0, -1.0],
    ])
    .unwrap();

    let bt = barlow_twins_loss(&orthogonal, &orthogonal, &BarlowConfig { lambda_bt: 0.5 })
        .unwrap()
        .value;
    assert!(bt.abs() < 1e-12, "barlow on orthogonal views: {bt}");

    let vic_cfg = VicRegConfig {
        lambda_i: 1.0,
        lambda_v: 25.0,
        lambda_c: 1.0,
        eps: 1e-4,
    };
    let vic = vicreg_loss(&orthogonal, &orthogonal, &vic_cfg).unwrap().value;
    assert_eq!(vic, 0.0, "vicreg on orthogonal views: {vic}");

    let zeros = RealMatrix::zeros(4, 2);
    let collapse = vicreg_loss(&zeros, &zeros, &vic_cfg).unwrap().value;
    let expect = 2.0 * 25.0 * (1.0 - 1e-4_f64.sqrt());
    assert!(
        (collapse - expect).abs() < 1e-12 && (expect - 49.5).abs() < 1e-12,
        "vicreg collapse: {collapse} vs {expect}"
    );

    let single = RealMatrix::from_vec(1, 3, vec![0.2, -0.4, 0.7]).unwrap();
    let s1 = simcse_loss(&single, &single, &SimCseConfig { temperature: 0.05 })
        .unwrap()
        .value;
    assert_eq!(s1, 0.0, "simcse N=1: {s1}");

    let ortho2 = RealMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let s2 = simcse_loss(&ortho2, &ortho2, &SimCseConfig { temperature: 1.0 })
        .unwrap()
        .value;
    let expect2 = 2.0 * (1.0 + (-1.0_f64).exp()).ln();
    assert!((s2 - expect2).abs() < 1e-9, "simcse orthonormal: {s2} vs {expect2}");
    c.pass();
}

fn toy_model(dimcon: bool, dropout: f64, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = EncoderDims {
        d_tok: 6,
        hidden: vec![8],
        d_e: 5,
        proj_dim: 7,
    };
    let encoder = dimcon::encoder::EncoderParams::init(8, &dims, dropout, &mut rng);
    let projector = if dimcon {
        dimcon::encoder::ProjectorParams::init_dimcon(dims.d_e, dims.proj_dim, &mut rng)
    } else {
        dimcon::encoder::ProjectorParams::init_simcse(dims.d_e, &mut rng)
    };
    ModelParams { encoder, projector }
}

#[test]
fn criterion_03_full_pipeline_parameter_gradients() {
    let c = Criterion::start("3 (pipeline parameter gradients)", 60);
    let batch = vec![vec![0u32, 1], vec![2, 3], vec![4, 5], vec![6, 7]];
    let seeds = vec![11, 22, 33, 44];

    enum Loss {
        Simcse(SimCseConfig),
        Barlow(BarlowConfig),
        VicReg(VicRegConfig),
    }
    let cases = [
        (false, 0.1, Loss::Simcse(SimCseConfig { temperature: 0.5 })),
        (true, 0.1, Loss::Barlow(BarlowConfig { lambda_bt: 0.0051 })),
        (
            true,
            0.0,
            Loss::VicReg(VicRegConfig {
                lambda_i: 1.0,
                lambda_v: 25.0,
                lambda_c: 0.04,
                eps: 1e-4,
            }),
        ),
    ];

    for (case_idx, (dimcon_head, dropout, loss)) in cases.iter().enumerate() {
        // like the hinge-kink exclusion of criterion 1, the toy model must
        // keep every ReLU pre-activation away from zero, or the loss is not
        // differentiable at the test point; scan seeded candidates for a
        // margin that dominates the finite-difference step
        let mut chosen = None;
        for model_seed in 30..80u64 {
            let candidate = toy_model(*dimcon_head, *dropout, model_seed);
            let margin =
                dimcon::encoder::relu_kink_margin(&candidate, &batch, &seeds, Mode::Train)
                    .unwrap();
            if margin < 5e-3 {
                continue;
            }
            if let Loss::VicReg(cfg) = loss {
                let mut p = candidate.clone();
                let enc = encode_batch(&p.encoder, &batch, &seeds, Mode::Train).unwrap();
                let proj = project_batch(&mut p.projector, &enc.e, Mode::Train).unwrap();
                let cov = covariance(&proj.z).unwrap();
                let hinge_margin = (0..proj.z.cols())
                    .map(|i| (cov.get(i, i) + cfg.eps - 1.0).abs())
                    .fold(f64::INFINITY, f64::min);
                if hinge_margin < 1e-2 {
                    continue;
                }
            }
            chosen = Some(candidate);
            break;
        }
        let model = chosen.expect("a kink-free toy model among the candidate seeds");
        let loss_result = |z: &RealMatrix| -> LossResult {
            match loss {
                Loss::Simcse(cfg) => simcse_loss(z, z, cfg).unwrap(),
                Loss::Barlow(cfg) => barlow_twins_loss(z, z, cfg).unwrap(),
                Loss::VicReg(cfg) => vicreg_loss(z, z, cfg).unwrap(),
            }
        };
        let eval = |params: &ModelParams| -> f64 {
            let mut p = params.clone();
            let enc = encode_batch(&p.encoder, &batch, &seeds, Mode::Train).unwrap();
            let proj = project_batch(&mut p.projector, &enc.e, Mode::Train).unwrap();
            loss_result(&proj.z).value
        };

        let mut work = model.clone();
        let enc = encode_batch(&work.encoder, &batch, &seeds, Mode::Train).unwrap();
        let proj = project_batch(&mut work.projector, &enc.e, Mode::Train).unwrap();
        let res = loss_result(&proj.z);
        let mut upstream = res.grad_a.clone();
        for (u, g) in upstream.data_mut().iter_mut().zip(res.grad_b.data()) {
            *u += g;
        }
        let grads = backward(&model, &enc, &proj, &upstream).unwrap();

        let step = 1e-4;
        for name in grads.names().to_vec() {
            let analytic = grads.get(&name).unwrap().to_vec();
            for idx in 0..analytic.len() {
                let mut plus = model.clone();
                {
                    let mut arrays = plus.trainable_mut();
                    arrays.iter_mut().find(|(n, _)| *n == name).unwrap().1[idx] += step;
                }
                let mut minus = model.clone();
                {
                    let mut arrays = minus.trainable_mut();
                    arrays.iter_mut().find(|(n, _)| *n == name).unwrap().1[idx] -= step;
                }
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * step);
                let an = analytic[idx];
                if an.abs() < 1e-8 {
                    assert!(
                        (fd - an).abs() < 1e-3,
                        "case {case_idx} {name}[{idx}]: {fd} vs {an}"
                    );
                } else {
                    let rel = (fd - an).abs() / an.abs();
                    assert!(
                        rel < 1e-3,
                        "case {case_idx} {name}[{idx}]: {fd} vs {an} rel {rel}"
                    );
                }
            }
        }
    }
    c.pass();
}

#[test]
fn criterion_04_oracle_equivalence() {
    let c = Criterion::start("4 (scalar-loop oracle equivalence)", 60);
    let mut rng = ChaCha8Rng::seed_from_u64(4242);

    // spearman vs rank-then-Pearson oracle, with ties injected
    for i in 0..1000 {
        let n = rng.gen_range(4..20);
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = rng.gen_range(-5.0..5.0);
                if i % 3 == 0 {
                    (v * 2.0).round() / 2.0
                } else {
                    v
                }
            })
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        match spearman(&x, &y) {
            Ok(got) => {
                let rx = average_ranks(&x);
                let ry = average_ranks(&y);
                let nf = n as f64;
                let mx = rx.iter().sum::<f64>() / nf;
                let my = ry.iter().sum::<f64>() / nf;
                let mut num = 0.0;
                let mut dx = 0.0;
                let mut dy = 0.0;
                for k in 0..n {
                    num += (rx[k] - mx) * (ry[k] - my);
                    dx += (rx[k] - mx) * (rx[k] - mx);
                    dy += (ry[k] - my) * (ry[k] - my);
                }
                let expect = num / (dx * dy).sqrt();
                assert!((got - expect).abs() < 1e-12, "instance {i}");
            }
            Err(_) => {
                let all_tied =
                    x.iter().all(|&v| v == x[0]) || y.iter().all(|&v| v == y[0]);
                assert!(all_tied, "instance {i}: unexpected error");
            }
        }
    }

    // cross-correlation vs elementwise Pearson loop
    let pearson = |x: &[f64], y: &[f64]| {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for (a, b) in x.iter().zip(y) {
            num += (a - mx) * (b - my);
            vx += (a - mx) * (a - mx);
            vy += (b - my) * (b - my);
        }
        num / (vx.sqrt() * vy.sqrt())
    };
    let column = |z: &RealMatrix, c: usize| -> Vec<f64> { (0..z.rows()).map(|r| z.get(r, c)).collect() };
    for _ in 0..1000 {
        let za = random_matrix(&mut rng, 12, 4);
        let zb = random_matrix(&mut rng, 12, 4);
        let rho = cross_correlation(&za, &zb).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = pearson(&column(&za, i), &column(&zb, j));
                assert!((rho.get(i, j) - expect).abs() < 1e-10);
            }
        }
    }

    // covariance vs scalar loop
    for _ in 0..1000 {
        let z = random_matrix(&mut rng, 10, 4);
        let cov = covariance(&z).unwrap();
        let means: Vec<f64> = (0..4)
            .map(|c| column(&z, c).iter().sum::<f64>() / 10.0)
            .collect();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for r in 0..10 {
                    acc += (z.get(r, i) - means[i]) * (z.get(r, j) - means[j]);
                }
                let expect = acc / 9.0;
                assert!((cov.get(i, j) - expect).abs() < 1e-12);
                assert_eq!(cov.get(i, j), cov.get(j, i));
            }
        }
    }

    // alignment vs scalar loop
    for _ in 0..1000 {
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
            .map(|_| {
                (
                    (0..6).map(|_| rng.gen_range(-1.0..1.0) + 0.01).collect(),
                    (0..6).map(|_| rng.gen_range(-1.0..1.0) + 0.01).collect(),
                )
            })
            .collect();
        let got = alignment_of(&pairs).unwrap();
        let mut acc = 0.0;
        for (a, b) in &pairs {
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut d2 = 0.0;
            for k in 0..a.len() {
                let d = a[k] / na - b[k] / nb;
                d2 += d * d;
            }
            acc += d2;
        }
        assert!((got - acc / 5.0).abs() < 1e-10);
    }

    // uniformity vs scalar loop
    for _ in 0..1000 {
        let embeddings: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0) + 0.01).collect())
            .collect();
        let got = uniformity_of(&embeddings).unwrap();
        let normed: Vec<Vec<f64>> = embeddings
            .iter()
            .map(|e| {
                let n = e.iter().map(|v| v * v).sum::<f64>().sqrt();
                e.iter().map(|v| v / n).collect()
            })
            .collect();
        let mut acc = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    let d2: f64 = normed[i]
                        .iter()
                        .zip(&normed[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    acc += (-2.0 * d2).exp();
                }
            }
        }
        let expect = (acc / 56.0).ln();
        assert!((got - expect).abs() < 1e-10);
    }

    // histogram binning vs brute-force scan
    let edges = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
    for _ in 0..1000 {
        let score: f64 = rng.gen_range(0.0..=5.0);
        let sim: f64 = rng.gen_range(-1.0..=1.0);
        let bucket = dimcon::metrics::bucket_and_bin(&edges, score, sim, 40);
        // brute force
        let mut expect_bucket = 4;
        for b in 0..5 {
            if score >= edges[b] && (score < edges[b + 1] || b == 4) {
                expect_bucket = b;
                break;
            }
        }
        let mut expect_bin = 39;
        for k in 0..40 {
            let lo = -1.0 + 2.0 * k as f64 / 40.0;
            let hi = -1.0 + 2.0 * (k + 1) as f64 / 40.0;
            if sim >= lo && (sim < hi || k == 39) {
                expect_bin = k;
                break;
            }
        }
        assert_eq!(bucket, (expect_bucket, expect_bin));
    }

    // percentile aggregation vs sort-and-interpolate oracle
    for _ in 0..1000 {
        let n = rng.gen_range(1..12);
        let mut values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for p in [0.5, 0.75] {
            let got = percentile(&values, p);
            let expect = if n == 1 {
                values[0]
            } else {
                let h = (n - 1) as f64 * p;
                let lo = h.floor() as usize;
                let frac = h - lo as f64;
                if lo + 1 >= n {
                    values[n - 1]
                } else {
                    values[lo] + frac * (values[lo + 1] - values[lo])
                }
            };
            assert!((got - expect).abs() < 1e-12);
        }
    }
    c.pass();
}

// ---------------------------------------------------------------------------
// Desk-scale training fixture shared by criteria 5, 6, 7, 8
// ---------------------------------------------------------------------------

const MASTER_SEEDS: [u64; 5] = [101, 202, 303, 404, 505];

fn acceptance_synth_spec() -> SynthSpec {
    SynthSpec {
        clusters: 4,
        vocab_size: 400,
        sentence_len: (8, 16),
        intra_rate: 0.6,
        inter_rate: 0.4,
        sentences: 2048,
        scored_pairs: 300,
        positive_pairs: 400,
        seed: 7,
    }
}

fn desk_dims(d_e: usize) -> EncoderDims {
    EncoderDims {
        d_tok: 32,
        hidden: vec![64],
        d_e,
        proj_dim: 64,
    }
}

fn bt_config(seed: u64) -> TrainConfig {
    TrainConfig {
        objective: Objective::Barlow(BarlowConfig { lambda_bt: 0.005 }),
        augment: AugmentKind::Shuffle,
        p_s: 0.3,
        p_do: 0.1,
        learning_rate: 1e-3,
        batch_size: 64,
        epochs: 60,
        eval_every: 64,
        seed,
        dims: desk_dims(32),
        ..TrainConfig::default()
    }
}

fn vicreg_config(seed: u64) -> TrainConfig {
    TrainConfig {
        objective: Objective::VicReg(VicRegConfig {
            lambda_i: 1.0,
            lambda_v: 25.0,
            lambda_c: 0.04,
            eps: 1e-4,
        }),
        augment: AugmentKind::Dropout,
        p_do: 0.05,
        learning_rate: 1e-3,
        batch_size: 64,
        epochs: 40,
        eval_every: 64,
        seed,
        dims: desk_dims(32),
        ..TrainConfig::default()
    }
}

fn simcse_config(seed: u64) -> TrainConfig {
    TrainConfig {
        objective: Objective::Simcse(SimCseConfig { temperature: 1.0 }),
        augment: AugmentKind::Dropout,
        p_do: 0.05,
        learning_rate: 1e-3,
        batch_size: 64,
        epochs: 60,
        eval_every: 64,
        seed,
        dims: desk_dims(16),
        ..TrainConfig::default()
    }
}

struct RunStats {
    objective: &'static str,
    step0: f64,
    best: f64,
    uniformity_init: f64,
    uniformity_after: f64,
    /// Mean squared off-diagonal cross-correlation of the projected held-out
    /// views and the minimum per-coordinate embedding variance (BT runs).
    collapse: Option<(f64, f64)>,
}

struct Fixture {
    runs: Vec<RunStats>,
    bt_history_csv: String,
    elapsed: Duration,
    total_steps_max: u64,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn uniformity_sample(params: &ModelParams, vocab: &Vocab, sentences: &[String]) -> f64 {
    let model = Model {
        vocab: vocab.clone(),
        params: params.clone(),
    };
    uniformity(&model, sentences).unwrap()
}

fn collapse_stats(outcome: &TrainOutcome, cfg: &TrainConfig, held_out: &[String]) -> (f64, f64) {
    let vocab = &outcome.model.vocab;
    let mut params = outcome.model.params.clone();
    // two views per held-out sentence, exactly as a training batch would see
    let strategy = cfg.strategy();
    let thesaurus = Thesaurus::new();
    let mut tokens_a = Vec::new();
    let mut tokens_b = Vec::new();
    let mut seeds_a = Vec::new();
    let mut seeds_b = Vec::new();
    for (i, s) in held_out.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xB000 + i as u64);
        let (va, vb) = make_views(ViewSource::Sentence(s), &strategy, &thesaurus, &mut rng).unwrap();
        tokens_a.push(dimcon::encoder::lookup_tokens(&va.tokens, vocab).unwrap());
        tokens_b.push(dimcon::encoder::lookup_tokens(&vb.tokens, vocab).unwrap());
        seeds_a.push(va.encoder_seed);
        seeds_b.push(vb.encoder_seed);
    }
    let enc_a = encode_batch(&params.encoder, &tokens_a, &seeds_a, Mode::Train).unwrap();
    let enc_b = encode_batch(&params.encoder, &tokens_b, &seeds_b, Mode::Train).unwrap();
    let za = project_batch(&mut params.projector, &enc_a.e, Mode::Train).unwrap().z;
    let zb = project_batch(&mut params.projector, &enc_b.e, Mode::Train).unwrap().z;
    let rho = cross_correlation(&za, &zb).unwrap();
    let d = rho.dim();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                acc += rho.get(i, j) * rho.get(i, j);
            }
        }
    }
    let mean_sq_offdiag = acc / (d * (d - 1)) as f64;

    // per-coordinate variance of the evaluation embeddings across the set
    let mut embeddings = Vec::with_capacity(held_out.len());
    for s in held_out {
        let ids = tokenize(s, vocab).unwrap();
        embeddings.push(encode(&ids, &outcome.model.params.encoder, 0, Mode::Eval).unwrap());
    }
    let d_e = embeddings[0].len();
    let n = embeddings.len() as f64;
    let mut min_var = f64::INFINITY;
    for c in 0..d_e {
        let mean = embeddings.iter().map(|e| e[c]).sum::<f64>() / n;
        let var = embeddings.iter().map(|e| (e[c] - mean) * (e[c] - mean)).sum::<f64>() / n;
        min_var = min_var.min(var);
    }
    (mean_sq_offdiag, min_var)
}

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let start = Instant::now();
        let data = synth_generate(&acceptance_synth_spec()).unwrap();
        // held-out sentences from the same construction, different seed
        let held_out_spec = SynthSpec {
            seed: 1007,
            sentences: 64,
            scored_pairs: 2,
            positive_pairs: 2,
            ..acceptance_synth_spec()
        };
        let held_out = synth_generate(&held_out_spec).unwrap().corpus.sentences;
        let unif_sample: Vec<String> = data.corpus.sentences[..128].to_vec();
        let thesaurus = Thesaurus::new();

        let mut runs = Vec::new();
        let mut bt_history_csv = String::new();
        let mut total_steps_max = 0u64;
        for &seed in &MASTER_SEEDS {
            for (objective, cfg) in [
                ("barlow", bt_config(seed)),
                ("vicreg", vicreg_config(seed)),
                ("simcse", simcse_config(seed)),
            ] {
                let outcome = train(
                    &cfg,
                    TrainData::Corpus(&data.corpus.sentences),
                    &data.scored_pairs,
                    &thesaurus,
                )
                .unwrap();
                let step0 = outcome.history.entries[0].dev_spearman;
                let best = outcome.history.best_dev_spearman;
                total_steps_max =
                    total_steps_max.max(outcome.history.entries.last().unwrap().step);
                let uniformity_init =
                    uniformity_sample(&outcome.init_params, &outcome.model.vocab, &unif_sample);
                let uniformity_after =
                    uniformity_sample(&outcome.model.params, &outcome.model.vocab, &unif_sample);
                let collapse = if objective == "barlow" {
                    Some(collapse_stats(&outcome, &cfg, &held_out))
                } else {
                    None
                };
                if objective == "barlow" && seed == MASTER_SEEDS[0] {
                    bt_history_csv = outcome.history.to_csv();
                }
                runs.push(RunStats {
                    objective,
                    step0,
                    best,
                    uniformity_init,
                    uniformity_after,
                    collapse,
                });
            }
        }
        Fixture {
            runs,
            bt_history_csv,
            elapsed: start.elapsed(),
            total_steps_max,
        }
    })
}

#[test]
fn criterion_05_desk_scale_training_signal() {
    let c = Criterion::start("5 (training raises dev Spearman)", 600);
    let fx = fixture();
    assert!(fx.total_steps_max <= 2000, "run used {} steps", fx.total_steps_max);
    for objective in ["barlow", "vicreg", "simcse"] {
        let mut passing = 0;
        let mut details = Vec::new();
        for run in fx.runs.iter().filter(|r| r.objective == objective) {
            let gain = run.best - run.step0;
            details.push(format!("{:.3}", gain));
            if gain >= 0.2 {
                passing += 1;
            }
        }
        println!("  {objective}: gains {details:?}, {passing}/5 seeds >= 0.2");
        assert!(passing >= 4, "{objective}: only {passing}/5 seeds improved by >= 0.2");
    }
    assert!(
        fx.elapsed < Duration::from_secs(600),
        "fixture took {:?}",
        fx.elapsed
    );
    c.pass();
}

#[test]
fn criterion_06_collapse_avoidance() {
    let c = Criterion::start("6 (no dimensional collapse after BT)", 700);
    let fx = fixture();
    for run in fx.runs.iter().filter(|r| r.objective == "barlow") {
        let (mean_sq_offdiag, min_var) = run.collapse.expect("collapse stats for BT runs");
        assert!(
            mean_sq_offdiag < 0.1,
            "mean squared off-diagonal cross-correlation {mean_sq_offdiag}"
        );
        assert!(min_var >= 1e-4, "embedding coordinate variance {min_var}");
    }
    c.pass();
}

#[test]
fn criterion_07_uniformity_improves() {
    let c = Criterion::start("7 (uniformity lower after training)", 700);
    let fx = fixture();
    for objective in ["barlow", "vicreg", "simcse"] {
        let mut passing = 0;
        for run in fx.runs.iter().filter(|r| r.objective == objective) {
            if run.uniformity_after < run.uniformity_init {
                passing += 1;
            }
        }
        println!("  {objective}: uniformity improved in {passing}/5 seeds");
        assert!(passing >= 4, "{objective}: uniformity improved in only {passing}/5 seeds");
    }
    c.pass();
}

#[test]
fn criterion_08_determinism() {
    let c = Criterion::start("8 (byte-identical reruns)", 700);
    let fx = fixture();
    let data = synth_generate(&acceptance_synth_spec()).unwrap();
    let cfg = bt_config(MASTER_SEEDS[0]);
    let rerun = train(
        &cfg,
        TrainData::Corpus(&data.corpus.sentences),
        &data.scored_pairs,
        &Thesaurus::new(),
    )
    .unwrap();
    assert_eq!(
        rerun.history.to_csv(),
        fx.bt_history_csv,
        "history files differ between identical runs"
    );
    c.pass();
}

#[test]
fn criterion_09_sweep_bookkeeping() {
    let c = Criterion::start("9 (sweep enumeration and report)", 60);
    // grid: 3 learning rates x 7 lambda_bt values with a fixed augmentation
    let mut base = TrainConfig::default();
    base.objective = Objective::Barlow(BarlowConfig::default());
    base.augment = AugmentKind::Shuffle;
    let mut space = SweepSpace::with_base(base.clone());
    space.augment_grid = vec![0.5];
    let grid = enumerate_trials(&space, &SweepStrategy::Grid, 77).unwrap();
    assert_eq!(grid.len(), 21, "learning-rate x lambda_bt grid");

    // random: 50 vicreg draws inside the log ranges
    let mut vic_base = TrainConfig::default();
    vic_base.objective = Objective::VicReg(VicRegConfig::default());
    vic_base.augment = AugmentKind::Shuffle;
    let vic_space = SweepSpace::with_base(vic_base);
    let random = enumerate_trials(&vic_space, &SweepStrategy::Random { budget: 50 }, 78).unwrap();
    assert_eq!(random.len(), 50);
    for t in &random {
        match t.config.objective {
            Objective::VicReg(cfg) => {
                assert!((1e-3..=1e-1).contains(&cfg.lambda_c));
                assert!((10.0..=1e4).contains(&cfg.lambda_v));
            }
            _ => panic!("expected vicreg trials"),
        }
    }
    let mut seen = std::collections::HashSet::new();
    for t in grid.iter().chain(&random) {
        assert!(seen.insert(t.config.seed), "duplicate trial seed");
    }

    // report: max/q75/q50 per group against the percentile oracle
    let rows = vec![
        ("p_s=0.3".to_string(), 0.1),
        ("p_s=0.3".to_string(), 0.2),
        ("p_s=0.3".to_string(), 0.3),
        ("p_s=0.3".to_string(), 0.4),
        ("p_s=0.5".to_string(), 0.9),
    ];
    let table = aggregate_trials(&rows, "p_s").unwrap();
    assert_eq!(table.len(), 2);
    let (_, max, q75, q50) = &table[0];
    assert_eq!(*max, 0.4);
    assert!((q75 - 0.325).abs() < 1e-12);
    assert!((q50 - 0.25).abs() < 1e-12);
    assert_eq!(table[1], ("0.5".to_string(), 0.9, 0.9, 0.9));
    c.pass();
}

#[test]
fn criterion_10_augmentation_invariants() {
    let c = Criterion::start("10 (augmentation invariants)", 120);
    use std::collections::BTreeMap;
    let multiset = |tokens: &[String]| {
        let mut m: BTreeMap<&String, usize> = BTreeMap::new();
        for t in tokens {
            *m.entry(t).or_insert(0) += 1;
        }
        m.into_iter()
            .map(|(k, v)| (k.clone(), v))
            .collect::<Vec<_>>()
    };

    // shuffle preserves token multisets on 10_000 seeded cases
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for case in 0..10_000u64 {
        let len = 1 + (case % 24) as usize;
        let tokens: Vec<String> = (0..len)
            .map(|i| format!("t{}", (i as u64 * 7 + case) % 13))
            .collect();
        let p: f64 = rng.gen_range(0.0..=1.0);
        let mut srng = ChaCha8Rng::seed_from_u64(case);
        let out = shuffle_tokens(&tokens, p, &mut srng);
        assert_eq!(multiset(&out), multiset(&tokens), "case {case}");
    }

    // EDA never returns an empty sentence
    let mut thesaurus = Thesaurus::new();
    for i in 0..13 {
        thesaurus.insert(format!("t{i}"), vec![format!("t{}", (i + 1) % 13)]);
    }
    for case in 0..10_000u64 {
        let len = 1 + (case % 12) as usize;
        let tokens: Vec<String> = (0..len).map(|i| format!("t{}", i % 13)).collect();
        let alpha: f64 = rng.gen_range(0.0..=1.0);
        let mut srng = ChaCha8Rng::seed_from_u64(case);
        let out = eda_augment(&tokens, alpha, &thesaurus, &mut srng);
        assert!(!out.is_empty(), "case {case}");
    }

    // dropout strategy: identical token sequences, distinct encoder seeds
    let empty = Thesaurus::new();
    for case in 0..1000u64 {
        let mut srng = ChaCha8Rng::seed_from_u64(case);
        let (a, b) = make_views(
            ViewSource::Sentence("alpha beta gamma delta epsilon"),
            &AugmentStrategy::Dropout { p_do: 0.05 },
            &empty,
            &mut srng,
        )
        .unwrap();
        assert_eq!(a.tokens, b.tokens);
        assert_ne!(a.encoder_seed, b.encoder_seed, "case {case}");
    }
    c.pass();
}

/// The synthetic construction underlying criterion 5: bag-of-token cosine on
/// generated sentences tracks the planted scores.
#[test]
fn synth_construction_calibration() {
    let data = synth_generate(&acceptance_synth_spec()).unwrap();
    let sims: Vec<f64> = data
        .scored_pairs
        .iter()
        .map(|p| dimcon::datakit::bag_cosine(&p.sentence_a, &p.sentence_b))
        .collect();
    let scores: Vec<f64> = data.scored_pairs.iter().map(|p| p.score).collect();
    let rho = spearman(&sims, &scores).unwrap();
    assert!(rho > 0.8, "bag-cosine Spearman {rho}");
    // sanity: model-based similarity of a raw model is a valid input too
    let _ = cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
}
