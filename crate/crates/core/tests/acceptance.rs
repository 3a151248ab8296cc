//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use rule_core::config::{Ablation, Backend, ExperimentConfig};
use rule_core::dataset::{generate_synthetic, GenConfig, ModalityGen};
use rule_core::encoders::{encode_inputs, prepare_inputs, EncoderBank};
use rule_core::eval::{ranking_metrics, Direction, RankingReport};
use rule_core::experiment::run;
use rule_core::fusion::{fuse, EntityWeights, FusionWeights};
use rule_core::objective::{l_dr_ce, l_dr_mse, l_reg_kl, refine_targets, total_loss, LossSettings, TrainItem, Variant};
use rule_core::reliability::{divide_pairs, evidence, greedy_estimate, DirichletOpinion, PairStats, Subset};
use rule_core::ttr::{rerank, MockReasoner, ModalityStatus, RerankInput, TtrSettings};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(start: Instant, budget: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t < budget, format!("{:.1}s of {}s", t.as_secs_f64(), budget.as_secs()))
}

// 1

fn evidential_identities() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_sum, mut bound_violations) = (0.0f64, 0);
    for i in 0..1000 {
        let k = rng.random_range(1..=64);
        let op = if i % 2 == 0 {
            let row: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
            evidence(&row, rng.random_range(0.01..2.0)).unwrap()
        } else {
            DirichletOpinion::from_evidence((0..k).map(|_| rng.random_range(0.0..50.0)).collect())
        };
        let q: f64 = op.evidence.iter().map(|e| e + 1.0).sum();
        let u = k as f64 / q;
        let b: f64 = op.evidence.iter().map(|e| e / q).sum();
        worst_sum = worst_sum.max((u + b - 1.0).abs()).max((op.uncertainty + op.belief.iter().sum::<f64>() - 1.0).abs());
        let bound = (q - k as f64 + 1.0) / q;
        if op.expected_prob.iter().any(|&p| p > bound) {
            bound_violations += 1;
        }
    }
    let (fast, time) = within(start, Duration::from_secs(5));
    verdict(
        worst_sum <= 1e-9 && bound_violations == 0 && fast,
        format!("max |u+sum b-1| = {worst_sum:.2e}, bound violations {bound_violations}, {time}"),
    )
}

// 2

/// Monte-Carlo `E||p||^2`, `E[p]` and `E[log p]` under `Dir(alpha)`.
fn dirichlet_mc(alpha: &[f64], n: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<f64>, Vec<f64>) {
    let gammas: Vec<Gamma<f64>> = alpha.iter().map(|&a| Gamma::new(a, 1.0).unwrap()).collect();
    let mut p = vec![0.0; alpha.len()];
    let mut sum_p = vec![0.0; alpha.len()];
    let mut sum_logp = vec![0.0; alpha.len()];
    let mut sum_p2 = 0.0;
    for _ in 0..n {
        let mut z = 0.0;
        for (pj, g) in p.iter_mut().zip(&gammas) {
            *pj = g.sample(rng);
            z += *pj;
        }
        for j in 0..p.len() {
            p[j] /= z;
            sum_p[j] += p[j];
            sum_p2 += p[j] * p[j];
            sum_logp[j] += p[j].ln();
        }
    }
    let n = n as f64;
    (sum_p2 / n, sum_p.iter().map(|s| s / n).collect(), sum_logp.iter().map(|s| s / n).collect())
}

fn kl_oracle(alpha: &[f64], y: &[f64]) -> f64 {
    use statrs::function::gamma::{digamma, ln_gamma};
    let at: Vec<f64> = alpha.iter().zip(y).map(|(a, y)| y + (1.0 - y) * a).collect();
    let k = at.len() as f64;
    let s: f64 = at.iter().sum();
    // KL[Dir(at) || Dir(1)] = E_at[log Dir(p; at)] - log Gamma(K)
    let log_norm = ln_gamma(s) - at.iter().map(|&a| ln_gamma(a)).sum::<f64>();
    let e_log = at.iter().map(|&a| (a - 1.0) * (digamma(a) - digamma(s))).sum::<f64>();
    log_norm + e_log - ln_gamma(k)
}

fn loss_oracles() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 1_000_000;
    let (mut mse_err, mut ce_err, mut kl_err) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..20 {
        let k = rng.random_range(2..=8);
        let alpha: Vec<f64> = (0..k).map(|_| 1.0 + rng.random_range(0.0..9.0)).collect();
        let mut y = vec![0.0; k];
        if case % 2 == 0 {
            y[rng.random_range(0..k)] = 1.0;
        } else {
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let z: f64 = raw.iter().sum();
            y.iter_mut().zip(&raw).for_each(|(y, r)| *y = r / z);
        }
        let (e_p2, mean_p, mean_logp) = dirichlet_mc(&alpha, n, &mut rng);
        // E||y-p||^2 = ||y||^2 - 2 y.E[p] + E||p||^2
        let mc_mse = y.iter().map(|v| v * v).sum::<f64>() - 2.0 * y.iter().zip(&mean_p).map(|(a, b)| a * b).sum::<f64>() + e_p2;
        let mc_ce = -y.iter().zip(&mean_logp).map(|(a, b)| a * b).sum::<f64>();
        mse_err = mse_err.max((l_dr_mse(&alpha, &y, Subset::Clean).unwrap() - mc_mse).abs());
        ce_err = ce_err.max((l_dr_ce(&alpha, &y, Subset::Clean).unwrap() - mc_ce).abs());
        kl_err = kl_err.max((l_reg_kl(&alpha, &y).unwrap() - kl_oracle(&alpha, &y)).abs());
    }
    let (fast, time) = within(start, Duration::from_secs(120));
    verdict(
        mse_err <= 1e-2 && ce_err <= 1e-2 && kl_err <= 1e-3 && fast,
        format!("max error mse {mse_err:.1e}, ce {ce_err:.1e}, kl {kl_err:.1e}, {time}"),
    )
}

// 3

fn gradient_checks() -> Verdict {
    let start = Instant::now();
    let pair = generate_synthetic(&GenConfig {
        n: 10,
        clusters: 2,
        seed: 5,
        modalities: vec![
            ModalityGen {
                name: "structure".into(),
                dim: 6,
                missing_rate: 0.0,
            },
            ModalityGen {
                name: "image".into(),
                dim: 5,
                missing_rate: 0.2,
            },
            ModalityGen {
                name: "text".into(),
                dim: 4,
                missing_rate: 0.0,
            },
        ],
        ..GenConfig::default()
    })
    .unwrap();
    let inputs = prepare_inputs(&pair);
    let mut bank = EncoderBank::new(pair.modalities(), 4, 9);
    let mut weights = FusionWeights::plain(10, 10, 3);
    weights.left[1] = EntityWeights {
        weights: vec![0.9, 0.2, 0.6],
        gated: true,
    };
    weights.right[4] = EntityWeights {
        weights: vec![0.4, 0.7, 1.0],
        gated: true,
    };
    let subsets = [Subset::Clean, Subset::LowConsensus, Subset::HighUncertainty];
    let items: Vec<TrainItem> = pair
        .train_anchors()
        .chain(pair.eval_view().test_anchors())
        .take(8)
        .enumerate()
        .map(|(n, (_, a))| TrainItem {
            left: a.left,
            right: a.right,
            entity: subsets[n % 3],
            modality: (0..3).map(|m| inputs.left[m].present[a.left].then_some(subsets[(n + m) % 3])).collect(),
        })
        .collect();
    let mut worst = 0.0f64;
    let mut labels = Vec::new();
    for variant in [Variant::Mse, Variant::Ce] {
        for tau in [0.07, 0.5] {
            let settings = LossSettings { variant, lambda: 0.1, tau };
            let (table, _) = encode_inputs(&bank, &inputs).unwrap();
            let targets = refine_targets(&table, &fuse(&table, &weights).unwrap(), &items).unwrap();
            let loss = |bank: &EncoderBank| total_loss(bank, &inputs, &weights, &targets, &settings).unwrap();
            let (_, grad) = loss(&bank);
            let base = bank.flatten();
            let h = 1e-6;
            let (mut num, mut den) = (0.0, 0.0);
            for idx in 0..base.len() {
                let mut p = base.clone();
                p[idx] += h;
                bank.assign(&p);
                let up = loss(&bank).0.total;
                p[idx] -= 2.0 * h;
                bank.assign(&p);
                let down = loss(&bank).0.total;
                let fd = (up - down) / (2.0 * h);
                num += (fd - grad[idx]).powi(2);
                den += fd.powi(2);
            }
            bank.assign(&base);
            let rel = (num / den).sqrt();
            worst = worst.max(rel);
            labels.push(format!("{variant:?}/tau={tau}: {rel:.1e}"));
        }
    }
    let (fast, time) = within(start, Duration::from_secs(30));
    verdict(worst < 1e-4 && fast, format!("relative errors [{}], {time}", labels.join(", ")))
}

// 4

fn greedy_oracle(rows: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>, Option<usize>) {
    let m_all = rows.len();
    let k = rows[0].len();
    let avail: Vec<usize> = (0..m_all).filter(|&m| rows[m].iter().any(|&s| s != 0.0)).collect();
    if avail.is_empty() {
        return (vec![], vec![], None);
    }
    // exhaustive value table over every subset of the available modalities
    let mut value = HashMap::new();
    for mask in 1u32..(1 << m_all) {
        let members: Vec<usize> = (0..m_all).filter(|m| mask & (1 << m) != 0).collect();
        if members.iter().any(|m| !avail.contains(m)) {
            continue;
        }
        let mean: Vec<f64> = (0..k).map(|j| members.iter().map(|&m| rows[m][j]).sum::<f64>() / members.len() as f64).collect();
        value.insert(mask, mean.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    let size = if avail.len() >= 3 { avail.len() / 2 + 1 } else { 1 };
    let peak = |m: usize| rows[m].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut order = avail.clone();
    order.sort_by(|&a, &b| peak(b).partial_cmp(&peak(a)).unwrap().then(a.cmp(&b)));
    let pi0: Vec<usize> = order[..size].to_vec();
    let mask0: u32 = pi0.iter().map(|m| 1 << m).sum();
    let mut star = pi0.clone();
    for &m in &avail {
        if !pi0.contains(&m) && value[&(mask0 | 1 << m)] - value[&mask0] > 0.0 {
            star.push(m);
        }
    }
    let mean: Vec<f64> = (0..k).map(|j| star.iter().map(|&m| rows[m][j]).sum::<f64>() / star.len() as f64).collect();
    let mut best = 0;
    for j in 1..k {
        if mean[j] > mean[best] {
            best = j;
        }
    }
    (pi0, star, Some(best))
}

fn division_oracle(rows: &[(Vec<f64>, usize)], tau: f64, beta: f64) -> Vec<Subset> {
    let stats: Vec<(f64, f64, bool)> = rows
        .iter()
        .map(|(row, y)| {
            let q: f64 = row.iter().map(|s| (s / tau).tanh().exp() + 1.0).sum();
            let top = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            (row.len() as f64 / q, row[*y].max(0.0), top == *y)
        })
        .collect();
    let tp: Vec<&(f64, f64, bool)> = stats.iter().filter(|s| s.2).collect();
    let (bu, bc) = if tp.is_empty() {
        (1.0 - beta, beta)
    } else {
        let max_u = tp.iter().map(|s| s.0).fold(f64::MIN, f64::max);
        let min_c = tp.iter().map(|s| s.1).fold(f64::MAX, f64::min);
        (max_u.min(1.0 - beta), min_c.max(beta))
    };
    stats
        .iter()
        .map(|&(u, c, _)| {
            if u > bu {
                Subset::HighUncertainty
            } else if c < bc {
                Subset::LowConsensus
            } else {
                Subset::Clean
            }
        })
        .collect()
}

fn greedy_and_division() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut greedy_bad = 0;
    for _ in 0..200 {
        let m = rng.random_range(1..=6);
        let k = rng.random_range(2..=12);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                if rng.random_bool(0.15) {
                    vec![0.0; k]
                } else {
                    (0..k).map(|_| (rng.random_range(-1.0f64..1.0) * 20.0).round() / 20.0).collect()
                }
            })
            .collect();
        let views: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let (sel, est) = greedy_estimate(&views);
        let (pi0, star, oracle_est) = greedy_oracle(&rows);
        if sel.initial != pi0 || sel.selected != star || est != oracle_est {
            greedy_bad += 1;
        }
    }
    let mut division_bad = 0;
    for _ in 0..200 {
        let tau = [0.07, 0.2, 1.0][rng.random_range(0..3)];
        let beta = rng.random_range(0.05..0.6);
        let n = rng.random_range(1..=40);
        let k = rng.random_range(2..=30);
        let rows: Vec<(Vec<f64>, usize)> = (0..n)
            .map(|_| ((0..k).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(0..k)))
            .collect();
        let stats: Vec<PairStats> = rows.iter().map(|(r, y)| PairStats::from_row(r, *y, tau).unwrap()).collect();
        if divide_pairs(&stats, beta).assignments != division_oracle(&rows, tau, beta) {
            division_bad += 1;
        }
    }
    verdict(
        greedy_bad == 0 && division_bad == 0,
        format!("greedy mismatches {greedy_bad}/200, division mismatches {division_bad}/200"),
    )
}

// 5

fn uncertainty_witness() -> Verdict {
    let q = 7.5;
    let mut e1 = vec![0.0; 5];
    let mut e2 = vec![0.0; 5];
    e1[1] = q;
    e2[3] = q;
    let (a, b) = (DirichletOpinion::from_evidence(e1), DirichletOpinion::from_evidence(e2));
    let top = |o: &DirichletOpinion| (0..o.belief.len()).fold(0, |t, j| if o.belief[j] > o.belief[t] { j } else { t });
    let pass = a.uncertainty == b.uncertainty && top(&a) != top(&b);
    verdict(pass, format!("u = {:.4} for both, argmax b = {} vs {}", a.uncertainty, top(&a), top(&b)))
}

// 6, 7, 8

struct Sweep {
    hits1: Vec<f64>,
    auc: Vec<Option<f64>>,
    slowest: Duration,
}

impl Sweep {
    fn mean(&self) -> f64 {
        self.hits1.iter().sum::<f64>() / self.hits1.len() as f64
    }
}

fn sweep(ablation: Ablation, ee: f64, attr: f64) -> Sweep {
    let mut cfg = ExperimentConfig::default().with_ablation(ablation);
    cfg.noise.ee = ee;
    cfg.noise.ea = attr;
    cfg.noise.aa = attr;
    let mut out = Sweep {
        hits1: vec![],
        auc: vec![],
        slowest: Duration::ZERO,
    };
    for &seed in &cfg.seeds {
        let start = Instant::now();
        let report = run(&cfg, seed).unwrap().report;
        out.slowest = out.slowest.max(start.elapsed());
        out.hits1.push(report.ranking.hits1);
        out.auc.push(report.noise_detection.auc);
    }
    out
}

fn fmt_runs(s: &Sweep) -> String {
    let each: Vec<String> = s.hits1.iter().map(|h| format!("{h:.3}")).collect();
    format!("{:.3} [{}]", s.mean(), each.join(" "))
}

fn robustness(full_clean: &Sweep, base_clean: &Sweep, full_noisy: &Sweep, base_noisy: &Sweep) -> Verdict {
    let drop_full = full_clean.mean() - full_noisy.mean();
    let drop_base = base_clean.mean() - base_noisy.mean();
    let lead = full_noisy.mean() - base_noisy.mean();
    let slowest = [full_clean, base_clean, full_noisy, base_noisy].iter().map(|s| s.slowest).max().unwrap();
    let fast = slowest < Duration::from_secs(300);
    verdict(
        drop_full <= 0.5 * drop_base && lead >= 0.10 && fast,
        format!(
            "full {} -> {}, baseline {} -> {}; drops {drop_full:.3} vs {drop_base:.3} (need <= {:.3}), lead {:+.3} (need >= 0.100), slowest run {:.1}s",
            fmt_runs(full_clean),
            fmt_runs(full_noisy),
            fmt_runs(base_clean),
            fmt_runs(base_noisy),
            0.5 * drop_base,
            lead,
            slowest.as_secs_f64()
        ),
    )
}

fn noise_detection(s: &Sweep) -> Verdict {
    let aucs: Vec<f64> = s.auc.iter().flatten().copied().collect();
    let mean = aucs.iter().sum::<f64>() / aucs.len().max(1) as f64;
    let each: Vec<String> = aucs.iter().map(|a| format!("{a:.3}")).collect();
    verdict(
        aucs.len() == s.auc.len() && mean >= 0.80,
        format!("mean AUC {mean:.3} [{}] over {} seeds", each.join(" "), s.auc.len()),
    )
}

fn ablation_order(full: &Sweep, middle: &[(&str, Sweep)], wo_drl: &Sweep) -> Verdict {
    let mut pass = true;
    let mut parts = vec![format!("full {}", fmt_runs(full))];
    for (name, s) in middle {
        pass &= full.mean() >= s.mean() && s.mean() >= wo_drl.mean();
        parts.push(format!("{name} {}", fmt_runs(s)));
    }
    parts.push(format!("wo_drl {}", fmt_runs(wo_drl)));
    verdict(pass, parts.join(", "))
}

// 9

fn ttr_correction() -> Verdict {
    let n = 50;
    let truth: Vec<usize> = (0..n).map(|i| (i * 17 + 3) % n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut prior = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            prior[[i, j]] = rng.random_range(-0.10..0.0);
        }
        if i < 10 {
            // truth sits behind 1..=7 distractors, all inside the top-8 shortlist
            prior[[i, truth[i]]] = 0.10;
            let ahead = 1 + i % 7;
            let mut placed = 0;
            let mut j = (truth[i] + 1) % n;
            while placed < ahead {
                prior[[i, j]] = 0.11 + 0.01 * placed as f64;
                placed += 1;
                j = (j + 1) % n;
            }
        } else {
            prior[[i, truth[i]]] = 0.9;
        }
    }
    let rank = |row: &[f64], t: usize| 1 + row.iter().enumerate().filter(|&(j, &v)| v > row[t] || (v == row[t] && j < t)).count();
    let misplaced: Vec<usize> = (0..10).filter(|&i| (2..=8).contains(&rank(prior.row(i).as_slice().unwrap(), truth[i]))).collect();
    let names = vec!["structure".to_string(), "image".to_string(), "name".to_string()];
    let input = RerankInput {
        prior: prior.view(),
        modality_rows: vec![prior.view(), prior.view(), prior.view()],
        modality_names: names,
        query_present: vec![vec![true; n]; 3],
        weights: (0..n).map(|i| vec![0.5, 0.7, 0.2 + 0.01 * i as f64]).collect(),
        left_names: (0..n).map(|i| format!("left {i}")).collect(),
        right_names: (0..n).map(|j| format!("right {j}")).collect(),
    };
    let key: HashMap<usize, usize> = (0..n).map(|i| (i, truth[i])).collect();
    let mock = MockReasoner::new(key, 0.0, 3);
    let queries: Vec<usize> = (0..n).collect();
    let out = rerank(&input, &queries, &mock, &TtrSettings::default()).unwrap();
    let joint = out.joint_scores(prior.view());
    let recovered = misplaced.iter().filter(|&&i| rank(joint.row(i).as_slice().unwrap(), truth[i]) == 1).count();
    let mut all_skipped = 0;
    let mut degraded = 0;
    for v in &out.verdicts {
        if v.modalities.iter().all(|m| matches!(m.status, ModalityStatus::Skipped | ModalityStatus::NotRethinkable)) {
            all_skipped += 1;
            let i = v.query;
            if rank(joint.row(i).as_slice().unwrap(), truth[i]) > rank(prior.row(i).as_slice().unwrap(), truth[i]) {
                degraded += 1;
            }
        }
    }
    verdict(
        misplaced.len() == 10 && recovered >= 8 && all_skipped == 40 && degraded == 0,
        format!(
            "recovered {recovered}/{} misplaced queries, {degraded} of {all_skipped} fully skipped queries degraded, {} reasoner calls",
            misplaced.len(),
            out.requests.len()
        ),
    )
}

// 10

fn brute_ranks(scores: &Array2<f64>, pairs: &[(usize, usize)]) -> Vec<usize> {
    pairs
        .iter()
        .map(|&(q, c)| {
            let mut order: Vec<usize> = (0..scores.ncols()).collect();
            // stable sort keeps lower index first among ties
            order.sort_by(|&a, &b| scores[[q, b]].partial_cmp(&scores[[q, a]]).unwrap());
            order.iter().position(|&j| j == c).unwrap() + 1
        })
        .collect()
}

fn brute_report(ranks: &[usize]) -> [f64; 4] {
    let n = ranks.len() as f64;
    let hits = |k| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    [hits(1), hits(5), hits(10), ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n]
}

fn metrics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut bad = 0;
    for _ in 0..100 {
        let (r, c) = (rng.random_range(1..=30), rng.random_range(1..=30));
        let scores = Array2::from_shape_fn((r, c), |_| rng.random_range(0..8) as f64 / 8.0);
        let pairs: Vec<(usize, usize)> = (0..rng.random_range(1..=20)).map(|_| (rng.random_range(0..r), rng.random_range(0..c))).collect();
        let flipped: Vec<(usize, usize)> = pairs.iter().map(|&(a, b)| (b, a)).collect();
        let mut both = brute_ranks(&scores, &pairs);
        let one = brute_report(&both);
        both.extend(brute_ranks(&scores.t().to_owned(), &flipped));
        let two = brute_report(&both);
        for (direction, expected) in [(Direction::LeftToRight, one), (Direction::Bidirectional, two)] {
            let got = ranking_metrics(scores.view(), &pairs, direction).unwrap();
            let got = [got.hits1, got.hits5, got.hits10, got.mrr];
            if got.iter().zip(&expected).any(|(a, b)| (a - b).abs() > 1e-12) {
                bad += 1;
            }
        }
    }
    let mrr = RankingReport::from_ranks(vec![1, 2, 4], Direction::LeftToRight).mrr;
    let scores = Array2::from_shape_vec((3, 4), vec![0.9, 0.1, 0.2, 0.3, 0.5, 0.4, 0.1, 0.0, 0.9, 0.8, 0.7, 0.6]).unwrap();
    let via_matrix = ranking_metrics(scores.view(), &[(0, 0), (1, 1), (2, 3)], Direction::LeftToRight).unwrap().mrr;
    let expected = 0.583_333_333_333_333_3;
    verdict(
        bad == 0 && (mrr - expected).abs() <= 1e-9 && (via_matrix - expected).abs() <= 1e-9,
        format!("{bad} oracle mismatches over 100 matrices x 2 directions, MRR [1,2,4] = {mrr:.5}"),
    )
}

// 11

fn determinism() -> Verdict {
    let mut cfg = ExperimentConfig::default();
    cfg.noise.ee = 0.3;
    cfg.noise.ea = 0.3;
    cfg.noise.aa = 0.3;
    cfg.ttr.enabled = true;
    cfg.ttr.backend = Backend::Mock;
    let dir = tempfile::tempdir().unwrap();
    let bytes: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let report = run(&cfg, 11).unwrap().report;
            let path = dir.path().join(format!("{name}.json"));
            std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap()).unwrap();
            std::fs::read(path).unwrap()
        })
        .collect();
    verdict(bytes[0] == bytes[1], format!("report.json {} bytes, identical: {}", bytes[0].len(), bytes[0] == bytes[1]))
}

fn main() {
    let mut failed = 0;
    let mut record = |n: u32, name: &str, v: Verdict| {
        println!("criterion {n:>2} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed += 1;
        }
    };
    record(1, "evidential identities", evidential_identities());
    record(2, "loss oracles", loss_oracles());
    record(3, "gradient checks", gradient_checks());
    record(4, "greedy and division oracles", greedy_and_division());
    record(5, "uncertainty witness", uncertainty_witness());

    let full_clean = sweep(Ablation::Full, 0.0, 0.0);
    let base_clean = sweep(Ablation::Baseline, 0.0, 0.0);
    let full_noisy = sweep(Ablation::Full, 0.5, 0.5);
    let base_noisy = sweep(Ablation::Baseline, 0.5, 0.5);
    record(6, "robustness trend", robustness(&full_clean, &base_clean, &full_noisy, &base_noisy));
    record(7, "noise detection", noise_detection(&sweep(Ablation::Full, 0.5, 0.0)));
    let middle = [
        ("only_unc", sweep(Ablation::OnlyUnc, 0.5, 0.5)),
        ("only_cons", sweep(Ablation::OnlyCons, 0.5, 0.5)),
        ("wo_drf", sweep(Ablation::WoDrf, 0.5, 0.5)),
    ];
    record(8, "ablation ordering", ablation_order(&full_noisy, &middle, &sweep(Ablation::WoDrl, 0.5, 0.5)));
    record(9, "reasoner correction", ttr_correction());
    record(10, "ranking metrics", metrics());
    record(11, "determinism", determinism());

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
