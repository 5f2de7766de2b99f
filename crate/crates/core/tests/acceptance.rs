//! Acceptance suite: one PASS/FAIL line per headline criterion.
//!
//! Runs as a plain binary (`harness = false`) so the summary prints in
//! order; the process exits non-zero if any criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chart_reward::asymmetry::{token_asymmetry_report, TokenCategory};
use chart_reward::curation::{
    consistency_prefilter, filter_by_render_similarity, filter_caption_length, RenderContext,
    WhitespaceTokenCounter,
};
use chart_reward::embedding::{
    kmeans, nearest_neighbors, EmbeddingError, Encoder, FeatureVector, MultiEmbedding, StubEncoder,
};
use chart_reward::eval::{
    executed_mean, execution_rate, normalized_mean, paired_t_test, EvalRecord,
};
use chart_reward::fixtures::{toy_bundle, two_arm_policy};
use chart_reward::image_io::{sha256_hex, solid_png};
use chart_reward::inspector::{Inspector, InspectorConfig, MockBackend, MockRule, MockRules};
use chart_reward::model::{Category, ChartSample, Provenance, QAItem, QASet};
use chart_reward::reward::{
    compute_advantages, compute_total_reward, executed_breakdown, pass_rate, RewardConfig,
    RewardEngine,
};
use chart_reward::sandbox::{execute_script, ExecutionLimits, ToyRenderer};
use chart_reward::toy_rl::{run_toy_rl_loop, ToyRlConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("took {elapsed:?}, limit {limit:?}")
    })
}

fn reward_formula_fidelity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let cases = 10_000;
    for case in 0..cases {
        let n = rng.gen_range(1..=30);
        let verdicts: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
        let r_vis: f64 = rng.gen_range(0.0..=1.0);
        let cfg = RewardConfig {
            lambda: rng.gen_range(0.0..3.0),
            ..RewardConfig::default()
        };
        let passed = verdicts.iter().filter(|&&v| v).count();
        let expected_qa = passed as f64 / n as f64;
        let r_qa = pass_rate(&verdicts);
        ensure(r_qa == expected_qa, || {
            format!("case {case}: r_qa {r_qa} vs {expected_qa}")
        })?;
        let total = compute_total_reward(r_qa, r_vis, &cfg);
        ensure(
            (total - (expected_qa + cfg.lambda * r_vis)).abs() < 1e-12,
            || format!("case {case}: total {total}"),
        )?;
        let b = executed_breakdown(verdicts, r_vis, &cfg);
        ensure(
            b.r_qa == expected_qa && (b.r_total - total).abs() < 1e-12,
            || format!("case {case}: breakdown"),
        )?;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{cases} cases in {:?}", start.elapsed()))
}

fn grpo_standardization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let mut degenerate = 0;
    for group in 0..10_000 {
        let g = rng.gen_range(2..=16);
        let rewards: Vec<f64> = if rng.gen_bool(0.1) {
            degenerate += 1;
            vec![rng.gen_range(0.0..2.0); g]
        } else {
            // Realistic mix: executed rewards r_qa + r_vis and zero floors.
            (0..g)
                .map(|_| {
                    if rng.gen_bool(0.2) {
                        0.0
                    } else {
                        rng.gen_range(0..=10) as f64 / 10.0 + rng.gen_range(0.0..1.0)
                    }
                })
                .collect()
        };
        let adv = compute_advantages(&rewards).map_err(|e| e.to_string())?;
        let n = g as f64;
        let mean_r = rewards.iter().sum::<f64>() / n;
        let var_r = rewards.iter().map(|r| (r - mean_r).powi(2)).sum::<f64>() / n;
        if var_r.sqrt() < 1e-12 {
            ensure(adv.iter().all(|&a| a == 0.0), || {
                format!("group {group}: zero-variance advantages {adv:?}")
            })?;
            continue;
        }
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        ensure(mean.abs() < 1e-9, || format!("group {group}: mean {mean}"))?;
        ensure((std - 1.0).abs() < 1e-9, || {
            format!("group {group}: std {std}")
        })?;
        for i in 0..g {
            for j in 0..g {
                let same = rewards[i].partial_cmp(&rewards[j]) == adv[i].partial_cmp(&adv[j]);
                ensure(same, || {
                    format!("group {group}: rank mismatch at ({i}, {j})")
                })?;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!(
        "10000 groups ({degenerate} zero-variance) in {:?}",
        start.elapsed()
    ))
}

/// Fixed vector per image fingerprint, for planting exact cosines.
struct LookupEncoder(HashMap<String, Vec<f64>>);

impl Encoder for LookupEncoder {
    fn id(&self) -> &str {
        "lookup"
    }
    fn dimension(&self) -> usize {
        2
    }
    fn embed(&self, image: &[u8]) -> Result<FeatureVector, EmbeddingError> {
        let v = self
            .0
            .get(&sha256_hex(image))
            .cloned()
            .ok_or(EmbeddingError::Unavailable("unknown".into()))?;
        FeatureVector::new(v, "lookup")
    }
}

fn threshold_semantics() -> Check {
    // Consistency prefilter: 10 questions, 0..=10 answered correctly.
    let mut samples = Vec::new();
    let mut rules = Vec::new();
    for correct in 0..=10usize {
        let img = solid_png(3, 3, [correct as u8 * 20, 1, 1]);
        rules.extend((0..10).map(|i| MockRule {
            image_fingerprint: sha256_hex(&img),
            question_pattern: format!("Q{i:02}:"),
            reply: if i < correct { "Yes" } else { "No" }.into(),
        }));
        let qa = QASet {
            source_image_id: format!("c{correct}"),
            items: (0..10)
                .map(|i| QAItem::boolean(format!("Q{i:02}: true?"), true, Category::TextPositive))
                .collect(),
        };
        samples.push(
            ChartSample::new(format!("c{correct}"), img, Provenance::SourceDataset).with_qa(qa),
        );
    }
    let backend = Arc::new(MockBackend::new(MockRules {
        rules,
        ..Default::default()
    }));
    let inspector =
        Inspector::new(backend, InspectorConfig::default()).map_err(|e| e.to_string())?;
    let r = consistency_prefilter(samples, &inspector, 0.9, 4).map_err(|e| e.to_string())?;
    ensure(r.kept_ids() == ["c9", "c10"], || {
        format!("prefilter kept {:?}", r.kept_ids())
    })?;

    // Similarity: exactly 0.8 drops, 0.8 + eps keeps.
    let render = |code: &str| {
        execute_script(&ToyRenderer, code, &ExecutionLimits::default())
            .unwrap()
            .image
            .unwrap()
    };
    let targets: [f64; 4] = [0.8 - 1e-9, 0.8, 0.8 + 1e-12, 0.8 + 1e-9];
    let mut table = HashMap::new();
    let mut samples = Vec::new();
    for (i, &c) in targets.iter().enumerate() {
        let src = solid_png(2, 2, [i as u8, 9, 9]);
        let code = format!("chart bar\ndata {} 2 3\nsave", i + 1);
        let (a, b) = if c == 0.8 {
            (vec![4.0, 3.0], vec![1.0, 0.0])
        } else {
            (vec![1.0, 0.0], vec![c, (1.0 - c * c).sqrt()])
        };
        table.insert(sha256_hex(&src), a);
        table.insert(sha256_hex(&render(&code)), b);
        samples.push(
            ChartSample::new(format!("s{i}"), src, Provenance::SourceDataset).with_code(code),
        );
    }
    let r = filter_by_render_similarity(
        samples,
        0.8,
        &RenderContext::new(&ToyRenderer),
        &LookupEncoder(table),
    )
    .map_err(|e| e.to_string())?;
    ensure(r.kept_ids() == ["s2", "s3"], || {
        format!("similarity kept {:?}", r.kept_ids())
    })?;

    // Caption length: 4095, 4096 keep; 4097 drops.
    let caption = |n: usize| vec!["tok"; n].join(" ");
    let samples: Vec<ChartSample> = [4095, 4096, 4097]
        .iter()
        .map(|&n| {
            ChartSample::new(format!("len{n}"), Vec::new(), Provenance::SourceDataset)
                .with_caption(caption(n))
        })
        .collect();
    let r = filter_caption_length(samples, 4096, &WhitespaceTokenCounter);
    ensure(r.kept_ids() == ["len4095", "len4096"], || {
        format!("caption kept {:?}", r.kept_ids())
    })?;
    Ok("prefilter 9/10 boundary, similarity > 0.8, caption <= 4096".into())
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn nearest_neighbor_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dims = [("stub-a", 256), ("stub-b", 128)];
    let make = |rng: &mut ChaCha8Rng| -> (Vec<Vec<f64>>, MultiEmbedding) {
        let raw: Vec<Vec<f64>> = dims.iter().map(|(_, d)| random_unit(rng, *d)).collect();
        let vectors = raw
            .iter()
            .zip(&dims)
            .map(|(v, (id, _))| FeatureVector::new(v.clone(), *id).unwrap())
            .collect();
        (raw, MultiEmbedding::new(vectors).unwrap())
    };
    let queries: Vec<_> = (0..100).map(|_| make(&mut rng)).collect();
    let corpus: Vec<_> = (0..1000).map(|_| make(&mut rng)).collect();
    // Plant exact copies so the top of some rankings is known.
    let mut corpus = corpus;
    for q in 0..10 {
        corpus[q * 97] = queries[q].clone();
    }
    let start = Instant::now();
    let q_emb: Vec<MultiEmbedding> = queries.iter().map(|(_, e)| e.clone()).collect();
    let c_emb: Vec<MultiEmbedding> = corpus.iter().map(|(_, e)| e.clone()).collect();
    let got = nearest_neighbors(&q_emb, &c_emb, corpus.len()).map_err(|e| e.to_string())?;
    for (qi, (q_raw, _)) in queries.iter().enumerate() {
        let mut oracle: Vec<(usize, f64)> = corpus
            .iter()
            .enumerate()
            .map(|(ci, (c_raw, _))| {
                let s: f64 = q_raw
                    .iter()
                    .zip(c_raw)
                    .map(|(a, b)| naive_cosine(a, b))
                    .sum();
                (ci, s / dims.len() as f64)
            })
            .collect();
        oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (rank, (want, got)) in oracle.iter().zip(&got[qi]).enumerate() {
            ensure(want.0 == got.index, || {
                format!("query {qi} rank {rank}: {} vs {}", want.0, got.index)
            })?;
            ensure((want.1 - got.score).abs() < 1e-9, || {
                format!("query {qi} rank {rank}: score")
            })?;
        }
        if qi < 10 {
            ensure(got[qi][0].index == qi * 97, || {
                format!("query {qi}: planted copy not first")
            })?;
        }
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "100 x 1000 x 2 encoders, full rankings, {:?}",
        start.elapsed()
    ))
}

fn partition(assign: &[usize]) -> BTreeSet<BTreeSet<usize>> {
    let k = assign.iter().max().map_or(0, |m| m + 1);
    (0..k)
        .map(|c| (0..assign.len()).filter(|&i| assign[i] == c).collect())
        .collect()
}

fn kmeans_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let centers: Vec<Vec<f64>> = (0..5)
        .map(|_| random_unit(&mut rng, 8).iter().map(|x| x * 10.0).collect())
        .collect();
    let points: Vec<Vec<f64>> = (0..300)
        .map(|i| {
            centers[i % 5]
                .iter()
                .map(|c| c + rng.gen_range(-1.5..1.5))
                .collect()
        })
        .collect();
    for seed in 0..10 {
        let a = kmeans(&points, 5, seed).map_err(|e| e.to_string())?;
        let b = kmeans(&points, 5, seed).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("seed {seed}: non-deterministic"))?;
        for w in a.sse_history.windows(2) {
            ensure(w[1] <= w[0], || {
                format!("seed {seed}: SSE rose {} -> {}", w[0], w[1])
            })?;
        }
    }

    // 4-point fixture against exhaustive search over 2-partitions.
    let pts = vec![
        vec![0.0, 0.0],
        vec![0.0, 1.0],
        vec![10.0, 10.0],
        vec![10.0, 11.0],
    ];
    let sse_of = |assign: &[usize]| -> f64 {
        (0..2)
            .map(|c| {
                let members: Vec<&Vec<f64>> = (0..4)
                    .filter(|&i| assign[i] == c)
                    .map(|i| &pts[i])
                    .collect();
                let mean: Vec<f64> = (0..2)
                    .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
                    .collect();
                members
                    .iter()
                    .map(|p| (0..2).map(|d| (p[d] - mean[d]).powi(2)).sum::<f64>())
                    .sum::<f64>()
            })
            .sum()
    };
    let mut best = (f64::INFINITY, BTreeSet::new());
    for code in 1..15usize {
        let assign: Vec<usize> = (0..4).map(|i| (code >> i) & 1).collect();
        let s = sse_of(&assign);
        if s < best.0 {
            best = (s, partition(&assign));
        }
    }
    for seed in 0..20 {
        let r = kmeans(&pts, 2, seed).map_err(|e| e.to_string())?;
        ensure(partition(&r.assignments) == best.1, || {
            format!("seed {seed}: {:?}", r.assignments)
        })?;
        ensure((r.sse() - best.0).abs() < 1e-12, || {
            format!("seed {seed}: sse {}", r.sse())
        })?;
    }
    Ok(format!(
        "determinism + monotone SSE on 10 seeds; fixture optimum SSE {}",
        best.0
    ))
}

fn statistics() -> Check {
    let zeros = [0.0; 5];
    let t = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &zeros).map_err(|e| e.to_string())?;
    ensure(t.df == 4 && (t.delta_mean - 3.0).abs() < 1e-12, || {
        format!("{t:?}")
    })?;
    ensure((t.t_statistic - 4.2426).abs() < 1e-3, || {
        format!("t {}", t.t_statistic)
    })?;
    ensure((t.p_value - 0.0132).abs() < 1e-3, || {
        format!("p {}", t.p_value)
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for set in 0..1000 {
        let n = rng.gen_range(2..60);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| x + rng.gen_range(-10.0..12.0)).collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let brute = mean * (n as f64).sqrt() / sd;
        let r = paired_t_test(&a, &b).map_err(|e| format!("set {set}: {e}"))?;
        ensure(
            (r.t_statistic - brute).abs() < 1e-9 * brute.abs().max(1.0),
            || format!("set {set}: t {} vs {brute}", r.t_statistic),
        )?;
        ensure(r.df == n - 1, || format!("set {set}: df"))?;
    }
    Ok(format!(
        "fixture t {:.4} p {:.4} df {}; 1000 random sets",
        t.t_statistic, t.p_value, t.df
    ))
}

fn normalization_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for set in 0..2000 {
        let n = rng.gen_range(1..80);
        let p_exec = rng.gen_range(0.0..=1.0);
        let records: Vec<EvalRecord> = (0..n)
            .map(|i| {
                if rng.gen_bool(p_exec) {
                    EvalRecord::executed(format!("s{i}"), rng.gen_range(0.0..100.0))
                } else {
                    EvalRecord::failed(format!("s{i}"))
                }
            })
            .collect();
        let norm = normalized_mean(&records).map_err(|e| e.to_string())?;
        let rate = execution_rate(&records).map_err(|e| e.to_string())?;
        let exec = executed_mean(&records).map_err(|e| e.to_string())?;
        let rhs = exec.unwrap_or(0.0) * rate;
        ensure((norm - rhs).abs() < 1e-12 * norm.abs().max(1.0), || {
            format!("set {set}: {norm} vs {rhs}")
        })?;
        ensure(exec.is_none_or(|m| norm <= m + 1e-12), || {
            format!("set {set}: normalized above executed mean")
        })?;
    }
    let worked = [80.0, 60.0, f64::NAN, f64::NAN, 100.0];
    let records: Vec<EvalRecord> = worked
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if s.is_nan() {
                EvalRecord::failed(format!("{i}"))
            } else {
                EvalRecord::executed(format!("{i}"), s)
            }
        })
        .collect();
    let norm = normalized_mean(&records).map_err(|e| e.to_string())?;
    ensure(norm == 48.0, || format!("fixture {norm}"))?;
    Ok("2000 random record sets; [80, 60, fail, fail, 100] -> 48".into())
}

fn toy_rl_loop() -> Check {
    let start = Instant::now();
    let bundle = toy_bundle();
    let inspector = Inspector::new(
        Arc::new(MockBackend::new(bundle.mock_rules)),
        InspectorConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let reward = RewardConfig::default();
    let engine = RewardEngine::new(&ToyRenderer, &inspector, &StubEncoder, reward);
    let policy = two_arm_policy(7);
    let cfg = ToyRlConfig::default();
    let trace =
        run_toy_rl_loop(&bundle.samples, &policy, &engine, &cfg, 20).map_err(|e| e.to_string())?;
    ensure(trace.epochs.len() == 20, || "epoch count".into())?;
    let mut prev = &trace.initial;
    for e in &trace.epochs {
        ensure(e.probabilities[0] > prev.probabilities[0], || {
            format!("epoch {}: p not increasing", e.epoch)
        })?;
        ensure(e.mean_reward >= prev.mean_reward, || {
            format!("epoch {}: mean reward fell", e.epoch)
        })?;
        ensure(e.pass_rate >= prev.pass_rate, || {
            format!("epoch {}: pass rate fell", e.epoch)
        })?;
        let (now, before) = (e.consistency_per_pass, prev.consistency_per_pass);
        ensure(
            matches!((now, before), (Some(a), Some(b)) if a >= b),
            || format!("epoch {}: ratio fell", e.epoch),
        )?;
        prev = e;
    }
    // Closed-form 2-arm update per step: the logit gap grows by
    // 2 lr sqrt(k (G - k)) / G, then is pulled back toward the reference.
    let g = reward.group_size;
    let gap_ref = policy.logits[0] - policy.logits[1];
    for s in &trace.steps {
        let k = s.arms.iter().filter(|&&a| a == 0).count();
        let before = s.logits_before[0] - s.logits_before[1];
        let step = 2.0 * cfg.learning_rate * ((k * (g - k)) as f64).sqrt() / g as f64;
        let expected =
            gap_ref + (before + step - gap_ref) / (1.0 + cfg.learning_rate * reward.kl_beta);
        let after = s.logits_after[0] - s.logits_after[1];
        ensure((after - expected).abs() < 1e-12, || {
            format!(
                "epoch {} step {}: gap {after} vs {expected}",
                s.epoch, s.step
            )
        })?;
    }
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "p_faithful {:.4} -> {:.4} over 20 epochs, {} steps match closed form, {:?}",
        trace.initial.probabilities[0],
        trace.epochs.last().unwrap().probabilities[0],
        trace.steps.len(),
        start.elapsed()
    ))
}

fn token_asymmetry() -> Check {
    let fixture = include_str!("fixtures/asymmetry/fixture.py");
    let counts: serde_json::Value =
        serde_json::from_str(include_str!("fixtures/asymmetry/fixture_counts.json"))
            .map_err(|e| e.to_string())?;
    let report = token_asymmetry_report(&[fixture]).map_err(|e| e.to_string())?;
    let total = counts["total"].as_u64().unwrap() as usize;
    ensure(report.total_tokens == total, || {
        format!("total {}", report.total_tokens)
    })?;
    for cat in TokenCategory::ALL {
        let key = cat.as_str();
        let want = counts[key].as_u64().unwrap() as usize;
        ensure(report.counts[key] == want, || {
            format!("{key}: {} vs {want}", report.counts[key])
        })?;
        ensure(report.shares[key] == want as f64 / total as f64, || {
            format!("{key} share")
        })?;
    }
    ensure(
        report.attribute_value_tokens
            == counts["attribute_value_tokens"].as_u64().unwrap() as usize,
        || "attribute values".into(),
    )?;
    let json = serde_json::to_value(&report).map_err(|e| e.to_string())?;
    for field in [
        "shares",
        "attribute_value_share",
        "top3_coverage",
        "visual_related_share",
    ] {
        ensure(json.get(field).is_some(), || {
            format!("missing field {field}")
        })?;
    }
    let lines = [
        "import matplotlib.pyplot as plt",
        "x = [1, 2, 3]",
        "plt.plot(x, color='red', lw=2, marker='o')",
        "plt.title('T', fontsize=12)",
        "total = helper(x)",
        "# note",
        "plt.show()",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..500 {
        let corpus: Vec<String> = (0..rng.gen_range(1..5))
            .map(|_| {
                (0..rng.gen_range(1..10))
                    .map(|_| format!("{}\n", lines[rng.gen_range(0..lines.len())]))
                    .collect()
            })
            .collect();
        let r = token_asymmetry_report(&corpus).map_err(|e| e.to_string())?;
        let sum: f64 = r.shares.values().sum();
        ensure((sum - 1.0).abs() < 1e-9, || format!("shares sum {sum}"))?;
        ensure(r.attribute_value_share <= r.visual_related_share, || {
            "attribute share above visual share".into()
        })?;
    }
    Ok(format!(
        "fixture {total} tokens match hand counts; 500 random corpora partition"
    ))
}

fn main() {
    type Criterion = (&'static str, fn() -> Check);
    let criteria: &[Criterion] = &[
        ("reward formula fidelity", reward_formula_fidelity),
        ("GRPO standardization", grpo_standardization),
        ("threshold semantics", threshold_semantics),
        ("nearest-neighbor oracle", nearest_neighbor_oracle),
        ("k-means properties", kmeans_properties),
        ("statistics", statistics),
        ("normalization identity", normalization_identity),
        ("toy RL loop", toy_rl_loop),
        ("token asymmetry", token_asymmetry),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
