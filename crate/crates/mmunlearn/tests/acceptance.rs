//! End-to-end acceptance checks for the full toolkit: forgetting quality,
//! baseline comparisons, ablation directions, membership-inference protection,
//! unimodal utility, efficiency, numeric correctness, and determinism. Each
//! check prints one PASS/FAIL line; the test fails if any check fails.

use std::fmt::Write as _;

use mmunlearn::baselines::{run_baseline, BaselineConfig, Method};
use mmunlearn::eval::{eval_matching, mi_ratio, unimodal_probe};
use mmunlearn::harness::{read_results_csv, run_experiment_config, ExperimentConfig};
use mmunlearn::model::{
    grad_check, related_rate, train_original, FusionKind, ModelConfig, MultimodalModel,
    TrainConfig,
};
use mmunlearn::synthdata::{
    generate_dataset, sample_deletion_set, sample_unrelated_pairs, DatasetBundle, Split,
    SynthConfig,
};
use mmunlearn::unlearn::{
    composite_loss, loss_md, loss_mkr, loss_ukr, multidelete_unlearn, UnlearnConfig,
};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const DELETION_SIZE: usize = 100;

struct SeedOutcome {
    f_test: f64,
    md_d_test: f64,
    md_d_f: f64,
    unrel: f64,
    md_wall_s: f64,
    md_mi: f64,
    mi_self: f64,
    probe_orig: f64,
    probe_full: f64,
    probe_no_ukr: f64,
    // ablation variants
    no_md_d_f: f64,
    f_d_f: f64,
    no_mkr_d_test: f64,
    no_ukr_d_test: f64,
    // baselines
    ft_gap: f64,
    ft_mi: f64,
    ng_gap: f64,
    dtd_gap: f64,
    dtd_d_test: f64,
}

fn percent_related(model: &MultimodalModel, bundle: &DatasetBundle, pairs: &[(usize, usize)]) -> f64 {
    related_rate(model, bundle, pairs).unwrap() * 100.0
}

fn run_seed(f: &MultimodalModel, bundle0: &DatasetBundle, seed: u64) -> SeedOutcome {
    let mut bundle = bundle0.clone();
    bundle.deletion_mask = sample_deletion_set(&bundle, DELETION_SIZE, seed).unwrap();
    let test = bundle.pair_ids_in(Split::Test);
    let forget_pairs: Vec<(usize, usize)> = bundle
        .forget_ids()
        .iter()
        .map(|&pid| {
            let p = bundle.pair(pid);
            (p.a_id, p.b_id)
        })
        .collect();
    let fresh = sample_unrelated_pairs(&bundle, 400, seed ^ 0xf2e5).unwrap();

    let f_test = eval_matching(f, &bundle, &test, seed).unwrap();
    let f_d_f = percent_related(f, &bundle, &forget_pairs);

    let ucfg = UnlearnConfig { seed, ..UnlearnConfig::default() };
    let (md, trace) = multidelete_unlearn(f, &bundle, &ucfg).unwrap();
    let no_md_model =
        multidelete_unlearn(f, &bundle, &UnlearnConfig { alpha: 0.0, ..ucfg.clone() })
            .unwrap()
            .0;
    let no_mkr_model =
        multidelete_unlearn(f, &bundle, &UnlearnConfig { beta: 0.0, ..ucfg.clone() })
            .unwrap()
            .0;
    let no_ukr_model =
        multidelete_unlearn(f, &bundle, &UnlearnConfig { gamma: 0.0, ..ucfg.clone() })
            .unwrap()
            .0;

    let mi_self = mi_ratio(f, f, &bundle, seed).unwrap();

    let train_cfg = TrainConfig::default();
    let run_base = |method: Method| {
        let base = ExperimentConfig::default()
            .baselines
            .iter()
            .find(|b| b.method == method)
            .cloned()
            .unwrap_or_else(|| panic!("no default baseline for {}", method.name()));
        run_baseline(f, &bundle, &train_cfg, &BaselineConfig { seed, ..base }).unwrap()
    };
    let ft = run_base(Method::Finetune);
    let ng = run_base(Method::Neggrad);
    let dtd = run_base(Method::Dtd);

    let gap_of = |m: &MultimodalModel| {
        (percent_related(m, &bundle, &forget_pairs) - percent_related(m, &bundle, &fresh)).abs()
    };

    let (probe_orig, probe_full) = unimodal_probe(f, &md, &bundle, seed).unwrap();
    let (_, probe_no_ukr) = unimodal_probe(f, &no_ukr_model, &bundle, seed).unwrap();

    SeedOutcome {
        f_test,
        md_d_test: eval_matching(&md, &bundle, &test, seed).unwrap(),
        md_d_f: percent_related(&md, &bundle, &forget_pairs),
        unrel: percent_related(&md, &bundle, &fresh),
        md_wall_s: trace.wall_time_s,
        md_mi: mi_ratio(f, &md, &bundle, seed).unwrap(),
        mi_self,
        probe_orig,
        probe_full,
        probe_no_ukr,
        no_md_d_f: percent_related(&no_md_model, &bundle, &forget_pairs),
        f_d_f,
        no_mkr_d_test: eval_matching(&no_mkr_model, &bundle, &test, seed).unwrap(),
        no_ukr_d_test: eval_matching(&no_ukr_model, &bundle, &test, seed).unwrap(),
        ft_gap: gap_of(&ft),
        ft_mi: mi_ratio(f, &ft, &bundle, seed).unwrap(),
        ng_gap: gap_of(&ng),
        dtd_gap: gap_of(&dtd),
        dtd_d_test: eval_matching(&dtd, &bundle, &test, seed).unwrap(),
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn linear_r2(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

#[test]
fn acceptance() {
    let bundle0 = generate_dataset(&SynthConfig::default()).unwrap();
    let f = train_original(&bundle0, &ModelConfig::default(), &TrainConfig::default()).unwrap();

    let outcomes: Vec<SeedOutcome> =
        SEEDS.iter().map(|&s| run_seed(&f, &bundle0, s)).collect();

    let mut lines: Vec<(bool, String)> = Vec::new();
    let mut record = |ok: bool, name: &str, detail: String| {
        lines.push((ok, format!("{}: {name} — {detail}", if ok { "PASS" } else { "FAIL" })));
    };

    // 1: forgetting with retention
    {
        let forget_gap = mean(outcomes.iter().map(|o| (o.md_d_f - o.unrel).abs()));
        let retain_gap = mean(outcomes.iter().map(|o| (o.f_test - o.md_d_test).abs()));
        let max_wall = outcomes.iter().map(|o| o.md_wall_s).fold(0.0, f64::max);
        let ok = forget_gap <= 10.0 && retain_gap <= 3.0 && max_wall <= 120.0;
        record(
            ok,
            "criterion 1 (forgetting with retention)",
            format!(
                "mean |D_f - unrelated| = {forget_gap:.2} (<= 10), mean D_Test drop = {retain_gap:.2} (<= 3), max wall {max_wall:.1}s (<= 120)"
            ),
        );
    }

    // 2: superiority over baselines
    {
        let md_gap = mean(outcomes.iter().map(|o| (o.md_d_f - o.unrel).abs()));
        let ft_gap = mean(outcomes.iter().map(|o| o.ft_gap));
        let ng_gap = mean(outcomes.iter().map(|o| o.ng_gap));
        let dtd_gap = mean(outcomes.iter().map(|o| o.dtd_gap));
        let md_test = mean(outcomes.iter().map(|o| o.md_d_test));
        let dtd_test = mean(outcomes.iter().map(|o| o.dtd_d_test));
        let ok = md_gap < ft_gap && md_gap < ng_gap && md_gap < dtd_gap
            && md_test >= dtd_test + 10.0;
        record(
            ok,
            "criterion 2 (superiority over baselines)",
            format!(
                "gaps: ours {md_gap:.2} vs finetune {ft_gap:.2}, neggrad {ng_gap:.2}, dtd {dtd_gap:.2}; D_Test ours {md_test:.2} vs dtd {dtd_test:.2} (+10 required)"
            ),
        );
    }

    // 3: ablation directions
    {
        let no_md_drop = mean(outcomes.iter().map(|o| (o.no_md_d_f - o.f_d_f).abs()));
        let majority = outcomes
            .iter()
            .filter(|o| (o.f_test - o.no_mkr_d_test) > (o.f_test - o.no_ukr_d_test))
            .count();
        let ok = no_md_drop <= 5.0 && majority >= 3;
        record(
            ok,
            "criterion 3 (ablation directions)",
            format!(
                "alpha=0 D_f shift {no_md_drop:.2} (<= 5); beta=0 drop exceeds gamma=0 drop on {majority}/5 seeds"
            ),
        );
    }

    // 4: membership-inference protection
    {
        let md_mi = mean(outcomes.iter().map(|o| o.md_mi));
        let ft_mi = mean(outcomes.iter().map(|o| o.ft_mi));
        let self_ok = outcomes.iter().all(|o| (o.mi_self - 1.0).abs() <= 0.05);
        let ok = md_mi > ft_mi && md_mi > 1.0 && self_ok;
        record(
            ok,
            "criterion 4 (membership-inference protection)",
            format!(
                "mi_ratio ours {md_mi:.3} vs finetune {ft_mi:.3} (> and > 1.0); self-ratio within 0.05 on all seeds: {self_ok}"
            ),
        );
    }

    // 5: unimodal utility
    {
        let probe_gap = mean(outcomes.iter().map(|o| (o.probe_full - o.probe_orig).abs()));
        let majority =
            outcomes.iter().filter(|o| o.probe_no_ukr < o.probe_full).count();
        let ok = probe_gap <= 2.0 && majority >= 3;
        record(
            ok,
            "criterion 5 (unimodal utility)",
            format!(
                "probe shift {probe_gap:.2} (<= 2); gamma=0 probe strictly lower on {majority}/5 seeds"
            ),
        );
    }

    // 6: efficiency
    {
        let sizes = [50usize, 100, 150, 200, 250];
        let base = UnlearnConfig::default();
        let mut md_points = Vec::new();
        let mut ratio_ok = true;
        let mut detail = String::new();
        for &size in &sizes {
            let mut bundle = bundle0.clone();
            bundle.deletion_mask = sample_deletion_set(&bundle, size, 0).unwrap();
            let steps =
                ((base.steps as f64) * size as f64 / *sizes.last().unwrap() as f64).ceil() as usize;
            let ucfg = UnlearnConfig { steps, seed: 0, val_every: usize::MAX, ..base.clone() };
            let (_, trace) = multidelete_unlearn(&f, &bundle, &ucfg).unwrap();
            let start = std::time::Instant::now();
            mmunlearn::baselines::retrain_with_config(
                &bundle,
                &ModelConfig::default(),
                &TrainConfig::default(),
                0,
            )
            .unwrap();
            let retrain_s = start.elapsed().as_secs_f64();
            if trace.wall_time_s * 3.0 > retrain_s {
                ratio_ok = false;
            }
            let _ = write!(
                detail,
                "{size}:{:.1}s/{:.1}s ",
                trace.wall_time_s, retrain_s
            );
            md_points.push((size as f64, trace.wall_time_s));
        }
        let r2 = linear_r2(&md_points);
        let ok = r2 >= 0.9 && ratio_ok;
        record(
            ok,
            "criterion 6 (efficiency)",
            format!("R^2 = {r2:.3} (>= 0.9); >= 3x faster than retrain at every size: {ratio_ok} [{detail}]"),
        );
    }

    // 7: numeric correctness
    {
        let tiny = ModelConfig {
            dim_a: 3,
            dim_b: 4,
            emb_dim: 2,
            hidden_dims: vec![5],
            fusion_kind: FusionKind::Parametric,
            fusion_hidden: 4,
            fusion_dim: 3,
        };
        let fa = vec![0.1, -0.2, 0.3];
        let fb = vec![0.4, 0.5, -0.6, 0.7];
        let ua = vec![-0.3, 0.1, 0.9];
        let ub = vec![0.2, 0.2, -0.4, 0.1];
        let ra = vec![0.6, 0.0, -0.5];
        let rb = vec![-0.1, 0.8, 0.3, -0.2];
        let teacher = MultimodalModel::init(&tiny, 42).unwrap();
        let cfg = UnlearnConfig::default();
        let mut max_err = 0.0f64;
        for point_seed in [0u64, 1, 2] {
            let student = MultimodalModel::init(&tiny, 100 + point_seed).unwrap();
            let checks = [
                grad_check(
                    &student,
                    |m| loss_md(m, &teacher, &[(&fa, &fb)], &[(&ua, &ub)]).unwrap(),
                    20,
                    point_seed,
                ),
                grad_check(
                    &student,
                    |m| loss_mkr(m, &teacher, &[(&ra, &rb)]).unwrap(),
                    20,
                    point_seed,
                ),
                grad_check(
                    &student,
                    |m| loss_ukr(m, &teacher, &[(&fa, &fb)]).unwrap(),
                    20,
                    point_seed,
                ),
                grad_check(
                    &student,
                    |m| {
                        let (_, _, _, total, grad) = composite_loss(
                            m,
                            &teacher,
                            &[(&fa, &fb)],
                            &[(&ua, &ub)],
                            &[(&ra, &rb)],
                            &cfg,
                        )
                        .unwrap();
                        (total, grad)
                    },
                    20,
                    point_seed,
                ),
            ];
            max_err = checks.iter().fold(max_err, |a, &b| a.max(b));
        }

        // batched vs naive double loop on a batch of <= 8
        let student = MultimodalModel::init(&tiny, 7).unwrap();
        let feats: Vec<(Vec<f64>, Vec<f64>)> = (0..8)
            .map(|i| {
                (
                    vec![0.1 * i as f64, -0.2, 0.05 * i as f64],
                    vec![0.3, 0.1 * i as f64, -0.4, 0.2],
                )
            })
            .collect();
        let deleted: Vec<(&[f64], &[f64])> =
            feats[..4].iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
        let unrelated: Vec<(&[f64], &[f64])> =
            feats[4..].iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
        let (batched, _) = loss_md(&student, &teacher, &deleted, &unrelated).unwrap();
        let mut naive = 0.0;
        for (i, d) in deleted.iter().enumerate() {
            let s = student.forward_pair(d.0, d.1).unwrap().fused;
            let u = &unrelated[i];
            let t = teacher.forward_pair(u.0, u.1).unwrap().fused;
            naive += s
                .iter()
                .zip(&t)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / s.len() as f64
                / deleted.len() as f64;
        }
        let naive_err = (batched - naive).abs();

        // fusion-only: encoder params byte-identical, L_UKR identically zero
        let small_bundle = generate_dataset(&SynthConfig {
            n_concepts: 60,
            latent_dim: 6,
            dim_a: 8,
            dim_b: 7,
            ..SynthConfig::default()
        })
        .unwrap();
        let small_model = ModelConfig {
            dim_a: 8,
            dim_b: 7,
            emb_dim: 4,
            hidden_dims: vec![6],
            fusion_hidden: 8,
            fusion_dim: 4,
            ..ModelConfig::default()
        };
        let small_f = train_original(
            &small_bundle,
            &small_model,
            &TrainConfig { steps: 200, ..TrainConfig::default() },
        )
        .unwrap();
        let mut b = small_bundle.clone();
        b.deletion_mask = sample_deletion_set(&b, 5, 3).unwrap();
        let (fp, trace) = multidelete_unlearn(
            &small_f,
            &b,
            &UnlearnConfig {
                fusion_only: true,
                steps: 40,
                batch_f: 4,
                batch_r: 8,
                ..UnlearnConfig::default()
            },
        )
        .unwrap();
        let n_enc = small_f.encoder_param_count();
        let enc_identical = small_f.flat_params()[..n_enc]
            .iter()
            .zip(&fp.flat_params()[..n_enc])
            .all(|(a, b)| a.to_bits() == b.to_bits());
        let ukr_zero = trace.rows.iter().all(|r| r.l_ukr == 0.0);

        let ok = max_err <= 1e-4 && naive_err <= 1e-10 && enc_identical && ukr_zero;
        record(
            ok,
            "criterion 7 (numeric correctness)",
            format!(
                "grad check max rel err {max_err:.2e} (<= 1e-4); batched vs naive {naive_err:.2e} (<= 1e-10); fusion-only encoders identical: {enc_identical}; L_UKR == 0: {ukr_zero}"
            ),
        );
    }

    // 8: determinism of the end-to-end harness
    {
        let tmp = tempfile::tempdir().unwrap();
        let small = ExperimentConfig {
            synth: SynthConfig {
                n_concepts: 250,
                latent_dim: 8,
                dim_a: 10,
                dim_b: 9,
                ..SynthConfig::default()
            },
            model: ModelConfig {
                dim_a: 10,
                dim_b: 9,
                emb_dim: 6,
                hidden_dims: vec![8],
                fusion_hidden: 12,
                fusion_dim: 6,
                ..ModelConfig::default()
            },
            train: TrainConfig { steps: 300, ..TrainConfig::default() },
            unlearn: Some(UnlearnConfig {
                steps: 60,
                batch_f: 8,
                batch_r: 16,
                ..UnlearnConfig::default()
            }),
            deletion_sizes: vec![20],
            seeds: vec![0],
            output_dir: tmp.path().join("a"),
            ..ExperimentConfig::default()
        };
        let mut second = small.clone();
        second.output_dir = tmp.path().join("b");
        let m1 = run_experiment_config(&small).unwrap();
        let m2 = run_experiment_config(&second).unwrap();
        let strip_seconds = |path: &std::path::Path| {
            read_results_csv(path)
                .unwrap()
                .into_iter()
                .map(|mut r| {
                    r.wall_time_s = 0.0;
                    serde_json::to_string(&r).unwrap()
                })
                .collect::<Vec<String>>()
        };
        let r1 = strip_seconds(&m1.results_csv.unwrap());
        let r2 = strip_seconds(&m2.results_csv.unwrap());
        let ok = !r1.is_empty() && r1 == r2;
        record(
            ok,
            "criterion 8 (determinism)",
            format!("{} rows, identical excluding wall time: {}", r1.len(), r1 == r2),
        );
    }

    for (_, line) in &lines {
        println!("{line}");
    }
    let failures: Vec<&String> =
        lines.iter().filter(|(ok, _)| !ok).map(|(_, l)| l).collect();
    assert!(failures.is_empty(), "failed checks:\n{}", failures.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("\n"));
}
