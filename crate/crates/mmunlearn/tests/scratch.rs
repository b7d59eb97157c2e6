use mmunlearn::baselines::{run_baseline, BaselineConfig, Method};
use mmunlearn::eval::{eval_matching, mi_ratio, unimodal_probe};
use mmunlearn::harness::ExperimentConfig;
use mmunlearn::model::*;
use mmunlearn::synthdata::*;
use mmunlearn::unlearn::*;

fn probe_arch(name: &str, mc: &ModelConfig, bundle0: &DatasetBundle) {
    let tc = TrainConfig::default();
    let t0 = std::time::Instant::now();
    let f = train_original(bundle0, mc, &tc).unwrap();
    println!(
        "{name}: f {:.2} ({:.0}s)",
        eval_matching(&f, bundle0, &bundle0.pair_ids_in(Split::Test), 99).unwrap(),
        t0.elapsed().as_secs_f64()
    );
    let base = UnlearnConfig::default();
    let mut gaps = Vec::new();
    let mut slacks = Vec::new();
    let mut probe_lower = 0;
    let mut mi_mds = Vec::new();
    let mut mi_fts = Vec::new();
    for seed in 0..5u64 {
        let mut bundle = bundle0.clone();
        bundle.deletion_mask = sample_deletion_set(&bundle, 100, seed).unwrap();
        let test = bundle.pair_ids_in(Split::Test);
        let fresh = sample_unrelated_pairs(&bundle, 400, seed ^ 0xf2e5).unwrap();
        let combos: Vec<(usize, usize)> = bundle
            .forget_ids()
            .iter()
            .map(|&pid| {
                let p = bundle.pair(pid);
                (p.a_id, p.b_id)
            })
            .collect();
        let f_test = eval_matching(&f, &bundle, &test, seed).unwrap();
        let ucfg = UnlearnConfig { seed, ..base.clone() };
        let (md, _) = multidelete_unlearn(&f, &bundle, &ucfg).unwrap();
        let (no_ukr, _) =
            multidelete_unlearn(&f, &bundle, &UnlearnConfig { gamma: 0.0, ..ucfg.clone() })
                .unwrap();
        let d_test = eval_matching(&md, &bundle, &test, seed).unwrap();
        let d_f = related_rate(&md, &bundle, &combos).unwrap() * 100.0;
        let unrel = related_rate(&md, &bundle, &fresh).unwrap() * 100.0;
        gaps.push(f_test - d_test);
        slacks.push(d_f - unrel);
        let (po, pf) = unimodal_probe(&f, &md, &bundle, seed).unwrap();
        let (_, pn) = unimodal_probe(&f, &no_ukr, &bundle, seed).unwrap();
        if pn < pf {
            probe_lower += 1;
        }
        let ft_cfg = ExperimentConfig::default()
            .baselines
            .iter()
            .find(|b| b.method == Method::Finetune)
            .cloned()
            .unwrap();
        let ft = run_baseline(
            &f,
            &bundle,
            &TrainConfig::default(),
            &BaselineConfig { seed, ..ft_cfg },
        )
        .unwrap();
        let mi_md = mi_ratio(&f, &md, &bundle, seed).unwrap();
        let mi_ft = mi_ratio(&f, &ft, &bundle, seed).unwrap();
        mi_mds.push(mi_md);
        mi_fts.push(mi_ft);
        println!(
            "  seed {seed}: gap {:.2} slack {:.2} probe o/f/n {po:.2}/{pf:.2}/{pn:.2} mi md {mi_md:.3} ft {mi_ft:.3}",
            f_test - d_test,
            d_f - unrel
        );
    }
    println!(
        "{name} MEAN gap {:.2} slack {:.2} probe_lower {probe_lower}/5 mi md {:.3} ft {:.3}",
        gaps.iter().sum::<f64>() / 5.0,
        slacks.iter().sum::<f64>() / 5.0,
        mi_mds.iter().sum::<f64>() / 5.0,
        mi_fts.iter().sum::<f64>() / 5.0
    );
}

#[test]
#[ignore]
fn probe_beta() {
    let bundle0 = generate_dataset(&SynthConfig::default()).unwrap();
    probe_arch("default e48h128", &ModelConfig::default(), &bundle0);
}
