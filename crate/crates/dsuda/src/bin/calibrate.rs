// Scratch calibration harness (not part of the deliverable surface).
use std::time::Instant;

use dsuda::model::ModelShape;
use dsuda::pipeline::run_training;
use dsuda::preprocess::{align_dataset, PreprocessConfig};
use dsuda::synth::{bayes_reference, generate, linear_probe_accuracy, SynthConfig};
use dsuda::trainer::TrainConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("timing");

    let synth = SynthConfig::default();
    let pre = PreprocessConfig::default();
    let pair = generate(&synth).unwrap();
    let (ps, pt) = align_dataset(&pair.source, &pair.target, &pre).unwrap();
    println!("source processed: {}, target processed: {}", ps.len(), pt.len());

    let bayes = bayes_reference(&synth, 10_000).unwrap();
    println!("bayes reference: {bayes:.4}");

    let raw_side: Vec<Vec<f64>> = pair.target.iter().map(|t| t.samples.clone()).collect();
    let sides: Vec<u8> = pair.target.iter().map(|t| t.side.as_bit()).collect();
    println!(
        "raw side probe: {:.4}",
        linear_probe_accuracy(&raw_side, &sides).unwrap()
    );
    let norm_side: Vec<Vec<f64>> = pt.iter().map(|t| t.samples.clone()).collect();
    let sides_n: Vec<u8> = pt.iter().map(|t| t.side.as_bit()).collect();
    println!(
        "normalized side probe: {:.4}",
        linear_probe_accuracy(&norm_side, &sides_n).unwrap()
    );

    let shape = ModelShape::default();

    match mode {
        "timing" => {
            // One epoch-scale timing probe.
            let cfg = TrainConfig {
                pretrain_epochs: 5,
                adversarial_epochs: 5,
                seed: 1,
                ..TrainConfig::default()
            };
            let t0 = Instant::now();
            let artifacts = run_training(&ps, &pt, shape, &cfg).unwrap();
            let elapsed = t0.elapsed().as_secs_f64();
            println!(
                "5+5 epochs in {elapsed:.2}s  (acc {:?})",
                artifacts.evaluation.reports[0].acc
            );
            let per_adv_epoch = {
                let log = &artifacts.log;
                let adv: Vec<_> = log
                    .iter()
                    .filter(|r| matches!(r.stage, dsuda::trainer::Stage::Adversarial))
                    .collect();
                adv.last().unwrap().seconds / adv.len() as f64
            };
            println!("~{per_adv_epoch:.3}s per adversarial epoch");
            println!(
                "projected default run: {:.1}s",
                per_adv_epoch * 200.0 + artifacts.log[4].seconds / 5.0 * 50.0
            );
        }
        "compare" => {
            let seeds: Vec<u64> = args
                .get(2)
                .map(|s| s.split(',').map(|x| x.parse().unwrap()).collect())
                .unwrap_or_else(|| vec![1, 2, 3]);
            let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(200);
            let sign = match args.get(4).map(String::as_str) {
                Some("literal") => dsuda::model::SignConvention::Literal,
                _ => dsuda::model::SignConvention::Confuse,
            };
            let mut full_accs = Vec::new();
            let mut base_accs = Vec::new();
            for &seed in &seeds {
                let mut cfg =
                    TrainConfig { seed, adversarial_epochs: epochs, ..TrainConfig::default() };
                cfg.weights.sign_convention = sign;
                let t0 = Instant::now();
                let full = run_training(&ps, &pt, shape, &cfg).unwrap();
                let base =
                    run_training(&ps, &pt, shape, &cfg.without_adaptation()).unwrap();
                let fa = full.evaluation.reports[0].acc.unwrap();
                let ba = base.evaluation.reports[0].acc.unwrap();
                println!(
                    "seed {seed}: full {fa:.4}  baseline {ba:.4}  ({:.1}s for both)",
                    t0.elapsed().as_secs_f64()
                );
                full_accs.push(fa);
                base_accs.push(ba);
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            println!(
                "mean full {:.4}  mean baseline {:.4}  gap {:.4}  bayes {bayes:.4}  85%bayes {:.4}",
                mean(&full_accs),
                mean(&base_accs),
                mean(&full_accs) - mean(&base_accs),
                0.85 * bayes
            );
        }
        "scan" => {
            let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
            let t1 = SynthConfig {
                template_control: vec![[2.0, 1.0, 0.0]],
                template_tinnitus: vec![[3.0, 1.0, 0.4], [7.0, 0.5, 1.0]],
                drift_amplitude: 1.2,
                drift_frequency: 3.0,
                noise_sigma: 0.4,
                ..SynthConfig::default()
            };
            let variants: Vec<(&str, SynthConfig)> = vec![
                (
                    "W1 lowfreq amp2.5",
                    SynthConfig {
                        drift_frequency: 0.7,
                        drift_amplitude: 2.5,
                        ..t1.clone()
                    },
                ),
                (
                    "W2 lowfreq amp3.5",
                    SynthConfig {
                        drift_frequency: 0.7,
                        drift_amplitude: 3.5,
                        ..t1.clone()
                    },
                ),
                (
                    "W3 freq1.3 amp2.5",
                    SynthConfig {
                        drift_frequency: 1.3,
                        drift_amplitude: 2.5,
                        ..t1.clone()
                    },
                ),
                (
                    "W4 lowfreq amp2.5 sigma.25",
                    SynthConfig {
                        drift_frequency: 0.7,
                        drift_amplitude: 2.5,
                        noise_sigma: 0.25,
                        ..t1.clone()
                    },
                ),
            ];
            for (name, synth) in variants {
                let pair = generate(&synth).unwrap();
                let (ps, pt) = align_dataset(&pair.source, &pair.target, &pre).unwrap();
                let bayes = bayes_reference(&synth, 10_000).unwrap();
                let mut fulls = Vec::new();
                let mut bases = Vec::new();
                for seed in [1u64, 2] {
                    let cfg = TrainConfig {
                        seed,
                        adversarial_epochs: epochs,
                        ..TrainConfig::default()
                    };
                    let full = run_training(&ps, &pt, shape, &cfg).unwrap();
                    let base = run_training(&ps, &pt, shape, &cfg.without_adaptation()).unwrap();
                    fulls.push(full.evaluation.reports[0].acc.unwrap());
                    bases.push(base.evaluation.reports[0].acc.unwrap());
                }
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                println!(
                    "{name}: bayes {bayes:.3} base {:.3} full {:.3} gap {:+.3} (need full >= {:.3})",
                    mean(&bases),
                    mean(&fulls),
                    mean(&fulls) - mean(&bases),
                    0.85 * bayes
                );
            }
        }
        "traj" => {
            use dsuda::trainer::{
                adversarial_train_observed, evaluate, init_model, pretrain, transplant, StepKind,
            };
            let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
            for no_adapt in [false, true] {
                let mut cfg = TrainConfig { seed, ..TrainConfig::default() };
                if no_adapt {
                    cfg = cfg.without_adaptation();
                }
                let mut model = init_model(shape, &cfg).unwrap();
                pretrain(&mut model, &ps, &cfg).unwrap();
                transplant(&mut model).unwrap();
                let acc0 = evaluate(&model, &pt).unwrap().reports[0].acc.unwrap();
                print!(
                    "{} traj: pre {acc0:.3}",
                    if no_adapt { "base" } else { "full" }
                );
                let steps_per_epoch =
                    ((ps.len() + 15) / 16) * (cfg.steps_dae + cfg.steps_suda);
                let mut step = 0usize;
                let pt_ref = &pt;
                adversarial_train_observed(&mut model, &ps, &pt, &cfg, &mut |_: StepKind, m| {
                    step += 1;
                    if step % (steps_per_epoch * 20) == 0 {
                        let acc = evaluate(m, pt_ref).unwrap().reports[0].acc.unwrap();
                        print!(" {acc:.3}");
                    }
                })
                .unwrap();
                let acc_end = evaluate(&model, &pt).unwrap().reports[0].acc.unwrap();
                println!(" | end {acc_end:.3}");
            }
        }
        other => eprintln!("unknown mode {other}"),
    }
}
