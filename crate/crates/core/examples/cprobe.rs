use mindstate::features::FeatureMatrix;
use mindstate::formation::DrowsyLength;
use mindstate::ingest::{generate_synthetic, StateProfile, SynthSpec};
use mindstate::models::{ClassifierConfig, SvmConfig};
use mindstate::pipeline::{featurize_trial, train_eval, PipelineParams};
use mindstate::split::{Paradigm, SplitSpec};

fn features(recs: &[mindstate::ingest::RawRecording], d_l: DrowsyLength, w_s: usize) -> FeatureMatrix {
    let mut params = PipelineParams::default();
    params.formation.d_l = d_l;
    params.w_s_samples = w_s;
    let parts: Vec<FeatureMatrix> = recs
        .iter()
        .filter(|r| r.trial_index as usize >= params.formation.drop_first_trials)
        .map(|r| featurize_trial(r, &params).unwrap())
        .collect();
    FeatureMatrix::vstack(&parts).unwrap()
}

fn study(fm: &FeatureMatrix, label: &str, c: f64, epochs: usize) -> (Vec<f64>, Vec<f64>) {
    let subjects = fm.subjects();
    let mut bal = Vec::new();
    let mut rec = Vec::new();
    for seed in 0..6u64 {
        let mut b = Vec::new();
        let mut r = Vec::new();
        for subject in &subjects {
            let spec = SplitSpec::new(Paradigm::LeaveOneOut(subject.clone()), seed);
            let cfg = ClassifierConfig::Svm(SvmConfig { c, epochs, seed, ..SvmConfig::default() });
            let out = train_eval(fm, &spec, &cfg, label).expect("train_eval");
            b.push(out.report.balanced_accuracy);
            r.push(out.report.drowsy_recall.unwrap());
        }
        bal.push(b.iter().sum::<f64>() / b.len() as f64);
        rec.push(r.iter().sum::<f64>() / r.len() as f64);
    }
    (bal, rec)
}

fn show(name: &str, v: &[f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let cells: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    println!("  {name}: [{}] mean {m:.4}", cells.join(", "));
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let minutes: f64 = args[1].parse().unwrap();
    let var: f64 = args[2].parse().unwrap();
    let drowsy_gain: f64 = args[3].parse().unwrap();
    let c: f64 = args[4].parse().unwrap();
    let epochs: usize = args[5].parse().unwrap();
    println!("minutes={minutes} var={var} drowsy_gain={drowsy_gain} C={c} epochs={epochs}");

    let mut spec = SynthSpec { seed: 1, trial_minutes: minutes, subject_variability: var, ..SynthSpec::default() };
    spec.profile[2] = StateProfile { band_hz: spec.profile[2].band_hz, gain: drowsy_gain };
    let t0 = std::time::Instant::now();
    let recs = generate_synthetic(&spec).unwrap();
    println!("synth: {:.1} s", t0.elapsed().as_secs_f64());

    for (tag, d_l) in [("d10", DrowsyLength::Minutes(10)), ("d20", DrowsyLength::Minutes(20)), ("dmax", DrowsyLength::Max)] {
        let t0 = std::time::Instant::now();
        let fm = features(&recs, d_l, 128);
        let tf = t0.elapsed().as_secs_f64();
        let t0 = std::time::Instant::now();
        let (b, r) = study(&fm, tag, c, epochs);
        println!("{tag} ({} rows, featurize {tf:.1} s, study {:.1} s):", fm.num_rows(), t0.elapsed().as_secs_f64());
        show("bal", &b);
        show("rec", &r);
    }
}
