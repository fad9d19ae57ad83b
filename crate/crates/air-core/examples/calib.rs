//! Scratch calibration harness (not part of the deliverable).
use air_core::data::{generate, GenSpec};
use air_core::model::{Method, MlpVariant, ModelConfig, PathMode};
use air_core::train::{fit, TrainConfig};
use std::time::Instant;

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> T
where T::Err: std::fmt::Debug {
    args.get(i).map(|s| s.parse().unwrap()).unwrap_or(default)
}

fn main() {
    let a: Vec<String> = std::env::args().collect();
    let episodes: usize = arg(&a, 1, 1200);
    let epochs: usize = arg(&a, 2, 3);
    let lr: f64 = arg(&a, 3, 1e-3);
    let variant: String = arg(&a, 4, "full".to_string());
    let dropout: f64 = arg(&a, 5, 0.3);
    let t: usize = arg(&a, 6, 9);
    let n: usize = arg(&a, 7, 12);
    let d: usize = arg(&a, 8, 64);
    let cg: usize = arg(&a, 9, 8);
    let sigma: f64 = arg(&a, 10, 0.5);
    let amplitude: f64 = arg(&a, 11, 1.5);
    let wd: f64 = arg(&a, 12, 0.01);

    let spec = GenSpec { episodes, t, n, d, c_group: cg, sigma, amplitude, seed: 42, ..GenSpec::default() };
    let ds = generate(&spec).unwrap().split(1.0 / 6.0, 7).unwrap();

    let (path_mode, var) = match variant.as_str() {
        "st" => (PathMode::SingleSt, MlpVariant::Full),
        "ts" => (PathMode::SingleTs, MlpVariant::Full),
        "nor" => (PathMode::Dual, MlpVariant::NoRefiner),
        "ronly" => (PathMode::Dual, MlpVariant::RefinerOnly),
        _ => (PathMode::Dual, MlpVariant::Full),
    };
    let mc = ModelConfig { path_mode, variant: var, dropout, c_group: cg, seed: 1, ..ModelConfig::new(Method::Mlp, t, n, d) };
    let tc = TrainConfig { epochs, warmup_epochs: 1.min(epochs - 1), base_lr: lr, weight_decay: wd, batch_size: 32, seed: 3, ..TrainConfig::default() };
    let t1 = Instant::now();
    let state = fit(&mc, &tc, ds.train(), ds.test()).unwrap();
    let dt = t1.elapsed().as_secs_f64();
    for h in state.history.iter() {
        eprintln!("epoch {:>3} lr {:.5} loss {:.4} mca {:.2} st {:?} ts {:?}",
            h.epoch, h.lr, h.train_loss, h.test_mca, h.st_mca, h.ts_mca);
    }
    eprintln!("fit: {:.1}s ({:.2}s/epoch) best {:.2} @ {}", dt, dt / epochs as f64, state.best_mca, state.best_epoch);
}
