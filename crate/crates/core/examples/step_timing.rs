//! Times optimizer steps for a Travel-sized denoiser.

use std::time::Instant;

use bindiff_core::codec::{BinaryRow, Condition};
use bindiff_core::denoiser::{Denoiser, DenoiserConfig};
use bindiff_core::noise::NoiseSchedule;
use bindiff_core::trainer::{train_step, Adam};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let d = 70;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = Denoiser::<f32>::new(DenoiserConfig::new(d, 2), &mut rng).unwrap();
    let mut adam = Adam::new(&model, 1e-4, 0.0);
    let rows: Vec<BinaryRow> = (0..256).map(|_| BinaryRow::new((0..d).map(|_| rng.random()).collect())).collect();
    let cond = Condition(vec![1.0, 0.0]);
    let null = Condition(vec![0.0, 0.0]);
    let batch: Vec<_> = rows.iter().map(|r| (r, &cond)).collect();
    let schedule = NoiseSchedule::default();
    let n = 50;
    let start = Instant::now();
    for _ in 0..n {
        train_step(&mut model, &mut adam, &batch, &null, &schedule, 0.1, &mut rng).unwrap();
    }
    let per = start.elapsed().as_secs_f64() / n as f64;
    println!("{} params, {:.2} ms/step, 20k steps = {:.1} min", model.num_params(), per * 1e3, per * 20_000.0 / 60.0);
}
