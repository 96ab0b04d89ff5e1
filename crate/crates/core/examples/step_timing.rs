//! Wall time of a few training steps at the CS-CMNIST defaults.

use std::time::Instant;

use shiftlab::datasets::{load_mnist_dir, make_cs_cmnist};
use shiftlab::penalties::{Algorithm, ObjectiveConfig};
use shiftlab::trainer::{train, PreparedData, TrialConfig};

fn main() -> shiftlab::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data/mnist".into());
    let (train_set, test_set) = load_mnist_dir(dir)?;
    let domains = make_cs_cmnist(&train_set.concat(test_set)?, 0)?;
    let data = PreparedData::new(domains, 0.2, 0)?;
    for algorithm in [Algorithm::Erm, Algorithm::MmdCem] {
        let mut cfg = TrialConfig::cs_cmnist_defaults(ObjectiveConfig::new(algorithm, 1.0, 1.0), 1);
        cfg.total_steps = 5;
        cfg.objective.warmup_steps = 0;
        let t = Instant::now();
        train(&cfg, &data)?;
        println!("{algorithm}: {:.2} s/step", t.elapsed().as_secs_f64() / 5.0);
    }
    Ok(())
}
