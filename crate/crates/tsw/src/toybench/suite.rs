//! Synthetic task family: every task is a Gaussian-cluster classification
//! problem over a shared label space. All sampling runs sequentially on one
//! seeded generator, so a suite is a pure function of (config, seed).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::SuiteConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub xs: Vec<Vec<f32>>,
    pub ys: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSuite {
    pub tasks: Vec<TaskData>,
    /// Mixture over all tasks with class labels kept, for generic pretraining.
    pub pretrain: Dataset,
    /// means[task][class] cluster centers, exposed for diagnostics.
    pub means: Vec<Vec<Vec<f32>>>,
}

fn sample_mean(rng: &mut ChaCha8Rng, dim: usize, radius: f32) -> Vec<f32> {
    let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || radius == 0.0 {
        return vec![0.0; dim];
    }
    z.iter()
        .map(|&v| (v / norm * radius as f64) as f32)
        .collect()
}

fn sample_point(rng: &mut ChaCha8Rng, mean: &[f32], spread: f32) -> Vec<f32> {
    mean.iter()
        .map(|&m| {
            let z: f64 = rng.sample(StandardNormal);
            (m as f64 + spread as f64 * z) as f32
        })
        .collect()
}

/// Draw order: all cluster means, then each task's train and test splits
/// (class-major), then the pretrain mixture (task round-robin, classes cycled
/// so labels stay balanced).
pub fn gen_suite(cfg: &SuiteConfig, seed: u64) -> TaskSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<Vec<f32>>> = (0..cfg.tasks)
        .map(|_| {
            (0..cfg.classes)
                .map(|_| sample_mean(&mut rng, cfg.input_dim, cfg.radius))
                .collect()
        })
        .collect();

    let split = |rng: &mut ChaCha8Rng, task: usize, per_class: usize| {
        let mut xs = Vec::with_capacity(cfg.classes * per_class);
        let mut ys = Vec::with_capacity(cfg.classes * per_class);
        for (c, mean) in means[task].iter().enumerate() {
            for _ in 0..per_class {
                xs.push(sample_point(rng, mean, cfg.spread));
                ys.push(c);
            }
        }
        Dataset { xs, ys }
    };

    let tasks: Vec<TaskData> = (0..cfg.tasks)
        .map(|t| TaskData {
            train: split(&mut rng, t, cfg.train_per_class),
            test: split(&mut rng, t, cfg.test_per_class),
        })
        .collect();

    let total = cfg.tasks * cfg.pretrain_per_task;
    let mut xs = Vec::with_capacity(total);
    let mut ys = Vec::with_capacity(total);
    for i in 0..total {
        let t = i % cfg.tasks;
        let c = (i / cfg.tasks) % cfg.classes;
        xs.push(sample_point(&mut rng, &means[t][c], cfg.spread));
        ys.push(c);
    }

    TaskSuite {
        tasks,
        pretrain: Dataset { xs, ys },
        means,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SuiteConfig {
        SuiteConfig {
            tasks: 3,
            input_dim: 5,
            classes: 4,
            hidden: vec![8],
            radius: 3.0,
            spread: 0.5,
            train_per_class: 6,
            test_per_class: 2,
            pretrain_per_task: 9,
        }
    }

    #[test]
    fn same_seed_is_bit_identical_and_seeds_differ() {
        let cfg = small_cfg();
        let a = gen_suite(&cfg, 42);
        let b = gen_suite(&cfg, 42);
        assert_eq!(a, b);
        let c = gen_suite(&cfg, 43);
        assert_ne!(a.tasks[0].train.xs[0], c.tasks[0].train.xs[0]);
    }

    #[test]
    fn shapes_counts_and_label_balance() {
        let cfg = small_cfg();
        let s = gen_suite(&cfg, 7);
        assert_eq!(s.tasks.len(), 3);
        assert_eq!(s.means.len(), 3);
        assert_eq!(s.means[0].len(), 4);
        for task in &s.tasks {
            assert_eq!(task.train.len(), 24);
            assert_eq!(task.test.len(), 8);
            assert!(task.train.xs.iter().all(|x| x.len() == 5));
            for c in 0..4 {
                assert_eq!(task.train.ys.iter().filter(|&&y| y == c).count(), 6);
                assert_eq!(task.test.ys.iter().filter(|&&y| y == c).count(), 2);
            }
        }
        assert_eq!(s.pretrain.len(), 27);
        // Round-robin keeps per-task counts exactly balanced.
        for y in &s.pretrain.ys {
            assert!(*y < 4);
        }
    }

    #[test]
    fn means_sit_on_the_radius_sphere() {
        let cfg = small_cfg();
        let s = gen_suite(&cfg, 3);
        for task in &s.means {
            for m in task {
                let norm = m.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
                assert!((norm - 3.0).abs() < 1e-4, "norm {norm}");
            }
        }
    }

    #[test]
    fn zero_radius_zero_spread_collapses_to_origin() {
        let cfg = SuiteConfig {
            radius: 0.0,
            spread: 0.0,
            ..small_cfg()
        };
        let s = gen_suite(&cfg, 1);
        for task in &s.tasks {
            for x in task.train.xs.iter().chain(&task.test.xs) {
                assert!(x.iter().all(|&v| v == 0.0));
            }
        }
    }
}
