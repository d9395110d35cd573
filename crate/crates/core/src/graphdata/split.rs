use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub train_fraction: f64,
}

/// Stratified shuffle split. Per-class train counts are allotted by largest
/// remainder so the overall train size is `round(fraction · len)`, with at
/// least one graph of every class on each side.
pub fn split(dataset: &[Graph], train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Param(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let classes = super::num_classes(dataset);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, g) in dataset.iter().enumerate() {
        by_class[g.label].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() == 1 {
            return Err(Error::Param(format!(
                "cannot stratify: class {c} has a single instance"
            )));
        }
    }
    let present: Vec<usize> = (0..classes).filter(|&c| !by_class[c].is_empty()).collect();

    let target = (train_fraction * dataset.len() as f64).round() as usize;
    let mut quota: Vec<usize> = vec![0; classes];
    let mut remainders = Vec::new();
    for &c in &present {
        let exact = train_fraction * by_class[c].len() as f64;
        quota[c] = exact.floor() as usize;
        remainders.push((exact - exact.floor(), c));
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let assigned: usize = quota.iter().sum();
    for &(_, c) in remainders.iter().take(target.saturating_sub(assigned)) {
        quota[c] += 1;
    }
    for &c in &present {
        quota[c] = quota[c].clamp(1, by_class[c].len() - 1);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for &c in &present {
        let mut members = by_class[c].clone();
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..quota[c]]);
        test.extend_from_slice(&members[quota[c]..]);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(Split {
        train,
        test,
        seed,
        train_fraction,
    })
}
