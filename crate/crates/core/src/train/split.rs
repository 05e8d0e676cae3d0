use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{arg_err, Error, Result};
use crate::rng;

/// Per-class training counts whose total is `round(fraction · N)`.
///
/// Each class first gets `floor(fraction · n_c)` clamped to `[1, n_c − 1]`;
/// the remaining slots go to the classes with the largest fractional parts
/// (ties to the lower class index) that still have room.
pub fn stratified_counts(class_sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = class_sizes.iter().sum();
    let target = (fraction * total as f64).round() as usize;
    let mut counts: Vec<usize> = class_sizes
        .iter()
        .map(|&n| {
            if n < 2 {
                n
            } else {
                ((fraction * n as f64).floor() as usize).clamp(1, n - 1)
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = fraction * class_sizes[a] as f64;
        let fb = fraction * class_sizes[b] as f64;
        (fb - fb.floor()).total_cmp(&(fa - fa.floor())).then(a.cmp(&b))
    });
    let mut assigned: usize = counts.iter().sum();
    while assigned < target {
        let Some(&c) = order.iter().find(|&&c| counts[c] + 1 < class_sizes[c]) else { break };
        counts[c] += 1;
        assigned += 1;
        order.retain(|&o| o != c);
        order.push(c);
    }
    counts
}

/// Seeded stratified split into disjoint train and test sets. Both keep the
/// original sample order.
pub fn split_dataset(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return arg_err(format!("train fraction must lie in (0, 1), got {train_fraction}"));
    }
    if dataset.is_empty() {
        return arg_err("cannot split an empty dataset");
    }
    let sizes = dataset.class_counts();
    if let Some((c, &n)) = sizes.iter().enumerate().find(|(_, &n)| n < 2) {
        return Err(Error::ClassStarvation(format!(
            "class {c} has {n} sample(s); stratified splitting needs at least 2 per class"
        )));
    }
    let counts = stratified_counts(&sizes, train_fraction);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
    for (i, s) in dataset.samples().iter().enumerate() {
        by_class[s.label].push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, mut idx) in by_class.into_iter().enumerate() {
        idx.shuffle(&mut rng::stream_at(seed, "split", c as u64));
        let (a, b) = idx.split_at(counts[c]);
        train.extend_from_slice(a);
        test.extend_from_slice(b);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}
