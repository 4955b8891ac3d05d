use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            seed: 42,
            stratified: true,
        }
    }
}

/// Splits rows into `(train, test)`.
///
/// The test size is `round(n * test_fraction)`. With stratification each
/// class contributes `floor(count * test_fraction)` rows and the remaining
/// slots go to the classes with the largest fractional remainders (lower
/// label first on ties). Within each class, rows are shuffled by the
/// `"split"` stream derived from `spec.seed` (class 0 first, then class 1)
/// and the leading rows become test rows. Both outputs keep file order.
pub fn stratified_split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Usage(format!(
            "test_fraction {} outside (0, 1)",
            spec.test_fraction
        )));
    }
    let n = data.n_rows();
    let mut rng = rng::stream(spec.seed, "split");
    let mut test: Vec<usize> = if spec.stratified {
        let groups: Vec<Vec<usize>> = (0..=1u8)
            .map(|c| (0..n).filter(|&i| data.y[i] == c).collect())
            .collect();
        if groups.iter().any(Vec::is_empty) {
            return Err(Error::Stratification(
                "both classes must be present to stratify".into(),
            ));
        }
        let counts = test_counts(
            &groups.iter().map(Vec::len).collect::<Vec<_>>(),
            spec.test_fraction,
        );
        let mut test = Vec::new();
        for (class, (mut rows, k)) in groups.into_iter().zip(counts).enumerate() {
            if k == 0 || k == rows.len() {
                return Err(Error::Stratification(format!(
                    "class {class} would put {k} of {} rows in the test set",
                    rows.len()
                )));
            }
            rng::shuffle(&mut rng, &mut rows);
            test.extend_from_slice(&rows[..k]);
        }
        test
    } else {
        let k = (n as f64 * spec.test_fraction).round() as usize;
        if k == 0 || k == n {
            return Err(Error::Usage(format!(
                "split of {n} rows leaves an empty side"
            )));
        }
        let mut rows: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut rng, &mut rows);
        rows.truncate(k);
        rows
    };
    test.sort_unstable();
    let mut in_test = vec![false; n];
    test.iter().for_each(|&i| in_test[i] = true);
    let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
    Ok((data.subset(&train), data.subset(&test)))
}

/// Largest-remainder allocation of `round(total * fraction)` test slots.
fn test_counts(class_sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = class_sizes.iter().sum();
    let target = (total as f64 * fraction).round() as usize;
    let exact: Vec<f64> = class_sizes.iter().map(|&c| c as f64 * fraction).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &c in order.iter().cycle().take(target.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn toy(labels: &[u8]) -> Dataset {
        let n = labels.len();
        let x = Tensor::new(vec![n, 1], (0..n).map(|i| i as f64).collect()).unwrap();
        Dataset::new(x, labels.to_vec(), vec!["f".into()]).unwrap()
    }

    #[test]
    fn largest_remainder_counts() {
        assert_eq!(test_counts(&[48, 147], 0.2), vec![10, 29]);
        assert_eq!(test_counts(&[2, 2], 0.5), vec![1, 1]);
        assert_eq!(test_counts(&[5, 5], 0.25), vec![2, 1]);
    }

    #[test]
    fn balanced_half_split() {
        let data = toy(&[0, 1, 0, 1]);
        let spec = SplitSpec {
            test_fraction: 0.5,
            ..SplitSpec::default()
        };
        let (train, test) = stratified_split(&data, &spec).unwrap();
        assert_eq!(train.class_counts(), (1, 1));
        assert_eq!(test.class_counts(), (1, 1));
    }

    #[test]
    fn same_seed_same_partition() {
        let labels: Vec<u8> = (0..60).map(|i| u8::from(i % 3 != 0)).collect();
        let data = toy(&labels);
        let (a_train, a_test) = stratified_split(&data, &SplitSpec::default()).unwrap();
        let (b_train, b_test) = stratified_split(&data, &SplitSpec::default()).unwrap();
        assert_eq!(a_test.row_ids, b_test.row_ids);
        assert_eq!(a_train.row_ids, b_train.row_ids);
        let other = SplitSpec {
            seed: 7,
            ..SplitSpec::default()
        };
        let (_, c_test) = stratified_split(&data, &other).unwrap();
        assert_ne!(a_test.row_ids, c_test.row_ids);
    }

    #[test]
    fn single_class_is_rejected() {
        let data = toy(&[1, 1, 1, 1, 1]);
        assert!(matches!(
            stratified_split(&data, &SplitSpec::default()),
            Err(Error::Stratification(_))
        ));
    }

    #[test]
    fn too_few_rows_for_a_test_member() {
        // 2 negatives at 20% rounds to zero test negatives.
        let data = toy(&[0, 0, 1, 1, 1, 1, 1, 1, 1, 1]);
        assert!(matches!(
            stratified_split(&data, &SplitSpec::default()),
            Err(Error::Stratification(_))
        ));
    }

    #[test]
    fn unstratified_split_sizes() {
        let data = toy(&[0, 1, 0, 1, 1, 1, 0, 1, 1, 1]);
        let spec = SplitSpec {
            stratified: false,
            ..SplitSpec::default()
        };
        let (train, test) = stratified_split(&data, &spec).unwrap();
        assert_eq!((train.n_rows(), test.n_rows()), (8, 2));
    }

    #[test]
    fn bad_fraction() {
        let data = toy(&[0, 1, 0, 1]);
        for f in [0.0, 1.0, -0.1, f64::NAN] {
            let spec = SplitSpec {
                test_fraction: f,
                ..SplitSpec::default()
            };
            assert!(stratified_split(&data, &spec).is_err());
        }
    }
}
