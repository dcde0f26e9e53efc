use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

fn degenerate<T>(why: impl Into<String>) -> Result<T, StatsError> {
    Err(StatsError::DegenerateInput(why.into()))
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample (n - 1) standard deviation; zero for a single value.
pub fn sample_stddev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Relative change from `before` to `after`, in percent.
pub fn relative_change_pct(before: f64, after: f64) -> Option<f64> {
    (before != 0.0).then(|| (after - before) / before * 100.0)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return degenerate(format!("lengths differ: {} vs {}", xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return degenerate("need at least two pairs");
    }
    let (mx, my) = (mean(xs).expect("non-empty"), mean(ys).expect("non-empty"));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return degenerate("zero variance");
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return degenerate(format!("lengths differ: {} vs {}", xs.len(), ys.len()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spread() {
        assert_eq!(mean(&[80.0; 10]), Some(80.0));
        assert_eq!(sample_stddev(&[80.0; 10]), Some(0.0));
        assert!((sample_stddev(&[70.0, 90.0]).unwrap() - 200f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean(&[]), None);
    }

    #[test]
    fn relative_improvement() {
        let r = relative_change_pct(54.3, 80.0).unwrap();
        assert!((r - 47.329650092).abs() < 1e-6);
        assert_eq!(relative_change_pct(0.0, 5.0), None);
    }

    #[test]
    fn linear_pairs() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let up: Vec<f64> = xs.iter().map(|x| 2.0 * x + 3.0).collect();
        let down: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &up).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&xs, &down).unwrap() + 1.0).abs() < 1e-12);
        // sum dx*dy = 8, sum dx^2 = sum dy^2 = 10
        assert!((pearson(&xs, &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(pearson(&[1.0], &[2.0]).is_err());
        assert!(pearson(&[1.0, 1.0], &[2.0, 3.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[2.0]).is_err());
        assert!(spearman(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let cubes: Vec<f64> = xs.iter().map(|x: &f64| x.powi(3)).collect();
        assert!((spearman(&xs, &cubes).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn pearson_sign_follows_slope(
            xs in prop::collection::vec(-50.0f64..50.0, 3..20),
            a in prop_oneof![0.1f64..10.0, -10.0f64..-0.1],
            b in -100.0f64..100.0,
        ) {
            prop_assume!(sample_stddev(&xs).unwrap() > 1e-3);
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let r = pearson(&xs, &ys).unwrap();
            prop_assert!((r - a.signum()).abs() < 1e-9);
        }

        #[test]
        fn spearman_ignores_monotone_maps(
            xs in prop::collection::vec(-5i32..5, 3..25),
            ys in prop::collection::vec(-5i32..5, 3..25),
        ) {
            let n = xs.len().min(ys.len());
            let xs: Vec<f64> = xs[..n].iter().map(|v| f64::from(*v)).collect();
            let ys: Vec<f64> = ys[..n].iter().map(|v| f64::from(*v)).collect();
            if let Ok(rho) = spearman(&xs, &ys) {
                let ex: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
                prop_assert!((spearman(&ex, &ys).unwrap() - rho).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&rho));
            }
        }

        #[test]
        fn percentage_scale_invariance(xs in prop::collection::vec(0.0f64..10.0, 2..12)) {
            let m = mean(&xs).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| x * 10.0).collect();
            prop_assert!((mean(&scaled).unwrap() - 10.0 * m).abs() < 1e-9);
        }
    }
}
