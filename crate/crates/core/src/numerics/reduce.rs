//! Fixed-shape pairwise reductions. The tree depends only on the slice
//! length, so results do not change with the number of worker threads.

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise_sum_by(xs, 0.0, |a, b| a + b)
}

pub fn pairwise_sum_by<T, F>(xs: &[T], zero: T, add: F) -> T
where
    T: Clone,
    F: Fn(T, T) -> T + Copy,
{
    match xs.len() {
        0 => zero,
        1 => xs[0].clone(),
        n => {
            let (l, r) = xs.split_at(n / 2);
            add(
                pairwise_sum_by(l, zero.clone(), add),
                pairwise_sum_by(r, zero, add),
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[3.0]), 3.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0, 4.0, 5.0]), 15.0);
    }

    #[test]
    fn better_than_naive_on_small_increments() {
        let xs = vec![0.1; 1 << 20];
        let err = (pairwise_sum(&xs) - 0.1 * (1 << 20) as f64).abs();
        assert!(err < 1e-8, "{err}");
    }
}
