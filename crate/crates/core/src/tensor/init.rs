use rand::Rng;

use super::Tensor;

/// `rows x cols` matrix drawn uniformly from `[-a, a]`, `a = sqrt(6 / (rows + cols))`.
pub fn uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let values = (0..rows * cols).map(|_| rng.gen_range(-a..=a)).collect();
    Tensor::matrix(rows, cols, values).expect("positive dimensions")
}

pub fn zeros(rows: usize, cols: usize) -> Tensor {
    Tensor::zeros(vec![rows, cols])
}

pub fn ones(rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, vec![1.0; rows * cols]).expect("positive dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn range_and_determinism() {
        let a = uniform(6, 4, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        let b = uniform(6, 4, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        let bound = (6.0f64 / 10.0).sqrt();
        assert!(a.values().iter().all(|v| v.abs() <= bound));
    }
}
