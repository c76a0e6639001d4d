//! Sinusoidal timestep embeddings.

use ndarray::Array1;

/// Transformer-style sinusoidal embedding of a scalar position.
///
/// First half sines, second half cosines, with geometrically spaced
/// frequencies. `dim` must be even.
pub fn sinusoidal_embedding(position: f64, dim: usize) -> Array1<f64> {
    assert!(dim >= 2 && dim % 2 == 0, "embedding dim must be even, got {dim}");
    let half = dim / 2;
    let mut out = Array1::zeros(dim);
    for i in 0..half {
        let denom = if half > 1 { (half - 1) as f64 } else { 1.0 };
        let freq = (-(10_000.0f64.ln()) * i as f64 / denom).exp();
        out[i] = (position * freq).sin();
        out[half + i] = (position * freq).cos();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_is_bounded_and_distinct_per_step() {
        let a = sinusoidal_embedding(1.0, 16);
        let b = sinusoidal_embedding(2.0, 16);
        assert!(a.iter().all(|v| v.abs() <= 1.0));
        assert!(a.iter().zip(b.iter()).any(|(x, y)| (x - y).abs() > 1e-6));
    }
}
