use crate::{Error, Result};

/// Regression deltas along time for a row-major `[rows × n_frames]` array,
/// `d_t = Σ_{n=1..N} n (c_{t+n} − c_{t−n}) / (2 Σ n²)` with replicated edges.
pub fn delta(coeffs: &[f64], n_frames: usize, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("delta window must be at least 1"));
    }
    if n_frames < 2 * n + 1 {
        return Err(Error::invalid(format!(
            "delta needs at least {} frames, got {n_frames}",
            2 * n + 1
        )));
    }
    if n_frames == 0 || coeffs.len() % n_frames != 0 {
        return Err(Error::shape("delta input", &[n_frames], &[coeffs.len()]));
    }
    let denom = 2.0 * (1..=n).map(|k| (k * k) as f64).sum::<f64>();
    let last = n_frames as isize - 1;
    let mut out = vec![0.0; coeffs.len()];
    for (row_in, row_out) in coeffs.chunks_exact(n_frames).zip(out.chunks_exact_mut(n_frames)) {
        let at = |i: isize| row_in[i.clamp(0, last) as usize];
        for (t, d) in row_out.iter_mut().enumerate() {
            let t = t as isize;
            *d = (1..=n as isize)
                .map(|k| k as f64 * (at(t + k) - at(t - k)))
                .sum::<f64>()
                / denom;
        }
    }
    Ok(out)
}
