use rayon::prelude::*;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMap {
    /// `[(h − kh + 1) × (w − kw + 1)]`, row-major.
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub kernel: (usize, usize),
    pub fill: f32,
}

/// Model probability with each fully-contained `kernel` placement of an
/// `[h × w × c]` map replaced by `fill` across all channels.
pub fn occlusion_map<F>(
    model: F,
    instance: &[f32],
    dims: [usize; 3],
    kernel: (usize, usize),
    fill: f32,
) -> Result<OcclusionMap>
where
    F: Fn(&[f32]) -> f64 + Sync,
{
    let [h, w, c] = dims;
    if instance.len() != h * w * c {
        return Err(Error::shape("occlusion instance", &dims, &[instance.len()]));
    }
    let (kh, kw) = kernel;
    if kh == 0 || kw == 0 || kh > h || kw > w {
        return Err(Error::invalid(format!(
            "occlusion kernel {kh}×{kw} does not fit a {h}×{w} map"
        )));
    }
    let (rows, cols) = (h - kh + 1, w - kw + 1);
    let values = (0..rows * cols)
        .into_par_iter()
        .map_init(
            || instance.to_vec(),
            |x, pos| {
                let (y0, x0) = (pos / cols, pos % cols);
                for y in y0..y0 + kh {
                    let o = (y * w + x0) * c;
                    x[o..o + kw * c].fill(fill);
                }
                let p = model(x);
                for y in y0..y0 + kh {
                    let o = (y * w + x0) * c;
                    x[o..o + kw * c].copy_from_slice(&instance[o..o + kw * c]);
                }
                p
            },
        )
        .collect();
    Ok(OcclusionMap {
        values,
        rows,
        cols,
        kernel,
        fill,
    })
}
