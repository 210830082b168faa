//! Per-layer kernels on channels-last `[H][W][C]` activations.
//!
//! Conv kernels are stored `[C_out][kh][kw][C_in]`, which makes each filter a
//! contiguous row of the im2col product. Dense kernels are `[out][in]`.

use super::scalar::{gemm, Scalar};

/// Geometry of a stride-1 convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad_t: usize,
    pub pad_l: usize,
    pub oh: usize,
    pub ow: usize,
    pub cout: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }
}

/// Unfold output columns `x0..x1` into `cols`, one row per output position
/// (row-major over `(y, x)`), zero where the patch leaves the input.
pub(crate) fn im2col<T: Scalar>(g: &ConvGeom, input: &[T], x0: usize, x1: usize, cols: &mut Vec<T>) {
    let kk = g.patch_len();
    let nx = x1 - x0;
    let span = g.kw * g.cin;
    cols.clear();
    cols.resize(g.oh * nx * kk, T::ZERO);
    for y in 0..g.oh {
        for x in x0..x1 {
            let row = &mut cols[(y * nx + x - x0) * kk..][..kk];
            // valid input columns of this patch: [ix0, ix1)
            let left = x as isize - g.pad_l as isize;
            let ix0 = left.max(0) as usize;
            let ix1 = ((left + g.kw as isize).min(g.w as isize)).max(0) as usize;
            if ix0 >= ix1 {
                continue;
            }
            let dx0 = (ix0 as isize - left) as usize;
            let len = (ix1 - ix0) * g.cin;
            for dy in 0..g.kh {
                let iy = (y + dy) as isize - g.pad_t as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                let src = (iy as usize * g.w + ix0) * g.cin;
                let dst = dy * span + dx0 * g.cin;
                row[dst..dst + len].copy_from_slice(&input[src..src + len]);
            }
        }
    }
}

/// Scatter-add the im2col gradient back onto the input map.
pub(crate) fn col2im<T: Scalar>(g: &ConvGeom, dcols: &[T], dinput: &mut [T]) {
    let kk = g.patch_len();
    for y in 0..g.oh {
        for x in 0..g.ow {
            let row = &dcols[(y * g.ow + x) * kk..][..kk];
            for dy in 0..g.kh {
                let iy = (y + dy) as isize - g.pad_t as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                for dx in 0..g.kw {
                    let ix = (x + dx) as isize - g.pad_l as isize;
                    if ix < 0 || ix >= g.w as isize {
                        continue;
                    }
                    let dst = (iy as usize * g.w + ix as usize) * g.cin;
                    let src = (dy * g.kw + dx) * g.cin;
                    for c in 0..g.cin {
                        dinput[dst + c] += row[src + c];
                    }
                }
            }
        }
    }
}

/// Pre-activation of output columns `x0..x1` from an already unfolded `cols`.
/// Writes into the full-size `out` map.
pub(crate) fn conv_from_cols<T: Scalar>(
    g: &ConvGeom,
    cols: &[T],
    kernel: &[T],
    bias: &[T],
    x0: usize,
    x1: usize,
    out: &mut [T],
) {
    let kk = g.patch_len();
    let nx = x1 - x0;
    if nx == 0 {
        return;
    }
    if nx == g.ow {
        // contiguous output: one product over all positions
        for cell in out[..g.oh * g.ow * g.cout].chunks_exact_mut(g.cout) {
            cell.copy_from_slice(bias);
        }
        gemm(
            g.oh * g.ow,
            kk,
            g.cout,
            (cols, kk, 1),
            (kernel, 1, kk),
            T::ONE,
            (out, g.cout, 1),
        );
        return;
    }
    for y in 0..g.oh {
        let base = (y * g.ow + x0) * g.cout;
        for x in 0..nx {
            out[base + x * g.cout..][..g.cout].copy_from_slice(bias);
        }
        // out[y, x0+x, co] += Σ_k cols[(y, x), k] · kernel[co, k]
        gemm(
            nx,
            kk,
            g.cout,
            (&cols[y * nx * kk..], kk, 1),
            (kernel, 1, kk),
            T::ONE,
            (&mut out[base..], g.cout, 1),
        );
    }
}

/// Full conv pre-activation; `cols` keeps the unfolded input for backward.
pub(crate) fn conv_forward<T: Scalar>(
    g: &ConvGeom,
    input: &[T],
    kernel: &[T],
    bias: &[T],
    cols: &mut Vec<T>,
    out: &mut [T],
) {
    im2col(g, input, 0, g.ow, cols);
    conv_from_cols(g, cols, kernel, bias, 0, g.ow, out);
}

/// Accumulates kernel/bias gradients and, if requested, the input gradient.
pub(crate) fn conv_backward<T: Scalar>(
    g: &ConvGeom,
    cols: &[T],
    kernel: &[T],
    dout: &[T],
    dkernel: &mut [T],
    dbias: &mut [T],
    dinput: Option<&mut [T]>,
    scratch: &mut Vec<T>,
) {
    let kk = g.patch_len();
    let p = g.oh * g.ow;
    for pos in 0..p {
        for (db, &d) in dbias.iter_mut().zip(&dout[pos * g.cout..][..g.cout]) {
            *db += d;
        }
    }
    // dK[co, k] += Σ_p dout[p, co] · cols[p, k]
    gemm(
        g.cout,
        p,
        kk,
        (dout, 1, g.cout),
        (cols, kk, 1),
        T::ONE,
        (dkernel, kk, 1),
    );
    if let Some(dinput) = dinput {
        scratch.clear();
        scratch.resize(p * kk, T::ZERO);
        gemm(
            p,
            g.cout,
            kk,
            (dout, g.cout, 1),
            (kernel, kk, 1),
            T::ZERO,
            (scratch, kk, 1),
        );
        col2im(g, scratch, dinput);
    }
}

/// Geometry of a floor-mode max pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PoolGeom {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub ph: usize,
    pub pw: usize,
    pub oh: usize,
    pub ow: usize,
}

/// Max pool of output columns `x0..x1`; `argmax` (if given) records the
/// flat input index of each winner. Ties resolve to the first element in
/// scan order.
pub(crate) fn maxpool<T: Scalar>(
    g: &PoolGeom,
    input: &[T],
    x0: usize,
    x1: usize,
    out: &mut [T],
    mut argmax: Option<&mut [usize]>,
) {
    let c = g.c;
    for y in 0..g.oh {
        for x in x0..x1 {
            let o = (y * g.ow + x) * c;
            let first = ((y * g.ph) * g.w + x * g.pw) * c;
            let best = &mut out[o..o + c];
            best.copy_from_slice(&input[first..first + c]);
            if let Some(a) = argmax.as_deref_mut() {
                for (ch, slot) in a[o..o + c].iter_mut().enumerate() {
                    *slot = first + ch;
                }
            }
            for dy in 0..g.ph {
                for dx in 0..g.pw {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let i = ((y * g.ph + dy) * g.w + x * g.pw + dx) * c;
                    let cell = &input[i..i + c];
                    match argmax.as_deref_mut() {
                        Some(a) => {
                            for ch in 0..c {
                                if cell[ch] > best[ch] {
                                    best[ch] = cell[ch];
                                    a[o + ch] = i + ch;
                                }
                            }
                        }
                        None => {
                            for (b, &v) in best.iter_mut().zip(cell) {
                                if v > *b {
                                    *b = v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn maxpool_backward<T: Scalar>(argmax: &[usize], dout: &[T], dinput: &mut [T]) {
    for (&i, &d) in argmax.iter().zip(dout) {
        dinput[i] += d;
    }
}

/// `out = W·x + b` with `W: [out][in]`.
pub(crate) fn dense_forward<T: Scalar>(kernel: &[T], bias: &[T], x: &[T], out: &mut [T]) {
    let n_in = x.len();
    for (o, (row, &b)) in kernel.chunks_exact(n_in).zip(bias).enumerate() {
        out[o] = b + dot(row, x);
    }
}

pub(crate) fn dense_backward<T: Scalar>(
    kernel: &[T],
    x: &[T],
    dout: &[T],
    dkernel: &mut [T],
    dbias: &mut [T],
    dinput: Option<&mut [T]>,
) {
    let n_in = x.len();
    for ((row, db), &d) in dkernel.chunks_exact_mut(n_in).zip(dbias.iter_mut()).zip(dout) {
        *db += d;
        if d != T::ZERO {
            for (g, &xi) in row.iter_mut().zip(x) {
                *g += d * xi;
            }
        }
    }
    if let Some(dx) = dinput {
        for (row, &d) in kernel.chunks_exact(n_in).zip(dout) {
            if d != T::ZERO {
                for (g, &w) in dx.iter_mut().zip(row) {
                    *g += d * w;
                }
            }
        }
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // Eight independent partial sums let the compiler vectorise.
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::ZERO; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += *x * *y;
    }
    s
}

/// `y += a·x`. Inlined so callers compiled with wider vector features
/// vectorise it; Rust never fuses the multiply and add, so rounding does not
/// depend on the instruction set.
#[inline(always)]
pub(crate) fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

pub(crate) fn relu_in_place<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::ZERO {
            *x = T::ZERO;
        }
    }
}
