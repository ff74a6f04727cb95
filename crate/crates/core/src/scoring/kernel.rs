//! Segment similarity kernel shared by the re-rankers.
//!
//! Products are summed in sixteen `f32` lanes, folded to eight, and finished
//! as a tree in `f64`. The AVX2 build runs the same operations in the same
//! order, so both paths return bit-identical values.

use crate::embedding_io::Rows;

const LANES: usize = 16;

#[inline(always)]
fn reduce(acc: &[f32; LANES]) -> f64 {
    let mut half = [0f32; LANES / 2];
    for k in 0..LANES / 2 {
        half[k] = acc[k] + acc[k + LANES / 2];
    }
    let quad = [
        f64::from(half[0]) + f64::from(half[4]),
        f64::from(half[1]) + f64::from(half[5]),
        f64::from(half[2]) + f64::from(half[6]),
        f64::from(half[3]) + f64::from(half[7]),
    ];
    (quad[0] + quad[2]) + (quad[1] + quad[3])
}

#[inline(always)]
fn lanes_dot(u: &[f32], v: &[f32]) -> f64 {
    let mut acc = [0f32; LANES];
    let uc = u.chunks_exact(LANES);
    let vc = v.chunks_exact(LANES);
    let (ur, vr) = (uc.remainder(), vc.remainder());
    for (a, b) in uc.zip(vc) {
        for k in 0..LANES {
            acc[k] += a[k] * b[k];
        }
    }
    for (k, (a, b)) in ur.iter().zip(vr).enumerate() {
        acc[k] += a * b;
    }
    reduce(&acc)
}

/// Four dot products against one row, in the exact order of [`lanes_dot`].
#[inline(always)]
fn lanes_dot4(u: &[f32], v: [&[f32]; 4]) -> [f64; 4] {
    let mut acc = [[0f32; LANES]; 4];
    let full = u.len() - u.len() % LANES;
    let mut base = 0;
    while base < full {
        let a = &u[base..base + LANES];
        for (r, vr) in acc.iter_mut().zip(&v) {
            let b = &vr[base..base + LANES];
            for k in 0..LANES {
                r[k] += a[k] * b[k];
            }
        }
        base += LANES;
    }
    for (r, vr) in acc.iter_mut().zip(&v) {
        for (k, (a, b)) in u[full..].iter().zip(&vr[full..]).enumerate() {
            r[k] += a * b;
        }
    }
    [reduce(&acc[0]), reduce(&acc[1]), reduce(&acc[2]), reduce(&acc[3])]
}

#[inline(always)]
fn fill_row(u: &[f32], t: Rows<'_>, cols: impl ExactSizeIterator<Item = usize> + Clone, out: &mut Vec<f64>) {
    let cols: Vec<usize> = cols.collect();
    let mut quads = cols.chunks_exact(4);
    for q in quads.by_ref() {
        out.extend(lanes_dot4(u, [t.row(q[0]), t.row(q[1]), t.row(q[2]), t.row(q[3])]));
    }
    for &j in quads.remainder() {
        out.push(lanes_dot(u, t.row(j)));
    }
}

#[inline(always)]
fn fill(s: Rows<'_>, t: Rows<'_>, out: &mut Vec<f64>) {
    for si in s.iter() {
        fill_row(si, t, 0..t.len(), out);
    }
}

#[inline(always)]
fn fill_pairs(s: Rows<'_>, si: &[usize], t: Rows<'_>, ti: &[usize], out: &mut Vec<f64>) {
    for &i in si {
        fill_row(s.row(i), t, ti.iter().copied(), out);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn fill_avx2(s: Rows<'_>, t: Rows<'_>, out: &mut Vec<f64>) {
    fill(s, t, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn fill_pairs_avx2(s: Rows<'_>, si: &[usize], t: Rows<'_>, ti: &[usize], out: &mut Vec<f64>) {
    fill_pairs(s, si, t, ti, out)
}

#[cfg(target_arch = "x86_64")]
fn has_avx2() -> bool {
    std::is_x86_feature_detected!("avx2")
}

/// Row-major `|s| x |t|` matrix of inner products. Callers check dimensions.
pub fn similarity_matrix(s: Rows<'_>, t: Rows<'_>) -> Vec<f64> {
    debug_assert_eq!(s.dim(), t.dim());
    let mut out = Vec::with_capacity(s.len() * t.len());
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the feature was detected at runtime.
        unsafe { fill_avx2(s, t, &mut out) };
        return out;
    }
    fill(s, t, &mut out);
    out
}

/// Inner products between the selected rows of `s` and of `t`, row-major.
pub fn similarity_submatrix(s: Rows<'_>, si: &[usize], t: Rows<'_>, ti: &[usize]) -> Vec<f64> {
    debug_assert_eq!(s.dim(), t.dim());
    let mut out = Vec::with_capacity(si.len() * ti.len());
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the feature was detected at runtime.
        unsafe { fill_pairs_avx2(s, si, t, ti, &mut out) };
        return out;
    }
    fill_pairs(s, si, t, ti, &mut out);
    out
}
