//! Dense f64 kernels.
//!
//! Every output element of [`gemm`] is one fused multiply-add chain over the
//! shared dimension in ascending order, whatever tile it falls in. Results
//! are therefore bitwise identical across batch sizes and tile boundaries.

const TILE_M: usize = 6;
const TILE_N: usize = 16;
const EDGE_M: usize = 8;
const NARROW: usize = 4;

/// `c (m x n) = a (m x k) * b (k x n)`, all row-major; `c` is overwritten.
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let n_full = n - n % TILE_N;
    let m_full = m - m % TILE_M;
    let mut panel = vec![0.0f64; k * TILE_N];
    // Narrow leftovers go through the scalar path; wider ones are zero-padded.
    let padded_end = if n - n_full >= NARROW { n } else { n_full };
    let mut jb = 0;
    while jb < padded_end {
        let width = (n - jb).min(TILE_N);
        for kk in 0..k {
            let dst = &mut panel[kk * TILE_N..(kk + 1) * TILE_N];
            dst[..width].copy_from_slice(&b[kk * n + jb..kk * n + jb + width]);
            dst[width..].fill(0.0);
        }
        let mut ib = 0;
        while ib < m_full {
            let acc = micro_tile(a, k, ib, &panel);
            for (t, row) in acc.iter().enumerate() {
                let dst = &mut c[(ib + t) * n + jb..(ib + t) * n + jb + width];
                if width == TILE_N {
                    dst.copy_from_slice(row);
                } else {
                    dst.copy_from_slice(&row[..width]);
                }
            }
            ib += TILE_M;
        }
        for i in m_full..m {
            let arow = &a[i * k..(i + 1) * k];
            let mut acc = [0.0f64; TILE_N];
            for (&av, brow) in arow.iter().zip(panel.chunks_exact(TILE_N)) {
                for j in 0..TILE_N {
                    acc[j] = av.mul_add(brow[j], acc[j]);
                }
            }
            c[i * n + jb..i * n + jb + width].copy_from_slice(&acc[..width]);
        }
        jb += TILE_N;
    }
    // Remaining narrow columns: independent chains across rows for throughput.
    for j in padded_end..n {
        let mut ib = 0;
        while ib < m {
            let rows = (m - ib).min(EDGE_M);
            let mut acc = [0.0f64; EDGE_M];
            for kk in 0..k {
                let bv = b[kk * n + j];
                for t in 0..rows {
                    acc[t] = a[(ib + t) * k + kk].mul_add(bv, acc[t]);
                }
            }
            for t in 0..rows {
                c[(ib + t) * n + j] = acc[t];
            }
            ib += rows;
        }
    }
}

#[inline(never)]
fn micro_tile(a: &[f64], k: usize, ib: usize, panel: &[f64]) -> [[f64; TILE_N]; TILE_M] {
    let rows: [&[f64]; TILE_M] = std::array::from_fn(|t| &a[(ib + t) * k..(ib + t + 1) * k]);
    let mut acc = [[0.0f64; TILE_N]; TILE_M];
    for (kk, brow) in panel.chunks_exact(TILE_N).enumerate() {
        let brow: &[f64; TILE_N] = brow.try_into().unwrap();
        for t in 0..TILE_M {
            let av = rows[t][kk];
            for j in 0..TILE_N {
                acc[t][j] = av.mul_add(brow[j], acc[t][j]);
            }
        }
    }
    acc
}

/// Row-major `rows x cols` to row-major `cols x rows`.
pub fn transpose(rows: usize, cols: usize, src: &[f64]) -> Vec<f64> {
    const B: usize = 8;
    let mut out = vec![0.0; rows * cols];
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    out[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
    out
}
