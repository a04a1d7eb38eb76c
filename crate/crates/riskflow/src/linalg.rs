//! Flat row-major matrix kernels shared by the tape and the plain forward pass.
//!
//! Every caller that must agree bitwise with another (taped vs. plain model
//! forward, batched vs. row-wise integration) goes through these functions,
//! so agreement is structural rather than numerical.

/// out = A @ B with A: [m, k], B: [k, n], out: [m, n].
pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * b_pj;
            }
        }
    }
}

/// out = A @ B^T with A: [m, n], B: [k, n], out: [m, k].
pub fn matmul_abt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, k: usize) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            out[i * k + p] = acc;
        }
    }
}

/// out = A^T @ B with A: [m, k], B: [m, n], out: [k, n].
pub fn matmul_atb(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    out.fill(0.0);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &b_ij) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * b_ij;
            }
        }
    }
}

/// Adds a length-n bias vector to every row of a [m, n] matrix, in place.
pub fn add_bias_rows(x: &mut [f64], bias: &[f64], m: usize, n: usize) {
    debug_assert_eq!(x.len(), m * n);
    debug_assert_eq!(bias.len(), n);
    for i in 0..m {
        for (v, &b) in x[i * n..(i + 1) * n].iter_mut().zip(bias) {
            *v += b;
        }
    }
}
