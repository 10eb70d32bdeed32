use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// `c[m×n] += a[m×k] · b[k×n]`, all row-major.
fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (c, &bv) in row.iter_mut().zip(brow) {
                *c += av * bv;
            }
        }
    }
}

/// Transpose of a row-major `rows×cols` block.
fn transpose(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

/// Batched matrix product over leading dims. Either operand may be a plain
/// matrix, in which case it is shared across the other's batch.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mismatch = || TensorError::ShapeMismatch {
        op: "matmul",
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    };
    if a.rank() < 2 || b.rank() < 2 {
        return Err(mismatch());
    }
    let (sa, sb) = (a.shape(), b.shape());
    let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
    let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
    if k != k2 {
        return Err(mismatch());
    }
    let (lead_a, lead_b) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
    let lead: Vec<usize> = if lead_a == lead_b || lead_b.is_empty() {
        lead_a.to_vec()
    } else if lead_a.is_empty() {
        lead_b.to_vec()
    } else {
        return Err(mismatch());
    };
    let batch: usize = lead.iter().product();
    let a_batched = !lead_a.is_empty();
    let b_batched = !lead_b.is_empty();

    let mut out = vec![0.0; batch * m * n];
    for bi in 0..batch {
        let ao = if a_batched { bi * m * k } else { 0 };
        let bo = if b_batched { bi * k * n } else { 0 };
        gemm_acc(
            &a.data()[ao..ao + m * k],
            &b.data()[bo..bo + k * n],
            &mut out[bi * m * n..(bi + 1) * m * n],
            m,
            k,
            n,
        );
    }
    let mut shape = lead;
    shape.extend([m, n]);
    Tensor::from_op(
        "matmul",
        out,
        shape,
        vec![a.clone(), b.clone()],
        Box::new(move |g, _, inputs| {
            let (a, b) = (&inputs[0], &inputs[1]);
            let ga = a.requires_grad().then(|| {
                let mut ga = vec![0.0; a.numel()];
                for bi in 0..batch {
                    let bo = if b_batched { bi * k * n } else { 0 };
                    let bt = transpose(&b.data()[bo..bo + k * n], k, n);
                    let ao = if a_batched { bi * m * k } else { 0 };
                    gemm_acc(&g[bi * m * n..(bi + 1) * m * n], &bt, &mut ga[ao..ao + m * k], m, n, k);
                }
                ga
            });
            let gb = b.requires_grad().then(|| {
                let mut gb = vec![0.0; b.numel()];
                for bi in 0..batch {
                    let ao = if a_batched { bi * m * k } else { 0 };
                    let at = transpose(&a.data()[ao..ao + m * k], m, k);
                    let bo = if b_batched { bi * k * n } else { 0 };
                    gemm_acc(&at, &g[bi * m * n..(bi + 1) * m * n], &mut gb[bo..bo + k * n], k, m, n);
                }
                gb
            });
            Ok(vec![ga, gb])
        }),
    )
}

impl Tensor {
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        matmul(self, other)
    }
}
