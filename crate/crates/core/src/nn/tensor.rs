/// Dense row-major tensor. The first axis is the batch axis; image tensors
/// are laid out as `[N, H, W, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data does not match shape {shape:?}"
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Shape without the batch axis.
    pub fn item_shape(&self) -> &[usize] {
        &self.shape[1..]
    }

    pub fn item_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.item_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` for row-major matrices, where
/// `op(a)` is `m x k` and `op(b)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    // Conv layers produce very skinny products (8 or 16 output channels)
    // where the packed general kernel spends most of its time packing.
    if !trans_b && n <= NARROW {
        scale(c, beta);
        match n {
            8 => narrow::<8>(m, k, alpha, a, trans_a, b, c),
            16 => narrow::<16>(m, k, alpha, a, trans_a, b, c),
            _ => narrow_dyn(m, k, n, alpha, a, trans_a, b, c),
        }
        return;
    }
    if trans_b && !trans_a && k <= NARROW {
        scale(c, beta);
        for i in 0..m {
            let ar = &a[i * k..(i + 1) * k];
            for (j, cv) in c[i * n..(i + 1) * n].iter_mut().enumerate() {
                let br = &b[j * k..(j + 1) * k];
                let dot: f64 = ar.iter().zip(br).map(|(x, y)| x * y).sum();
                *cv += alpha * dot;
            }
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked above and strides stay within them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

const NARROW: usize = 16;

fn scale(c: &mut [f64], beta: f64) {
    if beta == 0.0 {
        c.fill(0.0);
    } else if beta != 1.0 {
        c.iter_mut().for_each(|v| *v *= beta);
    }
}

fn narrow<const N: usize>(m: usize, k: usize, alpha: f64, a: &[f64], trans_a: bool, b: &[f64], c: &mut [f64]) {
    if trans_a {
        // a is stored k x m: accumulate one rank-1 update per row of a.
        for p in 0..k {
            let br: &[f64; N] = b[p * N..(p + 1) * N].try_into().unwrap();
            for (i, &av) in a[p * m..(p + 1) * m].iter().enumerate() {
                let s = alpha * av;
                let cr: &mut [f64; N] = (&mut c[i * N..(i + 1) * N]).try_into().unwrap();
                for j in 0..N {
                    cr[j] += s * br[j];
                }
            }
        }
    } else {
        for i in 0..m {
            let mut acc = [0.0f64; N];
            for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
                let br: &[f64; N] = b[p * N..(p + 1) * N].try_into().unwrap();
                for j in 0..N {
                    acc[j] += av * br[j];
                }
            }
            for (cv, v) in c[i * N..(i + 1) * N].iter_mut().zip(acc) {
                *cv += alpha * v;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn narrow_dyn(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], trans_a: bool, b: &[f64], c: &mut [f64]) {
    for i in 0..m {
        let cr = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = if trans_a { a[p * m + i] } else { a[i * k + p] };
            let s = alpha * av;
            for (cv, bv) in cr.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *cv += s * bv;
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
