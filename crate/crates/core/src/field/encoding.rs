use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingConfig {
    pub m_pos: usize,
    pub m_dir: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self { m_pos: 10, m_dir: 4 }
    }
}

impl EncodingConfig {
    pub fn pos_dim(&self) -> usize {
        encoded_len(3, self.m_pos)
    }

    pub fn dir_dim(&self) -> usize {
        encoded_len(3, self.m_dir)
    }
}

/// Output length for a `k`-vector with `m` frequencies, raw input included.
pub fn encoded_len(k: usize, m: usize) -> usize {
    k + 2 * m * k
}

/// `[v, sin(2^0 π v), cos(2^0 π v), …, sin(2^(m−1) π v), cos(2^(m−1) π v)]`,
/// with the sine/cosine pair interleaved per component inside each frequency.
pub fn positional_encode(v: &[f64], m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_len(v.len(), m));
    encode_into(v, m, &mut out);
    out
}

pub fn encode_into(v: &[f64], m: usize, out: &mut Vec<f64>) {
    out.extend_from_slice(v);
    let mut freq = PI;
    for _ in 0..m {
        for &x in v {
            let (s, c) = (freq * x).sin_cos();
            out.push(s);
            out.push(c);
        }
        freq *= 2.0;
    }
}

/// Chains a gradient with respect to the encoding back to the raw input.
pub fn encode_backward(v: &[f64], m: usize, grad_encoded: &[f64]) -> Vec<f64> {
    let k = v.len();
    let mut grad: Vec<f64> = grad_encoded[..k].to_vec();
    let mut freq = PI;
    let mut idx = k;
    for _ in 0..m {
        for (i, &x) in v.iter().enumerate() {
            let (s, c) = (freq * x).sin_cos();
            grad[i] += freq * c * grad_encoded[idx] - freq * s * grad_encoded[idx + 1];
            idx += 2;
        }
        freq *= 2.0;
    }
    grad
}
