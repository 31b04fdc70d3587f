//! Radiance-field MLP with a hand-written reverse pass.
//!
//! Architecture: encoded position → `depth` ReLU layers of `width` units
//! (the encoded position is concatenated onto the input of the skip layer)
//! → softplus density head, plus a linear feature layer that is joined with
//! the encoded direction → one ReLU layer of `dir_width` units → sigmoid
//! color head with `channels` outputs.
//!
//! All parameters live in one flat vector so the optimizer, checkpoints and
//! finite-difference checks can treat them uniformly; [`Slot`]s describe the
//! matrices inside it in declaration order.

use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::encoding::{encode_backward, encode_into, EncodingConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldArch {
    pub encoding: EncodingConfig,
    pub depth: usize,
    pub width: usize,
    /// Hidden layer (0-based) whose input also receives the encoded position.
    pub skip: Option<usize>,
    pub dir_width: usize,
    pub channels: usize,
}

impl Default for FieldArch {
    fn default() -> Self {
        Self {
            encoding: EncodingConfig::default(),
            depth: 4,
            width: 96,
            skip: Some(2),
            dir_width: 48,
            channels: 1,
        }
    }
}

impl FieldArch {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.dir_width == 0 || self.channels == 0 {
            return Err(Error::ZeroDimension);
        }
        if let Some(s) = self.skip {
            if s == 0 || s >= self.depth {
                return Err(Error::Invalid(format!(
                    "skip layer {s} must be in 1..{}",
                    self.depth
                )));
            }
        }
        Ok(())
    }

    fn hidden_input(&self, layer: usize) -> usize {
        let p = self.encoding.pos_dim();
        match layer {
            0 => p,
            l if Some(l) == self.skip => self.width + p,
            _ => self.width,
        }
    }

    /// Weight/bias slots in declaration order.
    pub fn layout(&self) -> Vec<Slot> {
        let mut shapes = Vec::new();
        for l in 0..self.depth {
            shapes.push((self.hidden_input(l), self.width));
        }
        shapes.push((self.width, 1));
        shapes.push((self.width, self.width));
        shapes.push((self.width + self.encoding.dir_dim(), self.dir_width));
        shapes.push((self.dir_width, self.channels));
        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(rows, cols)| {
                let slot = Slot { offset, rows, cols };
                offset += rows * cols + cols;
                slot
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(|s| s.rows * s.cols + s.cols).sum()
    }
}

/// A `rows × cols` weight matrix followed by `cols` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    fn weight<'a>(&self, data: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &data[self.offset..self.offset + self.rows * self.cols])
            .expect("slot fits")
    }

    fn bias<'a>(&self, data: &'a [f64]) -> ArrayView1<'a, f64> {
        let start = self.offset + self.rows * self.cols;
        ArrayView1::from(&data[start..start + self.cols])
    }

    fn split_mut<'a>(&self, data: &'a mut [f64]) -> (ArrayViewMut2<'a, f64>, ArrayViewMut1<'a, f64>) {
        let n = self.rows * self.cols;
        let (w, b) = data[self.offset..self.offset + n + self.cols].split_at_mut(n);
        (
            ArrayViewMut2::from_shape((self.rows, self.cols), w).expect("slot fits"),
            ArrayViewMut1::from(b),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadianceFieldParams {
    pub arch: FieldArch,
    pub data: Vec<f64>,
    layout: Vec<Slot>,
}

// slot indices after the hidden layers
const SIGMA: usize = 0;
const FEATURE: usize = 1;
const DIR: usize = 2;
const COLOR: usize = 3;

impl RadianceFieldParams {
    pub fn zeros(arch: FieldArch) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        let data = vec![0.0; arch.param_count()];
        Ok(Self { arch, data, layout })
    }

    pub fn from_data(arch: FieldArch, data: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if data.len() != arch.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for an architecture needing {}",
                data.len(),
                arch.param_count()
            )));
        }
        let layout = arch.layout();
        Ok(Self { arch, data, layout })
    }

    /// Glorot-uniform weights, zero biases, density bias set to `density_bias`.
    pub fn init<R: Rng>(arch: FieldArch, density_bias: f64, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        for slot in p.layout.clone() {
            let limit = (6.0 / (slot.rows + slot.cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            let (mut w, _) = slot.split_mut(&mut p.data);
            w.iter_mut().for_each(|x| *x = dist.sample(rng));
        }
        let sigma = p.head(SIGMA);
        let (_, mut b) = sigma.split_mut(&mut p.data);
        b[0] = density_bias;
        Ok(p)
    }

    pub fn layout(&self) -> &[Slot] {
        &self.layout
    }

    fn head(&self, which: usize) -> Slot {
        self.layout[self.arch.depth + which]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Forward activations retained for the reverse pass.
#[derive(Debug, Clone)]
pub struct FieldCache {
    arch: FieldArch,
    pos_enc: Array2<f64>,
    dir_enc: Array2<f64>,
    hidden: Vec<Array2<f64>>,
    sigma_raw: Array1<f64>,
    feature: Array2<f64>,
    dir_hidden: Array2<f64>,
    color: Array2<f64>,
    raw_pos: Option<Array2<f64>>,
    raw_dir: Option<Array2<f64>>,
}

impl FieldCache {
    pub fn rows(&self) -> usize {
        self.pos_enc.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct FieldOutput {
    /// Density per row, `softplus(raw) ≥ 0`.
    pub sigma: Array1<f64>,
    /// `rows × channels`, each in `[0, 1]`.
    pub color: Array2<f64>,
    pub cache: FieldCache,
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(x: ArrayView2<f64>, slot: Slot, data: &[f64]) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), slot.cols));
    out.assign(&slot.bias(data).broadcast((x.nrows(), slot.cols)).expect("bias broadcast"));
    general_mat_mul(1.0, &x, &slot.weight(data), 1.0, &mut out);
    out
}

/// Encodes raw positions and directions row by row.
pub fn encode_rows(points: &[[f64; 3]], m: usize) -> Array2<f64> {
    let dim = super::encoding::encoded_len(3, m);
    let mut flat = Vec::with_capacity(points.len() * dim);
    for p in points {
        encode_into(p, m, &mut flat);
    }
    Array2::from_shape_vec((points.len(), dim), flat).expect("encoded rows")
}

/// Batched forward pass on pre-encoded inputs.
pub fn forward_encoded(params: &RadianceFieldParams, pos_enc: Array2<f64>, dir_enc: Array2<f64>) -> Result<FieldOutput> {
    let arch = &params.arch;
    if pos_enc.ncols() != arch.encoding.pos_dim() || dir_enc.ncols() != arch.encoding.dir_dim() {
        return Err(Error::DimensionMismatch(format!(
            "encoded inputs have {}/{} columns, network expects {}/{}",
            pos_enc.ncols(),
            dir_enc.ncols(),
            arch.encoding.pos_dim(),
            arch.encoding.dir_dim()
        )));
    }
    if pos_enc.nrows() != dir_enc.nrows() {
        return Err(Error::DimensionMismatch("position and direction row counts differ".into()));
    }
    let data = &params.data;
    let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(arch.depth);
    for l in 0..arch.depth {
        let slot = params.layout[l];
        let mut z = if l == 0 {
            affine(pos_enc.view(), slot, data)
        } else if Some(l) == arch.skip {
            let x = concatenate(Axis(1), &[hidden[l - 1].view(), pos_enc.view()]).expect("same rows");
            affine(x.view(), slot, data)
        } else {
            affine(hidden[l - 1].view(), slot, data)
        };
        z.mapv_inplace(|v| v.max(0.0));
        hidden.push(z);
    }
    let last = hidden.last().expect("depth ≥ 1").view();
    let sigma_raw = affine(last, params.head(SIGMA), data).column(0).to_owned();
    let sigma = sigma_raw.mapv(softplus);
    let feature = affine(last, params.head(FEATURE), data);
    let joined = concatenate(Axis(1), &[feature.view(), dir_enc.view()]).expect("same rows");
    let mut dir_hidden = affine(joined.view(), params.head(DIR), data);
    dir_hidden.mapv_inplace(|v| v.max(0.0));
    let mut color = affine(dir_hidden.view(), params.head(COLOR), data);
    color.mapv_inplace(sigmoid);
    Ok(FieldOutput {
        sigma,
        color: color.clone(),
        cache: FieldCache {
            arch: arch.clone(),
            pos_enc,
            dir_enc,
            hidden,
            sigma_raw,
            feature,
            dir_hidden,
            color,
            raw_pos: None,
            raw_dir: None,
        },
    })
}

/// Batched forward pass on raw positions and unit directions.
pub fn forward_batch(params: &RadianceFieldParams, positions: &[[f64; 3]], directions: &[[f64; 3]]) -> Result<FieldOutput> {
    let enc = params.arch.encoding;
    let mut out = forward_encoded(params, encode_rows(positions, enc.m_pos), encode_rows(directions, enc.m_dir))?;
    out.cache.raw_pos = Some(Array2::from_shape_vec((positions.len(), 3), positions.concat()).expect("rows"));
    out.cache.raw_dir = Some(Array2::from_shape_vec((directions.len(), 3), directions.concat()).expect("rows"));
    Ok(out)
}

/// Single-point forward: `(σ, color, cache)`.
pub fn field_forward(params: &RadianceFieldParams, pos: [f64; 3], dir: [f64; 3]) -> Result<(f64, Vec<f64>, FieldCache)> {
    let out = forward_batch(params, &[pos], &[dir])?;
    Ok((out.sigma[0], out.color.row(0).to_vec(), out.cache))
}

/// Gradients with respect to the encoded inputs, one row per sample.
#[derive(Debug, Clone)]
pub struct InputGrads {
    pub pos_enc: Array2<f64>,
    pub dir_enc: Array2<f64>,
}

/// Accumulates parameter gradients into `grads` (same layout as the
/// parameters). Input gradients are computed only when `want_inputs`.
pub fn backward_batch(
    params: &RadianceFieldParams,
    cache: &FieldCache,
    grad_sigma: ArrayView1<f64>,
    grad_color: ArrayView2<f64>,
    grads: &mut [f64],
    want_inputs: bool,
) -> Result<Option<InputGrads>> {
    let arch = &params.arch;
    if cache.arch != *arch {
        return Err(Error::CacheMismatch("cache was produced by a different architecture".into()));
    }
    let n = cache.rows();
    if grad_sigma.len() != n || grad_color.nrows() != n || grad_color.ncols() != arch.channels {
        return Err(Error::CacheMismatch(format!(
            "upstream gradients cover {} rows, cache holds {n}",
            grad_sigma.len()
        )));
    }
    if grads.len() != params.data.len() {
        return Err(Error::ShapeMismatch(format!(
            "gradient buffer has {} entries, parameters {}",
            grads.len(),
            params.data.len()
        )));
    }
    let data = &params.data;

    let accumulate = |grads: &mut [f64], slot: Slot, x: ArrayView2<f64>, dz: &Array2<f64>| {
        let (mut gw, mut gb) = slot.split_mut(grads);
        general_mat_mul(1.0, &x.t(), dz, 1.0, &mut gw);
        gb += &dz.sum_axis(Axis(0));
    };

    // color head
    let mut dz_c = grad_color.to_owned();
    dz_c.zip_mut_with(&cache.color, |g, &c| *g *= c * (1.0 - c));
    accumulate(grads, params.head(COLOR), cache.dir_hidden.view(), &dz_c);
    let mut dz_d = dz_c.dot(&params.head(COLOR).weight(data).t());
    dz_d.zip_mut_with(&cache.dir_hidden, |g, &h| {
        if h <= 0.0 {
            *g = 0.0
        }
    });
    let joined = concatenate(Axis(1), &[cache.feature.view(), cache.dir_enc.view()]).expect("same rows");
    accumulate(grads, params.head(DIR), joined.view(), &dz_d);
    let d_joined = dz_d.dot(&params.head(DIR).weight(data).t());
    let d_feature = d_joined.slice(s![.., ..arch.width]).to_owned();
    let d_dir_enc = d_joined.slice(s![.., arch.width..]).to_owned();

    let last = cache.hidden.last().expect("depth ≥ 1");
    accumulate(grads, params.head(FEATURE), last.view(), &d_feature);
    let mut d_hidden = d_feature.dot(&params.head(FEATURE).weight(data).t());

    // density head, softplus' = sigmoid
    let d_sigma_raw = Array2::from_shape_fn((n, 1), |(i, _)| grad_sigma[i] * sigmoid(cache.sigma_raw[i]));
    accumulate(grads, params.head(SIGMA), last.view(), &d_sigma_raw);
    general_mat_mul(1.0, &d_sigma_raw, &params.head(SIGMA).weight(data).t(), 1.0, &mut d_hidden);

    let mut d_pos_enc: Option<Array2<f64>> = None;
    for l in (0..arch.depth).rev() {
        let slot = params.layout[l];
        let mut dz = d_hidden;
        dz.zip_mut_with(&cache.hidden[l], |g, &h| {
            if h <= 0.0 {
                *g = 0.0
            }
        });
        let skip_here = Some(l) == arch.skip;
        if l == 0 {
            accumulate(grads, slot, cache.pos_enc.view(), &dz);
        } else if skip_here {
            let x = concatenate(Axis(1), &[cache.hidden[l - 1].view(), cache.pos_enc.view()]).expect("same rows");
            accumulate(grads, slot, x.view(), &dz);
        } else {
            accumulate(grads, slot, cache.hidden[l - 1].view(), &dz);
        }
        if l == 0 {
            if want_inputs {
                let dp = dz.dot(&slot.weight(data).t());
                d_pos_enc = Some(match d_pos_enc {
                    Some(acc) => acc + dp,
                    None => dp,
                });
            }
            d_hidden = Array2::zeros((0, 0));
        } else {
            let dx = dz.dot(&slot.weight(data).t());
            if skip_here {
                if want_inputs {
                    let dp = dx.slice(s![.., arch.width..]).to_owned();
                    d_pos_enc = Some(match d_pos_enc {
                        Some(acc) => acc + dp,
                        None => dp,
                    });
                }
                d_hidden = dx.slice(s![.., ..arch.width]).to_owned();
            } else {
                d_hidden = dx;
            }
        }
    }
    let _ = d_hidden;
    Ok(if want_inputs {
        Some(InputGrads {
            pos_enc: d_pos_enc.expect("layer 0 visited"),
            dir_enc: d_dir_enc,
        })
    } else {
        None
    })
}

/// Parameter and raw-input gradients of a single-point evaluation.
#[derive(Debug, Clone)]
pub struct FieldGrads {
    pub params: Vec<f64>,
    pub pos: [f64; 3],
    pub dir: [f64; 3],
}

pub fn field_backward(params: &RadianceFieldParams, cache: &FieldCache, grad_sigma: f64, grad_color: &[f64]) -> Result<FieldGrads> {
    if cache.rows() != 1 {
        return Err(Error::CacheMismatch(format!("expected a single-point cache, got {} rows", cache.rows())));
    }
    if grad_color.len() != params.arch.channels {
        return Err(Error::CacheMismatch(format!(
            "{} color gradients for {} channels",
            grad_color.len(),
            params.arch.channels
        )));
    }
    let (raw_pos, raw_dir) = match (&cache.raw_pos, &cache.raw_dir) {
        (Some(p), Some(d)) => (p, d),
        _ => return Err(Error::CacheMismatch("cache lacks raw inputs".into())),
    };
    let mut g = vec![0.0; params.len()];
    let gs = Array1::from(vec![grad_sigma]);
    let gc = Array2::from_shape_vec((1, grad_color.len()), grad_color.to_vec()).expect("one row");
    let inputs = backward_batch(params, cache, gs.view(), gc.view(), &mut g, true)?.expect("requested");
    let enc = params.arch.encoding;
    let pos = encode_backward(raw_pos.row(0).as_slice().expect("contiguous"), enc.m_pos, inputs.pos_enc.row(0).as_slice().expect("contiguous"));
    let dir = encode_backward(raw_dir.row(0).as_slice().expect("contiguous"), enc.m_dir, inputs.dir_enc.row(0).as_slice().expect("contiguous"));
    Ok(FieldGrads {
        params: g,
        pos: [pos[0], pos[1], pos[2]],
        dir: [dir[0], dir[1], dir[2]],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_arch() -> FieldArch {
        FieldArch {
            encoding: EncodingConfig { m_pos: 2, m_dir: 1 },
            depth: 3,
            width: 6,
            skip: Some(2),
            dir_width: 5,
            channels: 2,
        }
    }

    #[test]
    fn zero_network_outputs() {
        let p = RadianceFieldParams::zeros(FieldArch::default()).unwrap();
        let (sigma, color, _) = field_forward(&p, [0.1, 0.2, 0.3], [0.0, 0.0, 1.0]).unwrap();
        assert!((sigma - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(color, vec![0.5]);
    }

    #[test]
    fn default_param_count() {
        let a = FieldArch::default();
        let expected = (63 * 96 + 96) + (96 * 96 + 96) + ((96 + 63) * 96 + 96) + (96 * 96 + 96)
            + (96 + 1) + (96 * 96 + 96) + ((96 + 27) * 48 + 48) + (48 + 1);
        assert_eq!(a.param_count(), expected);
    }

    #[test]
    fn deterministic_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = RadianceFieldParams::init(small_arch(), -1.0, &mut rng).unwrap();
        let a = field_forward(&p, [0.3, -0.2, 0.5], [0.0, 0.6, 0.8]).unwrap();
        let b = field_forward(&p, [0.3, -0.2, 0.5], [0.0, 0.6, 0.8]).unwrap();
        assert_eq!((a.0, a.1), (b.0, b.1));
    }

    #[test]
    fn init_sets_density_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = RadianceFieldParams::init(small_arch(), -1.5, &mut rng).unwrap();
        let slot = p.head(SIGMA);
        assert_eq!(slot.bias(&p.data)[0], -1.5);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = RadianceFieldParams::init(small_arch(), -1.0, &mut rng).unwrap();
        let (_, _, cache) = field_forward(&p, [0.3, -0.2, 0.5], [0.0, 0.6, 0.8]).unwrap();
        let g = field_backward(&p, &cache, 0.0, &[0.0, 0.0]).unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_are_linear_in_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = RadianceFieldParams::init(small_arch(), -1.0, &mut rng).unwrap();
        let (_, _, cache) = field_forward(&p, [0.3, -0.2, 0.5], [0.0, 0.6, 0.8]).unwrap();
        let g1 = field_backward(&p, &cache, 0.7, &[0.2, -0.4]).unwrap();
        let g2 = field_backward(&p, &cache, 1.4, &[0.4, -0.8]).unwrap();
        for (a, b) in g1.params.iter().zip(&g2.params) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn cache_from_other_architecture_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = RadianceFieldParams::init(small_arch(), -1.0, &mut rng).unwrap();
        let other = RadianceFieldParams::zeros(FieldArch { width: 7, ..small_arch() }).unwrap();
        let (_, _, cache) = field_forward(&other, [0.3, -0.2, 0.5], [0.0, 0.6, 0.8]).unwrap();
        assert!(matches!(field_backward(&p, &cache, 1.0, &[0.0, 0.0]), Err(Error::CacheMismatch(_))));
    }

    #[test]
    fn wrong_encoding_width_is_rejected() {
        let p = RadianceFieldParams::zeros(small_arch()).unwrap();
        let bad = Array2::zeros((1, 5));
        let dir = Array2::zeros((1, p.arch.encoding.dir_dim()));
        assert!(matches!(forward_encoded(&p, bad, dir), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn batch_rows_match_single_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = RadianceFieldParams::init(small_arch(), -1.0, &mut rng).unwrap();
        let pos = [[0.1, 0.2, 0.3], [-0.4, 0.0, 0.9], [0.7, -0.7, 0.2]];
        let dir = [[0.0, 0.0, 1.0], [0.6, 0.0, 0.8], [0.0, -1.0, 0.0]];
        let batch = forward_batch(&p, &pos, &dir).unwrap();
        for i in 0..3 {
            let (s, c, _) = field_forward(&p, pos[i], dir[i]).unwrap();
            assert!((batch.sigma[i] - s).abs() < 1e-14);
            for k in 0..2 {
                assert!((batch.color[[i, k]] - c[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut p = RadianceFieldParams::init(small_arch(), 0.3, &mut rng).unwrap();
        let pos = [0.21, -0.33, 0.47];
        let dir = [0.0, 0.6, 0.8];
        let (gs, gc) = (0.7, [0.4, -0.9]);
        let objective = |p: &RadianceFieldParams| {
            let (s, c, _) = field_forward(p, pos, dir).unwrap();
            gs * s + gc[0] * c[0] + gc[1] * c[1]
        };
        let (_, _, cache) = field_forward(&p, pos, dir).unwrap();
        let g = field_backward(&p, &cache, gs, &gc).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..p.len() {
            let orig = p.data[i];
            p.data[i] = orig + h;
            let a = objective(&p);
            p.data[i] = orig - h;
            let b = objective(&p);
            p.data[i] = orig;
            let fd = (a - b) / (2.0 * h);
            worst = worst.max((fd - g.params[i]).abs() / fd.abs().max(1e-6));
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }
}
