//! Forward pass of the LiDAR token adapter and token-sequence assembly.
//!
//! A `C×H×W` voxel feature map goes through two 3×3 stride-2 convolutions
//! (padding 1, GELU after each), reducing the grid to 32×32, then a
//! per-position two-layer MLP lifts every cell to `d_model`. The 1024 cells
//! are emitted row-major as tokens.

use std::io::{Read, Write};

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Side of the token grid; `GRID * GRID` tokens per map.
pub const GRID: usize = 32;
pub const N_TOKENS: usize = GRID * GRID;
pub const TENSOR_MAGIC: [u8; 4] = *b"VOXT";
pub const DTYPE_F32: u32 = 1;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("incompatible grid: {h}×{w} does not reduce to {GRID}×{GRID} under two stride-2 convolutions")]
    IncompatibleGrid { h: usize, w: usize },
    #[error("feature map has {got} channels, adapter expects {expected}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("d_model mismatch: {block} block has width {got}, expected {expected}")]
    DModelMismatch {
        block: BlockKind,
        expected: usize,
        got: usize,
    },
    #[error("invalid feature map: {0}")]
    InvalidMap(String),
    #[error("invalid adapter config: {0}")]
    InvalidConfig(String),
    #[error("tensor file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense BEV feature map, shape `C×H×W`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelFeatureMap {
    data: Array3<f64>,
}

impl VoxelFeatureMap {
    pub fn new(data: Array3<f64>) -> Result<Self, AdapterError> {
        if data.shape().contains(&0) {
            return Err(AdapterError::InvalidMap(format!("empty shape {:?}", data.shape())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AdapterError::InvalidMap("non-finite entry".into()));
        }
        Ok(VoxelFeatureMap { data })
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Result<Self, AdapterError> {
        VoxelFeatureMap::new(Array3::zeros((c, h, w)))
    }

    pub fn random(c: usize, h: usize, w: usize, seed: u64) -> Result<Self, AdapterError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VoxelFeatureMap::new(Array3::from_shape_simple_fn((c, h, w), || rng.random_range(-1.0..1.0)))
    }

    pub fn view(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    /// `(C, H, W)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        let s = self.data.shape();
        (s[0], s[1], s[2])
    }

    pub fn scaled(&self, a: f64) -> Result<Self, AdapterError> {
        VoxelFeatureMap::new(&self.data * a)
    }

    /// Reads the binary tensor format: magic, dtype code, `C`, `H`, `W` as
    /// little-endian `u32`, then `C·H·W` little-endian `f32` values, row-major.
    pub fn read_from(mut r: impl Read) -> Result<Self, AdapterError> {
        let mut header = [0u8; 20];
        r.read_exact(&mut header)
            .map_err(|e| AdapterError::Format(format!("truncated header: {e}")))?;
        if header[..4] != TENSOR_MAGIC {
            return Err(AdapterError::Format("bad magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4-byte slice"));
        if word(4) != DTYPE_F32 {
            return Err(AdapterError::Format(format!("unsupported dtype code {}", word(4))));
        }
        let (c, h, w) = (word(8) as usize, word(12) as usize, word(16) as usize);
        let n = c
            .checked_mul(h)
            .and_then(|x| x.checked_mul(w))
            .ok_or_else(|| AdapterError::Format("shape overflows".into()))?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if payload.len() != n * 4 {
            return Err(AdapterError::Format(format!(
                "payload has {} bytes, shape {c}×{h}×{w} needs {}",
                payload.len(),
                n * 4
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")) as f64)
            .collect();
        let data = Array3::from_shape_vec((c, h, w), values).map_err(|e| AdapterError::Format(e.to_string()))?;
        VoxelFeatureMap::new(data)
    }

    /// Writes the binary tensor format (values narrowed to `f32`).
    pub fn write_to(&self, mut w: impl Write) -> Result<(), AdapterError> {
        let (c, h, wd) = self.shape();
        w.write_all(&TENSOR_MAGIC)?;
        for v in [DTYPE_F32, c as u32, h as u32, wd as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.data.iter() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub in_channels: usize,
    pub stem_channels: usize,
    pub hidden: usize,
    pub d_model: usize,
}

impl AdapterConfig {
    fn validate(&self) -> Result<(), AdapterError> {
        if [self.in_channels, self.stem_channels, self.hidden, self.d_model].contains(&0) {
            return Err(AdapterError::InvalidConfig(format!("zero-sized layer in {self:?}")));
        }
        Ok(())
    }
}

/// Adapter weights. Convolution kernels are `[out, in, 3, 3]`; MLP weights
/// are `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    pub conv1_w: Array4<f64>,
    pub conv1_b: Array1<f64>,
    pub conv2_w: Array4<f64>,
    pub conv2_b: Array1<f64>,
    pub mlp1_w: Array2<f64>,
    pub mlp1_b: Array1<f64>,
    pub mlp2_w: Array2<f64>,
    pub mlp2_b: Array1<f64>,
}

impl AdapterParams {
    /// Seeded uniform init in `±1/√fan_in` for weights and biases.
    pub fn init(cfg: &AdapterConfig, seed: u64) -> Result<Self, AdapterError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uniform = |fan_in: usize| {
            let b = 1.0 / (fan_in as f64).sqrt();
            move |rng: &mut ChaCha8Rng| rng.random_range(-b..=b)
        };
        let (c, s, h, d) = (cfg.in_channels, cfg.stem_channels, cfg.hidden, cfg.d_model);
        let f1 = uniform(c * 9);
        let conv1_w = Array4::from_shape_simple_fn((s, c, 3, 3), || f1(&mut rng));
        let conv1_b = Array1::from_shape_simple_fn(s, || f1(&mut rng));
        let f2 = uniform(s * 9);
        let conv2_w = Array4::from_shape_simple_fn((s, s, 3, 3), || f2(&mut rng));
        let conv2_b = Array1::from_shape_simple_fn(s, || f2(&mut rng));
        let f3 = uniform(s);
        let mlp1_w = Array2::from_shape_simple_fn((h, s), || f3(&mut rng));
        let mlp1_b = Array1::from_shape_simple_fn(h, || f3(&mut rng));
        let f4 = uniform(h);
        let mlp2_w = Array2::from_shape_simple_fn((d, h), || f4(&mut rng));
        let mlp2_b = Array1::from_shape_simple_fn(d, || f4(&mut rng));
        Ok(AdapterParams {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            mlp1_w,
            mlp1_b,
            mlp2_w,
            mlp2_b,
        })
    }

    pub fn without_biases(mut self) -> Self {
        for b in [&mut self.conv1_b, &mut self.conv2_b, &mut self.mlp1_b, &mut self.mlp2_b] {
            b.fill(0.0);
        }
        self
    }

    pub fn in_channels(&self) -> usize {
        self.conv1_w.shape()[1]
    }

    pub fn d_model(&self) -> usize {
        self.mlp2_w.shape()[0]
    }
}

/// Output side of a 3×3, stride-2, padding-1 convolution.
pub fn conv_out(n: usize) -> usize {
    n.div_ceil(2)
}

/// Input rows (inclusive) feeding output row `p` of such a convolution.
pub fn conv_support(p: usize, n_in: usize) -> (usize, usize) {
    ((2 * p).saturating_sub(1), (2 * p + 1).min(n_in - 1))
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_C: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_K * (x + GELU_C * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

/// 3×3 stride-2 padding-1 convolution.
fn conv(x: &Array3<f64>, w: &Array4<f64>, b: Option<&Array1<f64>>) -> Array3<f64> {
    let (c_in, h, wd) = x.dim();
    let c_out = w.shape()[0];
    let (ho, wo) = (conv_out(h), conv_out(wd));
    let mut out = Array3::zeros((c_out, ho, wo));
    let xs = x.as_standard_layout();
    let xs = xs.as_slice().expect("standard layout");
    for o in 0..c_out {
        let mut plane = out.slice_mut(s![o, .., ..]);
        if let Some(b) = b {
            plane.fill(b[o]);
        }
        for i in 0..c_in {
            let base = i * h * wd;
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = w[[o, i, ky, kx]];
                    if k == 0.0 {
                        continue;
                    }
                    for p in 0..ho {
                        let y = (2 * p + ky) as isize - 1;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        let row = base + y as usize * wd;
                        for q in 0..wo {
                            let xx = (2 * q + kx) as isize - 1;
                            if xx < 0 || xx >= wd as isize {
                                continue;
                            }
                            plane[[p, q]] += k * xs[row + xx as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Per-position dense layer: `[C_in, H, W] → [C_out, H, W]`.
fn pointwise(x: &Array3<f64>, w: &Array2<f64>, b: Option<&Array1<f64>>) -> Array3<f64> {
    let (c, h, wd) = x.dim();
    let flat = x
        .view()
        .into_shape_with_order((c, h * wd))
        .expect("contiguous")
        .to_owned();
    let mut y = w.dot(&flat);
    if let Some(b) = b {
        y += &b.view().insert_axis(Axis(1));
    }
    y.into_shape_with_order((w.shape()[0], h, wd)).expect("reshape")
}

fn check_input(v: &VoxelFeatureMap, p: &AdapterParams) -> Result<(), AdapterError> {
    let (c, h, w) = v.shape();
    if c != p.in_channels() {
        return Err(AdapterError::ChannelMismatch {
            expected: p.in_channels(),
            got: c,
        });
    }
    if conv_out(conv_out(h)) != GRID || conv_out(conv_out(w)) != GRID {
        return Err(AdapterError::IncompatibleGrid { h, w });
    }
    Ok(())
}

/// First convolution before its activation; linear in `v` when biases are zero.
pub fn stem_preactivation(v: &VoxelFeatureMap, p: &AdapterParams) -> Result<Array3<f64>, AdapterError> {
    check_input(v, p)?;
    Ok(conv(&v.data, &p.conv1_w, Some(&p.conv1_b)))
}

fn to_tokens(y: Array3<f64>) -> Array2<f64> {
    let (d, h, w) = y.dim();
    // [d, h·w] → [h·w, d]: token t = row·W + col
    y.into_shape_with_order((d, h * w))
        .expect("reshape")
        .reversed_axes()
        .as_standard_layout()
        .into_owned()
}

/// Lidar token block, `N_TOKENS × d_model`, row-major over the 32×32 grid.
pub fn project_features(v: &VoxelFeatureMap, p: &AdapterParams) -> Result<Array2<f64>, AdapterError> {
    Ok(jvp_inner(v, None, p)?.0)
}

/// Output and its directional derivative along `dv` (forward mode).
pub fn project_features_jvp(
    v: &VoxelFeatureMap,
    dv: &VoxelFeatureMap,
    p: &AdapterParams,
) -> Result<(Array2<f64>, Array2<f64>), AdapterError> {
    if v.shape() != dv.shape() {
        return Err(AdapterError::InvalidMap(format!(
            "tangent shape {:?} differs from input {:?}",
            dv.shape(),
            v.shape()
        )));
    }
    let (y, dy) = jvp_inner(v, Some(dv), p)?;
    Ok((y, dy.expect("tangent requested")))
}

fn jvp_inner(
    v: &VoxelFeatureMap,
    dv: Option<&VoxelFeatureMap>,
    p: &AdapterParams,
) -> Result<(Array2<f64>, Option<Array2<f64>>), AdapterError> {
    check_input(v, p)?;
    // each stage: z = L(x) + b, dz = L(dx); x' = gelu(z), dx' = gelu'(z)·dz
    let act = |z: Array3<f64>, dz: Option<Array3<f64>>| {
        let dx = dz.map(|mut dz| {
            dz.zip_mut_with(&z, |d, &zz| *d *= gelu_grad(zz));
            dz
        });
        (z.mapv(gelu), dx)
    };
    let z1 = conv(&v.data, &p.conv1_w, Some(&p.conv1_b));
    let dz1 = dv.map(|d| conv(&d.data, &p.conv1_w, None));
    let (x1, dx1) = act(z1, dz1);
    let z2 = conv(&x1, &p.conv2_w, Some(&p.conv2_b));
    let dz2 = dx1.map(|d| conv(&d, &p.conv2_w, None));
    let (x2, dx2) = act(z2, dz2);
    let z3 = pointwise(&x2, &p.mlp1_w, Some(&p.mlp1_b));
    let dz3 = dx2.map(|d| pointwise(&d, &p.mlp1_w, None));
    let (x3, dx3) = act(z3, dz3);
    let y = pointwise(&x3, &p.mlp2_w, Some(&p.mlp2_b));
    let dy = dx3.map(|d| pointwise(&d, &p.mlp2_w, None));
    Ok((to_tokens(y), dy.map(to_tokens)))
}

/// Token rows a single input cell `(row, col)` can influence, as inclusive
/// grid ranges `(rows, cols)`.
pub fn receptive_tokens(row: usize, col: usize, h: usize, w: usize) -> ((usize, usize), (usize, usize)) {
    let through = |i: usize, n: usize| {
        let n1 = conv_out(n);
        // conv rows p with 2p-1 <= i <= 2p+1
        let p_lo = i.saturating_sub(1).div_ceil(2);
        let p_hi = i.div_ceil(2).min(n1 - 1);
        let q_lo = p_lo.saturating_sub(1).div_ceil(2);
        let q_hi = p_hi.div_ceil(2).min(conv_out(n1) - 1);
        (q_lo, q_hi)
    };
    (through(row, h), through(col, w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Image,
    Lidar,
    Text,
}

impl std::fmt::Display for BlockKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BlockKind::Image => "image",
            BlockKind::Lidar => "lidar",
            BlockKind::Text => "text",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenBlock {
    pub kind: BlockKind,
    pub rows: Array2<f64>,
}

/// Image, lidar and text blocks in that order, all `d_model` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub d_model: usize,
    pub blocks: Vec<TokenBlock>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.rows.nrows()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Start offset of every block after the first.
    pub fn boundaries(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .scan(0, |acc, b| {
                *acc += b.rows.nrows();
                Some(*acc)
            })
            .take(self.blocks.len().saturating_sub(1))
            .collect()
    }

    /// The full `L × d_model` input matrix.
    pub fn to_matrix(&self) -> Array2<f64> {
        let views: Vec<_> = self.blocks.iter().map(|b| b.rows.view()).collect();
        ndarray::concatenate(Axis(0), &views).expect("blocks share d_model")
    }
}

/// Concatenates image embeddings, lidar tokens and text embeddings.
pub fn assemble(img: Array2<f64>, lidar: Array2<f64>, txt: Array2<f64>) -> Result<TokenSequence, AdapterError> {
    let d_model = lidar.ncols();
    for (kind, block) in [(BlockKind::Image, &img), (BlockKind::Text, &txt)] {
        if block.ncols() != d_model {
            return Err(AdapterError::DModelMismatch {
                block: kind,
                expected: d_model,
                got: block.ncols(),
            });
        }
    }
    Ok(TokenSequence {
        d_model,
        blocks: vec![
            TokenBlock {
                kind: BlockKind::Image,
                rows: img,
            },
            TokenBlock {
                kind: BlockKind::Lidar,
                rows: lidar,
            },
            TokenBlock {
                kind: BlockKind::Text,
                rows: txt,
            },
        ],
    })
}

/// Self-checks of the adapter on one input, as reported by `adapter-check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterDiagnostics {
    pub input_shape: [usize; 3],
    pub tokens: usize,
    pub d_model: usize,
    /// Largest output change outside the receptive field of an impulse.
    pub impulse_leak: f64,
    /// Largest output change inside it; positive for a live network.
    pub impulse_response: f64,
    /// Max relative gap between the forward-mode derivative and a central
    /// difference along a random direction.
    pub jvp_rel_error: f64,
}

/// Perturbs one cell chosen by `seed` and a random direction drawn from it.
pub fn diagnose(v: &VoxelFeatureMap, p: &AdapterParams, seed: u64) -> Result<AdapterDiagnostics, AdapterError> {
    let (c, h, w) = v.shape();
    let y = project_features(v, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ch, row, col) = (rng.random_range(0..c), rng.random_range(0..h), rng.random_range(0..w));
    let mut bumped = v.data.clone();
    bumped[[ch, row, col]] += 1.0;
    let y_imp = project_features(&VoxelFeatureMap::new(bumped)?, p)?;
    let ((r0, r1), (c0, c1)) = receptive_tokens(row, col, h, w);
    let (mut leak, mut response) = (0.0f64, 0.0f64);
    for (t, (a, b)) in y.outer_iter().zip(y_imp.outer_iter()).enumerate() {
        let (gr, gc) = (t / GRID, t % GRID);
        let diff = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if (r0..=r1).contains(&gr) && (c0..=c1).contains(&gc) {
            response = response.max(diff);
        } else {
            leak = leak.max(diff);
        }
    }

    let dv = VoxelFeatureMap::random(c, h, w, seed.wrapping_add(1))?;
    let (_, dy) = project_features_jvp(v, &dv, p)?;
    let step = 1e-5;
    let plus = project_features(&VoxelFeatureMap::new(&v.data + &(&dv.data * step))?, p)?;
    let minus = project_features(&VoxelFeatureMap::new(&v.data - &(&dv.data * step))?, p)?;
    let fd = (plus - minus) / (2.0 * step);
    let scale = dy.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
    let gap = fd.iter().zip(dy.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(AdapterDiagnostics {
        input_shape: [c, h, w],
        tokens: y.nrows(),
        d_model: y.ncols(),
        impulse_leak: leak,
        impulse_response: response,
        jvp_rel_error: gap / scale,
    })
}
