//! Minimal f64 tensor kernel for the face networks: valid convolution, ReLU,
//! 2×2 max-pooling, fully-connected layers and the logistic sigmoid.

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("KernelTooLarge: {kh}x{kw} kernel on a {rows}x{cols} input")]
    KernelTooLarge { kh: usize, kw: usize, rows: usize, cols: usize },
    #[error("DimensionMismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
}

pub type Result<T> = std::result::Result<T, KernelError>;

/// Row-major 2-D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(KernelError::InvalidShape(format!("{rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(KernelError::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        m.data.fill(value);
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(KernelError::InvalidShape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> f64 {
        let mean = self.mean();
        (self.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.data.len() as f64).sqrt()
    }
}

/// Single 2-D convolution kernel of height K and width L.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    height: usize,
    width: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(height: usize, width: usize, weights: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(KernelError::InvalidShape(format!("{height}x{width} kernel")));
        }
        if weights.len() != height * width {
            return Err(KernelError::DimensionMismatch { expected: height * width, got: weights.len() });
        }
        Ok(Self { height, width, weights })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.weights[k * self.width + l]
    }
}

/// `out(i, j) = Σ_k Σ_l input(i + k, j + l) · kernel(k, l)`, no padding.
pub fn conv2d_valid(input: &Matrix, kernel: &Kernel) -> Result<Matrix> {
    let mut out = valid_output(input, kernel)?;
    accumulate_conv(input, kernel, &mut out);
    Ok(out)
}

fn valid_output(input: &Matrix, kernel: &Kernel) -> Result<Matrix> {
    if input.rows < kernel.height || input.cols < kernel.width {
        return Err(KernelError::KernelTooLarge {
            kh: kernel.height,
            kw: kernel.width,
            rows: input.rows,
            cols: input.cols,
        });
    }
    Ok(Matrix::zeros(input.rows - kernel.height + 1, input.cols - kernel.width + 1))
}

fn accumulate_conv(input: &Matrix, kernel: &Kernel, out: &mut Matrix) {
    let (out_rows, out_cols) = (out.rows, out.cols);
    for k in 0..kernel.height {
        for l in 0..kernel.width {
            let w = kernel.get(k, l);
            if w == 0.0 {
                continue;
            }
            for i in 0..out_rows {
                let src = &input.data[(i + k) * input.cols + l..(i + k) * input.cols + l + out_cols];
                let dst = &mut out.data[i * out_cols..(i + 1) * out_cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s * w;
                }
            }
        }
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Stride-2 max over 2×2 windows. An odd trailing row or column is dropped.
pub fn max_pool_2x2(x: &Matrix) -> Matrix {
    let rows = (x.rows / 2).max(1);
    let cols = (x.cols / 2).max(1);
    if x.rows < 2 || x.cols < 2 {
        // Nothing to pool over in a degenerate direction: take the max of
        // what exists in the first window.
        let mut m = f64::NEG_INFINITY;
        for r in 0..x.rows.min(2) {
            for c in 0..x.cols.min(2) {
                m = m.max(x.get(r, c));
            }
        }
        return Matrix::filled(rows, cols, m);
    }
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let v = x
                .get(2 * i, 2 * j)
                .max(x.get(2 * i, 2 * j + 1))
                .max(x.get(2 * i + 1, 2 * j))
                .max(x.get(2 * i + 1, 2 * j + 1));
            out.set(i, j, v);
        }
    }
    out
}

/// Fully-connected layer `z = W·f + b`, `W` stored out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    biases: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, biases: Vec<f64>) -> Result<Self> {
        if biases.len() != weights.rows {
            return Err(KernelError::DimensionMismatch { expected: weights.rows, got: biases.len() });
        }
        Ok(Self { weights, biases })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }
}

pub fn dense(layer: &DenseLayer, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != layer.in_dim() {
        return Err(KernelError::DimensionMismatch { expected: layer.in_dim(), got: f.len() });
    }
    let n = layer.in_dim();
    Ok(layer
        .biases
        .iter()
        .enumerate()
        .map(|(o, b)| {
            let row = &layer.weights.data[o * n..(o + 1) * n];
            b + row.iter().zip(f).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect())
}

/// Logistic function `1 / (1 + e^{-z})`, evaluated without overflow for
/// large |z|.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Multi-channel valid convolution: output channel `o` is
/// `bias[o] + Σ_c conv2d_valid(input[c], kernels[o][c])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    kernels: Vec<Vec<Kernel>>,
    biases: Vec<f64>,
}

impl ConvLayer {
    pub fn new(kernels: Vec<Vec<Kernel>>, biases: Vec<f64>) -> Result<Self> {
        let out = kernels.len();
        if out == 0 || biases.len() != out {
            return Err(KernelError::DimensionMismatch { expected: out, got: biases.len() });
        }
        let in_ch = kernels[0].len();
        let (kh, kw) = kernels[0]
            .first()
            .map(|k| (k.height, k.width))
            .ok_or_else(|| KernelError::InvalidShape("conv layer without input channels".into()))?;
        if kernels.iter().any(|row| row.len() != in_ch || row.iter().any(|k| k.height != kh || k.width != kw)) {
            return Err(KernelError::InvalidShape("inconsistent conv kernel bank".into()));
        }
        Ok(Self { kernels, biases })
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.len()
    }

    pub fn in_channels(&self) -> usize {
        self.kernels[0].len()
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernels[0][0].height, self.kernels[0][0].width)
    }

    pub fn kernels(&self) -> &[Vec<Kernel>] {
        &self.kernels
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn forward(&self, input: &[Matrix]) -> Result<Vec<Matrix>> {
        if input.len() != self.in_channels() {
            return Err(KernelError::DimensionMismatch { expected: self.in_channels(), got: input.len() });
        }
        self.kernels
            .iter()
            .zip(&self.biases)
            .map(|(bank, &bias)| {
                let mut acc = valid_output(&input[0], &bank[0])?;
                acc.data.fill(bias);
                for (channel, kernel) in input.iter().zip(bank) {
                    if channel.rows != input[0].rows || channel.cols != input[0].cols {
                        return Err(KernelError::InvalidShape("channel size mismatch".into()));
                    }
                    accumulate_conv(channel, kernel, &mut acc);
                }
                Ok(acc)
            })
            .collect()
    }
}

/// Flattens channels in channel-major order.
pub fn flatten(channels: &[Matrix]) -> Vec<f64> {
    channels.iter().flat_map(|m| m.data.iter().copied()).collect()
}
