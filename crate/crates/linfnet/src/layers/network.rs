//! Layer and network containers with reverse-mode differentiation.
//!
//! A `Network` is an ordered stack of distance layers (dense or
//! convolutional), an optional affine/ReLU head, and a logit-negation flag.
//! With negation on and no head, smaller distances mean larger logits and
//! every logit is 1-Lipschitz in the input, which is what margin
//! certification relies on.
//!
//! Parameters live in the layers but are exposed as one flat vector
//! (per layer: weights row-major, then bias; head layers after distance
//! layers) — the same order the model file uses — so optimizers and EMA
//! shadows can treat the model as a plain `&[f64]`.

use crate::error::{Error, Result};
use crate::numcore::{Rng, Tensor};

use super::neuron::{accum_unit_grad, unit_exact, unit_lse, unit_pnorm, NeuronMode};

/// Fully connected distance layer: unit `o` computes the mode's distance
/// between the input and weight row `o`, plus `bias[o]`, optionally mixed
/// with the aligned input coordinate when `residual_c` is set.
#[derive(Debug, Clone)]
pub struct DistLayer {
    weights: Tensor, // out_width x in_width
    bias: Tensor,    // out_width
    mode: NeuronMode,
    residual_c: Option<f64>,
}

impl DistLayer {
    pub fn new(
        weights: Tensor,
        bias: Tensor,
        mode: NeuronMode,
        residual_c: Option<f64>,
    ) -> Result<Self> {
        mode.validate()?;
        if weights.shape().len() != 2 {
            return Err(Error::shape_mismatch("rank-2 weights", weights.shape()));
        }
        let (out_w, in_w) = (weights.shape()[0], weights.shape()[1]);
        if out_w == 0 || in_w == 0 {
            return Err(Error::Param("distance layer widths must be positive".into()));
        }
        if bias.shape() != [out_w] {
            return Err(Error::shape_mismatch([out_w], bias.shape()));
        }
        if let Some(c) = residual_c {
            if !(0.0..1.0).contains(&c) {
                return Err(Error::Param(format!(
                    "residual coefficient must be in [0,1), got {c}"
                )));
            }
            if out_w != in_w {
                return Err(Error::Param(format!(
                    "residual layer needs equal widths, got {in_w} -> {out_w}"
                )));
            }
        }
        weights.check_finite("distance layer weights")?;
        bias.check_finite("distance layer bias")?;
        Ok(DistLayer { weights, bias, mode, residual_c })
    }

    /// Weights drawn uniformly from [0, 1) — the range of the data the
    /// templates are compared against — and zero bias.
    pub fn random(
        out_width: usize,
        in_width: usize,
        mode: NeuronMode,
        residual_c: Option<f64>,
        rng: &mut Rng,
    ) -> Result<Self> {
        let weights = Tensor::rand_uniform(&[out_width, in_width], rng, 0.0, 1.0)?;
        let bias = Tensor::zeros(&[out_width]);
        DistLayer::new(weights, bias, mode, residual_c)
    }

    pub fn in_width(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_width(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn mode(&self) -> &NeuronMode {
        &self.mode
    }

    pub fn residual_c(&self) -> Option<f64> {
        self.residual_c
    }

    fn forward_into(&self, z: &[f64], out: &mut Vec<f64>) {
        let (out_w, in_w) = (self.out_width(), self.in_width());
        out.clear();
        for o in 0..out_w {
            let row = &self.weights.data()[o * in_w..(o + 1) * in_w];
            let dist = match self.mode {
                NeuronMode::Exact => unit_exact(z, row).0,
                NeuronMode::PNorm(p) => unit_pnorm(z, row, p),
                NeuronMode::LogSumExp(p) => unit_lse(z, row, p),
            };
            let v = match self.residual_c {
                Some(c) => c * z[o] + (1.0 - c) * dist,
                None => dist,
            };
            out.push(v + self.bias.data()[o]);
        }
    }

    /// Accumulates parameter gradients (into the `out_w*in_w`-weight and
    /// `out_w`-bias slices, when given) and the input gradient.
    fn backward_accum(
        &self,
        z: &[f64],
        upstream: &[f64],
        mut wgrad: Option<&mut [f64]>,
        mut bgrad: Option<&mut [f64]>,
        zgrad: &mut [f64],
    ) {
        let in_w = self.in_width();
        for (o, &u) in upstream.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            let row = &self.weights.data()[o * in_w..(o + 1) * in_w];
            let dist_scale = match self.residual_c {
                Some(c) => {
                    zgrad[o] += u * c;
                    u * (1.0 - c)
                }
                None => u,
            };
            let wrow = wgrad.as_deref_mut().map(|g| &mut g[o * in_w..(o + 1) * in_w]);
            accum_unit_grad(z, row, &self.mode, dist_scale, zgrad, wrow);
            if let Some(bg) = bgrad.as_deref_mut() {
                bg[o] += u;
            }
        }
    }
}

/// Convolutional distance layer over a `(channels, height, width)` input:
/// each output activation is the mode's distance between an input patch and
/// one kernel, plus that kernel's bias. Valid padding only.
#[derive(Debug, Clone)]
pub struct ConvDistLayer {
    kernels: Tensor, // out_c x in_c x kh x kw
    bias: Tensor,    // out_c
    stride: (usize, usize),
    in_shape: (usize, usize, usize), // (in_c, in_h, in_w)
    mode: NeuronMode,
}

impl ConvDistLayer {
    pub fn new(
        kernels: Tensor,
        bias: Tensor,
        stride: (usize, usize),
        in_shape: (usize, usize, usize),
        mode: NeuronMode,
    ) -> Result<Self> {
        mode.validate()?;
        if kernels.shape().len() != 4 {
            return Err(Error::shape_mismatch("rank-4 kernels", kernels.shape()));
        }
        let (oc, ic, kh, kw) = (
            kernels.shape()[0],
            kernels.shape()[1],
            kernels.shape()[2],
            kernels.shape()[3],
        );
        let (in_c, in_h, in_w) = in_shape;
        if oc == 0 || ic == 0 || kh == 0 || kw == 0 {
            return Err(Error::Param("convolution extents must be positive".into()));
        }
        if ic != in_c {
            return Err(Error::Param(format!(
                "kernel expects {ic} input channels, layer input has {in_c}"
            )));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Param("stride must be positive".into()));
        }
        if kh > in_h || kw > in_w {
            return Err(Error::Param(format!(
                "kernel {kh}x{kw} larger than input {in_h}x{in_w}"
            )));
        }
        if bias.shape() != [oc] {
            return Err(Error::shape_mismatch([oc], bias.shape()));
        }
        kernels.check_finite("convolution kernels")?;
        bias.check_finite("convolution bias")?;
        Ok(ConvDistLayer { kernels, bias, stride, in_shape, mode })
    }

    pub fn random(
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        in_shape: (usize, usize, usize),
        mode: NeuronMode,
        rng: &mut Rng,
    ) -> Result<Self> {
        let kernels =
            Tensor::rand_uniform(&[out_channels, in_shape.0, kernel.0, kernel.1], rng, 0.0, 1.0)?;
        let bias = Tensor::zeros(&[out_channels]);
        ConvDistLayer::new(kernels, bias, stride, in_shape, mode)
    }

    pub fn mode(&self) -> &NeuronMode {
        &self.mode
    }

    pub fn stride(&self) -> (usize, usize) {
        self.stride
    }

    pub fn in_shape(&self) -> (usize, usize, usize) {
        self.in_shape
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn kernel_hw(&self) -> (usize, usize) {
        (self.kernels.shape()[2], self.kernels.shape()[3])
    }

    pub fn out_shape(&self) -> (usize, usize, usize) {
        let (_, in_h, in_w) = self.in_shape;
        let kh = self.kernels.shape()[2];
        let kw = self.kernels.shape()[3];
        let oh = (in_h - kh) / self.stride.0 + 1;
        let ow = (in_w - kw) / self.stride.1 + 1;
        (self.kernels.shape()[0], oh, ow)
    }

    pub fn in_width(&self) -> usize {
        self.in_shape.0 * self.in_shape.1 * self.in_shape.2
    }

    pub fn out_width(&self) -> usize {
        let (oc, oh, ow) = self.out_shape();
        oc * oh * ow
    }

    fn patch_len(&self) -> usize {
        self.kernels.shape()[1] * self.kernels.shape()[2] * self.kernels.shape()[3]
    }

    /// Copies the patch under output position (oy, ox) into `buf` and
    /// records the flat input index of each patch element in `idx`.
    fn gather_patch(&self, z: &[f64], oy: usize, ox: usize, buf: &mut [f64], idx: &mut [usize]) {
        let (in_c, in_h, in_w) = self.in_shape;
        let kh = self.kernels.shape()[2];
        let kw = self.kernels.shape()[3];
        let y0 = oy * self.stride.0;
        let x0 = ox * self.stride.1;
        let mut k = 0;
        for c in 0..in_c {
            for dy in 0..kh {
                let base = c * in_h * in_w + (y0 + dy) * in_w + x0;
                for dx in 0..kw {
                    buf[k] = z[base + dx];
                    idx[k] = base + dx;
                    k += 1;
                }
            }
        }
    }

    fn forward_into(&self, z: &[f64], out: &mut Vec<f64>) {
        let (oc, oh, ow) = self.out_shape();
        let plen = self.patch_len();
        let mut patch = vec![0.0; plen];
        let mut idx = vec![0usize; plen];
        out.clear();
        for c in 0..oc {
            let kernel = &self.kernels.data()[c * plen..(c + 1) * plen];
            let b = self.bias.data()[c];
            for oy in 0..oh {
                for ox in 0..ow {
                    self.gather_patch(z, oy, ox, &mut patch, &mut idx);
                    let dist = match self.mode {
                        NeuronMode::Exact => unit_exact(&patch, kernel).0,
                        NeuronMode::PNorm(p) => unit_pnorm(&patch, kernel, p),
                        NeuronMode::LogSumExp(p) => unit_lse(&patch, kernel, p),
                    };
                    out.push(dist + b);
                }
            }
        }
    }

    fn backward_accum(
        &self,
        z: &[f64],
        upstream: &[f64],
        mut wgrad: Option<&mut [f64]>,
        mut bgrad: Option<&mut [f64]>,
        zgrad: &mut [f64],
    ) {
        let (_, oh, ow) = self.out_shape();
        let plen = self.patch_len();
        let mut patch = vec![0.0; plen];
        let mut idx = vec![0usize; plen];
        let mut pgrad = vec![0.0; plen];
        for (o, &u) in upstream.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            let c = o / (oh * ow);
            let oy = (o / ow) % oh;
            let ox = o % ow;
            self.gather_patch(z, oy, ox, &mut patch, &mut idx);
            let kernel = &self.kernels.data()[c * plen..(c + 1) * plen];
            pgrad.fill(0.0);
            let krow = wgrad.as_deref_mut().map(|g| &mut g[c * plen..(c + 1) * plen]);
            accum_unit_grad(&patch, kernel, &self.mode, u, &mut pgrad, krow);
            for k in 0..plen {
                if pgrad[k] != 0.0 {
                    zgrad[idx[k]] += pgrad[k];
                }
            }
            if let Some(bg) = bgrad.as_deref_mut() {
                bg[c] += u;
            }
        }
    }
}

/// One distance layer of either kind.
#[derive(Debug, Clone)]
pub enum Layer {
    Dist(DistLayer),
    Conv(ConvDistLayer),
}

impl Layer {
    pub fn in_width(&self) -> usize {
        match self {
            Layer::Dist(l) => l.in_width(),
            Layer::Conv(l) => l.in_width(),
        }
    }

    pub fn out_width(&self) -> usize {
        match self {
            Layer::Dist(l) => l.out_width(),
            Layer::Conv(l) => l.out_width(),
        }
    }

    pub fn mode(&self) -> &NeuronMode {
        match self {
            Layer::Dist(l) => l.mode(),
            Layer::Conv(l) => l.mode(),
        }
    }

    fn set_mode(&mut self, mode: NeuronMode) {
        match self {
            Layer::Dist(l) => l.mode = mode,
            Layer::Conv(l) => l.mode = mode,
        }
    }

    fn weight_len(&self) -> usize {
        match self {
            Layer::Dist(l) => l.weights.numel(),
            Layer::Conv(l) => l.kernels.numel(),
        }
    }

    fn bias_len(&self) -> usize {
        match self {
            Layer::Dist(l) => l.bias.numel(),
            Layer::Conv(l) => l.bias.numel(),
        }
    }

    fn weights(&self) -> &Tensor {
        match self {
            Layer::Dist(l) => &l.weights,
            Layer::Conv(l) => &l.kernels,
        }
    }

    fn bias(&self) -> &Tensor {
        match self {
            Layer::Dist(l) => &l.bias,
            Layer::Conv(l) => &l.bias,
        }
    }

    fn weights_mut(&mut self) -> &mut Tensor {
        match self {
            Layer::Dist(l) => &mut l.weights,
            Layer::Conv(l) => &mut l.kernels,
        }
    }

    fn bias_mut(&mut self) -> &mut Tensor {
        match self {
            Layer::Dist(l) => &mut l.bias,
            Layer::Conv(l) => &mut l.bias,
        }
    }

    fn forward_into(&self, z: &[f64], out: &mut Vec<f64>) {
        match self {
            Layer::Dist(l) => l.forward_into(z, out),
            Layer::Conv(l) => l.forward_into(z, out),
        }
    }

    fn backward_accum(
        &self,
        z: &[f64],
        upstream: &[f64],
        wgrad: Option<&mut [f64]>,
        bgrad: Option<&mut [f64]>,
        zgrad: &mut [f64],
    ) {
        match self {
            Layer::Dist(l) => l.backward_accum(z, upstream, wgrad, bgrad, zgrad),
            Layer::Conv(l) => l.backward_accum(z, upstream, wgrad, bgrad, zgrad),
        }
    }
}

/// One affine map of the head, optionally followed by ReLU.
#[derive(Debug, Clone)]
pub struct HeadLayer {
    pub(crate) weight: Tensor, // out x in
    pub(crate) bias: Tensor,   // out
    pub(crate) relu: bool,
}

impl HeadLayer {
    pub fn new(weight: Tensor, bias: Tensor, relu: bool) -> Result<Self> {
        if weight.shape().len() != 2 {
            return Err(Error::shape_mismatch("rank-2 weights", weight.shape()));
        }
        if bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape_mismatch([weight.shape()[0]], bias.shape()));
        }
        weight.check_finite("head weights")?;
        bias.check_finite("head bias")?;
        Ok(HeadLayer { weight, bias, relu })
    }

    pub(crate) fn in_width(&self) -> usize {
        self.weight.shape()[1]
    }

    pub(crate) fn out_width(&self) -> usize {
        self.weight.shape()[0]
    }

    pub(crate) fn relu(&self) -> bool {
        self.relu
    }
}

/// Affine/ReLU stack appended after the distance layers, ending in a plain
/// affine map onto the class logits.
#[derive(Debug, Clone)]
pub struct AffineHead {
    layers: Vec<HeadLayer>,
}

impl AffineHead {
    pub fn new(layers: Vec<HeadLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Param("affine head needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(Error::shape_mismatch(pair[0].out_width(), pair[1].in_width()));
            }
        }
        if layers.last().unwrap().relu {
            return Err(Error::Param("head must end in an affine map, not a ReLU".into()));
        }
        Ok(AffineHead { layers })
    }

    /// MLP head over `dims = [in, hidden.., out]` with ReLU between affine
    /// maps and uniform `[-1/sqrt(in), 1/sqrt(in))` weights.
    pub fn mlp(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Param("head needs at least input and output widths".into()));
        }
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let a = 1.0 / (dims[i] as f64).sqrt();
            let weight = Tensor::rand_uniform(&[dims[i + 1], dims[i]], rng, -a, a)?;
            let bias = Tensor::zeros(&[dims[i + 1]]);
            layers.push(HeadLayer::new(weight, bias, i + 2 < dims.len())?);
        }
        AffineHead::new(layers)
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().unwrap().out_width()
    }

    pub(crate) fn layers(&self) -> &[HeadLayer] {
        &self.layers
    }

    /// Interval propagation: maps per-coordinate input bounds to sound
    /// output bounds (affine maps split positive/negative weights, ReLU
    /// clamps both ends at zero).
    pub(crate) fn propagate_interval(&self, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut lo = lo.to_vec();
        let mut hi = hi.to_vec();
        for layer in &self.layers {
            let (out_w, in_w) = (layer.out_width(), layer.in_width());
            let mut nlo = vec![0.0; out_w];
            let mut nhi = vec![0.0; out_w];
            for o in 0..out_w {
                let row = &layer.weight.data()[o * in_w..(o + 1) * in_w];
                let mut l = layer.bias.data()[o];
                let mut h = l;
                for i in 0..in_w {
                    let w = row[i];
                    if w >= 0.0 {
                        l += w * lo[i];
                        h += w * hi[i];
                    } else {
                        l += w * hi[i];
                        h += w * lo[i];
                    }
                }
                if layer.relu {
                    l = l.max(0.0);
                    h = h.max(0.0);
                }
                nlo[o] = l;
                nhi[o] = h;
            }
            lo = nlo;
            hi = nhi;
        }
        (lo, hi)
    }
}

/// Stored forward-pass activations, consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    x: Vec<f64>,
    dist_outs: Vec<Vec<f64>>, // per distance layer, before any negation
    head_pres: Vec<Vec<f64>>, // per head layer, before ReLU
    logits: Vec<f64>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Output of the last distance layer, before any logit negation.
    pub(crate) fn backbone_out(&self) -> &[f64] {
        self.dist_outs.last().unwrap()
    }
}

/// A full model: distance layers, optional head, logit negation flag.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    head: Option<AffineHead>,
    negate_logits: bool,
    /// Marks parameters that came from an EMA shadow; metadata only,
    /// carried through serialization into evaluation reports.
    pub ema: bool,
    offsets: Vec<usize>, // flat offset of each layer's (weights, bias) block
    n_params: usize,
}

impl Network {
    pub fn new(layers: Vec<Layer>, head: Option<AffineHead>, negate_logits: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Param("network needs at least one distance layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(Error::shape_mismatch(pair[0].out_width(), pair[1].in_width()));
            }
        }
        if let Some(h) = &head {
            let backbone_out = layers.last().unwrap().out_width();
            if h.in_width() != backbone_out {
                return Err(Error::shape_mismatch(backbone_out, h.in_width()));
            }
        }
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        let mut n = 0usize;
        for l in &layers {
            offsets.push(n);
            n += l.weight_len() + l.bias_len();
        }
        if let Some(h) = &head {
            for hl in h.layers() {
                offsets.push(n);
                n += hl.weight.numel() + hl.bias.numel();
            }
        }
        Ok(Network { layers, head, negate_logits, ema: false, offsets, n_params: n })
    }

    /// Dense distance network over `widths = [in, h1, .., out]`; when
    /// `residual_c` is set it is applied to every equal-width layer.
    pub fn dense(
        widths: &[usize],
        mode: NeuronMode,
        residual_c: Option<f64>,
        negate_logits: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Param("network needs at least input and output widths".into()));
        }
        let mut layers = Vec::new();
        for i in 0..widths.len() - 1 {
            let c = residual_c.filter(|_| widths[i] == widths[i + 1]);
            layers.push(Layer::Dist(DistLayer::random(widths[i + 1], widths[i], mode, c, rng)?));
        }
        Network::new(layers, None, negate_logits)
    }

    pub fn with_head(mut self, head: AffineHead) -> Result<Self> {
        let backbone_out = self.layers.last().unwrap().out_width();
        if head.in_width() != backbone_out {
            return Err(Error::shape_mismatch(backbone_out, head.in_width()));
        }
        self.head = Some(head);
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut n = 0usize;
        for l in &self.layers {
            offsets.push(n);
            n += l.weight_len() + l.bias_len();
        }
        for hl in self.head.as_ref().unwrap().layers() {
            offsets.push(n);
            n += hl.weight.numel() + hl.bias.numel();
        }
        self.offsets = offsets;
        self.n_params = n;
        Ok(self)
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn output_width(&self) -> usize {
        match &self.head {
            Some(h) => h.out_width(),
            None => self.layers.last().unwrap().out_width(),
        }
    }

    /// Width W: the largest activation count anywhere in the network,
    /// input included.
    pub fn width(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_width())
            .chain([self.input_width()])
            .max()
            .unwrap()
    }

    /// Depth L: the number of distance layers.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn has_head(&self) -> bool {
        self.head.is_some()
    }

    pub fn head(&self) -> Option<&AffineHead> {
        self.head.as_ref()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn negate_logits(&self) -> bool {
        self.negate_logits
    }

    /// Switches every distance layer to `mode` (used by p-annealing).
    pub fn set_mode(&mut self, mode: NeuronMode) -> Result<()> {
        mode.validate()?;
        for l in &mut self.layers {
            l.set_mode(mode);
        }
        Ok(())
    }

    /// True when every distance layer applies the exact operator — the
    /// precondition for any certification claim.
    pub fn is_exact(&self) -> bool {
        self.layers.iter().all(|l| l.mode().is_exact())
    }

    /// Index and mode of the first surrogate layer, for refusal messages.
    pub fn first_surrogate(&self) -> Option<(usize, String)> {
        self.layers
            .iter()
            .enumerate()
            .find(|(_, l)| !l.mode().is_exact())
            .map(|(i, l)| (i, l.mode().describe()))
    }

    pub fn param_count(&self) -> usize {
        self.n_params
    }

    /// All parameters as one flat vector (layer weights row-major then
    /// bias, distance layers first, then head layers).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params);
        for l in &self.layers {
            out.extend_from_slice(l.weights().data());
            out.extend_from_slice(l.bias().data());
        }
        if let Some(h) = &self.head {
            for hl in h.layers() {
                out.extend_from_slice(hl.weight.data());
                out.extend_from_slice(hl.bias.data());
            }
        }
        out
    }

    /// Writes a flat parameter vector (in [`Network::params_flat`] order)
    /// back into the layers.
    pub fn load_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params {
            return Err(Error::shape_mismatch(self.n_params, flat.len()));
        }
        let mut pos = 0usize;
        for l in &mut self.layers {
            let wl = l.weight_len();
            let bl = l.bias_len();
            l.weights_mut().data_mut().copy_from_slice(&flat[pos..pos + wl]);
            pos += wl;
            l.bias_mut().data_mut().copy_from_slice(&flat[pos..pos + bl]);
            pos += bl;
        }
        if let Some(h) = &mut self.head {
            for hl in &mut h.layers {
                let wl = hl.weight.numel();
                let bl = hl.bias.numel();
                hl.weight.data_mut().copy_from_slice(&flat[pos..pos + wl]);
                pos += wl;
                hl.bias.data_mut().copy_from_slice(&flat[pos..pos + bl]);
                pos += bl;
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(Error::shape_mismatch(self.input_width(), x.len()));
        }
        for (i, v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite input at coordinate {i}: {v}")));
            }
        }
        Ok(())
    }

    /// Class logits for `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            l.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        if self.negate_logits {
            for v in cur.iter_mut() {
                *v = -*v;
            }
        }
        if let Some(h) = &self.head {
            for hl in h.layers() {
                let (out_w, in_w) = (hl.out_width(), hl.in_width());
                next.clear();
                for o in 0..out_w {
                    let row = &hl.weight.data()[o * in_w..(o + 1) * in_w];
                    let mut v = hl.bias.data()[o];
                    for i in 0..in_w {
                        v += row[i] * cur[i];
                    }
                    next.push(if hl.relu { v.max(0.0) } else { v });
                }
                std::mem::swap(&mut cur, &mut next);
            }
        }
        Ok(cur)
    }

    /// Forward pass that also stores the activations needed by
    /// [`Network::backward`].
    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut dist_outs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut next = Vec::new();
            l.forward_into(&cur, &mut next);
            dist_outs.push(next.clone());
            cur = next;
        }
        if self.negate_logits {
            for v in cur.iter_mut() {
                *v = -*v;
            }
        }
        let mut head_pres = Vec::new();
        if let Some(h) = &self.head {
            for hl in h.layers() {
                let (out_w, in_w) = (hl.out_width(), hl.in_width());
                let mut pre = Vec::with_capacity(out_w);
                for o in 0..out_w {
                    let row = &hl.weight.data()[o * in_w..(o + 1) * in_w];
                    let mut v = hl.bias.data()[o];
                    for i in 0..in_w {
                        v += row[i] * cur[i];
                    }
                    pre.push(v);
                }
                head_pres.push(pre.clone());
                cur = if hl.relu { pre.iter().map(|v| v.max(0.0)).collect() } else { pre };
            }
        }
        Ok(Trace { x: x.to_vec(), dist_outs, head_pres, logits: cur })
    }

    /// Chain-rule gradients of `sum_k upstream_k * logit_k`: returns
    /// (flat parameter gradients, input gradient).
    pub fn backward(&self, trace: &Trace, upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut pgrads = vec![0.0; self.n_params];
        let input = self.backward_impl(trace, upstream, Some(&mut pgrads))?;
        Ok((pgrads, input))
    }

    /// Input gradient only — what an attack needs; skips all parameter
    /// gradient work.
    pub fn input_grad(&self, trace: &Trace, upstream: &[f64]) -> Result<Vec<f64>> {
        self.backward_impl(trace, upstream, None)
    }

    /// Like [`Network::backward`] but adds parameter gradients into a caller
    /// buffer, so a minibatch can accumulate without per-sample allocation.
    pub fn backward_acc(
        &self,
        trace: &Trace,
        upstream: &[f64],
        pgrads: &mut [f64],
    ) -> Result<Vec<f64>> {
        if pgrads.len() != self.n_params {
            return Err(Error::shape_mismatch(self.n_params, pgrads.len()));
        }
        self.backward_impl(trace, upstream, Some(pgrads))
    }

    fn backward_impl(
        &self,
        trace: &Trace,
        upstream: &[f64],
        mut pgrads: Option<&mut [f64]>,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_width() {
            return Err(Error::shape_mismatch(self.output_width(), upstream.len()));
        }
        if trace.x.len() != self.input_width() || trace.dist_outs.len() != self.layers.len() {
            return Err(Error::shape_mismatch("trace from this network", "foreign trace"));
        }
        let mut cur = upstream.to_vec();

        if let Some(h) = &self.head {
            if trace.head_pres.len() != h.layers().len() {
                return Err(Error::shape_mismatch(h.layers().len(), trace.head_pres.len()));
            }
            let backbone = trace.dist_outs.last().unwrap();
            for (li, hl) in h.layers().iter().enumerate().rev() {
                let (out_w, in_w) = (hl.out_width(), hl.in_width());
                // ReLU applies after this layer's affine map; its gradient
                // gates the upstream signal by the stored pre-activation.
                if hl.relu {
                    for (o, u) in cur.iter_mut().enumerate() {
                        if trace.head_pres[li][o] <= 0.0 {
                            *u = 0.0;
                        }
                    }
                }
                // Input of head layer li: previous head layer's post-ReLU
                // output, or the (possibly negated) backbone output.
                let negated;
                let input: &[f64] = if li > 0 {
                    let prev = h.layers()[li - 1].relu;
                    negated = trace.head_pres[li - 1]
                        .iter()
                        .map(|v| if prev { v.max(0.0) } else { *v })
                        .collect::<Vec<_>>();
                    &negated
                } else if self.negate_logits {
                    negated = backbone.iter().map(|v| -v).collect::<Vec<_>>();
                    &negated
                } else {
                    backbone
                };
                if let Some(pg) = pgrads.as_deref_mut() {
                    let ofs = self.offsets[self.layers.len() + li];
                    let (wg, bg) = pg[ofs..ofs + out_w * in_w + out_w].split_at_mut(out_w * in_w);
                    for o in 0..out_w {
                        let u = cur[o];
                        if u == 0.0 {
                            continue;
                        }
                        let row = &mut wg[o * in_w..(o + 1) * in_w];
                        for i in 0..in_w {
                            row[i] += u * input[i];
                        }
                        bg[o] += u;
                    }
                }
                let mut down = vec![0.0; in_w];
                for o in 0..out_w {
                    let u = cur[o];
                    if u == 0.0 {
                        continue;
                    }
                    let row = &hl.weight.data()[o * in_w..(o + 1) * in_w];
                    for i in 0..in_w {
                        down[i] += u * row[i];
                    }
                }
                cur = down;
            }
        }

        if self.negate_logits {
            for v in cur.iter_mut() {
                *v = -*v;
            }
        }

        for (li, l) in self.layers.iter().enumerate().rev() {
            let input: &[f64] = if li == 0 { &trace.x } else { &trace.dist_outs[li - 1] };
            let mut down = vec![0.0; l.in_width()];
            match pgrads.as_deref_mut() {
                Some(pg) => {
                    let ofs = self.offsets[li];
                    let wl = l.weight_len();
                    let bl = l.bias_len();
                    let (wg, bg) = pg[ofs..ofs + wl + bl].split_at_mut(wl);
                    l.backward_accum(input, &cur, Some(wg), Some(bg), &mut down);
                }
                None => l.backward_accum(input, &cur, None, None, &mut down),
            }
            cur = down;
        }
        Ok(cur)
    }
}
