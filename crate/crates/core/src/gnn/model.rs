use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::{Channels, Purpose, RngStream};
use crate::linalg::CMatrix;
use crate::metrics::{evaluate, BeamformerSet, Noise, ObjectiveWeights, ReceiveMode, SinrReport};
use crate::scalar::{lit, Scalar};
use crate::tensor::{Eager, Graph, ParamId, ParamStore, Tensor};

use super::features::{build_node_features, BatchLayout, NodeFeatureBatch};
use super::{GnnConfig, GnnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

/// Two dense layers, ReLU after each.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub l1: Dense,
    pub l2: Dense,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub node: Mlp,
    pub combine: Mlp,
}

/// Parameter handles of one BS network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BsNet {
    pub emb_com: Mlp,
    pub emb_sen: Mlp,
    pub conv: Vec<ConvLayer>,
    pub digital: Dense,
    pub analog: Dense,
}

impl BsNet {
    /// Dense layers in evaluation order with a short label each; the bool
    /// marks layers followed by ReLU.
    pub fn layers(&self) -> Vec<(String, Dense, bool)> {
        let mut out = Vec::new();
        let push_mlp = |name: &str, m: &Mlp, out: &mut Vec<(String, Dense, bool)>| {
            out.push((format!("{name}.l1"), m.l1, true));
            out.push((format!("{name}.l2"), m.l2, true));
        };
        push_mlp("emb_com", &self.emb_com, &mut out);
        push_mlp("emb_sen", &self.emb_sen, &mut out);
        for (k, c) in self.conv.iter().enumerate() {
            push_mlp(&format!("conv{k}.node"), &c.node, &mut out);
            push_mlp(&format!("conv{k}.combine"), &c.combine, &mut out);
        }
        out.push(("digital".into(), self.digital, false));
        out.push(("analog".into(), self.analog, false));
        out
    }
}

/// Network parameters for every BS plus the seed they were drawn from.
#[derive(Clone, Debug)]
pub struct GnnModel<T> {
    pub config: GnnConfig,
    pub seed: u64,
    pub store: ParamStore<T>,
    pub nets: Vec<BsNet>,
}

/// Beamformers of one sample at one BS, as graph nodes.
///
/// `w_*` is `n_rf x streams`, `x_*` = `F W` is `n_t x streams`.
#[derive(Clone, Debug)]
pub struct SampleBeams<N> {
    pub f_re: N,
    pub f_im: N,
    pub w_re: N,
    pub w_im: N,
    pub x_re: N,
    pub x_im: N,
    /// All raw beams were zero, so no power scaling was possible.
    pub degenerate: bool,
}

/// Result of a value-only forward pass over a batch.
#[derive(Clone, Debug)]
pub struct Inference<T> {
    pub beams: Vec<BeamformerSet<T>>,
    /// `degenerate[b][m]`: sample `b` produced all-zero beams at BS `m`.
    pub degenerate: Vec<Vec<bool>>,
}

fn add_dense<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, fan_in: usize, fan_out: usize, gain: f64, rng: &mut R) -> Dense {
    let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
    let w = Tensor::from_fn(fan_in, fan_out, |_, _| lit(normal.sample(rng)));
    Dense {
        w: store.add(format!("{name}.w"), w),
        b: store.add(format!("{name}.b"), Tensor::zeros(&[1, fan_out])),
    }
}

fn add_mlp<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, dims: [usize; 3], rng: &mut R) -> Mlp {
    Mlp {
        l1: add_dense(store, &format!("{name}.l1"), dims[0], dims[1], 2.0, rng),
        l2: add_dense(store, &format!("{name}.l2"), dims[1], dims[2], 2.0, rng),
    }
}

fn add_net<T: Scalar, R: Rng>(store: &mut ParamStore<T>, prefix: &str, c: &GnnConfig, rng: &mut R) -> BsNet {
    let (h, e) = (c.hidden, c.embed);
    BsNet {
        emb_com: add_mlp(store, &format!("{prefix}.emb_com"), [c.com_width(), h, e], rng),
        emb_sen: add_mlp(store, &format!("{prefix}.emb_sen"), [c.sen_width(), h, e], rng),
        conv: (0..c.conv_layers)
            .map(|k| ConvLayer {
                node: add_mlp(store, &format!("{prefix}.conv{k}.node"), [e, e, e], rng),
                combine: add_mlp(store, &format!("{prefix}.conv{k}.combine"), [2 * e, e, e], rng),
            })
            .collect(),
        digital: add_dense(store, &format!("{prefix}.digital"), e, 2 * c.n_rf, 1.0, rng),
        analog: add_dense(store, &format!("{prefix}.analog"), e, c.n_t * c.n_rf, 1.0, rng),
    }
}

impl<T: Scalar> GnnModel<T> {
    /// He-normal weights for ReLU layers, `1/fan_in` variance for the
    /// heads, zero biases.
    pub fn new(config: GnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::new(seed, 0, 0).rng(Purpose::Init);
        let mut store = ParamStore::new();
        let nets = if config.shared {
            let net = add_net(&mut store, "shared", &config, &mut rng);
            vec![net; config.bs]
        } else {
            (0..config.bs).map(|m| add_net(&mut store, &format!("bs{m}"), &config, &mut rng)).collect()
        };
        Ok(Self {
            config,
            seed,
            store,
            nets,
        })
    }

    /// Same network at another precision.
    pub fn cast<U: Scalar>(&self) -> GnnModel<U> {
        let mut store = ParamStore::new();
        for p in self.store.iter() {
            store.add(p.name.clone(), p.value.cast());
        }
        GnnModel {
            config: self.config.clone(),
            seed: self.seed,
            store,
            nets: self.nets.clone(),
        }
    }

    /// Beamformers of BS `m` for every sample of `feats`.
    pub fn forward_bs<'s, G: Graph<'s, T>>(
        &'s self,
        g: &mut G,
        m: usize,
        feats: &NodeFeatureBatch<T>,
        power: T,
    ) -> Result<Vec<SampleBeams<G::Node>>> {
        let net = self.nets.get(m).ok_or_else(|| GnnError::Shape(format!("no network for BS {m}")))?;
        let s = &self.store;
        let layout = feats.layout;
        let z = embed(g, s, net, feats)?;
        let mut z = append_mean_node(g, &z, &layout)?;
        let samples = layout.samples();
        for layer in &net.conv {
            z = graph_conv(g, s, layer, &z, &samples)?;
        }
        let (digital, analog) = output_heads(g, s, net, &z, &layout)?;
        let n_rf = self.config.n_rf;
        let mut out = Vec::with_capacity(layout.batch);
        for b in 0..layout.batch {
            let a = g.gather_rows(&analog, vec![b])?;
            let (f_re, f_im) = normalize_analog(g, &a, self.config.n_t, n_rf)?;
            let rows: Vec<usize> = (b * layout.streams()..(b + 1) * layout.streams()).collect();
            let raw = g.gather_rows(&digital, rows)?;
            out.push(normalize_digital(g, &raw, f_re, f_im, n_rf, power)?);
        }
        Ok(out)
    }

    /// Value-only forward for a batch of samples with equal user and target
    /// counts.
    pub fn infer_batch(&self, samples: &[&Channels<f64>], power: f64) -> Result<Inference<T>> {
        let mut per_bs = Vec::with_capacity(self.config.bs);
        for m in 0..self.config.bs {
            let feats = build_node_features::<T>(samples, m, &self.config)?;
            let mut g = Eager;
            let beams = self.forward_bs(&mut g, m, &feats, lit(power))?;
            let mut sets = Vec::with_capacity(beams.len());
            for sb in beams {
                let f = CMatrix::from_parts(&sb.f_re, &sb.f_im)?;
                let w = CMatrix::from_parts(&sb.w_re, &sb.w_im)?;
                sets.push((f, w, sb.degenerate));
            }
            per_bs.push(sets);
        }
        let mut beams = Vec::with_capacity(samples.len());
        let mut degenerate = Vec::with_capacity(samples.len());
        for b in 0..samples.len() {
            let mut set = BeamformerSet {
                analog: Vec::with_capacity(self.config.bs),
                digital: Vec::with_capacity(self.config.bs),
            };
            let mut flags = Vec::with_capacity(self.config.bs);
            for bs in per_bs.iter_mut() {
                let (f, w, d) = std::mem::replace(&mut bs[b], (CMatrix::zeros(1, 1), CMatrix::zeros(1, 1), false));
                set.analog.push(f);
                set.digital.push(w);
                flags.push(d);
            }
            beams.push(set);
            degenerate.push(flags);
        }
        Ok(Inference { beams, degenerate })
    }

    /// One forward pass and exact metric evaluation.
    pub fn infer(
        &self,
        ch: &Channels<f64>,
        weights: &ObjectiveWeights,
        noise: &Noise,
        mode: ReceiveMode,
    ) -> Result<(BeamformerSet<T>, SinrReport)> {
        let mut inf = self.infer_batch(&[ch], noise.power)?;
        let bf = inf.beams.pop().expect("one sample in, one out");
        let report = evaluate(&ch.cast::<T>(), None, &bf, weights, noise, mode)?;
        Ok((bf, report))
    }
}

pub fn dense<'s, T: Scalar, G: Graph<'s, T>>(g: &mut G, store: &'s ParamStore<T>, d: Dense, x: &G::Node) -> Result<G::Node> {
    let w = g.param(store, d.w);
    let b = g.param(store, d.b);
    let y = g.matmul(x, &w)?;
    Ok(g.add_row(&y, &b)?)
}

pub fn mlp<'s, T: Scalar, G: Graph<'s, T>>(g: &mut G, store: &'s ParamStore<T>, m: &Mlp, x: &G::Node) -> Result<G::Node> {
    let h = dense(g, store, m.l1, x)?;
    let h = g.relu(&h);
    let y = dense(g, store, m.l2, &h)?;
    Ok(g.relu(&y))
}

/// Node embeddings: user rows through the com MLP, target rows through the
/// sen MLP, stacked users first.
pub fn embed<'s, T: Scalar, G: Graph<'s, T>>(
    g: &mut G,
    store: &'s ParamStore<T>,
    net: &BsNet,
    feats: &NodeFeatureBatch<T>,
) -> Result<G::Node> {
    let xc = g.constant(feats.com.clone());
    let xs = g.constant(feats.sen.clone());
    let zc = mlp(g, store, &net.emb_com, &xc)?;
    let zs = mlp(g, store, &net.emb_sen, &xs)?;
    Ok(g.concat_rows(&[zc, zs])?)
}

/// Appends one row per sample holding the mean of its node rows.
pub fn append_mean_node<'s, T: Scalar, G: Graph<'s, T>>(g: &mut G, z: &G::Node, layout: &BatchLayout) -> Result<G::Node> {
    let groups = (0..layout.batch).map(|b| layout.sample_nodes(b)).collect();
    let mean = g.group_mean_rows(z, groups)?;
    Ok(g.concat_rows(&[z.clone(), mean])?)
}

/// One graph convolution. `samples` partitions the rows into fully
/// connected graphs; every row is updated from its own value and the
/// elementwise max of the node MLP over the other rows of its graph.
pub fn graph_conv<'s, T: Scalar, G: Graph<'s, T>>(
    g: &mut G,
    store: &'s ParamStore<T>,
    layer: &ConvLayer,
    z: &G::Node,
    samples: &[Vec<usize>],
) -> Result<G::Node> {
    let rows = g.value(z).dims2()?.0;
    let mut groups: Vec<Option<Vec<usize>>> = vec![None; rows];
    for s in samples {
        if s.len() < 2 {
            return Err(GnnError::Shape("graph convolution needs at least two nodes per graph".into()));
        }
        for &k in s {
            let slot = groups.get_mut(k).ok_or_else(|| GnnError::Shape(format!("row {k} out of range")))?;
            *slot = Some(s.iter().copied().filter(|&o| o != k).collect());
        }
    }
    let groups: Vec<Vec<usize>> = groups
        .into_iter()
        .enumerate()
        .map(|(k, g)| g.ok_or_else(|| GnnError::Shape(format!("row {k} belongs to no graph"))))
        .collect::<Result<_>>()?;
    let msg = mlp(g, store, &layer.node, z)?;
    let agg = g.group_max_rows(&msg, &groups)?;
    let cat = g.concat_cols(&[z.clone(), agg])?;
    mlp(g, store, &layer.combine, &cat)
}

/// Raw digital rows (node rows, `2 n_rf` wide) and raw analog rows (one per
/// sample, `n_t n_rf` wide).
pub fn output_heads<'s, T: Scalar, G: Graph<'s, T>>(
    g: &mut G,
    store: &'s ParamStore<T>,
    net: &BsNet,
    z: &G::Node,
    layout: &BatchLayout,
) -> Result<(G::Node, G::Node)> {
    let nodes = g.gather_rows(z, (0..layout.node_rows()).collect())?;
    let means = g.gather_rows(z, (layout.node_rows()..layout.total_rows()).collect())?;
    // Reorder node rows sample-major so each sample's beams are contiguous.
    let order: Vec<usize> = (0..layout.batch).flat_map(|b| layout.sample_nodes(b)).collect();
    let nodes = g.gather_rows(&nodes, order)?;
    let digital = dense(g, store, net.digital, &nodes)?;
    let analog = dense(g, store, net.analog, &means)?;
    Ok((digital, analog))
}

/// Phases `1 x (n_t n_rf)` to `F = e^{j theta}` reshaped row-major.
pub fn normalize_analog<'s, T: Scalar, G: Graph<'s, T>>(
    g: &mut G,
    raw: &G::Node,
    n_t: usize,
    n_rf: usize,
) -> Result<(G::Node, G::Node)> {
    let theta = g.reshape(raw, &[n_t, n_rf])?;
    Ok((g.cos(&theta), g.sin(&theta)))
}

/// Raw rows `streams x 2 n_rf` (real parts then imaginary parts) to digital
/// beams, all scaled by one factor so that `sum_s ||F w_s||^2 = power`.
pub fn normalize_digital<'s, T: Scalar, G: Graph<'s, T>>(
    g: &mut G,
    raw: &G::Node,
    f_re: G::Node,
    f_im: G::Node,
    n_rf: usize,
    power: T,
) -> Result<SampleBeams<G::Node>> {
    let re = g.gather_cols(raw, (0..n_rf).collect())?;
    let im = g.gather_cols(raw, (n_rf..2 * n_rf).collect())?;
    let w_re = g.transpose(&re)?;
    let w_im = g.transpose(&im)?;
    let (x_re, x_im) = complex_matmul(g, (&f_re, &f_im), (&w_re, &w_im))?;

    let p_re = g.mul(&x_re, &x_re)?;
    let p_im = g.mul(&x_im, &x_im)?;
    let p = g.add(&p_re, &p_im)?;
    let n_t = g.value(&p).dims2()?.0;
    let ones = g.constant(Tensor::ones(&[1, n_t]));
    let per_stream = g.matmul(&ones, &p)?;
    // Summing streams in ascending order keeps the scale factor independent
    // of stream order.
    let vals = g.value(&per_stream).data().to_vec();
    if vals.iter().all(|&v| v == T::zero()) {
        return Ok(SampleBeams {
            f_re,
            f_im,
            w_re,
            w_im,
            x_re,
            x_im,
            degenerate: true,
        });
    }
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
    let sorted = g.gather_cols(&per_stream, order)?;
    let total = g.sum(&sorted);
    let inv = g.reciprocal(&total)?;
    let ratio = g.scale(&inv, power);
    let c = g.sqrt(&ratio)?;
    Ok(SampleBeams {
        w_re: g.mul(&w_re, &c)?,
        w_im: g.mul(&w_im, &c)?,
        x_re: g.mul(&x_re, &c)?,
        x_im: g.mul(&x_im, &c)?,
        f_re,
        f_im,
        degenerate: false,
    })
}

fn complex_matmul<'s, T: Scalar, G: Graph<'s, T>>(
    g: &mut G,
    a: (&G::Node, &G::Node),
    b: (&G::Node, &G::Node),
) -> Result<(G::Node, G::Node)> {
    let rr = g.matmul(a.0, b.0)?;
    let ii = g.matmul(a.1, b.1)?;
    let ri = g.matmul(a.0, b.1)?;
    let ir = g.matmul(a.1, b.0)?;
    Ok((g.sub(&rr, &ii)?, g.add(&ri, &ir)?))
}
