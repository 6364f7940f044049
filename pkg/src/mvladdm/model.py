"""Multi-view latent-attention dynamic discriminative model.

Per view an LSTM turns window features into hidden means ``h~``; a small
perceptron maps each ``h~`` to a Gaussian expert over the latent ``z``.
Every non-empty subset of views is fused into one posterior
(product of experts), a label-conditioned attention mixes the subset means,
and a linear head scores each label against its own mixture.  Labels are
coupled by a learned transition matrix and trained with the exact
linear-chain likelihood, plus a weighted ELBO on the all-view posterior.

All batched tensors are laid out time-major: row ``t * B + b`` holds frame
``t`` of batch item ``b``.
"""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import kernels
from .data import check_consistent, class_frequencies
from .errors import (CheckpointMismatch, DimMismatch, LabelOutOfRange,
                     TooManyViews)
from .gaussian import (LOG_2PI, FusedPosterior, fuse_t, kl_standard_t,
                       view_subsets)

MAX_VIEWS = 4
ATTENTION_MODES = ("full", "uniform", "shared")

# fixed offsets for per-purpose random streams derived from one seed
STREAM_INIT, STREAM_SAMPLER, STREAM_NOISE, STREAM_TRACE = 0, 1, 2, 3


@dataclass
class ModelConfig:
    n_views: int
    feature_dims: tuple
    n_labels: int
    latent_dim: int = 4
    hidden_dim: int = 16
    mlp_dim: int = 16
    embed_dim: int = 4
    lambda_elbo: float = 0.1
    lr: float = 0.01
    epochs: int = 40
    batch_size: int = 16
    subseq_len: int = 20
    balanced: bool = True
    optimizer: str = "adam"
    attention: str = "full"
    transitions: bool = True
    seed: int = 0

    def __post_init__(self):
        self.feature_dims = tuple(int(d) for d in self.feature_dims)
        if self.n_views < 1:
            raise ValueError("n_views must be >= 1")
        if self.n_views > MAX_VIEWS:
            raise TooManyViews(f"{self.n_views} views; subset enumeration is capped at {MAX_VIEWS}")
        if len(self.feature_dims) != self.n_views:
            raise DimMismatch("feature_dims must list one dimension per view")
        for name in ("latent_dim", "hidden_dim", "mlp_dim", "embed_dim", "n_labels",
                     "batch_size", "subseq_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lambda_elbo < 0 or self.lr < 0 or self.epochs < 0:
            raise ValueError("lambda_elbo, lr and epochs must be non-negative")
        if self.attention not in ATTENTION_MODES:
            raise ValueError(f"attention must be one of {ATTENTION_MODES}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")

    def to_dict(self):
        d = asdict(self)
        d["feature_dims"] = list(self.feature_dims)
        return d


def param_shapes(cfg):
    """Declared parameter blocks, in checkpoint order."""
    dh, d, m, N = cfg.hidden_dim, cfg.latent_dim, cfg.mlp_dim, cfg.n_labels
    shapes = []
    for v, D in enumerate(cfg.feature_dims):
        p = f"view{v}"
        shapes += [
            (f"{p}.lstm.Wx", (D, 4 * dh)), (f"{p}.lstm.Uh", (dh, 4 * dh)), (f"{p}.lstm.b", (1, 4 * dh)),
            (f"{p}.inf.W1", (dh, m)), (f"{p}.inf.b1", (1, m)),
            (f"{p}.inf.W2", (m, 2 * d)), (f"{p}.inf.b2", (1, 2 * d)),
            (f"{p}.gen.W1", (d, m)), (f"{p}.gen.b1", (1, m)),
            (f"{p}.gen.W2", (m, dh)), (f"{p}.gen.b2", (1, dh)),
        ]
    shapes += [("att.Em", (N, cfg.embed_dim)), ("att.U", (cfg.embed_dim, d)),
               ("head.W", (N, d)), ("head.B", (N, N))]
    return shapes


_BIAS_FAN_IN = {"lstm.b": "lstm.Wx", "inf.b1": "inf.W1", "inf.b2": "inf.W2",
                "gen.b1": "gen.W1", "gen.b2": "gen.W2"}


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict = field(default_factory=dict)

    @classmethod
    def init(cls, cfg, rng=None):
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; transitions start at zero."""
        if rng is None:
            rng = np.random.default_rng([cfg.seed, STREAM_INIT])
        shapes = dict(param_shapes(cfg))
        tensors = {}
        for name, shape in param_shapes(cfg):
            if name == "head.B":
                arr = np.zeros(shape)
            else:
                prefix, _, tail = name.partition(".")
                if tail in _BIAS_FAN_IN:
                    fan_in = shapes[f"{prefix}.{_BIAS_FAN_IN[tail]}"][0]
                else:
                    fan_in = shape[0]
                bound = 1.0 / np.sqrt(fan_in)
                arr = rng.uniform(-bound, bound, size=shape)
            tensors[name] = ad.Tensor(arr, requires_grad=True, name=name)
        return cls(cfg, tensors)

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return [n for n, _ in param_shapes(self.config)]

    def trainable_names(self):
        names = self.names()
        if not self.config.transitions:
            names.remove("head.B")
        return names

    def copy(self):
        return ModelParams(ModelConfig(**self.config.to_dict()),
                           {n: ad.Tensor(t.data, requires_grad=True, name=n) for n, t in self.tensors.items()})


# ---------------------------------------------------------------- building blocks

def lstm_t(x, T, B, Wx, Uh, b):
    """Run one gated recurrent cell over a time-major (T*B, D) input.

    Gate columns are ordered input, forget, output, candidate.  Returns the
    (T*B, d_h) stack of hidden means.
    """
    dh = Uh.shape[0]
    pre = ad.add(ad.matmul(x, Wx), b)
    h = c = None
    hs = []
    for t in range(T):
        g = ad.slice_(pre, (slice(t * B, (t + 1) * B), slice(None)))
        if h is not None:
            g = ad.add(g, ad.matmul(h, Uh))
        i = ad.sigmoid(ad.slice_(g, (slice(None), slice(0, dh))))
        f = ad.sigmoid(ad.slice_(g, (slice(None), slice(dh, 2 * dh))))
        o = ad.sigmoid(ad.slice_(g, (slice(None), slice(2 * dh, 3 * dh))))
        cand = ad.tanh(ad.slice_(g, (slice(None), slice(3 * dh, 4 * dh))))
        c = ad.mul(i, cand) if c is None else ad.add(ad.mul(f, c), ad.mul(i, cand))
        h = ad.mul(ad.tanh(c), o)
        hs.append(h)
    return hs[0] if T == 1 else ad.concat(hs, axis=0)


def mlp_t(x, W1, b1, W2, b2):
    return ad.add(ad.matmul(ad.tanh(ad.add(ad.matmul(x, W1), b1)), W2), b2)


def expert_t(h, params, v):
    """Inference net of view ``v``: returns (mean, precision) with precision = 1 + softplus(raw)."""
    p = f"view{v}.inf"
    d = params.config.latent_dim
    out = mlp_t(h, params[f"{p}.W1"], params[f"{p}.b1"], params[f"{p}.W2"], params[f"{p}.b2"])
    mu = ad.slice_(out, (slice(None), slice(0, d)))
    prec = ad.add(ad.softplus(ad.slice_(out, (slice(None), slice(d, 2 * d)))), 1.0)
    return mu, prec


def decode_t(z, params, v):
    p = f"view{v}.gen"
    return mlp_t(z, params[f"{p}.W1"], params[f"{p}.b1"], params[f"{p}.W2"], params[f"{p}.b2"])


def fuse_subsets_t(experts):
    """PoE posterior for every non-empty view subset, as (members, gamma, lam) triples."""
    out = []
    for members in view_subsets(len(experts)):
        gamma, lam, _ = fuse_t([experts[v][0] for v in members], [experts[v][1] for v in members])
        out.append((members, gamma, lam))
    return out


def softmax_over_latents_t(scores):
    """Elementwise softmax across a list of equally shaped score tensors.

    The shift is a constant, so it leaves both the value and the gradient
    unchanged while keeping ``exp`` in range.
    """
    shift = np.max(np.stack([ad._data(s) for s in scores]), axis=0)
    ex = [ad.exp(ad.sub(s, shift)) for s in scores]
    total = ex[0]
    for e in ex[1:]:
        total = ad.add(total, e)
    inv = ad.reciprocal(total)
    return [ad.mul(e, inv) for e in ex]


def attention_scores_t(gammas, Em, U):
    """r[i][row, n] = Em[n]^T U gamma_i[row]."""
    query_t = ad.transpose(ad.matmul(Em, U))
    return [ad.matmul(g, query_t) for g in gammas]


def unaries_t(posteriors, params, mode=None):
    """(rows, N) unary scores from the fused posteriors' means."""
    mode = mode or params.config.attention
    Wt = ad.transpose(params["head.W"])
    gammas = [g for _, g, _ in posteriors]
    if mode == "shared":
        return ad.matmul(gammas[-1], Wt)
    per_latent = [ad.matmul(g, Wt) for g in gammas]
    if mode == "uniform" or len(gammas) == 1:
        total = per_latent[0]
        for s in per_latent[1:]:
            total = ad.add(total, s)
        return ad.mul(total, 1.0 / len(per_latent))
    alphas = softmax_over_latents_t(attention_scores_t(gammas, params["att.Em"], params["att.U"]))
    out = ad.mul(alphas[0], per_latent[0])
    for a, s in zip(alphas[1:], per_latent[1:]):
        out = ad.add(out, ad.mul(a, s))
    return out


def crf_loglik_t(unaries, trans, labels):
    """Per-sequence chain log-likelihood, shape (B,).

    ``unaries`` is a time-major (T*B, N) tensor, ``labels`` a (T, B) int
    array.  Log-partition and marginals come from the forward-backward kernel;
    the gradient is (empirical - expected) counts.
    """
    labels = np.asarray(labels, dtype=np.int64)
    T, B = labels.shape
    U = ad._data(unaries)
    N = U.shape[1]
    Tr = ad._data(trans)
    U3 = U.reshape(T, B, N)
    logz, node, pair = kernels.crf_forward_backward(U3, Tr)
    tt, bb = np.meshgrid(np.arange(T), np.arange(B), indexing="ij")
    gold = U3[tt, bb, labels].sum(axis=0)
    if T > 1:
        gold = gold + Tr[labels[:-1], labels[1:]].sum(axis=0)
    out = gold - logz

    def grad_fn(g):
        onehot = np.zeros((T, B, N))
        onehot[tt, bb, labels] = 1.0
        gu = ((onehot - node) * g[None, :, None]).reshape(T * B, N)
        counts = np.zeros((B, N, N))
        if T > 1:
            np.add.at(counts, (bb[1:], labels[:-1], labels[1:]), 1.0)
        gt = np.einsum("b,bij->ij", g, counts - pair)
        return gu, gt

    return ad.record("crf_loglik", out, (unaries, trans), grad_fn)


def elbo_t(h_views, gamma, lam, params, noise):
    """Single-sample ELBO per row: sum_v log N(h_v; dec_v(z), I) - KL(q || N(0, I))."""
    std = ad.exp(ad.mul(ad.log(lam), 0.5))
    z = ad.add(gamma, ad.mul(std, noise))
    dh = params.config.hidden_dim
    total = None
    for v, h in enumerate(h_views):
        r = ad.sub(h, decode_t(z, params, v))
        ll = ad.add(ad.mul(ad.sum_(ad.square(r), axis=1), -0.5), -0.5 * dh * LOG_2PI)
        total = ll if total is None else ad.add(total, ll)
    return ad.sub(total, kl_standard_t(gamma, lam))


def forward_t(params, views, T, B):
    """Hidden means, experts and subset posteriors for time-major batched views."""
    h_views = []
    for v, x in enumerate(views):
        p = f"view{v}.lstm"
        h_views.append(lstm_t(x, T, B, params[f"{p}.Wx"], params[f"{p}.Uh"], params[f"{p}.b"]))
    experts = [expert_t(h, params, v) for v, h in enumerate(h_views)]
    return h_views, experts, fuse_subsets_t(experts)


def transitions_t(params):
    if params.config.transitions:
        return params["head.B"]
    return ad.const(np.zeros_like(params["head.B"].data))


def loss_t(params, views, labels, noise):
    """Training objective on a batch.  Returns (loss, ll_term, elbo_term) tensors.

    ``views`` are (T, B, D_v) arrays, ``labels`` (T, B), ``noise`` (T*B, d).
    """
    cfg = params.config
    labels = np.asarray(labels)
    T, B = labels.shape
    xs = [ad.const(np.asarray(x).reshape(T * B, -1)) for x in views]
    h_views, _, posts = forward_t(params, xs, T, B)
    un = unaries_t(posts, params)
    ll = crf_loglik_t(un, transitions_t(params), labels)
    ll_term = ad.mul(ad.mean(ll), -1.0 / T)
    _, gamma, lam = posts[-1]
    elbo = elbo_t(h_views, gamma, lam, params, ad.const(noise))
    elbo_term = ad.mul(ad.mean(elbo), -1.0)
    if cfg.lambda_elbo == 0:
        return ll_term, ll_term, elbo_term
    return ad.add(ll_term, ad.mul(elbo_term, cfg.lambda_elbo)), ll_term, elbo_term


# ---------------------------------------------------------------- per-operation API

def _check_views(seq_views, cfg):
    if len(seq_views) != cfg.n_views:
        raise DimMismatch(f"expected {cfg.n_views} views, got {len(seq_views)}")
    for v, (x, D) in enumerate(zip(seq_views, cfg.feature_dims)):
        if np.ndim(x) != 2 or np.shape(x)[1] != D:
            raise DimMismatch(f"view {v}: expected (T, {D}) features, got {np.shape(x)}")


def encode_view(x_seq, params, v):
    """Hidden means E[h_t] of view ``v`` for a (T, D) feature sequence."""
    x = np.asarray(x_seq, dtype=np.float64)
    p = f"view{v}.lstm"
    Wx = params[f"{p}.Wx"]
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] != Wx.shape[0]:
        raise DimMismatch(f"expected (T, {Wx.shape[0]}) input, got {x.shape}")
    h = lstm_t(ad.const(x), x.shape[0], 1, Wx, params[f"{p}.Uh"], params[f"{p}.b"])
    return h.data.copy()


def inference_output(h, params, v):
    """Raw expert of view ``v`` for one hidden vector: (mean, precision)."""
    mu, prec = expert_t(ad.const(np.asarray(h, dtype=np.float64)[None, :]), params, v)
    return mu.data[0].copy(), prec.data[0].copy()


def infer_latents(h_tilde, params):
    """Fused posterior for each of the 2^V - 1 view subsets of one frame."""
    V = len(h_tilde)
    if V > MAX_VIEWS:
        raise TooManyViews(f"{V} views; at most {MAX_VIEWS} supported")
    if V != params.config.n_views:
        raise DimMismatch(f"expected {params.config.n_views} views, got {V}")
    experts = [expert_t(ad.const(np.asarray(h, dtype=np.float64)[None, :]), params, v)
               for v, h in enumerate(h_tilde)]
    return [FusedPosterior(g.data[0].copy(), l.data[0].copy(), members)
            for members, g, l in fuse_subsets_t(experts)]


def attention_weights(scores):
    """Softmax of a list of attention scores (floats or arrays)."""
    return [a.data for a in softmax_over_latents_t([ad.const(np.asarray(s, dtype=np.float64)) for s in scores])]


def attend(posteriors, label, params):
    """Label-conditioned mixture of the posterior means."""
    N = params["att.Em"].shape[0]
    if not 0 <= label < N:
        raise LabelOutOfRange(f"label {label} outside [0, {N})")
    gammas = [ad.const(p.gamma[None, :]) for p in posteriors]
    r = attention_scores_t(gammas, params["att.Em"], params["att.U"])
    alphas = attention_weights([s.data[0, label] for s in r])
    return sum(float(a) * p.gamma for a, p in zip(alphas, posteriors))


def unary_scores(z_by_label, W):
    """score[n] = W[n] . z_by_label[n]."""
    z = np.asarray(z_by_label, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if z.shape != W.shape:
        raise DimMismatch(f"latent table {z.shape} does not match weights {W.shape}")
    return np.einsum("nd,nd->n", W, z)


def sequence_log_likelihood(unaries, trans, labels):
    """log P(labels | unaries) under the linear chain with transition scores ``trans``."""
    U = np.asarray(unaries, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64).reshape(-1, 1)
    return float(crf_loglik_t(ad.const(U), ad.const(trans), y).data[0])


def elbo(h_tilde, posterior, params, noise):
    """Single-sample ELBO of one frame given its fused posterior."""
    hs = [ad.const(np.asarray(h, dtype=np.float64)[None, :]) for h in h_tilde]
    out = elbo_t(hs, ad.const(posterior.gamma[None, :]), ad.const(posterior.lam[None, :]),
                 params, ad.const(np.asarray(noise, dtype=np.float64)[None, :]))
    return float(out.data[0])


def predict_unaries(seq, params, mode=None):
    """Deterministic (T, N) unary scores of a sequence using posterior means."""
    cfg = params.config
    views = seq.views if hasattr(seq, "views") else seq
    _check_views(views, cfg)
    T = np.shape(views[0])[0]
    if T == 0:
        return np.zeros((0, cfg.n_labels))
    xs = [ad.const(x) for x in views]
    _, _, posts = forward_t(params, xs, T, 1)
    return unaries_t(posts, params, mode).data.copy()


def decode_transitions(params):
    return params["head.B"].data.copy() if params.config.transitions else np.zeros_like(params["head.B"].data)


# ---------------------------------------------------------------- training

@dataclass
class TraceRow:
    epoch: int
    loss: float
    ll_term: float
    elbo_term: float


def sampling_weights(center_labels, freqs, balanced):
    """Draw probability per candidate subsequence from its centre-frame label."""
    if not balanced:
        w = np.ones(len(center_labels))
    else:
        w = 1.0 / np.maximum(freqs[center_labels], 1e-4)
    return w / w.sum()


def _candidates(dataset, L):
    seq_idx, starts = [], []
    for i, s in enumerate(dataset):
        for st in range(0, s.length - L + 1):
            seq_idx.append(i)
            starts.append(st)
    seq_idx = np.array(seq_idx, dtype=np.int64)
    starts = np.array(starts, dtype=np.int64)
    centers = np.array([dataset[i].labels[st + L // 2] for i, st in zip(seq_idx, starts)], dtype=np.int64)
    return seq_idx, starts, centers


def _gather(dataset, seq_idx, starts, L):
    V = dataset[0].n_views
    views = [np.stack([dataset[i].views[v][st:st + L] for i, st in zip(seq_idx, starts)], axis=1)
             for v in range(V)]
    labels = np.stack([dataset[i].labels[st:st + L] for i, st in zip(seq_idx, starts)], axis=1)
    return views, labels


class Trainer:
    """Mini-batch gradient training over sampled fixed-length subsequences."""

    def __init__(self, dataset, cfg, params=None):
        dims = check_consistent(dataset)
        if len(dims) != cfg.n_views or tuple(dims) != cfg.feature_dims:
            raise DimMismatch(f"dataset view dims {dims} do not match config {cfg.feature_dims}")
        top = max(int(s.labels.max()) for s in dataset if s.length)
        if top >= cfg.n_labels:
            raise LabelOutOfRange(f"label {top} outside [0, {cfg.n_labels})")
        self.dataset = dataset
        self.cfg = cfg
        self.params = params if params is not None else ModelParams.init(cfg)
        self.L = min(cfg.subseq_len, min(s.length for s in dataset))
        if self.L < 1:
            raise DimMismatch("sequences must contain at least one frame")
        self.freqs = class_frequencies(dataset, cfg.n_labels)
        self.seq_idx, self.starts, self.centers = _candidates(dataset, self.L)
        self.probs = sampling_weights(self.centers, self.freqs, cfg.balanced)
        self.sampler = np.random.default_rng([cfg.seed, STREAM_SAMPLER])
        self.noise_rng = np.random.default_rng([cfg.seed, STREAM_NOISE])
        total = sum(s.length for s in dataset)
        self.draws_per_epoch = max(1, total // self.L)
        names = self.params.trainable_names()
        self.trainable = [self.params[n] for n in names]
        if cfg.optimizer == "adam":
            self.opt = ad.Adam(self.trainable, cfg.lr)
        else:
            self.opt = None
        # fixed tiling used to report a comparable loss after every epoch
        tiles_i, tiles_s = [], []
        for i, s in enumerate(dataset):
            for st in range(0, s.length - self.L + 1, self.L):
                tiles_i.append(i)
                tiles_s.append(st)
        self.trace_views, self.trace_labels = _gather(dataset, tiles_i, tiles_s, self.L)
        trace_rng = np.random.default_rng([cfg.seed, STREAM_TRACE])
        self.trace_noise = trace_rng.standard_normal((self.L * len(tiles_i), cfg.latent_dim))

    def sample_batch(self, size):
        pick = self.sampler.choice(len(self.probs), size=size, p=self.probs)
        return pick

    def step(self, pick):
        views, labels = _gather(self.dataset, self.seq_idx[pick], self.starts[pick], self.L)
        noise = self.noise_rng.standard_normal((self.L * len(pick), self.cfg.latent_dim))
        with ad.Tape() as tape:
            loss, _, _ = loss_t(self.params, views, labels, noise)
        grads = ad.backward(tape, loss, self.trainable)
        if self.opt is not None:
            self.opt.step(grads)
        else:
            ad.sgd_step(self.trainable, grads, self.cfg.lr)
        return float(loss.data)

    def evaluate_trace(self, epoch):
        loss, ll, el = loss_t(self.params, self.trace_views, self.trace_labels, self.trace_noise)
        return TraceRow(epoch, float(loss.data), float(ll.data), float(el.data))

    def run(self, epochs=None, log=None):
        epochs = self.cfg.epochs if epochs is None else epochs
        trace = []
        bs = self.cfg.batch_size
        for epoch in range(1, epochs + 1):
            remaining = self.draws_per_epoch
            while remaining > 0:
                n = min(bs, remaining)
                self.step(self.sample_batch(n))
                remaining -= n
            row = self.evaluate_trace(epoch)
            trace.append(row)
            if log is not None:
                log(row)
        return trace


def train(dataset, cfg, log=None):
    """Fit a model; returns ``(params, trace)``."""
    trainer = Trainer(dataset, cfg)
    trace = trainer.run(log=log)
    return trainer.params, trace


def write_trace(trace, path):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("epoch,loss,ll_term,elbo_term\n")
        for r in trace:
            fh.write(f"{r.epoch},{r.loss!r},{r.ll_term!r},{r.elbo_term!r}\n")


# ---------------------------------------------------------------- checkpoints

_MAGIC = "MVLADDM-CHECKPOINT 1"


def save_checkpoint(params, path):
    """ASCII header (config + block table) followed by little-endian float64 blocks."""
    lines = [_MAGIC, "config " + json.dumps(params.config.to_dict(), sort_keys=True)]
    for name in params.names():
        shape = params[name].shape
        lines.append(f"param {name} " + " ".join(str(s) for s in shape))
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for name in params.names():
            fh.write(np.ascontiguousarray(params[name].data, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    header_lines = []
    pos = 0
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise CheckpointMismatch("truncated checkpoint header")
        line = blob[pos:nl].decode("ascii", errors="replace")
        pos = nl + 1
        if line == "end":
            break
        header_lines.append(line)
    if not header_lines or header_lines[0] != _MAGIC:
        raise CheckpointMismatch("not a model checkpoint")
    try:
        cfg = ModelConfig(**json.loads(header_lines[1][len("config "):]))
    except (IndexError, TypeError, ValueError) as exc:
        raise CheckpointMismatch(f"bad checkpoint config: {exc}") from None
    expected = param_shapes(cfg)
    blocks = [ln.split() for ln in header_lines[2:]]
    if [(b[1], tuple(int(s) for s in b[2:])) for b in blocks] != expected:
        raise CheckpointMismatch("parameter table does not match the stored config")
    tensors = {}
    for name, shape in expected:
        n = int(np.prod(shape)) * 8
        chunk = blob[pos:pos + n]
        if len(chunk) != n:
            raise CheckpointMismatch(f"truncated data for {name}")
        tensors[name] = ad.Tensor(np.frombuffer(chunk, dtype="<f8").reshape(shape), requires_grad=True, name=name)
        pos += n
    if pos != len(blob):
        raise CheckpointMismatch("trailing bytes after parameter blocks")
    return ModelParams(cfg, tensors)
