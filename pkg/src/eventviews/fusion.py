"""Cross-view late fusion of per-view logits.

Four strategies, from least to most specific:

* ``fuse_average``        (L_th + L_tw) / 2
* ``fuse_view_weighted``  a * L_th + b * L_tw with two scalars
* ``fuse_class_weighted`` w_th * L_th + w_tw * L_tw, per-class weights
* ``fuse_sample_weighted``  class weights predicted per sample by an
  attention head from the two pooled semantic vectors

The attention head treats ``[S_th, S_tw]`` as a two-token sequence, runs
multi-head scaled dot-product self-attention, flattens both output tokens
into one ``2D`` vector and maps it linearly to ``2C`` raw scores. The
scores are split into per-view halves and softmax-normalised across the
two views for each class.

Everything is float64 numpy with hand-written backward passes so the
whole head can be checked against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import ContractError, NumericError
from .events import EventStream, ViewAxis
from .tism import DenseMap, EncoderConfig, encode_view

__all__ = [
    "Logits",
    "SemanticVector",
    "FusionWeights",
    "AttentionHead",
    "ToyBranch",
    "fuse_average",
    "fuse_view_weighted",
    "fuse_class_weighted",
    "attention_forward",
    "fuse_sample_weighted",
    "fusion_backward",
    "pipeline_forward",
    "gradient_check",
    "GradientReport",
    "LinearLoss",
    "SquaredError",
    "SoftmaxCrossEntropy",
]

_LN_EPS = 1e-5


def _vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} has non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Logits:
    values: np.ndarray
    view: ViewAxis | None = None

    def __post_init__(self):
        values = _vector(self.values, "logits")
        if len(values) < 2:
            raise ContractError("logits need at least two classes")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class SemanticVector:
    values: np.ndarray
    view: ViewAxis | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _vector(self.values, "semantic vector"))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class FusionWeights:
    w_th: np.ndarray
    w_tw: np.ndarray

    def __post_init__(self):
        w_th, w_tw = _vector(self.w_th, "w_th"), _vector(self.w_tw, "w_tw")
        if w_th.shape != w_tw.shape:
            raise ContractError("w_th and w_tw differ in length")
        object.__setattr__(self, "w_th", w_th)
        object.__setattr__(self, "w_tw", w_tw)

    @classmethod
    def uniform(cls, num_classes: int) -> "FusionWeights":
        half = np.full(num_classes, 0.5)
        return cls(half, half)

    def is_normalized(self, atol: float = 1e-12) -> bool:
        return bool(
            np.all(self.w_th >= 0) and np.all(self.w_tw >= 0)
            and np.allclose(self.w_th + self.w_tw, 1.0, rtol=0, atol=atol)
        )


def _values(obj, name: str) -> np.ndarray:
    if isinstance(obj, (Logits, SemanticVector)):
        return obj.values
    return _vector(obj, name)


def _pair(l_th, l_tw) -> tuple[np.ndarray, np.ndarray]:
    a, b = _values(l_th, "l_th"), _values(l_tw, "l_tw")
    if a.shape != b.shape:
        raise ContractError(f"logit length mismatch: {len(a)} vs {len(b)}")
    return a, b


def fuse_average(l_th, l_tw) -> Logits:
    a, b = _pair(l_th, l_tw)
    return Logits((a + b) / 2)


def fuse_view_weighted(l_th, l_tw, a: float, b: float) -> Logits:
    x, y = _pair(l_th, l_tw)
    return Logits(a * x + b * y)


def fuse_class_weighted(l_th, l_tw, w: FusionWeights) -> Logits:
    x, y = _pair(l_th, l_tw)
    if w.w_th.shape != x.shape:
        raise ContractError(f"weights have {len(w.w_th)} classes, logits have {len(x)}")
    return Logits(w.w_th * x + w.w_tw * y)


# -- attention head ---------------------------------------------------------

_PROJECTIONS = ("q", "k", "v", "o")


class AttentionHead:
    """Parameters of the sample-wise weighting head.

    ``params`` maps names to float64 arrays: ``w_q, w_k, w_v, w_o`` are
    ``D x D`` and ``b_*`` their biases (row-vector convention ``x @ W + b``);
    ``w_out`` is ``2D x 2C`` with bias ``b_out``. With ``residual_norm`` the
    attention output is added back to its input and layer-normalised with
    ``ln_gain`` / ``ln_bias`` before the final linear layer.
    """

    def __init__(self, params: dict, num_heads: int, residual_norm: bool = False):
        params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        dim = params["w_q"].shape[0]
        if num_heads < 1 or dim % num_heads:
            raise ContractError(f"model dim {dim} is not divisible by {num_heads} heads")
        for p in _PROJECTIONS:
            if params[f"w_{p}"].shape != (dim, dim) or params[f"b_{p}"].shape != (dim,):
                raise ContractError(f"projection {p} has the wrong shape")
        out = params["w_out"]
        if out.ndim != 2 or out.shape[0] != 2 * dim or out.shape[1] % 2 or out.shape[1] < 4:
            raise ContractError(f"w_out must be 2D x 2C with C >= 2, got {out.shape}")
        if params["b_out"].shape != (out.shape[1],):
            raise ContractError("b_out does not match w_out")
        if residual_norm:
            for k in ("ln_gain", "ln_bias"):
                if params.get(k) is None or params[k].shape != (dim,):
                    raise ContractError(f"residual_norm needs {k} of length {dim}")
        else:
            params.pop("ln_gain", None)
            params.pop("ln_bias", None)
        for v in params.values():
            v.flags.writeable = False
        self.params = params
        self.num_heads = int(num_heads)
        self.residual_norm = bool(residual_norm)

    @property
    def model_dim(self) -> int:
        return self.params["w_q"].shape[0]

    @property
    def num_classes(self) -> int:
        return self.params["w_out"].shape[1] // 2

    def param_names(self) -> list[str]:
        names = [f"{kind}_{p}" for p in _PROJECTIONS for kind in ("w", "b")] + ["w_out", "b_out"]
        if self.residual_norm:
            names += ["ln_gain", "ln_bias"]
        return names

    def with_params(self, **updates) -> "AttentionHead":
        params = dict(self.params)
        params.update(updates)
        return AttentionHead(params, self.num_heads, self.residual_norm)

    @classmethod
    def zeros(cls, dim: int, num_classes: int, num_heads: int, residual_norm: bool = False) -> "AttentionHead":
        params = {}
        for p in _PROJECTIONS:
            params[f"w_{p}"] = np.zeros((dim, dim))
            params[f"b_{p}"] = np.zeros(dim)
        params["w_out"] = np.zeros((2 * dim, 2 * num_classes))
        params["b_out"] = np.zeros(2 * num_classes)
        if residual_norm:
            params["ln_gain"] = np.ones(dim)
            params["ln_bias"] = np.zeros(dim)
        return cls(params, num_heads, residual_norm)

    @classmethod
    def random(
        cls,
        dim: int,
        num_classes: int,
        num_heads: int,
        rng: np.random.Generator,
        residual_norm: bool = False,
    ) -> "AttentionHead":
        """Gaussian init scaled by 1/sqrt(fan_in); biases small but nonzero."""
        params = {}
        for p in _PROJECTIONS:
            params[f"w_{p}"] = rng.normal(0, 1 / math.sqrt(dim), (dim, dim))
            params[f"b_{p}"] = rng.normal(0, 0.1, dim)
        params["w_out"] = rng.normal(0, 1 / math.sqrt(2 * dim), (2 * dim, 2 * num_classes))
        params["b_out"] = rng.normal(0, 0.1, 2 * num_classes)
        if residual_norm:
            params["ln_gain"] = 1 + rng.normal(0, 0.1, dim)
            params["ln_bias"] = rng.normal(0, 0.1, dim)
        return cls(params, num_heads, residual_norm)


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _head_forward(head: AttentionHead, s_th: np.ndarray, s_tw: np.ndarray):
    P = head.params
    D, H = head.model_dim, head.num_heads
    dh = D // H
    if s_th.shape != (D,) or s_tw.shape != (D,):
        raise ContractError(f"semantic vectors must have length {D}")
    X = np.stack([s_th, s_tw])
    Q = X @ P["w_q"] + P["b_q"]
    K = X @ P["w_k"] + P["b_k"]
    V = X @ P["w_v"] + P["b_v"]
    scale = 1.0 / math.sqrt(dh)

    # (H, 2, dh) per-head views
    Qh = Q.reshape(2, H, dh).transpose(1, 0, 2)
    Kh = K.reshape(2, H, dh).transpose(1, 0, 2)
    Vh = V.reshape(2, H, dh).transpose(1, 0, 2)
    A = _softmax(Qh @ Kh.transpose(0, 2, 1) * scale, axis=2)
    O = (A @ Vh).transpose(1, 0, 2).reshape(2, D)
    Y = O @ P["w_o"] + P["b_o"]

    cache = dict(X=X, Qh=Qh, Kh=Kh, Vh=Vh, A=A, O=O, scale=scale)
    if head.residual_norm:
        R = X + Y
        mu = R.mean(axis=1, keepdims=True)
        inv_std = 1.0 / np.sqrt(R.var(axis=1, keepdims=True) + _LN_EPS)
        Zhat = (R - mu) * inv_std
        Z = Zhat * P["ln_gain"] + P["ln_bias"]
        cache.update(Zhat=Zhat, inv_std=inv_std)
    else:
        Z = Y
    f = Z.reshape(-1)
    raw = f @ P["w_out"] + P["b_out"]
    C = head.num_classes
    W = _softmax(raw.reshape(2, C), axis=0)
    if not np.all(np.isfinite(W)):
        raise NumericError("attention head produced non-finite weights")
    cache.update(f=f, W=W)
    return W, cache


def attention_forward(head: AttentionHead, s_th, s_tw) -> FusionWeights:
    """Per-class fusion weights for one sample."""
    W, _ = _head_forward(head, _values(s_th, "s_th"), _values(s_tw, "s_tw"))
    return FusionWeights(W[0], W[1])


def fuse_sample_weighted(l_th, l_tw, s_th, s_tw, head: AttentionHead) -> Logits:
    return fuse_class_weighted(l_th, l_tw, attention_forward(head, s_th, s_tw))


def fusion_backward(head: AttentionHead, s_th, s_tw, l_th, l_tw, grad_fused) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss through sample-weighted fusion.

    ``grad_fused`` is dLoss/dFused. Returns one entry per head parameter
    plus ``s_th``, ``s_tw``, ``l_th`` and ``l_tw``.
    """
    x_th, x_tw = _pair(l_th, l_tw)
    W, c = _head_forward(head, _values(s_th, "s_th"), _values(s_tw, "s_tw"))
    P = head.params
    D, H = head.model_dim, head.num_heads
    dh = D // H
    g = np.asarray(grad_fused, dtype=np.float64)

    grads = {"l_th": g * W[0], "l_tw": g * W[1]}
    gW = np.stack([g * x_th, g * x_tw])
    g_raw = (W * (gW - (W * gW).sum(axis=0, keepdims=True))).reshape(-1)

    grads["w_out"] = np.outer(c["f"], g_raw)
    grads["b_out"] = g_raw
    gZ = (P["w_out"] @ g_raw).reshape(2, D)

    gX = np.zeros((2, D))
    if head.residual_norm:
        Zhat, inv_std = c["Zhat"], c["inv_std"]
        grads["ln_gain"] = (gZ * Zhat).sum(axis=0)
        grads["ln_bias"] = gZ.sum(axis=0)
        gZhat = gZ * P["ln_gain"]
        gR = inv_std * (
            gZhat
            - gZhat.mean(axis=1, keepdims=True)
            - Zhat * (gZhat * Zhat).mean(axis=1, keepdims=True)
        )
        gY = gR
        gX += gR
    else:
        gY = gZ

    grads["w_o"] = c["O"].T @ gY
    grads["b_o"] = gY.sum(axis=0)
    gO = (gY @ P["w_o"].T).reshape(2, H, dh).transpose(1, 0, 2)

    A, Qh, Kh, Vh, scale = c["A"], c["Qh"], c["Kh"], c["Vh"], c["scale"]
    gA = gO @ Vh.transpose(0, 2, 1)
    gVh = A.transpose(0, 2, 1) @ gO
    gS = A * (gA - (gA * A).sum(axis=2, keepdims=True)) * scale
    gQh = gS @ Kh
    gKh = gS.transpose(0, 2, 1) @ Qh

    X = c["X"]
    for name, gh in (("q", gQh), ("k", gKh), ("v", gVh)):
        gproj = gh.transpose(1, 0, 2).reshape(2, D)
        grads[f"w_{name}"] = X.T @ gproj
        grads[f"b_{name}"] = gproj.sum(axis=0)
        gX += gproj @ P[f"w_{name}"].T
    grads["s_th"], grads["s_tw"] = gX[0], gX[1]
    return grads


# -- losses used by the gradient harness -------------------------------------

class Loss(Protocol):
    def __call__(self, fused: np.ndarray) -> float: ...

    def grad(self, fused: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class LinearLoss:
    """``coeffs . fused``; a one-hot ``coeffs`` picks out a single class logit."""

    coeffs: np.ndarray

    def __call__(self, fused):
        return float(np.dot(self.coeffs, fused))

    def grad(self, fused):
        return np.asarray(self.coeffs, dtype=np.float64).copy()


@dataclass(frozen=True)
class SquaredError:
    target: np.ndarray

    def __call__(self, fused):
        return 0.5 * float(np.sum((fused - self.target) ** 2))

    def grad(self, fused):
        return fused - self.target


@dataclass(frozen=True)
class SoftmaxCrossEntropy:
    label: int

    def __call__(self, fused):
        m = fused.max()
        return float(m + np.log(np.exp(fused - m).sum()) - fused[self.label])

    def grad(self, fused):
        p = _softmax(fused, axis=0)
        p[self.label] -= 1.0
        return p


@dataclass(frozen=True)
class GradientReport:
    max_rel_error: float
    max_rel_error_inputs: float
    worst_param: str
    analytic: dict = field(repr=False)
    numeric: dict = field(repr=False)


def _rel_error(a: np.ndarray, n: np.ndarray, floor: float) -> np.ndarray:
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def gradient_check(
    head: AttentionHead,
    s_th,
    s_tw,
    l_th,
    l_tw,
    loss: Loss,
    step: float = 1e-5,
    floor: float = 1e-6,
) -> GradientReport:
    """Compare ``fusion_backward`` with central differences.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    gradients that are zero up to round-off from dividing noise by noise.
    """
    s_th, s_tw = _values(s_th, "s_th"), _values(s_tw, "s_tw")
    l_th, l_tw = _pair(l_th, l_tw)

    def objective(h, a, b, x, y):
        W, _ = _head_forward(h, a, b)
        return loss(W[0] * x + W[1] * y)

    fused = fuse_sample_weighted(l_th, l_tw, s_th, s_tw, head).values
    analytic = fusion_backward(head, s_th, s_tw, l_th, l_tw, loss.grad(fused))

    numeric = {}
    for name in head.param_names():
        base = head.params[name]
        work = base.copy()
        grad = np.zeros_like(work)
        flat, gflat = work.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            plus = objective(_with_raw(head, name, work), s_th, s_tw, l_th, l_tw)
            flat[i] = orig - step
            minus = objective(_with_raw(head, name, work), s_th, s_tw, l_th, l_tw)
            flat[i] = orig
            gflat[i] = (plus - minus) / (2 * step)
        numeric[name] = grad

    inputs = {"s_th": s_th, "s_tw": s_tw, "l_th": l_th, "l_tw": l_tw}
    for name, base in inputs.items():
        grad = np.zeros_like(base)
        for i in range(base.size):
            args = {k: v.copy() for k, v in inputs.items()}
            args[name][i] = base[i] + step
            plus = objective(head, args["s_th"], args["s_tw"], args["l_th"], args["l_tw"])
            args[name][i] = base[i] - step
            minus = objective(head, args["s_th"], args["s_tw"], args["l_th"], args["l_tw"])
            grad[i] = (plus - minus) / (2 * step)
        numeric[name] = grad

    worst, worst_name = 0.0, ""
    for name in head.param_names():
        err = float(_rel_error(analytic[name], numeric[name], floor).max())
        if err >= worst:
            worst, worst_name = err, name
    worst_inputs = max(float(_rel_error(analytic[k], numeric[k], floor).max()) for k in inputs)
    return GradientReport(worst, worst_inputs, worst_name, analytic, numeric)


def _with_raw(head: AttentionHead, name: str, value: np.ndarray) -> AttentionHead:
    # Skips validation: only used inside the finite-difference loop.
    clone = object.__new__(AttentionHead)
    clone.params = {**head.params, name: value}
    clone.num_heads = head.num_heads
    clone.residual_norm = head.residual_norm
    return clone


# -- toy branch and end-to-end pipeline --------------------------------------

class ToyBranch:
    """Stand-in feature extractor: channel pooling, affine, tanh, affine.

    The tanh output is the semantic vector, the second affine layer gives
    the logits.
    """

    def __init__(self, w_hidden, b_hidden, w_logits, b_logits, view: ViewAxis | None = None):
        self.w_hidden = np.array(w_hidden, dtype=np.float64)
        self.b_hidden = np.array(b_hidden, dtype=np.float64)
        self.w_logits = np.array(w_logits, dtype=np.float64)
        self.b_logits = np.array(b_logits, dtype=np.float64)
        self.view = view
        if self.b_hidden.shape != (self.w_hidden.shape[1],):
            raise ContractError("hidden bias does not match hidden weights")
        if self.w_logits.shape[0] != self.w_hidden.shape[1]:
            raise ContractError("logit layer input does not match hidden width")
        if self.b_logits.shape != (self.w_logits.shape[1],):
            raise ContractError("logit bias does not match logit weights")
        for arr in (self.w_hidden, self.b_hidden, self.w_logits, self.b_logits):
            arr.flags.writeable = False

    @property
    def in_channels(self) -> int:
        return self.w_hidden.shape[0]

    @property
    def dim(self) -> int:
        return self.w_hidden.shape[1]

    @property
    def num_classes(self) -> int:
        return self.w_logits.shape[1]

    @classmethod
    def random(cls, in_channels: int, dim: int, num_classes: int, rng: np.random.Generator, view=None):
        return cls(
            rng.normal(0, 1, (in_channels, dim)),
            rng.normal(0, 0.1, dim),
            rng.normal(0, 1 / math.sqrt(dim), (dim, num_classes)),
            rng.normal(0, 0.1, num_classes),
            view,
        )

    def __call__(self, dense: DenseMap) -> tuple[SemanticVector, Logits]:
        if dense.channels != self.in_channels:
            raise ContractError(f"branch expects {self.in_channels} channels, map has {dense.channels}")
        pooled = dense.data.mean(axis=(1, 2))
        hidden = np.tanh(pooled @ self.w_hidden + self.b_hidden)
        return SemanticVector(hidden, self.view), Logits(hidden @ self.w_logits + self.b_logits, self.view)


def pipeline_forward(
    stream: EventStream,
    branch_th: ToyBranch,
    branch_tw: ToyBranch,
    head: AttentionHead,
    configs: tuple[EncoderConfig, EncoderConfig],
) -> Logits:
    """Encode TH and TW views, run each branch, fuse sample-wise."""
    cfg_th, cfg_tw = configs
    if cfg_th.view is not ViewAxis.TH or cfg_tw.view is not ViewAxis.TW:
        raise ContractError("pipeline needs a (TH, TW) encoder config pair")
    s_th, l_th = branch_th(encode_view(stream, cfg_th))
    s_tw, l_tw = branch_tw(encode_view(stream, cfg_tw))
    return fuse_sample_weighted(l_th, l_tw, s_th, s_tw, head)

