"""Reference bridge network, its training losses and a desk-scale trainer.

Everything is plain numpy with hand-written backpropagation so that each
gradient can be checked against central finite differences.

Architecture (default widths)::

    global visual 1024 -> 128 (tanh) --+
                                       +-> concat 256 -> 64 (tanh) = mix
    language      4096 -> 128 (tanh) --+
    local visual per point 64 -> 64 (tanh) = loc_i
    x_i = [mix, loc_i, xyz_i]  (131)
    affordance head: x_i -> H (tanh) -> scalar, softmax over points
    embedding head:  x_i -> H (tanh) -> 32
    match head: [e_i, e_j] (64) -> H (tanh) -> logit -> sigmoid

The affordance scalar has no output bias: softmax is shift-invariant, so such
a bias would receive an identically zero gradient.
"""
from __future__ import annotations

import csv
import hashlib
import math
import re
import struct
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import Divergence, DomainError, EmptyPairSet, RecordIOError, ShapeError
from .rng import make_rng

BCE_CLAMP = 1e-12


@dataclass(frozen=True)
class BridgeDims:
    global_in: int = 1024
    lang_in: int = 4096
    local_in: int = 64
    global_hidden: int = 128
    lang_hidden: int = 128
    mix: int = 64
    local_hidden: int = 64
    head_hidden: int = 64
    embed: int = 32
    match_hidden: int = 64

    @classmethod
    def tiny(cls, width: int = 4, inputs: int = 6) -> "BridgeDims":
        """Every hidden width ``width``; small inputs for finite-difference checks."""
        return cls(inputs, inputs + 1, inputs - 1, width, width, width, width, width, width, width)


@dataclass(frozen=True)
class LossConfig:
    delta_p: float = 0.1
    delta_n: float = 1.0
    lam: float = 1.0
    awl_sigmas: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not self.delta_n > self.delta_p > 0:
            raise DomainError("need delta_n > delta_p > 0")
        if not self.lam > 0:
            raise DomainError("lambda must be positive")
        if any(not s > 0 for s in self.awl_sigmas):
            raise DomainError("AWL sigmas must be positive")


@dataclass(eq=False)
class FeatureBundle:
    global_visual: np.ndarray  # (Dg,)
    language: np.ndarray  # (Dl,)
    local_visual: np.ndarray  # (n, Dloc)
    points: np.ndarray  # (n, 3)

    def __post_init__(self):
        if len(self.local_visual) != len(self.points):
            raise ShapeError("local_visual and points differ in length")


@dataclass(eq=False)
class PairBatch:
    positive: np.ndarray  # (kp, 2) int
    negative: np.ndarray  # (kn, 2) int

    def __post_init__(self):
        self.positive = np.asarray(self.positive, dtype=np.int64).reshape(-1, 2)
        self.negative = np.asarray(self.negative, dtype=np.int64).reshape(-1, 2)

    @property
    def pairs(self) -> np.ndarray:
        return np.concatenate([self.positive, self.negative])

    @property
    def flags(self) -> np.ndarray:
        """Ground-truth match flags, positives first."""
        return np.r_[np.ones(len(self.positive)), np.zeros(len(self.negative))]


@dataclass(eq=False)
class BridgeOutput:
    affordance_pred: np.ndarray  # (n,)
    pair_embedding: np.ndarray  # (n, e)
    match_prob: np.ndarray  # (K,)
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.pair_embedding.ndim != 2 or len(self.pair_embedding) != len(self.affordance_pred):
            raise ShapeError("one embedding row per point is required")


# ---------------------------------------------------------------------------
# parameters

def param_shapes(dims: BridgeDims) -> dict:
    """Parameter name -> shape, in declaration (checkpoint) order."""
    x = dims.mix + dims.local_hidden + 3
    return {
        "Wg": (dims.global_hidden, dims.global_in), "bg": (dims.global_hidden,),
        "Wl": (dims.lang_hidden, dims.lang_in), "bl": (dims.lang_hidden,),
        "Wm": (dims.mix, dims.global_hidden + dims.lang_hidden), "bm": (dims.mix,),
        "Wloc": (dims.local_hidden, dims.local_in), "bloc": (dims.local_hidden,),
        "Wa1": (dims.head_hidden, x), "ba1": (dims.head_hidden,),
        "wa2": (dims.head_hidden,),
        "We1": (dims.head_hidden, x), "be1": (dims.head_hidden,),
        "We2": (dims.embed, dims.head_hidden), "be2": (dims.embed,),
        "Wc1": (dims.match_hidden, 2 * dims.embed), "bc1": (dims.match_hidden,),
        "wc2": (dims.match_hidden,), "bc2": (),
    }


def init_params(dims: BridgeDims, seed: int) -> dict:
    """Scaled-normal weights (std 1/sqrt(fan_in)), zero biases."""
    rng = make_rng(seed, "bridge_params")
    out = {}
    for name, shape in param_shapes(dims).items():
        if name.startswith("b"):
            out[name] = np.zeros(shape)
        else:
            fan_in = shape[-1] if len(shape) == 2 else shape[0]
            out[name] = rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=shape)
    return out


def _check_params(params: dict, dims: BridgeDims):
    for name, shape in param_shapes(dims).items():
        if name not in params or np.shape(params[name]) != shape:
            raise ShapeError(f"parameter {name}: expected shape {shape}, "
                             f"got {None if name not in params else np.shape(params[name])}")


# ---------------------------------------------------------------------------
# forward / backward

def _softmax(s):
    z = np.exp(s - s.max())
    return z / z.sum()


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _forward(bundles, params: dict, pairs_list, dims: BridgeDims) -> dict:
    """Batched forward pass; instances are stacked row-wise for every layer."""
    _check_params(params, dims)
    p = params
    FG = np.stack([np.asarray(b.global_visual, dtype=np.float64).reshape(-1) for b in bundles])
    FL = np.stack([np.asarray(b.language, dtype=np.float64).reshape(-1) for b in bundles])
    Fs = [np.asarray(b.local_visual, dtype=np.float64) for b in bundles]
    Ps = [np.asarray(b.points, dtype=np.float64) for b in bundles]
    if FG.shape[1] != dims.global_in or FL.shape[1] != dims.lang_in:
        raise ShapeError("global/language features do not match the network dimensions")
    for F, P in zip(Fs, Ps):
        if F.ndim != 2 or F.shape[1] != dims.local_in or P.shape != (len(F), 3):
            raise ShapeError("local features must be (n, local_in) and points (n, 3)")
    sizes = np.array([len(F) for F in Fs])
    starts = np.r_[0, np.cumsum(sizes)[:-1]]
    seg = np.repeat(np.arange(len(bundles)), sizes)
    pr_all = []
    for k, pr in enumerate(pairs_list):
        pr = np.zeros((0, 2), dtype=np.int64) if pr is None else np.asarray(pr, dtype=np.int64).reshape(-1, 2)
        if pr.size and (pr.min() < 0 or pr.max() >= sizes[k]):
            raise ShapeError("pair index out of range")
        pr_all.append(pr + starts[k])
    pairs = np.concatenate(pr_all) if pr_all else np.zeros((0, 2), dtype=np.int64)
    pair_sizes = np.array([len(x) for x in pr_all])

    g = np.tanh(FG @ p["Wg"].T + p["bg"])
    l = np.tanh(FL @ p["Wl"].T + p["bl"])
    C = np.concatenate([g, l], axis=1)
    mix = np.tanh(C @ p["Wm"].T + p["bm"])
    F = np.concatenate(Fs)
    P = np.concatenate(Ps)
    loc = np.tanh(F @ p["Wloc"].T + p["bloc"])
    X = np.concatenate([mix[seg], loc, P], axis=1)
    Ha = np.tanh(X @ p["Wa1"].T + p["ba1"])
    s = Ha @ p["wa2"]
    aff = np.concatenate([_softmax(s[a:a + n]) for a, n in zip(starts, sizes)])
    He = np.tanh(X @ p["We1"].T + p["be1"])
    E = He @ p["We2"].T + p["be2"]
    Z = np.concatenate([E[pairs[:, 0]], E[pairs[:, 1]]], axis=1)
    Hc = np.tanh(Z @ p["Wc1"].T + p["bc1"])
    prob = _sigmoid(Hc @ p["wc2"] + p["bc2"])
    return dict(FG=FG, FL=FL, F=F, g=g, l=l, C=C, mix=mix, loc=loc, X=X, Ha=Ha, aff=aff,
                He=He, E=E, pairs=pairs, Z=Z, Hc=Hc, prob=prob, sizes=sizes, starts=starts,
                seg=seg, pair_sizes=pair_sizes)


def bridge_forward(bundle: FeatureBundle, params: dict, pairs=None, dims: BridgeDims | None = None) -> BridgeOutput:
    """Forward pass for one instance; ``pairs`` are the point-index pairs to score."""
    c = _forward([bundle], params, [pairs], dims or BridgeDims())
    return BridgeOutput(c["aff"], c["E"], c["prob"], c)


def _backward(c: dict, params: dict, d_aff, d_E, d_logit) -> dict:
    """Parameter gradients given upstream gradients on the stacked outputs."""
    p = params
    grads = {}
    d_E = np.array(d_E, dtype=np.float64, copy=True)
    pr = c["pairs"]
    e = c["E"].shape[1]
    # match head
    grads["bc2"] = np.asarray(d_logit.sum())
    grads["wc2"] = c["Hc"].T @ d_logit
    d_Hc = np.outer(d_logit, p["wc2"]) * (1.0 - c["Hc"] ** 2)
    grads["Wc1"] = d_Hc.T @ c["Z"]
    grads["bc1"] = d_Hc.sum(axis=0)
    if len(pr):
        d_Z = d_Hc @ p["Wc1"]
        np.add.at(d_E, pr[:, 0], d_Z[:, :e])
        np.add.at(d_E, pr[:, 1], d_Z[:, e:])
    # embedding head
    grads["We2"] = d_E.T @ c["He"]
    grads["be2"] = d_E.sum(axis=0)
    d_He = (d_E @ p["We2"]) * (1.0 - c["He"] ** 2)
    grads["We1"] = d_He.T @ c["X"]
    grads["be1"] = d_He.sum(axis=0)
    d_X = d_He @ p["We1"]
    # affordance head: softmax Jacobian applied per instance
    aff = c["aff"]
    dot = np.add.reduceat(d_aff * aff, c["starts"])
    d_s = aff * (d_aff - dot[c["seg"]])
    grads["wa2"] = c["Ha"].T @ d_s
    d_Ha = np.outer(d_s, p["wa2"]) * (1.0 - c["Ha"] ** 2)
    grads["Wa1"] = d_Ha.T @ c["X"]
    grads["ba1"] = d_Ha.sum(axis=0)
    d_X += d_Ha @ p["Wa1"]
    # trunk
    m = c["mix"].shape[1]
    hl = c["loc"].shape[1]
    d_mix = np.add.reduceat(d_X[:, :m], c["starts"], axis=0) * (1.0 - c["mix"] ** 2)
    d_loc = d_X[:, m:m + hl] * (1.0 - c["loc"] ** 2)
    grads["Wloc"] = d_loc.T @ c["F"]
    grads["bloc"] = d_loc.sum(axis=0)
    grads["Wm"] = d_mix.T @ c["C"]
    grads["bm"] = d_mix.sum(axis=0)
    d_C = d_mix @ p["Wm"]
    ng = c["g"].shape[1]
    d_g = d_C[:, :ng] * (1.0 - c["g"] ** 2)
    d_l = d_C[:, ng:] * (1.0 - c["l"] ** 2)
    grads["Wg"] = d_g.T @ c["FG"]
    grads["bg"] = d_g.sum(axis=0)
    grads["Wl"] = d_l.T @ c["FL"]
    grads["bl"] = d_l.sum(axis=0)
    return grads


# ---------------------------------------------------------------------------
# losses

def loss_global(pred, gt) -> float:
    """Mean over instances of the L2 norm of ``pred - gt`` (one row per instance)."""
    P = [np.asarray(x, dtype=np.float64).reshape(-1) for x in (pred if _is_batch(pred) else [pred])]
    G = [np.asarray(x, dtype=np.float64).reshape(-1) for x in (gt if _is_batch(gt) else [gt])]
    if len(P) != len(G) or any(a.shape != b.shape for a, b in zip(P, G)):
        raise ShapeError("prediction and ground truth shapes differ")
    return float(np.mean([np.linalg.norm(a - b) for a, b in zip(P, G)]))


def _is_batch(x) -> bool:
    if isinstance(x, np.ndarray):
        return x.ndim == 2
    return len(x) > 0 and np.ndim(x[0]) >= 1


def _pair_dist(E, pairs):
    if len(pairs) == 0:
        return np.zeros(0), np.zeros((0, E.shape[1]))
    diff = E[pairs[:, 0]] - E[pairs[:, 1]]
    return np.linalg.norm(diff, axis=1), diff


def loss_embedding(embeddings, pairs: PairBatch, cfg: LossConfig | None = None, return_grad: bool = False):
    """``(L_emb, L_emb_p, L_emb_n)`` for one instance.

    ``L_emb_p`` is the mean of ``max(d - delta_p, 0)^2`` over positive pairs,
    ``L_emb_n`` the mean of ``max(delta_n - d, 0)^2`` over negatives, and
    ``L_emb = lambda * L_emb_p + L_emb_n``.  An empty set contributes 0 (with
    an ``EmptyPairSet`` warning).
    """
    cfg = cfg or LossConfig()
    E = np.asarray(embeddings, dtype=np.float64)
    grad = np.zeros_like(E)
    terms = []
    for kind, pr in (("positive", pairs.positive), ("negative", pairs.negative)):
        if len(pr) == 0:
            warnings.warn(f"no {kind} pairs; its embedding term is 0", EmptyPairSet, stacklevel=2)
            terms.append(0.0)
            continue
        d, diff = _pair_dist(E, pr)
        if kind == "positive":
            h = np.maximum(d - cfg.delta_p, 0.0)
            dd = 2.0 * h / len(pr)
        else:
            h = np.maximum(cfg.delta_n - d, 0.0)
            dd = -2.0 * h / len(pr)
        terms.append(float(np.mean(h ** 2)))
        if return_grad:
            scale = cfg.lam if kind == "positive" else 1.0
            safe = np.where(d > 0, d, 1.0)
            unit = np.where((d > 0)[:, None], diff / safe[:, None], 0.0)
            gpair = (scale * dd)[:, None] * unit
            np.add.at(grad, pr[:, 0], gpair)
            np.add.at(grad, pr[:, 1], -gpair)
    lp, ln = terms
    total = cfg.lam * lp + ln
    if return_grad:
        return (total, lp, ln), grad
    return total, lp, ln


def loss_match(match_prob, gt_flags, return_grad: bool = False):
    """Summed binary cross-entropy; probabilities are clamped to [1e-12, 1 - 1e-12]."""
    p = np.asarray(match_prob, dtype=np.float64).reshape(-1)
    y = np.asarray(gt_flags, dtype=np.float64).reshape(-1)
    if p.shape != y.shape:
        raise ShapeError("match probabilities and flags differ in length")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise DomainError("match probabilities must lie in [0, 1]")
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    if np.any(pc <= 0) or np.any(pc >= 1):
        raise DomainError("match probability outside (0, 1) after clamping")
    loss = float(-np.sum(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)))
    if return_grad:
        return loss, -(y / pc) + (1.0 - y) / (1.0 - pc)
    return loss


def awl_combine(losses, sigmas, return_grad: bool = False):
    """Uncertainty weighting: ``sum_i L_i / (2 sigma_i^2) + ln sigma_i``."""
    L = np.asarray(losses, dtype=np.float64).reshape(-1)
    s = np.asarray(sigmas, dtype=np.float64).reshape(-1)
    if L.shape != s.shape:
        raise ShapeError("one sigma per loss is required")
    if np.any(~(s > 0)):
        raise DomainError("AWL sigmas must be positive")
    total = float(np.sum(L / (2.0 * s * s) + np.log(s)))
    if return_grad:
        return total, 1.0 / (2.0 * s * s), -L / s ** 3 + 1.0 / s
    return total


# ---------------------------------------------------------------------------
# batch objective


@dataclass(eq=False)
class TrainingInstance:
    bundle: FeatureBundle
    gt: np.ndarray  # (n,) affordance
    pairs: PairBatch


def batch_losses(instances, params, dims: BridgeDims, cfg: LossConfig, sigmas=None, grad: bool = False):
    """``(L_g, L_emb, L_match, combined)`` over a batch and, optionally, gradients.

    ``L_g`` and ``L_emb`` are means over instances, ``L_match`` is a sum over all
    pairs of all instances.  Gradients cover the network parameters and, under
    the key ``"awl_sigmas"``, the AWL scales.
    """
    sig = np.asarray(cfg.awl_sigmas if sigmas is None else sigmas, dtype=np.float64)
    N = len(instances)
    c = _forward([i.bundle for i in instances], params, [i.pairs.pairs for i in instances], dims)
    starts, sizes = c["starts"], c["sizes"]
    Lg, Le = [], []
    d_aff = np.zeros(len(c["aff"]))
    d_E = np.zeros_like(c["E"])
    for k, inst in enumerate(instances):
        sl = slice(starts[k], starts[k] + sizes[k])
        diff = c["aff"][sl] - inst.gt
        nrm = float(np.linalg.norm(diff))
        Lg.append(nrm)
        if nrm > 0:
            d_aff[sl] = diff / nrm
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyPairSet)
            (le, _, _), dE = loss_embedding(c["E"][sl], inst.pairs, cfg, return_grad=True)
        Le.append(le)
        d_E[sl] = dE
    flags = np.concatenate([i.pairs.flags for i in instances]) if N else np.zeros(0)
    if len(flags):
        Lm, dp = loss_match(c["prob"], flags, return_grad=True)
    else:
        Lm, dp = 0.0, np.zeros(0)
    L = np.array([np.mean(Lg), np.mean(Le), Lm])
    if not grad:
        return (*L, awl_combine(L, sig))
    total, w, dsig = awl_combine(L, sig, return_grad=True)
    mp = c["prob"]
    clipped = (mp <= BCE_CLAMP) | (mp >= 1.0 - BCE_CLAMP)
    d_logit = np.where(clipped, 0.0, dp * mp * (1.0 - mp)) * w[2]
    grads = _backward(c, params, d_aff * (w[0] / N), d_E * (w[1] / N), d_logit)
    grads["awl_sigmas"] = dsig
    return (*L, total), grads


def finite_difference_check(instances, params, dims: BridgeDims, cfg: LossConfig, h: float = 1e-5,
                            floor: float = 1e-7) -> dict:
    """Max relative error per parameter between analytic and central-difference gradients.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    entries whose true gradient is ~0 from dividing round-off by round-off.
    """
    sig = np.asarray(cfg.awl_sigmas, dtype=np.float64)
    _, grads = batch_losses(instances, params, dims, cfg, sig, grad=True)
    report = {}
    targets = dict(params)
    targets["awl_sigmas"] = sig
    for name, arr in targets.items():
        base = np.array(arr, dtype=np.float64, copy=True)
        num = np.zeros(base.size)
        flat = base.reshape(-1)
        for i in range(base.size):
            vals = []
            for step in (h, -h):
                trial = flat.copy()
                trial[i] += step
                shaped = trial.reshape(base.shape)
                if name == "awl_sigmas":
                    vals.append(batch_losses(instances, params, dims, cfg, shaped)[3])
                else:
                    vals.append(batch_losses(instances, {**params, name: shaped}, dims, cfg, sig)[3])
            num[i] = (vals[0] - vals[1]) / (2.0 * h)
        ana = np.asarray(grads[name], dtype=np.float64).reshape(-1)
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), floor)
        report[name] = float(np.max(np.abs(ana - num) / denom)) if ana.size else 0.0
    return report


# ---------------------------------------------------------------------------
# synthetic features


_TOKEN = re.compile(r"[a-z]+")


def _token_index(tok: str, dim: int) -> int:
    return int.from_bytes(hashlib.blake2b(tok.encode(), digest_size=8).digest(), "little") % dim


def language_features(text: str, dim: int = 4096) -> np.ndarray:
    """Hashed bag of lower-case word tokens, L2-normalized."""
    v = np.zeros(dim)
    for tok in _TOKEN.findall(text.lower()):
        v[_token_index(tok, dim)] += 1.0
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def synthetic_bundle(points, part_ids, summary: str, dims: BridgeDims = BridgeDims(),
                     stub_seed: int = 0, max_parts: int = 8) -> FeatureBundle:
    """Deterministic stand-in for pretrained encoders.

    * local visual: ``tanh(R_loc [xyz * 10, one-hot(part)])``
    * global visual: ``tanh(R_glob [mean xyz, std xyz, part fractions] )``
    * language: hashed token counts of the summary

    ``R_loc`` and ``R_glob`` are fixed Gaussian projections drawn from ``stub_seed``.
    """
    P = np.asarray(points, dtype=np.float64)
    parts = np.asarray(part_ids, dtype=np.int64)
    onehot = np.zeros((len(P), max_parts))
    onehot[np.arange(len(P)), np.clip(parts, 0, max_parts - 1)] = 1.0
    rng = make_rng(stub_seed, "feature_stub")
    R_loc = rng.normal(size=(dims.local_in, 3 + max_parts))
    R_glob = rng.normal(size=(dims.global_in, 6 + max_parts))
    local = np.tanh(np.concatenate([P * 10.0, onehot], axis=1) @ R_loc.T)
    stats = np.concatenate([P.mean(axis=0) * 10.0, P.std(axis=0) * 10.0, onehot.mean(axis=0)])
    glob = np.tanh(R_glob @ stats)
    return FeatureBundle(glob, language_features(summary, dims.lang_in), local, P)


def training_instance(record, n_points: int = 64, max_pairs: int = 8, dims: BridgeDims = BridgeDims(),
                      seed: int = 0) -> TrainingInstance:
    """Subsample a dataset record into a training instance.

    The subset keeps the points of up to ``max_pairs`` positive and negative
    pairs and is filled with seeded random points; ground truth is the record's
    affordance restricted to the subset and renormalized.
    """
    rng = make_rng(seed, "training_instance", record.instance_id)
    pos = np.asarray(record.positive_pairs)[:max_pairs]
    neg = np.asarray(record.negative_pairs)[:max_pairs]
    keep = list(dict.fromkeys(np.concatenate([pos.reshape(-1), neg.reshape(-1)]).tolist()))[:n_points]
    rest = np.setdiff1d(np.arange(len(record.points)), keep)
    fill = rng.choice(rest, size=max(0, n_points - len(keep)), replace=False)
    idx = np.array(keep + sorted(fill.tolist()), dtype=np.int64)
    remap = {int(v): k for k, v in enumerate(idx)}
    sub = lambda pr: np.array([(remap[a], remap[b]) for a, b in pr.tolist() if a in remap and b in remap],
                              dtype=np.int64).reshape(-1, 2)
    gt = np.asarray(record.prob, dtype=np.float64)[idx]
    gt = gt / gt.sum()
    bundle = synthetic_bundle(np.asarray(record.points, dtype=np.float64)[idx], record.part_ids[idx],
                              record.summary, dims)
    return TrainingInstance(bundle, gt, PairBatch(sub(pos), sub(neg)))


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    history: list  # [(step, L_g, L_emb, L_match, combined)]
    params: dict
    sigmas: np.ndarray


def train_overfit(instances, steps: int = 2000, lr: float = 0.2, seed: int = 0,
                  dims: BridgeDims = BridgeDims(), cfg: LossConfig | None = None,
                  params: dict | None = None, train_sigmas: bool = True,
                  sigma_floor: float = 1e-2) -> TrainResult:
    """Full-batch gradient descent on the AWL-combined loss.

    The AWL scales are trained too, through their log-variance ``ln sigma^2``,
    and kept above ``sigma_floor`` so the weights ``1/(2 sigma^2)`` stay bounded.  Raises ``Divergence`` on a non-finite loss.
    """
    cfg = cfg or LossConfig()
    params = {k: np.array(v, dtype=np.float64, copy=True) for k, v in (params or init_params(dims, seed)).items()}
    sig = np.asarray(cfg.awl_sigmas, dtype=np.float64).copy()
    history = []
    for step in range(steps + 1):
        (lg, le, lm, tot), grads = batch_losses(instances, params, dims, cfg, sig, grad=True)
        if not all(math.isfinite(v) for v in (lg, le, lm, tot)):
            raise Divergence(f"non-finite loss at step {step}")
        history.append((step, lg, le, lm, tot))
        if step == steps:
            break
        for k in params:
            params[k] -= lr * grads[k]
        if train_sigmas:
            # step on s = ln sigma^2 (dL/ds = dL/dsigma * sigma / 2); a raw step on
            # sigma overshoots once sigma is small because dL/dsigma ~ -L/sigma^3
            s_log = np.log(sig * sig) - lr * grads["awl_sigmas"] * sig / 2.0
            sig = np.maximum(np.exp(s_log / 2.0), sigma_floor)
    return TrainResult(history, params, sig)


def write_training_log(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "L_g", "L_emb", "L_match", "combined"])
        for row in history:
            w.writerow([row[0], *(repr(float(v)) for v in row[1:])])


# ---------------------------------------------------------------------------
# checkpoints
#
# layout (little-endian): magic b"GKBRIDGE", uint32 version, uint32 tensor count,
# then per tensor in declaration order: uint16 name length, utf-8 name,
# uint32 ndim, ndim x uint32 dims, float32 data (C order).

CKPT_MAGIC = b"GKBRIDGE"
CKPT_VERSION = 1


def save_checkpoint(path, params: dict, dims: BridgeDims) -> None:
    order = list(param_shapes(dims))
    chunks = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(order))]
    for name in order:
        arr = np.asarray(params[name], dtype="<f4")  # keeps 0-d scalars 0-d
        raw = name.encode()
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict:
    data = Path(path).read_bytes()
    try:
        if data[:8] != CKPT_MAGIC:
            raise RecordIOError(f"{path}: not a bridge checkpoint")
        version, count = struct.unpack_from("<II", data, 8)
        if version != CKPT_VERSION:
            raise RecordIOError(f"{path}: checkpoint version {version}")
        off, out = 16, {}
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", data, off)
            name = data[off + 2: off + 2 + ln].decode()
            off += 2 + ln
            (ndim,) = struct.unpack_from("<I", data, off)
            shape = struct.unpack_from(f"<{ndim}I", data, off + 4)
            off += 4 + 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            if off + 4 * size > len(data):
                raise RecordIOError(f"{path}: truncated tensor {name}")
            out[name] = np.frombuffer(data, "<f4", size, off).reshape(shape).astype(np.float64)
            off += 4 * size
    except struct.error as e:
        raise RecordIOError(f"{path}: truncated checkpoint") from e
    return out


def dims_dict(dims: BridgeDims) -> dict:
    return asdict(dims)
