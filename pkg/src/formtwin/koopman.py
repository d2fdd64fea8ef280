"""Deep Koopman model with control, trained by hand-written backpropagation.

The encoder lifts a reduced state ``x`` (r) to ``z = [g(x); x]`` (d_e + r);
the lifted state evolves linearly, ``z' = A z + B u``; the decoder maps a
lifted state back to ``x``.  Inputs are never lifted.

All arrays are row-major batches: a batch of states is ``(n, r)``.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import NumericalError, SchemaError

log = logging.getLogger(__name__)

TERMS = ("recon", "one", "multi", "stable", "lin")


@dataclass
class TrainConfig:
    batch_size: int = 256
    epochs: int = 200
    dropout: float = 0.005
    lr: float = 3e-3
    lr_decay: float = 0.9
    lr_step: int = 20
    weight_decay: float = 0.01
    rollout: int = 4
    alphas: tuple = (1000.0, 20.0, 10.0, 1000.0, 5.0)
    patience: int = 25
    seed: int = 0
    lifted_dim: int = 256
    hidden_enc: tuple = (48, 48)
    hidden_dec: tuple = (48, 48)
    stability: str = "eigen"        # or "singular"
    state_init: str = "least_squares"   # appended-state rows of A, B; or "identity"
    decoder_init: str = "glorot"        # or "zero": decoder starts as the identity read-out

    def __post_init__(self):
        if self.state_init not in ("least_squares", "identity"):
            raise ValueError(f"unknown state initialization {self.state_init!r}")
        if self.decoder_init not in ("glorot", "zero"):
            raise ValueError(f"unknown decoder initialization {self.decoder_init!r}")
        if self.stability not in ("eigen", "singular"):
            raise ValueError(f"unknown stability surrogate {self.stability!r}")
        if self.rollout < 1:
            raise ValueError("rollout length must be >= 1")
        if min(self.batch_size, self.epochs, self.lr, self.lr_step, self.patience) <= 0:
            raise ValueError("batch_size, epochs, lr, lr_step and patience must be positive")
        if not 0 <= self.dropout < 1 or self.weight_decay < 0 or any(a < 0 for a in self.alphas):
            raise ValueError("dropout in [0, 1), non-negative weight decay and loss weights required")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for k in ("alphas", "hidden_enc", "hidden_dec"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


# ------------------------------------------------------------------ network

def softplus(a):
    return np.logaddexp(0.0, a)


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def mlp_shapes(prefix: str, n_in: int, hidden, n_out: int) -> dict:
    shapes, prev = {}, n_in
    for i, h in enumerate(hidden):
        shapes[f"{prefix}.W{i}"] = (prev, h)
        shapes[f"{prefix}.b{i}"] = (h,)
        if prev != h:
            shapes[f"{prefix}.P{i}"] = (prev, h)
        prev = h
    shapes[f"{prefix}.Wo"] = (prev, n_out)
    shapes[f"{prefix}.bo"] = (n_out,)
    return shapes


def mlp_forward(params, prefix, n_hidden, x, dropout=0.0, rng=None):
    """Residual MLP: ``h <- softplus(h W + b) + skip(h)``, then a linear head.

    ``skip`` is the identity between equal widths and a learned projection
    otherwise.  Dropout (inverted) acts on the activation branch only.
    """
    cache = {"h": [x], "a": [], "mask": []}
    h = x
    for i in range(n_hidden):
        a = h @ params[f"{prefix}.W{i}"] + params[f"{prefix}.b{i}"]
        act = softplus(a)
        mask = None
        if dropout > 0 and rng is not None:
            mask = (rng.random(act.shape) >= dropout) / (1.0 - dropout)
            act = act * mask
        P = params.get(f"{prefix}.P{i}")
        h = act + (h @ P if P is not None else h)
        cache["a"].append(a)
        cache["mask"].append(mask)
        cache["h"].append(h)
    out = h @ params[f"{prefix}.Wo"] + params[f"{prefix}.bo"]
    return out, cache


def mlp_backward(params, prefix, n_hidden, cache, dout, grads):
    h = cache["h"][-1]
    grads[f"{prefix}.Wo"] += h.T @ dout
    grads[f"{prefix}.bo"] += dout.sum(axis=0)
    dh = dout @ params[f"{prefix}.Wo"].T
    for i in reversed(range(n_hidden)):
        h_prev = cache["h"][i]
        da = dh * sigmoid(cache["a"][i])
        if cache["mask"][i] is not None:
            da = da * cache["mask"][i]
        grads[f"{prefix}.W{i}"] += h_prev.T @ da
        grads[f"{prefix}.b{i}"] += da.sum(axis=0)
        P = params.get(f"{prefix}.P{i}")
        if P is not None:
            grads[f"{prefix}.P{i}"] += h_prev.T @ dh
            dskip = dh @ P.T
        else:
            dskip = dh
        dh = da @ params[f"{prefix}.W{i}"].T + dskip
    return dh


# ------------------------------------------------------------------- model

@dataclass
class KoopmanModel:
    r: int
    p: int
    d_e: int
    params: dict
    x_mean: np.ndarray
    x_scale: np.ndarray
    hidden_enc: tuple = (48, 48)
    hidden_dec: tuple = (48, 48)
    bases_fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def d_z(self) -> int:
        return self.d_e + self.r

    @property
    def A(self) -> np.ndarray:
        return self.params["A"]

    @A.setter
    def A(self, value):
        self.params["A"] = np.asarray(value, dtype=float)

    @property
    def B(self) -> np.ndarray:
        return self.params["B"]

    @B.setter
    def B(self, value):
        self.params["B"] = np.asarray(value, dtype=float)

    def copy(self) -> "KoopmanModel":
        return KoopmanModel(self.r, self.p, self.d_e, {k: v.copy() for k, v in self.params.items()},
                            self.x_mean.copy(), self.x_scale.copy(), self.hidden_enc,
                            self.hidden_dec, self.bases_fingerprint, dict(self.meta))

    # -- forward maps, batched on rows; 1-D inputs are accepted too

    def _encode(self, X, dropout=0.0, rng=None):
        Xn = (X - self.x_mean) / self.x_scale
        g, cache = mlp_forward(self.params, "enc", len(self.hidden_enc), Xn, dropout, rng)
        return np.concatenate([g, X], axis=-1), cache

    def _decode(self, Z, dropout=0.0, rng=None):
        zx = Z[:, self.d_e:]
        zin = np.concatenate([Z[:, :self.d_e], (zx - self.x_mean) / self.x_scale], axis=1)
        corr, cache = mlp_forward(self.params, "dec", len(self.hidden_dec), zin, dropout, rng)
        return zx + corr * self.x_scale, cache

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        z, _ = self._encode(np.atleast_2d(x))
        return z[0] if x.ndim == 1 else z

    def unlift(self, z):
        z = np.asarray(z, dtype=float)
        x, _ = self._decode(np.atleast_2d(z))
        return x[0] if z.ndim == 1 else x

    def step_lifted(self, z, u):
        return np.asarray(z) @ self.A.T + np.asarray(u) @ self.B.T

    def predict_one_step(self, x, u):
        return self.unlift(self.step_lifted(self.lift(x), u))

    def rollout(self, x0, U):
        """Decoded predictions after each of the inputs in ``U`` (S, p), from lifted ``x0``."""
        z = self.lift(x0)
        out = []
        for u in np.atleast_2d(U):
            z = self.step_lifted(z, u)
            out.append(self.unlift(z))
        return np.array(out)

    # -- persistence

    def to_dict(self) -> dict:
        return {
            "r": self.r, "p": self.p, "d_e": self.d_e,
            "hidden_enc": list(self.hidden_enc), "hidden_dec": list(self.hidden_dec),
            "x_mean": self.x_mean.tolist(), "x_scale": self.x_scale.tolist(),
            "bases_fingerprint": self.bases_fingerprint,
            "meta": self.meta,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in sorted(self.params.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KoopmanModel":
        try:
            params = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"])
                      for k, v in d["params"].items()}
            model = cls(int(d["r"]), int(d["p"]), int(d["d_e"]), params,
                        np.asarray(d["x_mean"], dtype=float), np.asarray(d["x_scale"], dtype=float),
                        tuple(d["hidden_enc"]), tuple(d["hidden_dec"]),
                        d.get("bases_fingerprint", ""), d.get("meta", {}))
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaError(f"malformed model document: {exc}") from None
        if model.A.shape != (model.d_z, model.d_z) or model.B.shape != (model.d_z, model.p):
            raise SchemaError("model A/B shapes inconsistent with d_z and p")
        return model

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "KoopmanModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_model(r: int, p: int, d_e: int = 256, hidden_enc=(48, 48), hidden_dec=(48, 48),
               seed: int = 0, x_mean=None, x_scale=None) -> KoopmanModel:
    """Glorot-uniform network weights, zero biases, ``A = 0.99 I`` and small uniform ``B``."""
    rng = np.random.default_rng(seed)
    d_z = d_e + r
    shapes = {**mlp_shapes("enc", r, hidden_enc, d_e), **mlp_shapes("dec", d_z, hidden_dec, r)}
    params = {}
    for name, shape in shapes.items():
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            lim = np.sqrt(6.0 / sum(shape))
            params[name] = rng.uniform(-lim, lim, size=shape)
    params["A"] = 0.99 * np.eye(d_z)
    params["B"] = rng.uniform(-0.01, 0.01, size=(d_z, p))
    return KoopmanModel(r, p, d_e, params,
                        np.zeros(r) if x_mean is None else np.asarray(x_mean, dtype=float),
                        np.ones(r) if x_scale is None else np.asarray(x_scale, dtype=float),
                        tuple(hidden_enc), tuple(hidden_dec))


def init_state_rows(model: KoopmanModel, reduced_episodes) -> None:
    """Least-squares fit ``x' = F x + G u`` written into the appended-state rows of ``A, B``.

    The observable rows keep their near-identity start; only the rows the MPC
    cost reads directly get a data-informed start.
    """
    X0 = np.vstack([e.x_tilde[:, :-1].T for e in reduced_episodes])
    X1 = np.vstack([e.x_tilde[:, 1:].T for e in reduced_episodes])
    U = np.vstack([e.u_tilde.T for e in reduced_episodes])
    coef, *_ = np.linalg.lstsq(np.hstack([X0, U]), X1, rcond=None)
    r, d_e = model.r, model.d_e
    A = model.A.copy()
    A[d_e:, :] = 0.0
    A[d_e:, d_e:] = coef[:r].T
    model.A = A
    B = model.B.copy()
    B[d_e:] = coef[r:].T
    model.B = B


def weight_names(params) -> list[str]:
    """Network weight matrices subject to L2 regularization (not biases, not A/B)."""
    return [k for k in params if k.split(".")[-1][0] in "WP" and "." in k]


# -------------------------------------------------------------------- loss

def stability_penalty(A: np.ndarray, kind: str = "eigen"):
    """Sum of ReLU(|lambda_i(A)| - 1) and its gradient with respect to ``A``.

    ``kind="singular"`` penalizes singular values instead: an upper bound on
    the eigenvalue moduli whose zero certifies contraction, but which can never
    vanish while the appended state block is persistent and coupled.
    """
    if kind == "singular":
        U, s, Vt = np.linalg.svd(A)
        over = s > 1.0
        return float(np.sum(s[over] - 1.0)), U[:, over] @ Vt[over, :]
    if kind != "eigen":
        raise ValueError(f"unknown stability surrogate {kind!r}")
    lam, W, V = scipy.linalg.eig(A, left=True, right=True)
    mod = np.abs(lam)
    over = mod > 1.0
    grad = np.zeros_like(A)
    if np.any(over):
        # d|lambda| = Re(conj(lambda)/|lambda| * w^H dA v / (w^H v))
        w, v, l = W[:, over], V[:, over], lam[over]
        coef = np.conj(l) / mod[over] / np.einsum("ij,ij->j", np.conj(w), v)
        grad = np.real((np.conj(w) * coef) @ v.T)
    return float(np.sum(mod[over] - 1.0)), grad


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def compute_loss(model: KoopmanModel, Xw, Uw, config: TrainConfig, *, rng=None,
                 train: bool = False, grad: bool = False, terms=TERMS, include_reg: bool = True):
    """Weighted five-term loss on a batch of rollout windows.

    Parameters
    ----------
    Xw : (n, S+1, r) reduced states of each window
    Uw : (n, S, p) reduced inputs of each window
    terms : subset of ``TERMS`` to include (others contribute zero)

    Returns
    -------
    total, breakdown (unweighted term values plus ``reg``), grads (or None)
    """
    Xw = np.asarray(Xw, dtype=float)
    Uw = np.asarray(Uw, dtype=float)
    S = config.rollout
    if Xw.ndim != 3 or Xw.shape[1] < S + 1 or Uw.shape[1] < S:
        raise ValueError(f"windows must hold {S + 1} states and {S} inputs")
    Xw, Uw = Xw[:, :S + 1], Uw[:, :S]
    n, r, d_e = Xw.shape[0], model.r, model.d_e
    d_z = model.d_z
    A, B = model.A, model.B
    drop = config.dropout if train else 0.0
    a1, a2, a3, a4, a5 = config.alphas
    wt = dict(zip(TERMS, config.alphas))

    Xflat = Xw.reshape(n * (S + 1), r)
    Zflat, enc_cache = model._encode(Xflat, drop, rng)
    Z = Zflat.reshape(n, S + 1, d_z)

    # one-step predictions from every true lifted state in the window
    Zp = Z[:, :S] @ A.T + Uw @ B.T                    # (n, S, d_z)
    # rollout from the first state
    R = np.empty((n, S + 1, d_z))
    R[:, 0] = Z[:, 0]
    for m in range(1, S + 1):
        R[:, m] = R[:, m - 1] @ A.T + Uw[:, m - 1] @ B.T

    dec_in = np.concatenate([Zflat, Zp.reshape(n * S, d_z), R[:, 1:].reshape(n * S, d_z)])
    Xhat, dec_cache = model._decode(dec_in, drop, rng)
    n_rec = n * (S + 1)
    x_rec = Xhat[:n_rec]
    x_one = Xhat[n_rec:n_rec + n * S].reshape(n, S, r)
    x_mul = Xhat[n_rec + n * S:].reshape(n, S, r)

    e_rec = x_rec - Xflat
    e_one = x_one - Xw[:, 1:]
    e_mul = x_mul - Xw[:, 1:]
    e_lin = R[:, 1:] - Z[:, 1:]

    # mean over windows and components; multi/lin also average over the S rollout steps
    vals = {
        "recon": float(np.mean(e_rec ** 2)),
        "one": float(np.mean(e_one ** 2)),
        "multi": float(np.mean(e_mul ** 2)),
        "lin": float(np.mean(e_lin ** 2)),
    }
    stab, dstab = stability_penalty(A, config.stability) if "stable" in terms else (0.0, None)
    vals["stable"] = stab
    wnames = weight_names(model.params)
    reg = config.weight_decay * sum(float(np.sum(model.params[k] ** 2)) for k in wnames) if include_reg else 0.0
    vals["reg"] = reg
    total = sum(wt[t] * vals[t] for t in terms) + reg
    for t in TERMS:
        if not np.isfinite(vals[t]):
            raise NumericalError(f"loss term {t!r} is not finite")

    if not grad:
        return total, vals, None

    g = {k: np.zeros_like(v) for k, v in model.params.items()}
    on = {t: (wt[t] if t in terms else 0.0) for t in TERMS}
    dXhat = np.concatenate([
        (2.0 * on["recon"] / e_rec.size) * e_rec,
        ((2.0 * on["one"] / e_one.size) * e_one).reshape(n * S, r),
        ((2.0 * on["multi"] / e_mul.size) * e_mul).reshape(n * S, r),
    ])
    # decoder: xhat = zx + scale * mlp([zg, (zx - mean)/scale])
    dcorr = dXhat * model.x_scale
    dzin = mlp_backward(model.params, "dec", len(model.hidden_dec), dec_cache, dcorr, g)
    ddec_in = np.concatenate([dzin[:, :d_e], dXhat + dzin[:, d_e:] / model.x_scale], axis=1)

    dZflat = ddec_in[:n_rec].copy()
    dZp = ddec_in[n_rec:n_rec + n * S].reshape(n, S, d_z)
    dR = np.zeros((n, S + 1, d_z))
    dR[:, 1:] = ddec_in[n_rec + n * S:].reshape(n, S, d_z)
    dlin = (2.0 * on["lin"] / e_lin.size) * e_lin
    dR[:, 1:] += dlin
    dZ = dZflat.reshape(n, S + 1, d_z)
    dZ[:, 1:] -= dlin

    dZp2 = dZp.reshape(n * S, d_z)
    gA = dZp2.T @ Z[:, :S].reshape(n * S, d_z)
    gB = dZp2.T @ Uw.reshape(n * S, -1)
    dZ[:, :S] += dZp @ A
    for m in range(S, 0, -1):
        gA += dR[:, m].T @ R[:, m - 1]
        gB += dR[:, m].T @ Uw[:, m - 1]
        dR[:, m - 1] += dR[:, m] @ A
    dZ[:, 0] += dR[:, 0]

    dg = dZ.reshape(n_rec, d_z)[:, :d_e]
    mlp_backward(model.params, "enc", len(model.hidden_enc), enc_cache, dg, g)
    if dstab is not None:
        gA += on["stable"] * dstab
    g["A"] += gA
    g["B"] += gB
    if include_reg:
        for k in wnames:
            g[k] += 2.0 * config.weight_decay * model.params[k]
    return total, vals, g


def gradient_check(model: KoopmanModel, Xw, Uw, config: TrainConfig, step: float = 1e-5,
                   terms=("recon", "one", "multi", "lin"), include_reg: bool = True) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Relative error per parameter block is ``|g - g_fd| / max(|g|, |g_fd|)``
    (2-norms); blocks whose gradients both vanish count as exact.
    """
    _, _, g = compute_loss(model, Xw, Uw, config, grad=True, terms=terms, include_reg=include_reg)
    worst = 0.0
    for name, value in model.params.items():
        fd = np.zeros_like(value)
        flat = value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp, _, _ = compute_loss(model, Xw, Uw, config, terms=terms, include_reg=include_reg)
            flat[i] = orig - step
            lm, _, _ = compute_loss(model, Xw, Uw, config, terms=terms, include_reg=include_reg)
            flat[i] = orig
            fd.reshape(-1)[i] = (lp - lm) / (2 * step)
        denom = max(np.linalg.norm(g[name]), np.linalg.norm(fd))
        if denom > 1e-12:
            worst = max(worst, float(np.linalg.norm(g[name] - fd) / denom))
    return worst


# ---------------------------------------------------------------- training

def make_windows(x_tilde: np.ndarray, u_tilde: np.ndarray, S: int):
    """Overlapping stride-1 windows of one episode: (k, S+1, r) states and (k, S, p) inputs."""
    N = u_tilde.shape[1]
    if N < S:
        return np.zeros((0, S + 1, x_tilde.shape[0])), np.zeros((0, S, u_tilde.shape[0]))
    idx = np.arange(N - S + 1)
    Xw = np.stack([x_tilde[:, i:i + S + 1].T for i in idx])
    Uw = np.stack([u_tilde[:, i:i + S].T for i in idx])
    return Xw, Uw


def windows_from(reduced_episodes, S: int):
    parts = [make_windows(ep.x_tilde, ep.u_tilde, S) for ep in reduced_episodes]
    if not parts:
        raise ValueError("no episodes supplied")
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class TrainResult:
    model: KoopmanModel
    history: list
    best_epoch: int


def train(train_episodes, config: TrainConfig, validation_episodes=None,
          bases_fingerprint: str = "") -> TrainResult:
    """Adam on mini-batches of rollout windows; returns the best-validation model.

    Early stopping watches the one-step loss on the validation windows (the
    training windows when no validation set is given).
    """
    S = config.rollout
    Xw, Uw = windows_from(train_episodes, S)
    if len(Xw) == 0:
        raise ValueError(f"no training windows of length {S + 1}")
    if validation_episodes:
        Xv, Uv = windows_from(validation_episodes, S)
        if len(Xv) == 0:
            Xv, Uv = Xw, Uw
    else:
        Xv, Uv = Xw, Uw

    states = Xw.reshape(-1, Xw.shape[2])
    scale = states.std(axis=0)
    scale = np.where(scale > 1e-8, scale, 1.0)
    rng = np.random.default_rng(config.seed)
    model = init_model(Xw.shape[2], Uw.shape[2], config.lifted_dim, config.hidden_enc,
                       config.hidden_dec, seed=int(rng.integers(2 ** 31)),
                       x_mean=states.mean(axis=0), x_scale=scale)
    model.bases_fingerprint = bases_fingerprint
    if config.state_init == "least_squares":
        init_state_rows(model, train_episodes)
    if config.decoder_init == "zero":
        model.params["dec.Wo"] = np.zeros_like(model.params["dec.Wo"])
    opt = Adam(model.params, config.lr)

    history = []
    best = (np.inf, model.copy(), 0)
    stale = 0
    for epoch in range(config.epochs):
        opt.lr = config.lr * config.lr_decay ** (epoch // config.lr_step)
        order = rng.permutation(len(Xw))
        epoch_total = 0.0
        for start in range(0, len(order), config.batch_size):
            sel = order[start:start + config.batch_size]
            total, vals, g = compute_loss(model, Xw[sel], Uw[sel], config, rng=rng,
                                          train=True, grad=True)
            opt.step(model.params, g)
            epoch_total += total * len(sel)
        train_total, train_terms, _ = compute_loss(model, Xw, Uw, config)
        val_total, val_terms, _ = compute_loss(model, Xv, Uv, config)
        history.append({"epoch": epoch, "lr": opt.lr, "train_loss": train_total,
                        "val_loss": val_total, "val_one": val_terms["one"],
                        **{f"train_{k}": v for k, v in train_terms.items()}})
        if val_terms["one"] < best[0]:
            best = (val_terms["one"], model.copy(), epoch)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                log.info("early stop at epoch %d (best %d)", epoch, best[2])
                break
        if epoch % 20 == 0:
            log.debug("epoch %d loss %.4g val_one %.4g", epoch, train_total, val_terms["one"])
    final = best[1]
    final.meta = {"best_epoch": best[2], "config": config.to_dict(),
                  "spectral_radius": spectral_radius(final.A),
                  "max_singular_value": float(np.linalg.norm(final.A, 2))}
    return TrainResult(final, history, best[2])
