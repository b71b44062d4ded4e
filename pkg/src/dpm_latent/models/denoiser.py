"""A two-hidden-layer fully connected noise predictor with hand-written backprop.

    h1  = act(W1 x + b1 + E phi(t) + C onehot(cond))
    h2  = act(W2 h1 + b2)
    eps = W3 h2 + b3

``phi`` is a fixed sinusoidal feature vector of the (original) step index, so
each step gets its own learned embedding ``E phi(t)`` at a small parameter
cost.  The output layer starts at zero, so an untrained network predicts 0.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericalError
from ..rng import make_rng

log = logging.getLogger(__name__)

PARAM_NAMES = ("W1", "b1", "E", "C", "W2", "b2", "W3", "b3")
N_TIME_FEATURES = 16
MAX_PARAMS = 100_000


def _act(name, a):
    if name == "tanh":
        h = np.tanh(a)
        return h, 1.0 - h**2
    if name == "silu":
        sig = 1.0 / (1.0 + np.exp(-a))
        return a * sig, sig * (1.0 + a * (1.0 - sig))
    if name == "linear":
        return a, np.ones_like(a)
    raise ConfigError(f"unknown activation {name!r}")


def time_features(tau, T_train):
    """Sinusoidal features of step ``tau`` (scalar or array) on a ladder of length ``T_train``."""
    u = np.asarray(tau, dtype=np.float64) / T_train
    freqs = np.pi * 2.0 ** np.arange(N_TIME_FEATURES // 2)
    ang = u[..., None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


class TinyDenoiser:
    def __init__(self, params, T_train, activation="tanh", final_loss=None):
        self.params = {k: np.array(params[k], dtype=np.float64) for k in PARAM_NAMES}
        self.T_train = int(T_train)
        self.activation = activation
        self.final_loss = final_loss
        W1, W3 = self.params["W1"], self.params["W3"]
        self.dim = W1.shape[1]
        self.hidden = W1.shape[0]
        self.n_labels = self.params["C"].shape[1]
        self.conditions = tuple(range(self.n_labels))
        if W3.shape != (self.dim, self.params["W2"].shape[0]):
            raise ConfigError("denoiser: output layer shape mismatch")
        if self.n_params > MAX_PARAMS:
            raise ConfigError(f"denoiser: {self.n_params} parameters exceeds {MAX_PARAMS}")
        if not all(np.all(np.isfinite(p)) for p in self.params.values()):
            raise NumericalError("denoiser: non-finite parameters", module="models")

    @classmethod
    def init(cls, dim, hidden, T_train, rng, n_labels=0, activation="tanh"):
        p = {
            "W1": rng.standard_normal((hidden, dim)) / np.sqrt(dim),
            "b1": np.zeros(hidden),
            "E": rng.standard_normal((hidden, N_TIME_FEATURES)) / np.sqrt(N_TIME_FEATURES),
            "C": rng.standard_normal((hidden, n_labels)) * 0.5,
            "W2": rng.standard_normal((hidden, hidden)) / np.sqrt(hidden),
            "b2": np.zeros(hidden),
            "W3": np.zeros((dim, hidden)),
            "b3": np.zeros(dim),
        }
        return cls(p, T_train, activation)

    @property
    def n_params(self):
        return int(sum(p.size for p in self.params.values()))

    def _forward(self, x, tau, labels):
        p = self.params
        a1 = x @ p["W1"].T + p["b1"] + time_features(tau, self.T_train) @ p["E"].T
        if labels is not None:
            if self.n_labels == 0:
                raise ConfigError("denoiser: unconditional model got a condition label")
            a1 = a1 + p["C"].T[labels]
        h1, d1 = _act(self.activation, a1)
        a2 = h1 @ p["W2"].T + p["b2"]
        h2, d2 = _act(self.activation, a2)
        out = h2 @ p["W3"].T + p["b3"]
        return out, (h1, d1, h2, d2)

    def predict(self, x, tau, cond=None):
        """Raw prediction at original step index ``tau`` (scalar or per-row array)."""
        out, _ = self._forward(np.asarray(x, dtype=np.float64), tau, cond)
        return out

    def _backward_input(self, cache, cot):
        p = self.params
        h1, d1, h2, d2 = cache
        g2 = (cot @ p["W3"]) * d2
        g1 = (g2 @ p["W2"]) * d1
        return g1 @ p["W1"]

    def vjp(self, x, tau, cotangent, cond=None):
        _, cache = self._forward(np.asarray(x, dtype=np.float64), tau, cond)
        return self._backward_input(cache, np.asarray(cotangent, dtype=np.float64))

    # noise-predictor protocol used by EpsilonMeanEstimator
    def eps(self, x, s, t, cond=None):
        return self.predict(x, s.timesteps[t - 1], cond)

    def eps_vjp(self, x, s, t, cond, cotangent):
        return self.vjp(x, s.timesteps[t - 1], cotangent, cond)

    def loss_and_grads(self, x, tau, target, labels=None):
        p = self.params
        out, (h1, d1, h2, d2) = self._forward(x, tau, labels)
        n = x.shape[0]
        resid = out - target
        loss = float(np.sum(resid**2) / n)
        g_out = 2.0 * resid / n
        grads = {"W3": g_out.T @ h2, "b3": g_out.sum(0)}
        g2 = (g_out @ p["W3"]) * d2
        grads["W2"] = g2.T @ h1
        grads["b2"] = g2.sum(0)
        g1 = (g2 @ p["W2"]) * d1
        grads["W1"] = g1.T @ x
        grads["b1"] = g1.sum(0)
        grads["E"] = g1.T @ time_features(tau, self.T_train)
        C = np.zeros_like(p["C"])
        if labels is not None:
            np.add.at(C.T, labels, g1)
        grads["C"] = C
        return loss, grads

    def to_dict(self):
        return {
            "T_train": self.T_train,
            "activation": self.activation,
            "final_loss": self.final_loss,
            "params": {k: self.params[k].tolist() for k in PARAM_NAMES},
        }

    @classmethod
    def from_dict(cls, d):
        params = {k: np.asarray(v, dtype=np.float64) for k, v in d["params"].items()}
        # empty label table round-trips through JSON as a flat list
        params["C"] = params["C"].reshape(params["W1"].shape[0], -1)
        return cls(params, d["T_train"], d.get("activation", "tanh"), d.get("final_loss"))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 3000
    learning_rate: float = 2e-3
    batch_size: int = 128
    seed: int = 0
    hidden: int = 64
    activation: str = "tanh"
    lr_decay: bool = True


def denoiser_train(data, s, cfg=TrainConfig(), labels=None, n_labels=0):
    """Fit a :class:`TinyDenoiser` by epsilon-prediction with Adam.

    ``data`` is an ``(n, d)`` array; ``labels`` an optional ``(n,)`` integer
    array of condition labels.  Training is single-threaded numpy and fully
    determined by ``cfg.seed``.  ``final_loss`` is the mean loss over the last
    10% of steps.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ConfigError("denoiser_train: data must be a nonempty (n, d) array")
    if not np.all(np.isfinite(data)):
        raise NumericalError("denoiser_train: training data contains non-finite values", module="models")
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        n_labels = max(n_labels, int(labels.max()) + 1)
    rng = make_rng(cfg.seed)
    net = TinyDenoiser.init(data.shape[1], cfg.hidden, s.T, rng, n_labels, cfg.activation)
    params = net.params
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(v) for k, v in params.items()}
    b1, b2, eps_adam = 0.9, 0.999, 1e-8
    tail = max(1, cfg.steps // 10)
    recent = []
    for step in range(1, cfg.steps + 1):
        idx = rng.integers(0, data.shape[0], size=cfg.batch_size)
        x0 = data[idx]
        t = rng.integers(1, s.T + 1, size=cfg.batch_size)
        noise = rng.standard_normal(x0.shape)
        abar = s.alpha_bars[t - 1][:, None]
        xt = np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * noise
        loss, grads = net.loss_and_grads(xt, s.timesteps[t - 1], noise, None if labels is None else labels[idx])
        if not np.isfinite(loss):
            raise NumericalError("denoiser training diverged", module="models", step=step, loss=loss)
        lr = cfg.learning_rate
        if cfg.lr_decay:
            lr *= 0.5 * (1.0 + np.cos(np.pi * (step - 1) / cfg.steps))
        for k in PARAM_NAMES:
            g = grads[k]
            m[k] = b1 * m[k] + (1 - b1) * g
            v[k] = b2 * v[k] + (1 - b2) * g * g
            mhat = m[k] / (1 - b1**step)
            vhat = v[k] / (1 - b2**step)
            params[k] -= lr * mhat / (np.sqrt(vhat) + eps_adam)
        if step > cfg.steps - tail:
            recent.append(loss)
        if step % 1000 == 0:
            log.debug("denoiser step %d loss %.5f", step, loss)
    net.final_loss = float(np.mean(recent))
    return net


def denoiser_loss(net, data, s, rng, n_samples=20000, labels=None):
    """Monte-Carlo epsilon-prediction loss of ``net`` (sum over dims, mean over draws)."""
    data = np.asarray(data, dtype=np.float64)
    idx = rng.integers(0, data.shape[0], size=n_samples)
    t = rng.integers(1, s.T + 1, size=n_samples)
    noise = rng.standard_normal((n_samples, data.shape[1]))
    abar = s.alpha_bars[t - 1][:, None]
    xt = np.sqrt(abar) * data[idx] + np.sqrt(1.0 - abar) * noise
    pred = net.predict(xt, s.timesteps[t - 1], None if labels is None else labels[idx])
    return float(np.mean(np.sum((pred - noise) ** 2, axis=-1)))


def denoiser_vjp(net, x_t, t, cotangent, cond=None):
    """J^T cotangent with J the Jacobian of the network output w.r.t. ``x_t`` at step ``t``."""
    return net.vjp(x_t, t, cotangent, cond)
