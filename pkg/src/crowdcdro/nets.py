"""Differentiable softmax classifiers with hand-rolled exact gradients.

Two architectures: a softmax-linear map and a one-hidden-layer tanh network.
Gradients for the robust loss treat the adversarial inner argmax as locally
constant (a Danskin-style subgradient at the active piece) with ties broken
to the smallest class index so the gradient is deterministic. Batch
reductions run in fixed index order, so results are reproducible.

Checkpoints (``save_checkpoint``/``load_checkpoint``) are .npz archives:
a ``meta`` JSON string holding {"format": 1, "arch", "dims"} plus arrays
``param0``, ``param1``, ... in the order of ``SoftmaxNet.params``.
"""

from __future__ import annotations

import json

import numpy as np

CHECKPOINT_FORMAT = 1


class SoftmaxNet:
    """Softmax classifier over flat feature vectors.

    ``arch`` is "linear" (d -> k) or "mlp" (d -> hidden -> k with tanh).
    Parameters live in ``params``, a list of arrays; gradients returned by
    the loss functions mirror that structure.
    """

    def __init__(self, arch, dims, params):
        if arch not in ("linear", "mlp"):
            raise ValueError(f"unknown architecture {arch!r}")
        self.arch = arch
        self.dims = tuple(int(v) for v in dims)
        self.params = params

    @classmethod
    def init(cls, arch, d, k, hidden=32, rng=0, scale=0.1):
        rng = np.random.default_rng(rng)
        if arch == "linear":
            params = [scale * rng.standard_normal((d, k)), np.zeros(k)]
            dims = (d, k)
        elif arch == "mlp":
            params = [
                scale * rng.standard_normal((d, hidden)),
                np.zeros(hidden),
                scale * rng.standard_normal((hidden, k)),
                np.zeros(k),
            ]
            dims = (d, hidden, k)
        else:
            raise ValueError(f"unknown architecture {arch!r}")
        return cls(arch, dims, params)

    @property
    def num_classes(self):
        return self.dims[-1]

    def copy(self):
        return SoftmaxNet(self.arch, self.dims, [p.copy() for p in self.params])

    def _forward(self, X):
        """Returns (logits, hidden activation or None)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dims[0]:
            raise ValueError(f"feature dim {X.shape[1]} != expected {self.dims[0]}")
        if self.arch == "linear":
            return X @ self.params[0] + self.params[1], None
        h = np.tanh(X @ self.params[0] + self.params[1])
        return h @ self.params[2] + self.params[3], h

    def predict_proba(self, X):
        """Softmax probabilities, numerically stabilized."""
        logits, _ = self._forward(X)
        logits = logits - logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        return expl / expl.sum(axis=1, keepdims=True)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def zero_grads(self):
        return [np.zeros_like(p) for p in self.params]

    def _backward(self, X, hidden, probs, dlogits):
        """Gradients of a scalar loss given dloss/dlogits."""
        del probs
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.arch == "linear":
            return [X.T @ dlogits, dlogits.sum(axis=0)]
        dh = (dlogits @ self.params[2].T) * (1.0 - hidden**2)
        return [
            X.T @ dh,
            dh.sum(axis=0),
            hidden.T @ dlogits,
            dlogits.sum(axis=0),
        ]


def _loss_grad_probs(transform, probs, references, active):
    """dloss/dprobs for loss = sum_j ref_j * T(probs[active(j)]).

    ``active`` is the (n, k) matrix of adversarial labels: active[i, j] is
    the class whose predicted probability enters the loss when the
    reference label is j.
    """
    n, k = probs.shape
    deriv = transform.deriv(probs)
    weight = np.zeros_like(probs)
    rows = np.repeat(np.arange(n), k)
    np.add.at(weight, (rows, active.ravel()), references.ravel())
    return weight * deriv


def _chain_softmax(probs, dprobs):
    """dloss/dlogits from dloss/dprobs through the softmax Jacobian."""
    inner = (dprobs * probs).sum(axis=1, keepdims=True)
    return probs * (dprobs - inner)


def robust_batch_loss_grad(net, X, references, spec, gamma):
    """Mean per-point dual objective at fixed gamma, with exact gradients.

    ``references`` is (n, k): point masses for pseudo-labeled batches or
    soft posteriors. Returns (loss, grads). An empty batch yields loss 0 and
    zero gradients.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    references = np.atleast_2d(np.asarray(references, dtype=float))
    n = X.shape[0]
    if n == 0:
        return 0.0, net.zero_grads()
    k = net.num_classes
    if references.shape != (n, k):
        raise ValueError(f"references shape {references.shape} != ({n}, {k})")

    logits, hidden = net._forward(X)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expl = np.exp(shifted)
    probs = expl / expl.sum(axis=1, keepdims=True)
    losses = spec.losses(probs)

    # Penalized loss tensor over (instance, reference label j, candidate y').
    penalty = gamma * spec.move_cost() * (1.0 - np.eye(k))
    cand = losses[:, None, :] - penalty[None, :, :]
    active = np.argmax(cand, axis=2)
    inner = np.take_along_axis(cand, active[:, :, None], axis=2)[:, :, 0]

    loss = float(
        gamma * spec.epsilon**spec.p + (references * inner).sum() / n
    )
    dprobs = _loss_grad_probs(spec.transform, probs, references / n, active)
    dlogits = _chain_softmax(probs, dprobs)
    return loss, net._backward(X, hidden, probs, dlogits)


def nominal_batch_loss_grad(net, X, references, transform):
    """Mean reference-weighted loss sum_j ref_j * T(probs_j), with exact
    gradients; the clipped-log case is clipped cross-entropy."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    references = np.atleast_2d(np.asarray(references, dtype=float))
    n = X.shape[0]
    if n == 0:
        return 0.0, net.zero_grads()
    logits, hidden = net._forward(X)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expl = np.exp(shifted)
    probs = expl / expl.sum(axis=1, keepdims=True)
    losses = transform.value(probs)
    loss = float((references * losses).sum() / n)
    dprobs = (references / n) * transform.deriv(probs)
    dlogits = _chain_softmax(probs, dprobs)
    return loss, net._backward(X, hidden, probs, dlogits)


def onehot(labels, k):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


class Optimizer:
    """First-order updates: plain/momentum SGD or the bias-corrected
    adaptive-moment method. Deterministic given its state."""

    def __init__(self, kind="adam", lr=1e-2, momentum=0.9, beta1=0.9, beta2=0.999, eps=1e-8):
        if kind not in ("sgd", "momentum", "adam"):
            raise ValueError(f"unknown optimizer {kind!r}")
        if lr < 0:
            raise ValueError("learning rate must be >= 0")
        self.kind = kind
        self.lr = lr
        self.momentum = momentum
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        """Update ``params`` in place."""
        if self.lr == 0.0:
            return params
        self.t += 1
        if self.kind == "sgd":
            for p, g in zip(params, grads):
                p -= self.lr * g
            return params
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
        if self.kind == "momentum":
            for p, g, m in zip(params, grads, self.m):
                m *= self.momentum
                m += g
                p -= self.lr * m
            return params
        if self.v is None:
            self.v = [np.zeros_like(p) for p in params]
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        return params


def save_checkpoint(net, path):
    meta = json.dumps(
        {"format": CHECKPOINT_FORMAT, "arch": net.arch, "dims": list(net.dims)}
    )
    arrays = {f"param{i}": p for i, p in enumerate(net.params)}
    np.savez(path, meta=np.array(meta), **arrays)


def load_checkpoint(path):
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
    params = []
    i = 0
    while f"param{i}" in data:
        params.append(data[f"param{i}"])
        i += 1
    return SoftmaxNet(meta["arch"], tuple(meta["dims"]), params)
