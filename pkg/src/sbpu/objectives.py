"""Client loss functions and SGD machinery.

Two families of objectives are supported:

* QuadraticObjective -- f(w) = 0.5 (w-c)^T A (w-c) with A symmetric positive
  definite.  Used for quantitative verification of the convergence theorem:
  it is L-smooth with L = lambda_max(A) and mu-strongly convex with
  mu = lambda_min(A), and its constants are computable exactly.
* ClassifierObjective -- a tiny fully connected softmax classifier with
  analytic backprop gradients.  Used as the attack testbed.

Strong convexity forces unbounded gradients globally, so the bounded-
gradient constant G is defined on a projection ball of radius R around the
quadratic's center: stochastic gradients there satisfy ||g|| <= L*R + sigma.
Stochastic noise is drawn uniformly from the sphere of radius sigma, so the
variance bound holds with equality and the norm bound holds surely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import params as P
from .params import LayeredParams

ACTIVATIONS = ("sigmoid", "relu", "lrelu")


# ---------------------------------------------------------------------------
# quadratic objectives

@dataclass(frozen=True)
class QuadraticObjective:
    """0.5 (w - c)^T A (w - c) with sphere-noise stochastic gradients."""

    matrix: np.ndarray          # symmetric positive definite, d x d
    center: np.ndarray          # d
    noise_sigma: float = 0.0
    radius: float = 1.0         # projection-ball radius around center
    layout: tuple[tuple[int, int], ...] = None  # (n_filters, width) per layer

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=np.float64)
        c = np.asarray(self.center, dtype=np.float64).ravel()
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != c.size:
            raise ValueError("matrix must be d x d matching the center length")
        if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
            raise ValueError("matrix must be symmetric within 1e-12")
        eigs = np.linalg.eigvalsh(a)
        if eigs[0] <= 0.0:
            raise ValueError(f"matrix must be positive definite (min eigenvalue {eigs[0]:g})")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")
        if self.radius <= 0.0:
            raise ValueError("radius must be > 0")
        layout = self.layout or ((1, c.size),)
        if sum(nf * w for nf, w in layout) != c.size:
            raise ValueError(f"layout {layout} does not cover dimension {c.size}")
        a = a.copy(); a.flags.writeable = False
        c = c.copy(); c.flags.writeable = False
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "layout", tuple((int(nf), int(w)) for nf, w in layout))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def smoothness(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[-1])

    @property
    def strong_convexity(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def template(self) -> LayeredParams:
        """A zero LayeredParams with this objective's layer layout."""
        return P.from_arrays([np.zeros((nf, w)) for nf, w in self.layout])

    def params_from_vector(self, v: np.ndarray) -> LayeredParams:
        return P.from_vector(v, self.template())

    def loss(self, w: LayeredParams, batch=None) -> float:
        dv = P.as_vector(w) - self.center
        return 0.5 * float(dv @ self.matrix @ dv)

    def grad(self, w: LayeredParams, batch=None) -> LayeredParams:
        dv = P.as_vector(w) - self.center
        return self.params_from_vector(self.matrix @ dv)

    def stochastic_grad(self, w: LayeredParams, rng: np.random.Generator) -> LayeredParams:
        """Exact gradient plus uniform sphere noise of radius sigma.

        Requires w inside the projection ball; callers project first.
        """
        dv = P.as_vector(w) - self.center
        r = float(np.linalg.norm(dv))
        if r > self.radius * (1.0 + 1e-12):
            raise ValueError(f"w outside projection ball: distance {r:g} > radius {self.radius:g}")
        g = self.matrix @ dv
        if self.noise_sigma > 0.0:
            xi = rng.standard_normal(self.dim)
            n = np.linalg.norm(xi)
            while n == 0.0:  # probability-zero guard
                xi = rng.standard_normal(self.dim)
                n = np.linalg.norm(xi)
            g = g + (self.noise_sigma / n) * xi
        return self.params_from_vector(g)

    def project(self, w: LayeredParams) -> LayeredParams:
        """Euclidean projection onto the ball of radius R around the center."""
        v = P.as_vector(w)
        dv = v - self.center
        r = float(np.linalg.norm(dv))
        if r <= self.radius:
            return w
        return self.params_from_vector(self.center + dv * (self.radius / r))


# ---------------------------------------------------------------------------
# learning-rate schedule and assumption constants

@dataclass(frozen=True)
class LrSchedule:
    """eta_t = 2 / (mu * (t + gamma)); strictly positive and decreasing."""

    mu: float
    gamma: float

    def __post_init__(self):
        if self.mu <= 0.0 or self.gamma <= 0.0:
            raise ValueError("mu and gamma must be positive")

    def lr_at(self, t: int) -> float:
        return 2.0 / (self.mu * (t + self.gamma))


@dataclass(frozen=True)
class AssumptionConstants:
    L: float
    mu: float
    sigma: tuple[float, ...]
    G: float
    kappa: float
    gamma: float

    def __post_init__(self):
        if not (self.L >= self.mu > 0.0):
            raise ValueError("need L >= mu > 0")
        if self.G <= 0.0:
            raise ValueError("need G > 0")


def constants_for(objs: Sequence[QuadraticObjective], E: int, R: float) -> AssumptionConstants:
    """Federation-wide smoothness/convexity/noise/gradient-norm constants.

    L and mu are the extreme eigenvalues across clients; G = L*R + max sigma_i
    bounds every stochastic gradient on the radius-R ball.
    """
    if not objs:
        raise ValueError("need at least one objective")
    shapes = {o.template().shape for o in objs}
    if len(shapes) > 1:
        raise ValueError("objectives must share one parameter shape")
    L = max(o.smoothness for o in objs)
    mu = min(o.strong_convexity for o in objs)
    sigma = tuple(o.noise_sigma for o in objs)
    G = L * R + max(sigma)
    kappa = L / mu
    return AssumptionConstants(L=L, mu=mu, sigma=sigma, G=G, kappa=kappa,
                               gamma=max(8.0 * kappa, float(E)))


# ---------------------------------------------------------------------------
# SGD step

def sgd_step(w: LayeredParams, g: LayeredParams, eta: float,
             ball: tuple[np.ndarray, float] | None = None) -> LayeredParams:
    """w - eta*g, then Euclidean projection onto the ball when given."""
    if eta <= 0.0:
        raise ValueError("eta must be > 0")
    out = P.add_scaled(w, -eta, g)
    if ball is not None:
        center, radius = ball
        v = P.as_vector(out)
        dv = v - np.asarray(center, dtype=np.float64).ravel()
        r = float(np.linalg.norm(dv))
        if r > radius:
            out = P.from_vector(np.asarray(center).ravel() + dv * (radius / r), w)
    return out


# ---------------------------------------------------------------------------
# tiny softmax classifier

def _act(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if tag == "relu":
        return np.maximum(z, 0.0)
    if tag == "lrelu":
        return np.where(z > 0.0, z, 0.01 * z)
    raise ValueError(f"unknown activation {tag!r}")


def _act_deriv(tag: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if tag == "sigmoid":
        return a * (1.0 - a)
    if tag == "relu":
        return (z > 0.0).astype(np.float64)
    if tag == "lrelu":
        return np.where(z > 0.0, 1.0, 0.01)
    raise ValueError(f"unknown activation {tag!r}")


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass(frozen=True)
class ClassifierObjective:
    """Fully connected softmax classifier over a fixed labeled dataset.

    architecture: (in_dim, out_dim, activation) per hidden layer; the final
    entry must use activation "linear" and have out_dim == n_c.  Parameters
    live in a LayeredParams with one weight layer (out x in filters-as-rows)
    and one bias layer per dense layer.
    """

    architecture: tuple[tuple[int, int, str], ...]
    data_x: np.ndarray = None     # (n, in_dim)
    data_y: np.ndarray = None     # (n,) int labels
    n_c: int = field(default=None)

    def __post_init__(self):
        arch = tuple((int(i), int(o), str(a)) for i, o, a in self.architecture)
        if not arch:
            raise ValueError("architecture must be non-empty")
        if arch[-1][2] != "linear":
            raise ValueError("final layer must be linear (softmax applied in the loss)")
        for i, o, a in arch[:-1]:
            if a not in ACTIVATIONS:
                raise ValueError(f"activation must be one of {ACTIVATIONS}, got {a!r}")
        for (_, o1, _), (i2, _, _) in zip(arch, arch[1:]):
            if o1 != i2:
                raise ValueError("layer dimensions do not chain")
        n_c = self.n_c if self.n_c is not None else arch[-1][1]
        if n_c != arch[-1][1]:
            raise ValueError("n_c must equal the final layer width")
        x = None if self.data_x is None else np.asarray(self.data_x, dtype=np.float64)
        y = None if self.data_y is None else np.asarray(self.data_y, dtype=np.int64).ravel()
        if (x is None) != (y is None):
            raise ValueError("data_x and data_y go together")
        if x is not None:
            if x.ndim != 2 or x.shape[1] != arch[0][0]:
                raise ValueError("data_x must be (n, in_dim)")
            if y.size != x.shape[0] or np.any(y < 0) or np.any(y >= n_c):
                raise ValueError("labels must be in [0, n_c)")
            x = x.copy(); x.flags.writeable = False
            y = y.copy(); y.flags.writeable = False
        object.__setattr__(self, "architecture", arch)
        object.__setattr__(self, "data_x", x)
        object.__setattr__(self, "data_y", y)
        object.__setattr__(self, "n_c", int(n_c))

    @property
    def n_samples(self) -> int:
        return 0 if self.data_x is None else self.data_x.shape[0]

    def init_params(self, rng: np.random.Generator, scale: float = 0.1) -> LayeredParams:
        arrays, kinds = [], []
        for i, o, _ in self.architecture:
            arrays.append(scale * rng.standard_normal((o, i)))
            kinds.append("weight")
            arrays.append(np.zeros((1, o)))
            kinds.append("bias")
        return P.from_arrays(arrays, kinds)

    def zero_params(self) -> LayeredParams:
        arrays, kinds = [], []
        for i, o, _ in self.architecture:
            arrays.append(np.zeros((o, i))); kinds.append("weight")
            arrays.append(np.zeros((1, o))); kinds.append("bias")
        return P.from_arrays(arrays, kinds)

    def _unpack(self, w: LayeredParams):
        if len(w.layers) != 2 * len(self.architecture):
            raise P.ShapeMismatchError(len(w.layers) // 2, None, "wrong number of dense layers")
        pairs = []
        for li, (i, o, a) in enumerate(self.architecture):
            W = w.layers[2 * li].filters
            b = w.layers[2 * li + 1].filters.ravel()
            if W.shape != (o, i) or b.size != o:
                raise P.ShapeMismatchError(2 * li, None, f"expected ({o},{i})+bias {o}")
            pairs.append((W, b, a))
        return pairs

    def logits(self, w: LayeredParams, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        h = x
        for W, b, a in self._unpack(w):
            z = h @ W.T + b
            h = z if a == "linear" else _act(a, z)
        return h

    def predict(self, w: LayeredParams, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(w, x))

    def _batch(self, batch):
        if batch is None:
            if self.data_x is None:
                raise ValueError("no embedded dataset and no batch given")
            return self.data_x, self.data_y
        x, y = batch
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.asarray(y, dtype=np.int64).ravel()
        if x.shape[0] == 0:
            raise ValueError("empty batch")
        return x, y

    def loss(self, w: LayeredParams, batch=None) -> float:
        x, y = self._batch(batch)
        z = self.logits(w, x)
        zs = z - np.max(z, axis=1, keepdims=True)
        logp = zs - np.log(np.sum(np.exp(zs), axis=1, keepdims=True))
        return float(-np.mean(logp[np.arange(x.shape[0]), y]))

    def grad(self, w: LayeredParams, batch=None) -> LayeredParams:
        """Mean cross-entropy gradient by backprop (same shape as w)."""
        x, y = self._batch(batch)
        n = x.shape[0]
        pairs = self._unpack(w)
        hs, zs = [x], []
        h = x
        for W, b, a in pairs:
            z = h @ W.T + b
            zs.append(z)
            h = z if a == "linear" else _act(a, z)
            hs.append(h)
        probs = softmax(zs[-1])
        delta = probs.copy()
        delta[np.arange(n), y] -= 1.0
        delta /= n                      # logit gradient of the mean loss
        arrays = [None] * (2 * len(pairs))
        for li in range(len(pairs) - 1, -1, -1):
            W, b, a = pairs[li]
            arrays[2 * li] = delta.T @ hs[li]
            arrays[2 * li + 1] = np.sum(delta, axis=0).reshape(1, -1)
            if li > 0:
                delta = delta @ W
                ap = pairs[li - 1][2]
                delta = delta * _act_deriv(ap, zs[li - 1], hs[li])
        kinds = [l.kind for l in w.layers]
        return P.from_arrays(arrays, kinds)
