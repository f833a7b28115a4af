"""Linear operators with exact adjoints, plus structured Gram-system solvers.

Every operator maps a flat float vector of length ``in_dim`` to one of
length ``out_dim``.  Operators are immutable after construction and their
``apply``/``adjoint`` methods are pure, so they can be shared freely
between workers.  2-D convolutions act on row-major flattened images.

The Gram solvers invert ``shift*Id + sum_k L_k^T L_k`` for shift 1 or 2.
Factorizations (or DFT multipliers) are computed once at construction;
``solve`` never re-factorizes.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


class DimensionMismatch(ValueError):
    """A vector length does not match an operator port."""


class GramBuildError(ValueError):
    """The Gram system could not be assembled or factored."""


def _check_vec(tag: str, x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise DimensionMismatch(
            f"{tag}: expected a vector of length {n}, got shape {x.shape}"
        )
    return x


class LinearOp:
    """Bounded linear map with an exact adjoint."""

    in_dim: int
    out_dim: int

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def as_matrix(self) -> np.ndarray:
        """Dense assembly; used by Cholesky Gram solves and tests."""
        raise NotImplementedError

    def cost_units(self) -> float:
        """Rough flop count of one apply; drives simulated-time accounting."""
        return 2.0 * self.in_dim * self.out_dim

    def _in(self, x):
        return _check_vec(f"{self!r} input", x, self.in_dim)

    def _out(self, y):
        return _check_vec(f"{self!r} adjoint input", y, self.out_dim)

    def __repr__(self):
        return f"{type(self).__name__}({self.in_dim}->{self.out_dim})"


class IdentityOp(LinearOp):
    def __init__(self, dim: int):
        self.in_dim = self.out_dim = int(dim)

    def apply(self, x):
        if isinstance(x, np.ndarray) and x.shape == (self.in_dim,):
            return x
        return self._in(x)

    def adjoint(self, y):
        if isinstance(y, np.ndarray) and y.shape == (self.out_dim,):
            return y
        return self._out(y)

    def as_matrix(self):
        return np.eye(self.in_dim)

    def cost_units(self):
        return float(self.in_dim)


class DenseOp(LinearOp):
    """Matrix operator; the adjoint reuses the stored row-major array."""

    def __init__(self, matrix):
        self._m = np.ascontiguousarray(matrix, dtype=float)
        if self._m.ndim != 2:
            raise ValueError("DenseOp needs a 2-D matrix")
        self.out_dim, self.in_dim = self._m.shape

    @property
    def matrix(self):
        return self._m

    def apply(self, x):
        return self._m @ self._in(x)

    def adjoint(self, y):
        return self._m.T @ self._out(y)

    def as_matrix(self):
        return self._m.copy()


class RowBlockOp(LinearOp):
    """Contiguous row slice of a parent matrix, without copying it."""

    def __init__(self, parent, start: int, stop: int):
        parent = np.asarray(parent, dtype=float)
        if not (0 <= start < stop <= parent.shape[0]):
            raise ValueError(f"row range [{start}, {stop}) outside parent with "
                             f"{parent.shape[0]} rows")
        self._parent = parent
        self._rows = slice(start, stop)
        self.in_dim = parent.shape[1]
        self.out_dim = stop - start

    def apply(self, x):
        return self._parent[self._rows] @ self._in(x)

    def adjoint(self, y):
        return self._parent[self._rows].T @ self._out(y)

    def as_matrix(self):
        return self._parent[self._rows].copy()


class SelectOp(LinearOp):
    """Coordinate selection; the adjoint scatters into zeros."""

    def __init__(self, indices, in_dim: int):
        idx = np.asarray(indices, dtype=int)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("SelectOp needs a non-empty 1-D index set")
        if idx.min() < 0 or idx.max() >= in_dim:
            raise ValueError(f"indices out of range for in_dim={in_dim}")
        self._idx = idx
        self.in_dim = int(in_dim)
        self.out_dim = idx.size

    @property
    def indices(self):
        return self._idx

    def apply(self, x):
        return self._in(x)[self._idx]

    def adjoint(self, y):
        out = np.zeros(self.in_dim)
        np.add.at(out, self._idx, self._out(y))
        return out

    def as_matrix(self):
        m = np.zeros((self.out_dim, self.in_dim))
        m[np.arange(self.out_dim), self._idx] = 1.0
        return m

    def cost_units(self):
        return float(self.out_dim)


class InnerProductOp(LinearOp):
    """x -> (<x, v>,); the adjoint maps a scalar to scalar*v."""

    def __init__(self, vector):
        self._v = np.asarray(vector, dtype=float)
        if self._v.ndim != 1:
            raise ValueError("InnerProductOp needs a 1-D vector")
        self.in_dim = self._v.size
        self.out_dim = 1

    def apply(self, x):
        return np.array([self._v @ self._in(x)])

    def adjoint(self, y):
        return self._out(y)[0] * self._v

    def as_matrix(self):
        return self._v[None, :].copy()

    def cost_units(self):
        return 2.0 * self.in_dim


class CirculantOp(LinearOp):
    """Periodic convolution, 1-D or 2-D, applied through the FFT.

    The kernel is stored at full size with its center at index 0 (wrapped),
    so the DFT multipliers are computed once and reused bit-exactly by both
    directions and by the spectral Gram solver.
    """

    def __init__(self, kernel):
        k = np.asarray(kernel, dtype=float)
        if k.ndim not in (1, 2):
            raise ValueError("CirculantOp kernel must be 1-D or 2-D")
        self._kernel = k
        self.shape = k.shape
        self._mult = np.fft.rfftn(k)
        self.in_dim = self.out_dim = k.size

    @property
    def kernel(self):
        return self._kernel

    @property
    def multipliers(self):
        return self._mult

    def apply(self, x):
        X = self._in(x).reshape(self.shape)
        out = np.fft.irfftn(np.fft.rfftn(X) * self._mult, s=self.shape)
        return out.ravel()

    def adjoint(self, y):
        Y = self._out(y).reshape(self.shape)
        out = np.fft.irfftn(np.fft.rfftn(Y) * np.conj(self._mult), s=self.shape)
        return out.ravel()

    def as_matrix(self):
        n = self.in_dim
        m = np.empty((n, n))
        if self._kernel.ndim == 1:
            for j in range(n):
                m[:, j] = np.roll(self._kernel, j)
        else:
            j = 0
            for a in range(self.shape[0]):
                for b in range(self.shape[1]):
                    m[:, j] = np.roll(np.roll(self._kernel, a, 0), b, 1).ravel()
                    j += 1
        return m

    def cost_units(self):
        n = self.in_dim
        return 10.0 * n * max(1.0, np.log2(n))


class ScaledOp(LinearOp):
    def __init__(self, base: LinearOp, factor: float):
        self.base = base
        self.factor = float(factor)
        self.in_dim = base.in_dim
        self.out_dim = base.out_dim

    def apply(self, x):
        return self.factor * self.base.apply(x)

    def adjoint(self, y):
        return self.factor * self.base.adjoint(y)

    def as_matrix(self):
        return self.factor * self.base.as_matrix()

    def cost_units(self):
        return self.base.cost_units() + self.out_dim


def operator_norm(op: LinearOp, iters: int = 200, tol: float = 1e-8,
                  seed: int = 0) -> float:
    """Spectral norm ||L|| by power iteration on L^T L."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    v = rng.standard_normal(op.in_dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = op.adjoint(op.apply(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        w /= nw
        if np.linalg.norm(w - v) < tol:
            v, lam = w, nw
            break
        v, lam = w, nw
    return float(np.sqrt(lam))


def stacked_operator_norm(ops, iters: int = 200, tol: float = 1e-8,
                          seed: int = 0) -> float:
    """Norm of x -> (L_1 x, ..., L_p x), i.e. sqrt(lambda_max(sum L_k^T L_k))."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    n = ops[0].in_dim
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = np.zeros(n)
        for op in ops:
            w += op.adjoint(op.apply(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        w /= nw
        if np.linalg.norm(w - v) < tol:
            v, lam = w, nw
            break
        v, lam = w, nw
    return float(np.sqrt(lam))


# ---------------------------------------------------------------------------
# Gram solvers: (shift*Id + sum_k L_k^T L_k)^{-1}
# ---------------------------------------------------------------------------

class GramSolver:
    """Precomputed inverse of shift*Id + sum_k L_k^T L_k."""

    shift: float
    dim: int
    strategy: str

    def solve(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cost_units(self) -> float:
        raise NotImplementedError

    def _in(self, x):
        return _check_vec(f"gram({self.strategy}) input", x, self.dim)


class ScaledIdentityGram(GramSolver):
    strategy = "scaled-identity"

    def __init__(self, shift: float, p: int, dim: int):
        self.shift = float(shift)
        self.dim = int(dim)
        self._factor = 1.0 / (shift + p)

    def solve(self, x):
        return self._in(x) * self._factor

    def cost_units(self):
        return float(self.dim)


class SpectralGram(GramSolver):
    """Pointwise DFT division by shift + sum |F(kernel_k)|^2."""

    strategy = "spectral"

    def __init__(self, shift: float, ops):
        self.shift = float(shift)
        self.shape = ops[0].shape
        self.dim = ops[0].in_dim
        mult = np.full(np.fft.rfftn(np.zeros(self.shape)).shape, float(shift))
        for op in ops:
            mult = mult + np.abs(op.multipliers) ** 2
        self._mult = mult

    def solve(self, x):
        X = self._in(x).reshape(self.shape)
        out = np.fft.irfftn(np.fft.rfftn(X) / self._mult, s=self.shape)
        return out.ravel()

    def cost_units(self):
        n = self.dim
        return 10.0 * n * max(1.0, np.log2(n))


class CholeskyGram(GramSolver):
    """Dense assembly factored once; solves reuse the factor."""

    strategy = "cholesky"

    def __init__(self, shift: float, ops):
        self.shift = float(shift)
        self.dim = ops[0].in_dim
        g = shift * np.eye(self.dim)
        for op in ops:
            m = op.as_matrix()
            g += m.T @ m
        try:
            self._factor = scipy.linalg.cho_factor(g, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise GramBuildError(f"assembled Gram matrix is not positive "
                                 f"definite: {exc}") from exc

    def solve(self, x):
        return scipy.linalg.cho_solve(self._factor, self._in(x))

    def cost_units(self):
        return 2.0 * self.dim ** 2


def build_gram_solver(shift, ops) -> GramSolver:
    """Pick the cheapest exact strategy the operator family allows.

    All identities -> scaled identity; all circulants on one grid ->
    spectral division; anything else -> dense Cholesky.
    """
    if shift not in (1, 2):
        raise ValueError(f"shift must be 1 or 2, got {shift!r}")
    ops = list(ops)
    if not ops:
        raise ValueError("need at least one operator")
    dims = {op.in_dim for op in ops}
    if len(dims) != 1:
        raise GramBuildError(f"operators disagree on the primal dimension: "
                             f"{sorted(dims)}")
    dim = ops[0].in_dim
    if all(isinstance(op, IdentityOp) for op in ops):
        return ScaledIdentityGram(shift, len(ops), dim)
    if (all(isinstance(op, CirculantOp) for op in ops)
            and len({op.shape for op in ops}) == 1):
        return SpectralGram(shift, ops)
    return CholeskyGram(shift, ops)


# ---------------------------------------------------------------------------
# Subspace projections used by the splitting frameworks
# ---------------------------------------------------------------------------

def project_onto_graph(gram: GramSolver, x, ys, ops):
    """Orthogonal projection of (x, y_1..y_p) onto {(s, L_1 s, ..., L_p s)}.

    Returns (s, [L_k s]).  ``gram`` must be built from ``ops`` with shift 1.
    """
    if gram.shift != 1:
        raise ValueError("graph projection needs a shift-1 Gram solver")
    acc = np.asarray(x, dtype=float).copy()
    for yk, op in zip(ys, ops):
        acc += op.adjoint(yk)
    s = gram.solve(acc)
    return s, [op.apply(s) for op in ops]


def project_anchor_coupling(gram: GramSolver, x1, xs, ys, ops):
    """Projection onto the graph of the anchor coupling map.

    The coupling sends (x_1, ..., x_{p+1}) to (L_k x_1 - x_{k+1})_k, tying
    every agent to the first one.  Inputs are the anchor ``x1``, the agent
    list ``xs`` (length p) and the auxiliary list ``ys`` (length p); the
    output is the pair of lists (primal components R_1..R_{p+1}, coupling
    components R_{p+2}..R_{2p+1}).  ``gram`` must use shift 2.
    """
    if gram.shift != 2:
        raise ValueError("anchor-coupling projection needs a shift-2 Gram solver")
    p = len(ops)
    if len(xs) != p or len(ys) != p:
        raise DimensionMismatch(f"expected {p} agent and coupling vectors, "
                                f"got {len(xs)} and {len(ys)}")
    acc = 2.0 * np.asarray(x1, dtype=float)
    for k in range(p):
        acc += ops[k].adjoint(xs[k] + ys[k])
    q = gram.solve(acc)
    primal = [q]
    dual = []
    for k in range(p):
        lq = ops[k].apply(q)
        primal.append(0.5 * (lq + xs[k] - ys[k]))
        dual.append(0.5 * (lq - xs[k] + ys[k]))
    return primal, dual
