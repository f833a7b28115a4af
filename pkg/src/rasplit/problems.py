"""Seeded builders for the four benchmark problems, at configurable scale.

Every builder is a pure function of its scale parameters and a 64-bit
seed: each random data field draws from its own counter-based stream
(field ids below), so instances are identical across runs and platforms.

Field ids per experiment kind:
  signal : 1 plateau levels, 2 blur widths, 3 observation noise
  lasso  : 1 design matrix, 2 ground truth, 3 observation noise
  hinge  : 1 features, 2 labels
  phase  : 1 phantom, 2 per-observation noise (sub-keyed by k),
           3 spectrum-phase noise
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import InclusionProblem, VIProblem, run
from .linops import (CirculantOp, IdentityOp, InnerProductOp, RowBlockOp,
                     SelectOp)
from .resolvents import (ProjBox, ProxDistInterval, ProxHinge, ProxNorm,
                         ProxQuadratic, ResolventHardClip,
                         ResolventMeanConstraint, ResolventPhase,
                         ResolventSoftClip, phase_residual_op, project_box,
                         zero_operator)


class ReferenceUnconverged(RuntimeError):
    """The deterministic reference run hit its iteration cap."""

    def __init__(self, iterations, residual, last):
        self.iterations = iterations
        self.residual = residual
        self.last = last
        super().__init__(f"reference run did not converge within "
                         f"{iterations} iterations "
                         f"(relative change {residual:.3e})")


def _stream(seed: int, fid: int, sub: int = 0) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, (fid << 32) | sub],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class Experiment:
    """A built problem instance plus the pieces tests and the CLI need."""

    kind: str
    problem: InclusionProblem
    ground_truth: np.ndarray | None = None
    objective: object = None            # callable on R^N for minimization kinds
    coercivity_bound: object = None     # callable lower bound, when known
    vi: VIProblem | None = None
    meta: dict = field(default_factory=dict)

    @property
    def is_minimization(self):
        return self.objective is not None


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def gaussian_kernel_1d(n: int, std: float) -> np.ndarray:
    """Normalized periodic Gaussian kernel centered at index 0."""
    d = np.minimum(np.arange(n), n - np.arange(n)).astype(float)
    k = np.exp(-0.5 * (d / std) ** 2)
    return k / k.sum()


def gaussian_kernel_2d(side: int, std: float) -> np.ndarray:
    k1 = gaussian_kernel_1d(side, std)
    k2 = np.outer(k1, k1)
    return k2 / k2.sum()


def uniform_kernel_2d(side: int, length: int, axis: int) -> np.ndarray:
    """Centered uniform line kernel along one axis (0 vertical, 1 horizontal).

    Lengths exceeding the grid are rescaled proportionally to the 256-pixel
    reference resolution.
    """
    if length > side:
        length = max(2, round(length * side / 256))
    k = np.zeros((side, side))
    offs = (np.arange(length) - (length - 1) // 2) % side
    if axis == 0:
        k[offs, 0] = 1.0 / length
    else:
        k[0, offs] = 1.0 / length
    return k


# ---------------------------------------------------------------------------
# Signal restoration
# ---------------------------------------------------------------------------

def piecewise_constant_signal(n: int, seed: int, plateaus: int = 6) -> np.ndarray:
    levels = _stream(seed, 1).uniform(0.0, 1.0, size=plateaus)
    edges = np.linspace(0, n, plateaus + 1).astype(int)
    x = np.empty(n)
    for i in range(plateaus):
        x[edges[i]:edges[i + 1]] = levels[i]
    return x


def build_signal_restoration(n: int = 1000, m: int = 10, seed: int = 0,
                             alpha: float = 0.05, noise: float = 0.1,
                             margin: float = 0.07) -> Experiment:
    """Recover a piecewise-constant signal from blurred noisy observations.

    Each observation is a periodic Gaussian blur (width drawn per
    observation from [20, 40], rescaled with n/1000) plus bounded noise.
    The data terms are coordinatewise distances to intervals of halfwidth
    ``margin`` around the observed samples, grouped per observation, and
    the regularizer is alpha times the Euclidean norm.
    """
    xbar = piecewise_constant_signal(n, seed)
    stds = _stream(seed, 2).uniform(20.0, 40.0, size=m) * (n / 1000.0)
    stds = np.maximum(stds, 1.0)
    blocks = []
    intervals = []
    noise_rng = _stream(seed, 3)
    for l in range(m):
        op = CirculantOp(gaussian_kernel_1d(n, stds[l]))
        r = op.apply(xbar) + noise_rng.uniform(-noise, noise, size=n)
        lo, hi = r - margin, r + margin
        intervals.append((lo, hi))
        blocks.append((ProxDistInterval(lo, hi), op))
    problem = InclusionProblem(ProxNorm(n, weight=alpha), blocks)

    def objective(x):
        total = alpha * np.linalg.norm(x)
        for (lo, hi), (_, op) in zip(intervals, blocks):
            t = op.apply(x)
            total += float(np.maximum(np.maximum(lo - t, t - hi), 0.0).sum())
        return total

    return Experiment(
        kind="signal", problem=problem, ground_truth=xbar,
        objective=objective,
        coercivity_bound=lambda x: alpha * np.linalg.norm(x),
        meta={"n": n, "m": m, "seed": seed, "alpha": alpha,
              "blur_stds": stds})


# ---------------------------------------------------------------------------
# Overlapping group lasso
# ---------------------------------------------------------------------------

def lasso_groups(n: int, q: int):
    """Index groups of length 100 with stride 90 (overlap 10), the last
    group trimmed to the signal length.  They must cover {0..n-1}."""
    groups = []
    for k in range(q):
        start = 90 * k
        stop = min(start + 100, n)
        if start >= stop:
            raise ValueError(f"group {k + 1} is empty for n={n}")
        groups.append(np.arange(start, stop))
    covered = np.zeros(n, dtype=bool)
    for g in groups:
        covered[g] = True
    if not covered.all():
        raise ValueError(f"groups do not cover all {n} coordinates "
                         f"(need n <= 90*q + 10)")
    return groups


def build_group_lasso(m: int = 1200, n: int = 3610, q: int = 40,
                      seed: int = 0, data_blocks: int = 30) -> Experiment:
    """Least squares split into row blocks plus overlapping group norms.

    The design matrix has unit-mean entries with variance 10, the ground
    truth is uniform on [0, 10], and observations carry centered Gaussian
    noise with variance 0.1.  The quadratic weight is 5/q^2 and each group
    norm is weighted 1/q; the standalone term of the inclusion is the zero
    operator.
    """
    if m % data_blocks:
        raise ValueError(f"m={m} must be divisible by {data_blocks} row blocks")
    rows = m // data_blocks
    alpha = 5.0 / q ** 2
    # second Gaussian parameter read as the standard deviation throughout
    a_mat = 1.0 + 10.0 * _stream(seed, 1).standard_normal((m, n))
    xbar = _stream(seed, 2).uniform(0.0, 10.0, size=n)
    b = a_mat @ xbar + 0.1 * _stream(seed, 3).standard_normal(m)
    groups = lasso_groups(n, q)

    blocks = []
    for k in range(data_blocks):
        sl = slice(rows * k, rows * (k + 1))
        blocks.append((ProxQuadratic(alpha, b[sl]),
                       RowBlockOp(a_mat, sl.start, sl.stop)))
    for g in groups:
        blocks.append((ProxNorm(g.size, weight=1.0 / q), SelectOp(g, n)))
    problem = InclusionProblem(zero_operator(n), blocks)

    def objective(x):
        fit = 0.5 * alpha * float(np.sum((a_mat @ x - b) ** 2))
        reg = sum(np.linalg.norm(x[g]) for g in groups) / q
        return fit + reg

    return Experiment(
        kind="lasso", problem=problem, ground_truth=xbar,
        objective=objective,
        coercivity_bound=lambda x: np.linalg.norm(x) / (q * n),
        meta={"m": m, "n": n, "q": q, "seed": seed, "alpha": alpha,
              "design": a_mat, "observations": b, "groups": groups})


# ---------------------------------------------------------------------------
# Hinge-loss classification
# ---------------------------------------------------------------------------

def build_hinge_svm(n: int = 1500, p: int = 750, seed: int = 0,
                    alpha: float = 1.0) -> Experiment:
    """Support vector machine with averaged hinge terms and Tikhonov term.

    Feature entries are Gaussian with mean 100 and standard deviation 10,
    labels uniform on {-1, 1}.  All block maps are identities, so the
    averaged and anchored identity couplings apply.
    """
    feats = 100.0 + 10.0 * _stream(seed, 1).standard_normal((p, n))
    labels = np.where(_stream(seed, 2).integers(0, 2, size=p) == 0, -1, 1)
    blocks = [(ProxHinge(int(labels[k]), feats[k], weight=1.0 / p),
               IdentityOp(n)) for k in range(p)]
    problem = InclusionProblem(ProxQuadratic(alpha, np.zeros(n)), blocks)

    def objective(x):
        margins = 1.0 - labels * (feats @ x)
        return (0.5 * alpha * float(x @ x)
                + float(np.maximum(margins, 0.0).sum()) / p)

    return Experiment(
        kind="hinge", problem=problem, objective=objective,
        coercivity_bound=lambda x: 0.5 * alpha * float(x @ x),
        meta={"n": n, "p": p, "seed": seed, "alpha": alpha,
              "features": feats, "labels": labels})


# ---------------------------------------------------------------------------
# Image reconstruction from phase
# ---------------------------------------------------------------------------

def synthetic_phantom(side: int, seed: int) -> np.ndarray:
    """Smooth seeded background with a few hard-edged rectangles, in
    [0, 255]."""
    rng = _stream(seed, 1)
    yy, xx = np.meshgrid(np.linspace(0, 1, side), np.linspace(0, 1, side),
                         indexing="ij")
    img = np.zeros((side, side))
    for _ in range(3):
        cy, cx = rng.uniform(0.2, 0.8, size=2)
        w = rng.uniform(0.15, 0.4)
        amp = rng.uniform(60.0, 160.0)
        img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * w ** 2))
    for _ in range(2):
        y0, x0 = rng.uniform(0.1, 0.6, size=2)
        h, w = rng.uniform(0.15, 0.3, size=2)
        level = rng.uniform(80.0, 200.0)
        box = ((yy >= y0) & (yy <= y0 + h) & (xx >= x0) & (xx <= x0 + w))
        img[box] = level
    return np.clip(img + 30.0, 0.0, 255.0).ravel()


def read_pgm(path) -> tuple[np.ndarray, tuple[int, int]]:
    """Read a binary PGM (P5, maxval 255) into a flat float array."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    i = 0
    while len(tokens) < 4:
        if data[i:i + 1] == b"#":
            i = data.index(b"\n", i) + 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if j > i:
            tokens.append(data[i:j])
        i = j + 1
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM file: magic {tokens[0]!r}")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if maxval != 255:
        raise ValueError(f"only maxval 255 is supported, got {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height,
                           offset=i)
    return pixels.astype(float), (height, width)


def _soft_saturation(level):
    def f(t):
        return level * np.maximum(0.0, t) / (level + np.abs(t))
    return f


def build_phase_recon(side: int = 32, seed: int = 0, image=None,
                      consistent: bool = False) -> Experiment:
    """Nonlinear image recovery: clipped blurred observations, a mean-value
    constraint, and the DFT phase of a perturbed copy of the image.

    The observation model is r_k = F_k(L_k xbar + w_k) with firmly
    nonexpansive F_k; the monotone inclusion relaxes the (generally
    inconsistent) system.  ``consistent=True`` zeroes every noise vector,
    making the ground truth an exact solution.  ``image`` may be a flat
    array of length side**2 or a path to a binary PGM.
    """
    shape = (side, side)
    npix = side * side
    if image is None:
        xbar = synthetic_phantom(side, seed)
    elif isinstance(image, (str, bytes)) or hasattr(image, "__fspath__"):
        xbar, img_shape = read_pgm(image)
        if img_shape != shape:
            raise ValueError(f"image is {img_shape}, expected {shape}")
    else:
        xbar = np.asarray(image, dtype=float).ravel()
        if xbar.size != npix:
            raise ValueError(f"image has {xbar.size} pixels, expected {npix}")
    xbar = project_box(0.0, 255.0, xbar)

    specs = []     # (op, F_k map, noise halfwidth, resolvent factory)
    for k in range(20):
        op = CirculantOp(gaussian_kernel_2d(side, 3.0))
        specs.append((op, lambda t: np.clip(t, 0.0, 60.0), 50.0,
                      lambda r: ResolventHardClip(r, 60.0)))
    for k in range(20):
        op = CirculantOp(uniform_kernel_2d(side, 20, axis=0))
        specs.append((op, _soft_saturation(90.0), 70.0,
                      lambda r: ResolventSoftClip(90.0, data=r)))
    for k in range(20):
        op = CirculantOp(uniform_kernel_2d(side, 24, axis=1))
        specs.append((op, _soft_saturation(90.0), 90.0,
                      lambda r: ResolventSoftClip(90.0, data=r)))

    blocks = []
    maps = []
    data = []
    ops = []
    for k, (op, fk, halfwidth, factory) in enumerate(specs):
        w = (np.zeros(npix) if consistent
             else _stream(seed, 2, sub=k).uniform(-halfwidth, halfwidth,
                                                  size=npix))
        r = fk(op.apply(xbar) + w)
        blocks.append((factory(r), op))
        maps.append(fk)
        data.append(r)
        ops.append(op)

    # the mean pixel value is known exactly: the aggregate observation is
    # the computed inner product with the all-ones vector
    mean_op = InnerProductOp(np.ones(npix))
    r_mean = mean_op.apply(xbar)
    blocks.append((ResolventMeanConstraint(float(r_mean[0])), mean_op))
    maps.append(lambda t: t)
    data.append(r_mean)
    ops.append(mean_op)

    w62 = (np.zeros(npix) if consistent
           else _stream(seed, 3).uniform(-3.0, 3.0, size=npix))
    theta = np.angle(np.fft.fftn((xbar + w62).reshape(shape))).ravel()
    phase_map = lambda t: phase_residual_op(theta, t, shape)
    # consistent data records the numerically evaluated residual at the
    # ground truth so the inequality holds to roundoff; the noisy model
    # targets the exact constraint set (zero residual)
    r_phase = phase_map(xbar) if consistent else np.zeros(npix)
    blocks.append((ResolventPhase(theta, shape, data=r_phase),
                   IdentityOp(npix)))
    maps.append(phase_map)
    data.append(r_phase)
    ops.append(IdentityOp(npix))

    problem = InclusionProblem(ProjBox(0.0, 255.0, npix), blocks)
    vi = VIProblem(lo=np.zeros(npix), hi=np.full(npix, 255.0),
                   weights=tuple(1.0 for _ in blocks), maps=tuple(maps),
                   ops=tuple(ops), data=tuple(data))
    return Experiment(
        kind="phase", problem=problem, ground_truth=xbar, vi=vi,
        meta={"side": side, "seed": seed, "mean_value": float(xbar.mean()),
              "consistent": consistent, "shape": shape})


BUILDERS = {
    "signal": build_signal_restoration,
    "lasso": build_group_lasso,
    "hinge": build_hinge_svm,
    "phase": build_phase_recon,
}

DESK_SCALES = {
    "signal": {"n": 256, "m": 5},
    "lasso": {"m": 60, "n": 181, "q": 2},
    "hinge": {"n": 60, "p": 30},
    "phase": {"side": 32},
}


def build_experiment(kind: str, seed: int = 0, desk: bool = True,
                     **params) -> Experiment:
    """Build a benchmark instance; desk scale unless overridden."""
    if kind not in BUILDERS:
        raise ValueError(f"unknown experiment kind {kind!r}; "
                         f"choose from {sorted(BUILDERS)}")
    merged = dict(DESK_SCALES[kind]) if desk else {}
    merged.update(params)
    return BUILDERS[kind](seed=seed, **merged)


# ---------------------------------------------------------------------------
# Reference solutions
# ---------------------------------------------------------------------------

def reference_solution(problem, tol_db: float = -160.0,
                       max_iter: int = 10 ** 6, gamma: float = 1.0,
                       relaxation: float = 1.9) -> np.ndarray:
    """Deterministic full-activation run until the successive-iterate
    relative change drops below 10**(tol_db/20)."""
    if tol_db > -120.0:
        raise ValueError(f"tol_db must be at most -120 dB, got {tol_db}")
    threshold = 10.0 ** (tol_db / 20.0)
    res = run(problem, "f1", gamma=gamma, relaxation=relaxation,
              max_iter=max_iter, stop_rel_change=threshold)
    if res.stopped != "converged":
        raise ReferenceUnconverged(res.counters.iterations,
                                   res.final_rel_change or math.inf, res.x)
    return res.x


# ---------------------------------------------------------------------------
# Coercivity witnesses
# ---------------------------------------------------------------------------

@dataclass
class CoercivityReport:
    kind: str
    conditions: list  # (name, passed, detail) triples

    @property
    def all_passed(self):
        return all(ok for _, ok, _ in self.conditions)

    def __str__(self):
        lines = [f"coercivity report [{self.kind}]"]
        for name, ok, detail in self.conditions:
            lines.append(f"  {'PASS' if ok else 'FAIL'} {name}: {detail}")
        return "\n".join(lines)


_REAL_VALUED_KINDS = (ProxNorm, ProxQuadratic, ProxHinge, ProxDistInterval)


def check_coercivity_witness(exp: Experiment, samples: int = 50,
                             seed: int = 123) -> CoercivityReport:
    """Verify the growth witness of a minimization instance.

    Checks that the known coercive lower bound stays below the objective
    on seeded sample points across several magnitudes, and that every
    block term is real-valued (finite everywhere).  Report only; never
    raises on failure.
    """
    if not exp.is_minimization:
        raise ValueError(f"{exp.kind!r} is not a minimization instance")
    conditions = []

    if exp.coercivity_bound is None:
        conditions.append(("growth-witness", False,
                           "no known coercive lower bound"))
    else:
        rng = _stream(seed, 9)
        n = exp.problem.n
        worst = math.inf
        ok = True
        for radius in (1.0, 10.0, 100.0, 1e3, 1e4):
            for _ in range(max(1, samples // 5)):
                d = rng.standard_normal(n)
                d *= radius / np.linalg.norm(d)
                gap = exp.objective(d) - exp.coercivity_bound(d)
                worst = min(worst, gap)
                if gap < -1e-9 * (1.0 + abs(exp.coercivity_bound(d))):
                    ok = False
        conditions.append(("growth-witness", ok,
                           f"min(objective - bound) = {worst:.3e} over "
                           f"{samples} samples"))
        grows = exp.coercivity_bound(np.full(n, 1e6 / math.sqrt(n))) > 1e3
        conditions.append(("bound-coercive", bool(grows),
                           "lower bound diverges along scaled rays"))

    real_valued = all(isinstance(bk, _REAL_VALUED_KINDS)
                      for bk in exp.problem.resolvents)
    conditions.append(("blocks-real-valued", real_valued,
                       "every block term is finite everywhere"
                       if real_valued else
                       "a block term can take the value +inf"))
    if exp.kind == "lasso":
        groups = exp.meta["groups"]
        covered = np.zeros(exp.problem.n, dtype=bool)
        for g in groups:
            covered[g] = True
        conditions.append(("groups-cover", bool(covered.all()),
                           f"{int(covered.sum())}/{exp.problem.n} "
                           f"coordinates covered"))
    return CoercivityReport(exp.kind, conditions)
