"""The space of unimodular lattices SL_d(R)/SL_d(Z).

A point is represented by a determinant +-1 basis matrix (columns generate
the lattice) together with an LLL-reduced basis of the same lattice and
the integer change of basis relating them.  Reduction is applied at every
random-walk step so representatives stay numerically tame over long runs.

Provides exact shortest vectors (Fincke-Pohst enumeration seeded by the
reduced basis), membership in the Mahler sets K_eps, Siegel lattice-point
counts, the cusp height built from wedge norms of basis subsets, and the
random-walk harnesses checking its contraction under averaging.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import as_square, weyl_interior_vector
from .measures import GroupMeasure, ConvolutionCapError, convolution_support, sample_indices
from .rng import substream


class LatticeError(RuntimeError):
    pass


class ConditioningError(LatticeError):
    """Basis too ill-conditioned to reduce or enumerate reliably."""


class CountCapError(LatticeError):
    """Lattice-point enumeration exceeded the configured cap."""


class ContractionUnverified(LatticeError):
    """A recurrence experiment was requested without a verified contraction."""


@dataclass
class UnimodularLattice:
    """Lattice g Z^d with |det g| = 1; columns of ``basis`` generate it."""

    basis: np.ndarray
    reduced: np.ndarray
    transform: np.ndarray  # integer, det +-1: reduced = basis @ transform
    _shortest: dict = field(default_factory=dict, repr=False)
    _rfactor: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def shortest(self, norm: str = "sup"):
        """Cached exact shortest nonzero vector as (vector, length)."""
        if norm not in self._shortest:
            self._shortest[norm] = shortest_vector(self, norm)
        return self._shortest[norm]

    def rfactor(self) -> np.ndarray:
        """Upper-triangular R with positive diagonal, reduced = Q R."""
        if self._rfactor is None:
            b = self.reduced
            if self.dim == 2:
                n1 = float(np.hypot(b[0, 0], b[1, 0]))
                r12 = float(b[:, 0] @ b[:, 1]) / n1
                sq = float(b[:, 1] @ b[:, 1]) - r12 * r12
                r22 = np.sqrt(max(sq, 0.0))
                r = np.array([[n1, r12], [0.0, r22]])
            else:
                _, r = np.linalg.qr(b)
                signs = np.sign(np.diag(r))
                signs[signs == 0] = 1.0
                r = signs[:, None] * r
            if np.any(np.diag(r) <= 0.0) or not np.all(np.isfinite(r)):
                raise ConditioningError("reduced basis degenerate in enumeration")
            self._rfactor = r
        return self._rfactor


def standard_lattice(d: int) -> UnimodularLattice:
    eye = np.eye(d)
    return UnimodularLattice(eye, eye.copy(), np.eye(d, dtype=np.int64))


def _gso(b: np.ndarray):
    d = b.shape[1]
    q = np.zeros_like(b)
    mu = np.zeros((d, d))
    norms = np.zeros(d)
    for i in range(d):
        v = b[:, i].copy()
        for j in range(i):
            mu[i, j] = (b[:, i] @ q[:, j]) / norms[j]
            v -= mu[i, j] * q[:, j]
        q[:, i] = v
        norms[i] = v @ v
        if norms[i] <= 0.0 or not np.isfinite(norms[i]):
            raise ConditioningError("Gram-Schmidt collapsed; basis near-singular")
    return q, mu, norms


def lll_reduce(
    basis, delta: float = 0.99, det_tol: float = 1e-6, renormalize: bool = True
) -> UnimodularLattice:
    """LLL reduction (Lovasz parameter ``delta``) with integral transform.

    The input must be unimodular up to ``det_tol``; it is rescaled to
    determinant exactly +-1 before reduction.  Callers that construct the
    basis from exactly unimodular factors pass ``renormalize=False``: the
    floating determinant of an ill-conditioned (deep cusp) basis is too
    noisy to validate against, and repeated renormalization by a noisy
    determinant would corrupt the lattice.
    """
    b = as_square(basis)
    d = b.shape[0]
    if renormalize:
        det = np.linalg.det(b)
        if abs(det) <= 1e-12:
            raise ConditioningError("basis is numerically singular")
        if abs(abs(det) - 1.0) >= det_tol:
            raise ValueError(f"basis determinant {det!r} is not within {det_tol} of +-1")
        b = b / abs(det) ** (1.0 / d)

    work = b.copy()
    # exact big-int transform: multipliers can exceed int64 deep in the cusp
    t = np.eye(d, dtype=object)
    q, mu, norms = _gso(work)
    k = 1
    iterations = 0
    max_iterations = 10_000 * d * d
    while k < d:
        iterations += 1
        if iterations > max_iterations:
            raise ConditioningError("LLL failed to terminate; basis ill-conditioned")
        for j in range(k - 1, -1, -1):
            if not np.isfinite(mu[k, j]):
                raise ConditioningError("non-finite Gram-Schmidt coefficient")
            r = int(np.rint(mu[k, j]))
            if r != 0:
                work[:, k] -= r * work[:, j]
                t[:, k] -= r * t[:, j]
                mu[k, :j] -= r * mu[j, :j]
                mu[k, j] -= r
        if norms[k] >= (delta - mu[k, k - 1] ** 2) * norms[k - 1]:
            k += 1
        else:
            work[:, [k - 1, k]] = work[:, [k, k - 1]]
            t[:, [k - 1, k]] = t[:, [k, k - 1]]
            q, mu, norms = _gso(work)
            k = max(k - 1, 1)
    try:
        t = t.astype(np.int64)
    except OverflowError:
        pass  # keep exact object integers for extreme transforms
    return UnimodularLattice(basis=b, reduced=work, transform=t)


def _enumeration_bound(r_diag: np.ndarray, radius: float) -> float:
    return float(np.prod(1.0 + 2.0 * radius / r_diag))


def _integer_pairs_2d(r: np.ndarray, radius: float):
    """Integer (z1, z2) ranges with |R z|_2 <= radius: (z2, lo1, hi1) arrays."""
    r11, r12, r22 = r[0, 0], r[0, 1], r[1, 1]
    z2max = int(np.floor(radius / r22 + 1e-12))
    z2 = np.arange(-z2max, z2max + 1, dtype=np.int64)
    rem = radius * radius - (r22 * z2.astype(float)) ** 2
    h = np.sqrt(np.maximum(rem, 0.0))
    shift = r12 * z2.astype(float)
    lo = np.ceil((-h - shift) / r11 - 1e-12).astype(np.int64)
    hi = np.floor((h - shift) / r11 + 1e-12).astype(np.int64)
    return z2, lo, hi


def _enumerate_vectors(reduced: np.ndarray, radius: float, cap: int, bound_cap: float = 1e12):
    """Yield (z, v, |v|_2) over nonzero integer vectors with |v|_2 <= radius."""
    d = reduced.shape[0]
    q, r = np.linalg.qr(reduced)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    r = signs[:, None] * r
    r_diag = np.abs(np.diag(r))
    if np.any(r_diag <= 0.0) or not np.all(np.isfinite(r_diag)):
        raise ConditioningError("reduced basis degenerate in enumeration")
    if _enumeration_bound(r_diag, radius) > bound_cap:
        raise ConditioningError(
            "enumeration radius blowup: the search tree bound exceeds 1e12"
        )

    z = np.zeros(d, dtype=np.int64)
    partial = np.zeros(d + 1)  # squared norm accumulated from the bottom rows
    rad2 = radius * radius
    count = 0

    def rec(level):
        nonlocal count
        if level < 0:
            if np.any(z != 0):
                v = reduced @ z.astype(float)
                yield z.copy(), v, float(np.linalg.norm(v))
            return
        rem = rad2 - partial[level + 1]
        if rem < 0.0:
            return
        # row `level` of R: sum over j >= level of R[level, j] z_j
        shift = sum(r[level, j] * z[j] for j in range(level + 1, d))
        half = np.sqrt(rem)
        lo = int(np.ceil((-half - shift) / r[level, level] - 1e-12))
        hi = int(np.floor((half - shift) / r[level, level] + 1e-12))
        for zi in range(lo, hi + 1):
            count += 1
            if count > cap:
                raise CountCapError(f"enumeration exceeded the cap of {cap} nodes")
            z[level] = zi
            val = r[level, level] * zi + shift
            partial[level] = partial[level + 1] + val * val
            if partial[level] <= rad2 * (1.0 + 1e-12):
                yield from rec(level - 1)
        z[level] = 0

    yield from rec(d - 1)


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    for entry in v:
        if abs(entry) > 1e-12:
            return -v if entry < 0 else v
    return v


def _candidate_matrix_2d(x: UnimodularLattice, radius: float) -> np.ndarray:
    """All nonzero lattice vectors with Euclidean norm <= radius, as rows."""
    r = x.rfactor()
    if _enumeration_bound(np.diag(r), radius) > 1e7:
        raise ConditioningError("enumeration radius blowup in the planar fast path")
    z2, lo, hi = _integer_pairs_2d(r, radius)
    counts = np.maximum(hi - lo + 1, 0)
    total = int(counts.sum())
    if total == 0:
        return np.empty((0, 2))
    z2_rep = np.repeat(z2, counts)
    offsets = np.concatenate([np.arange(c) for c in counts])
    z1_rep = np.repeat(lo, counts) + offsets
    zs = np.stack([z1_rep, z2_rep], axis=1)
    zs = zs[np.any(zs != 0, axis=1)]
    return zs.astype(float) @ x.reduced.T


def shortest_vector(x: UnimodularLattice, norm: str = "sup"):
    """Exact shortest nonzero lattice vector in the sup or Euclidean norm.

    Enumeration is seeded by the reduced basis: its best vector gives the
    initial radius (scaled by sqrt(d) for the sup norm, since any sup-norm
    minimizer has Euclidean length at most sqrt(d) times its sup norm).
    """
    if norm not in ("sup", "euclid"):
        raise ValueError(f"unknown norm {norm!r}")
    b = x.reduced
    d = x.dim
    if norm == "euclid":
        seed = float(np.min(np.linalg.norm(b, axis=0)))
        radius = seed * (1.0 + 1e-12)
    else:
        seed = float(np.min(np.abs(b).max(axis=0)))
        radius = seed * np.sqrt(d) * (1.0 + 1e-12)

    if d == 2:
        cands = _candidate_matrix_2d(x, radius)
        if len(cands) == 0:
            raise LatticeError("enumeration returned no vectors; radius too small")
        lengths = (
            np.linalg.norm(cands, axis=1)
            if norm == "euclid"
            else np.abs(cands).max(axis=1)
        )
        best_len = float(lengths.min())
        best_vec = None
        best_key = None
        for i in np.nonzero(lengths <= best_len + 1e-15)[0]:
            v = _canonical_sign(cands[i])
            key = (
                sum(1 for t in v if abs(t) > 1e-12),
                tuple(round(float(t), 12) for t in v),
            )
            if best_key is None or key < best_key:
                best_key = key
                best_vec = v
        return best_vec, best_len

    best_vec = None
    best_len = np.inf
    best_key = None
    for _, v, l2 in _enumerate_vectors(b, radius, cap=10**7):
        length = l2 if norm == "euclid" else float(np.abs(v).max())
        v = _canonical_sign(v)
        # ties broken toward sparser, lexicographically smaller representatives
        key = (length, int(np.sum(np.abs(v) > 1e-12)), tuple(np.round(v, 12)))
        if length < best_len - 1e-15 or (abs(length - best_len) <= 1e-15 and key < best_key):
            best_len = length
            best_vec = v
            best_key = key
    if best_vec is None:
        raise LatticeError("enumeration returned no vectors; radius too small")
    return best_vec, float(best_len)


def mahler_member(x: UnimodularLattice, epsilon: float) -> bool:
    """Is every nonzero lattice vector of sup norm at least epsilon?

    Empty for epsilon > 1 by Minkowski's theorem, so this returns False
    there without enumerating.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if epsilon > 1.0:
        return False
    return x.shortest("sup")[1] >= epsilon


def siegel_count(x: UnimodularLattice, radius: float, cap: int = 10**7) -> int:
    """Number of nonzero lattice vectors of Euclidean norm <= radius."""
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    slack = radius * (1.0 + 1e-9)
    if x.dim == 2:
        r = x.rfactor()
        if _enumeration_bound(np.diag(r), slack) > cap:
            raise CountCapError(f"enumeration exceeded the cap of {cap} nodes")
        z2, lo, hi = _integer_pairs_2d(r, slack)
        total = int(np.maximum(hi - lo + 1, 0).sum())
        if total > cap:
            raise CountCapError(f"enumeration exceeded the cap of {cap} nodes")
        origin = int(np.any((z2 == 0) & (lo <= 0) & (hi >= 0)))
        return total - origin
    count = 0
    for _, _, l2 in _enumerate_vectors(x.reduced, slack, cap=cap):
        if l2 <= slack:
            count += 1
    return count


@dataclass(frozen=True)
class HeightSpec:
    """Parameters of the cusp height: scale epsilon, outer exponent delta,
    and the interior Weyl-chamber direction s0 fixing the grade exponents."""

    epsilon: float
    delta: float = 0.3
    s0: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if self.s0 is not None:
            s0 = tuple(float(v) for v in self.s0)
            object.__setattr__(self, "s0", s0)
            arr = np.asarray(s0)
            if np.any(np.diff(arr) >= 0.0):
                raise ValueError("s0 must be strictly decreasing")
            if abs(arr.sum()) > 1e-9:
                raise ValueError("s0 must be trace-zero")

    def s0_vector(self, d: int) -> np.ndarray:
        if self.s0 is None:
            return weyl_interior_vector(d)
        if len(self.s0) != d:
            raise ValueError(f"s0 has length {len(self.s0)}, lattice dimension is {d}")
        return np.asarray(self.s0)

    def grade_exponents(self, d: int):
        """(delta_i, delta_lambda_i) for grades i = 1..d-1.

        delta_i = (d - i) i and delta_lambda_i is the pairing of the top
        weight of the i-th wedge with s0, i.e. the partial sum of s0.
        With the default s0 this is i (d - i) / 2, so the per-monomial
        value is epsilon^2 * |v|^(-2 / (i (d - i))).
        """
        s0 = self.s0_vector(d)
        grades = np.arange(1, d)
        delta_i = (d - grades) * grades
        delta_lambda = np.cumsum(s0)[:-1]
        if np.any(delta_lambda <= 0.0):
            raise ValueError("s0 must make every partial sum positive (interior)")
        return delta_i.astype(float), delta_lambda


def margulis_height(x: UnimodularLattice, spec: HeightSpec) -> float:
    """Cusp height: the max over basis-subset wedges of the scaled norms.

    The supremum over all integral monomials is approximated by the wedges
    of the 2^d - 2 proper nonempty subsets of the reduced basis; this is
    within the LLL approximation factor of the true value, which is enough
    for the contraction and properness experiments.  Finite for SL_d since
    no nonzero monomial in an intermediate grade is fixed by the group.
    """
    d = x.dim
    delta_i, delta_lambda = spec.grade_exponents(d)
    gram = x.reduced.T @ x.reduced
    best = 0.0
    from itertools import combinations

    for i in range(1, d):
        expo_eps = delta_i[i - 1] / delta_lambda[i - 1]
        expo_norm = -1.0 / delta_lambda[i - 1]
        for subset in combinations(range(d), i):
            sub = gram[np.ix_(subset, subset)]
            gram_det = float(np.linalg.det(sub))
            gram_det = max(gram_det, 1e-300)  # roundoff guard near degeneracy
            phi = spec.epsilon**expo_eps * gram_det ** (0.5 * expo_norm)
            if phi > best:
                best = phi
    return float(best**spec.delta)


def margulis_height_profile(x: UnimodularLattice, spec: HeightSpec):
    """Per-subset contributions to the height: rows (subset, grade, phi)."""
    d = x.dim
    delta_i, delta_lambda = spec.grade_exponents(d)
    gram = x.reduced.T @ x.reduced
    from itertools import combinations

    labels, grades, phis = [], [], []
    for i in range(1, d):
        expo_eps = delta_i[i - 1] / delta_lambda[i - 1]
        expo_norm = -1.0 / delta_lambda[i - 1]
        for subset in combinations(range(d), i):
            sub = gram[np.ix_(subset, subset)]
            gram_det = max(float(np.linalg.det(sub)), 1e-300)
            labels.append("+".join(str(s) for s in subset))
            grades.append(i)
            phis.append(spec.epsilon**expo_eps * gram_det ** (0.5 * expo_norm))
    return np.array(labels), np.array(grades), np.array(phis)


# ---------------------------------------------------------------------------
# observables and walks


def parse_observable(spec: str, height: HeightSpec | None = None):
    """Observable from a compact string: ``height``, ``mahler:EPS``,
    ``siegel:R``, ``shortest:sup`` or ``shortest:euclid``."""
    name, _, arg = spec.partition(":")
    if name == "height":
        if height is None:
            raise ValueError("height observable requires a HeightSpec")
        return spec, lambda x: margulis_height(x, height)
    if name == "mahler":
        eps = float(arg)
        return spec, lambda x: float(mahler_member(x, eps))
    if name == "siegel":
        radius = float(arg)
        return spec, lambda x: float(siegel_count(x, radius))
    if name == "shortest":
        norm = arg or "sup"
        return spec, lambda x: x.shortest(norm)[1]
    raise ValueError(f"unknown observable {spec!r}")


@dataclass
class TrajectoryRecord:
    """Per-step observable values and running (Birkhoff) averages.

    Step 0 is the initial point; running averages at step k >= 1 are over
    steps 1..k (the initial point is not part of the empirical measure),
    and the step-0 slot repeats the step-0 value.
    """

    steps: np.ndarray
    values: dict[str, np.ndarray]
    running: dict[str, np.ndarray]

    def columns(self) -> dict[str, np.ndarray]:
        """Long-format columns (step, observable_name, value, running_avg)."""
        names = list(self.values)
        steps = np.concatenate([self.steps for _ in names])
        labels = np.concatenate([[n] * len(self.steps) for n in names])
        vals = np.concatenate([self.values[n] for n in names])
        runs = np.concatenate([self.running[n] for n in names])
        return {
            "step": steps,
            "observable_name": labels,
            "value": vals,
            "running_avg": runs,
        }


def _running_average(values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    out[0] = values[0]
    if len(values) > 1:
        out[1:] = np.cumsum(values[1:]) / np.arange(1, len(values))
    return out


def walk_simulate(
    mu: GroupMeasure,
    x0: UnimodularLattice,
    n_steps: int,
    observables,
    seed: int = 0,
    path=(),
) -> TrajectoryRecord:
    """Left random walk x <- g x with reduction at every step.

    ``observables`` is a sequence of (label, callable) pairs or compact
    strings understood by :func:`parse_observable`.  Identical
    (seed, path, config) reproduce the trajectory bit for bit.
    """
    if n_steps < 1:
        raise ValueError("need at least one step")
    obs = []
    for ob in observables:
        if isinstance(ob, str):
            obs.append(parse_observable(ob))
        else:
            obs.append(ob)
    idx = sample_indices(mu, n_steps, seed=seed, path=path)
    values = {label: np.empty(n_steps + 1) for label, _ in obs}
    x = x0
    for label, fn in obs:
        values[label][0] = fn(x)
    for step in range(1, n_steps + 1):
        g = mu.matrices[idx[step - 1]]
        try:
            x = lll_reduce(g @ x.reduced, renormalize=False)
        except ConditioningError as err:
            raise ConditioningError(f"reduction failed at step {step}: {err}") from err
        for label, fn in obs:
            values[label][step] = fn(x)
    running = {label: _running_average(vals) for label, vals in values.items()}
    return TrajectoryRecord(np.arange(n_steps + 1), values, running)


# ---------------------------------------------------------------------------
# contraction of the height under averaging, and recurrence


@dataclass
class ContractionFit:
    """Empirical Foster-Lyapunov fit A_mu^m(beta) <= a beta + b.

    ``b_hat`` is the largest averaged height over the low half of the
    sampled points.  The slope required on the mid tail (between the
    median and the 90th height percentile) estimates the true contraction
    rate; the reported ``a_hat`` is the midpoint between that estimate and
    1, so the pair (a_hat, b_hat) carries a margin, and the top decile is
    held out to validate it: ``violations`` lists sample indices where the
    averaged height exceeds a_hat * beta + b_hat beyond three standard
    errors.  An identity-like walk (averaged height = height) fails here:
    no slope below 1 with the fitted offset covers its extreme tail.
    ``ok`` means a_hat < 1 with zero violations.
    """

    a_hat: float
    b_hat: float
    violations: np.ndarray
    ok: bool
    beta: np.ndarray
    averaged: np.ndarray
    stderr: np.ndarray
    m: int

    @property
    def violation_count(self) -> int:
        return int(len(self.violations))


def _cusp_ladder_points(mu, d, count, seed, cusp_decades, burst_len, walk_burst):
    """Sample cloud mixing three families, round robin by index.

    (0) randomly rotated diagonal cusp excursions of random depth, probing
    properness in arbitrary directions; (1) walk bursts of the measure
    itself started at Z^d, probing its own trajectory (this is where a
    degenerate measure reveals its divergent direction); (2) cusp points
    followed by a short burst.
    """
    pts = []
    for i in range(count):
        rng = substream(seed, 11, i)
        family = i % 3
        if family == 1:
            x = standard_lattice(d)
            burst = int(rng.integers(0, walk_burst + 1))
        else:
            t = rng.uniform(0.0, cusp_decades * np.log(10.0))
            direction = weyl_interior_vector(d)
            direction = direction / np.abs(direction).max()
            a = np.diag(np.exp(t * direction))
            q, _ = np.linalg.qr(rng.normal(size=(d, d)))
            basis = q @ a
            x = lll_reduce(basis / abs(np.linalg.det(basis)) ** (1.0 / d))
            burst = 0 if family == 0 else int(rng.integers(0, burst_len + 1))
        for g in mu.matrices[rng.choice(mu.natoms, size=burst, p=mu.weights)]:
            x = lll_reduce(g @ x.reduced, renormalize=False)
        pts.append(x)
    return pts


def _averaged_height(mu, x, height, m, mc_trials, exact_cap, seed, tag):
    try:
        conv = convolution_support(mu, m, cap=exact_cap)
    except ConvolutionCapError:
        conv = None
    if conv is not None:
        vals = []
        for g, w in zip(conv.matrices, conv.weights):
            vals.append(w * margulis_height(lll_reduce(g @ x.reduced, renormalize=False), height))
        return float(np.sum(vals)), 0.0
    rng = substream(seed, 13, tag)
    samples = np.empty(mc_trials)
    for trial in range(mc_trials):
        idx = rng.choice(mu.natoms, size=m, p=mu.weights)
        y = x
        for i in idx:
            y = lll_reduce(mu.matrices[i] @ y.reduced, renormalize=False)
        samples[trial] = margulis_height(y, height)
    return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(mc_trials))


def contraction_fit(
    mu: GroupMeasure,
    height: HeightSpec,
    m: int,
    sample_points: int = 200,
    mc_trials: int = 200,
    seed: int = 0,
    points=None,
    cusp_decades: float = 12.0,
    burst_len: int = 8,
    walk_burst: int = 24,
    exact_cap: int = 4096,
) -> ContractionFit:
    """Fit contraction constants for the m-step averaged height.

    Sample points are spread along a cusp ladder (diagonal excursions up to
    ``cusp_decades`` decades, randomly rotated) followed by short walk
    bursts, so the fit probes genuinely high heights whatever the measure
    does.  The averaged height is computed exactly when atom_count**m is
    small, else by Monte Carlo with the reported standard errors.
    """
    if m < 1:
        raise ValueError("averaging length m must be at least 1")
    d = mu.dim
    if points is None:
        points = _cusp_ladder_points(
            mu, d, sample_points, seed, cusp_decades, burst_len, walk_burst
        )
    beta = np.array([margulis_height(x, height) for x in points])
    averaged = np.empty(len(points))
    stderr = np.empty(len(points))
    for i, x in enumerate(points):
        averaged[i], stderr[i] = _averaged_height(
            mu, x, height, m, mc_trials, exact_cap, seed, i
        )

    order = np.argsort(beta)
    q50 = beta[order[len(order) // 2]]
    q90 = beta[order[int(len(order) * 0.9)]] if len(order) >= 10 else beta[order[-1]]
    low = beta <= q50
    fit_set = (beta > q50) & (beta <= q90)
    b_hat = float(max(averaged[low].max(initial=0.0), 1e-9))
    if not np.any(fit_set):
        return ContractionFit(
            a_hat=np.inf,
            b_hat=b_hat,
            violations=np.arange(len(points)),
            ok=False,
            beta=beta,
            averaged=averaged,
            stderr=stderr,
            m=m,
        )
    a_fit = max(float(np.max((averaged[fit_set] - b_hat) / beta[fit_set])), 0.0)
    if a_fit >= 1.0:
        # no contraction on the fit range; report points beating even slope 1
        viol = np.nonzero(averaged - 3.0 * stderr > beta + b_hat)[0]
        return ContractionFit(a_fit, b_hat, viol, False, beta, averaged, stderr, m)
    a_hat = 0.5 * (1.0 + a_fit)  # margin for the held-out extreme tail
    viol = np.nonzero(averaged - 3.0 * stderr > a_hat * beta + b_hat)[0]
    ok = len(viol) == 0
    return ContractionFit(a_hat, b_hat, viol, ok, beta, averaged, stderr, m)


@dataclass
class RecurrenceTable:
    """Estimated mass of the recurrence set along the n-grid."""

    level: float  # height threshold defining the recurrence set
    delta: float
    fit: ContractionFit
    entries: list  # (n, estimated mass)

    def burn_in(self, target: float) -> int | None:
        """Smallest grid n from which the mass stays >= target."""
        good = None
        for n, mass in self.entries:
            if mass >= target:
                if good is None:
                    good = n
            else:
                good = None
        return good


def recurrence_experiment(
    mu: GroupMeasure,
    height: HeightSpec,
    delta: float,
    x0: UnimodularLattice,
    n_grid,
    mc_trials: int = 200,
    seed: int = 0,
    fit: ContractionFit | None = None,
    m: int = 4,
    **fit_kwargs,
) -> RecurrenceTable:
    """Estimate how much of the walk sits inside the recurrence set.

    The set is the sublevel set {beta <= (2 b + 2) / (delta (1 - a))} of
    the height, with (a, b) from a verified contraction fit; a failed fit
    is refused.  For each requested n the mass mu^{*n} * delta_{x0} of the
    set is estimated over ``mc_trials`` independent walks (trial words are
    shared along the grid: each trial is one long walk read at the grid
    times, which has the correct per-n marginal).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if fit is None:
        fit = contraction_fit(mu, height, m, seed=seed, mc_trials=mc_trials, **fit_kwargs)
    if not fit.ok:
        raise ContractionUnverified(
            f"contraction fit failed (a_hat={fit.a_hat!r}, "
            f"violations={fit.violation_count}); cannot build a recurrence set"
        )
    level = (2.0 * fit.b_hat + 2.0) / (delta * (1.0 - fit.a_hat))
    n_grid = sorted(int(n) for n in n_grid)
    if not n_grid or n_grid[0] < 1:
        raise ValueError("the n-grid must contain positive integers")
    n_max = n_grid[-1]
    grid_set = set(n_grid)
    hits = {n: 0 for n in n_grid}
    for trial in range(mc_trials):
        idx = sample_indices(mu, n_max, seed=seed, path=(17, trial))
        x = x0
        for step in range(1, n_max + 1):
            x = lll_reduce(mu.matrices[idx[step - 1]] @ x.reduced, renormalize=False)
            if step in grid_set:
                if margulis_height(x, height) <= level:
                    hits[step] += 1
    entries = [(n, hits[n] / mc_trials) for n in n_grid]
    return RecurrenceTable(level=level, delta=delta, fit=fit, entries=entries)
