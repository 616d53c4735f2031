"""Expansion certificates and expanding cones.

Certifies or refutes uniform expansion of a matrix random walk through the
integral criterion: the walk expands every direction iff for some word
length N the integral of log(|gv|/|v|) over N-step words is bounded below
by a positive constant uniformly on the unit sphere.  The sphere minimum
is located heuristically (dense random sampling plus Nelder-Mead descent
from the best samples), so a positive result is reported as
"PASS (heuristic min > 0)" while a negative witness is a proof of failure.

Also decides membership in the expanding cone of a block parabolic of
sl_d via a small linear program, and checks a-expansion of the unipotent
radical in exterior powers of the standard representation.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.stats import norm as _normal

from . import linalg
from .measures import GroupMeasure, sample_indices
from .rng import substream

CONE_TOL = 1e-9


def _rep_label(rep) -> str:
    if isinstance(rep, str):
        return rep
    return f"wedge:{rep[1]}"


def parse_rep(rep):
    """Normalize a representation spec: 'std', 'adj', 'wedge:k' or ('wedge', k)."""
    if isinstance(rep, tuple) and len(rep) == 2 and rep[0] == "wedge":
        return ("wedge", int(rep[1]))
    if rep in ("std", "standard"):
        return "std"
    if rep in ("adj", "adjoint"):
        return "adj"
    if isinstance(rep, str) and rep.startswith("wedge:"):
        return ("wedge", int(rep.split(":", 1)[1]))
    raise ValueError(f"unknown representation spec {rep!r}")


def rep_matrix(rep, g) -> np.ndarray:
    """Image of a group element in the chosen representation."""
    rep = parse_rep(rep)
    if rep == "std":
        return linalg.as_square(g)
    if rep == "adj":
        return linalg.adjoint_rep(g)
    return linalg.wedge_power(g, rep[1])


def fk_exponent_estimate(
    mu: GroupMeasure, v, n_steps: int, n_trials: int, seed: int = 0
) -> tuple[float, float]:
    """Monte-Carlo estimate of the a.s. growth rate of |g_n .. g_1 v|.

    Returns (mean slope, standard error of the mean) over ``n_trials``
    independent words of ``n_steps`` letters; the vector is renormalized
    every step so arbitrarily long products never overflow.  Trial i draws
    from substream (seed, i).
    """
    v = np.asarray(v, dtype=float).ravel()
    if np.linalg.norm(v) == 0.0:
        raise ValueError("the probed vector must be nonzero")
    if n_steps < 10:
        raise ValueError("need at least 10 steps for a slope estimate")
    if v.shape[0] != mu.dim:
        raise ValueError("vector dimension does not match the measure")

    idx = np.stack(
        [sample_indices(mu, n_steps, seed=seed, path=(i,)) for i in range(n_trials)]
    )
    vecs = np.tile(v / np.linalg.norm(v), (n_trials, 1))
    acc = np.zeros(n_trials)
    for step in range(n_steps):
        g = mu.matrices[idx[:, step]]
        vecs = np.einsum("tij,tj->ti", g, vecs)
        nrm = np.linalg.norm(vecs, axis=1)
        acc += np.log(nrm)
        vecs /= nrm[:, None]
    slopes = acc / n_steps
    stderr = float(slopes.std(ddof=1) / np.sqrt(n_trials)) if n_trials > 1 else 0.0
    return float(slopes.mean()), stderr


@dataclass
class ExpansionCertificate:
    """Result of the sphere-minimized integral criterion at word length N."""

    N: int
    C_lower: float
    mode: str  # "exact" | "monte-carlo"
    sphere_samples: int
    confidence: float  # exact mode forces 1.0, enforced below
    witness: np.ndarray
    rep: str

    def __post_init__(self):
        if (self.mode == "exact") != (self.confidence == 1.0):
            raise ValueError("mode=exact iff confidence=1")
        if not np.isfinite(self.C_lower):
            raise ValueError("certificate bound must be finite")

    @property
    def passed(self) -> bool:
        return self.C_lower > 0.0

    @property
    def verdict(self) -> str:
        if self.passed:
            return "PASS (heuristic min > 0)"
        return "FAIL (witness v with negative integral)"


class ConvolutionOverflow(ValueError):
    """Exact word enumeration not feasible; caller should fall back to MC."""


def _word_matrices_exact(rep_atoms, weights, N, cap, merge_tol=1e-10):
    d = rep_atoms.shape[1]
    if len(rep_atoms) ** N > cap:
        raise ConvolutionOverflow(
            f"{len(rep_atoms)}^{N} words exceed the exact cap {cap}"
        )
    mats = np.eye(d)[None, :, :]
    wts = np.array([1.0])
    from .measures import _merge_atoms

    for _ in range(N):
        mats = np.einsum("aij,bjk->abik", rep_atoms, mats).reshape(-1, d, d)
        wts = (weights[:, None] * wts[None, :]).reshape(-1)
        mats, wts = _merge_atoms(mats, wts, merge_tol)
    return mats, wts / wts.sum()


def _word_matrices_mc(rep_atoms, weights, N, n_words, rng):
    d = rep_atoms.shape[1]
    idx = rng.choice(len(rep_atoms), size=(n_words, N), p=weights)
    mats = np.tile(np.eye(d), (n_words, 1, 1))
    for step in range(N):
        mats = rep_atoms[idx[:, step]] @ mats
    return mats, np.full(n_words, 1.0 / n_words)


def _objective_factory(word_mats, word_wts):
    def objective(v):
        nrm = np.linalg.norm(v)
        if nrm < 1e-300 or not np.isfinite(nrm):
            return 1e6
        u = v / nrm
        images = word_mats @ u
        return float(word_wts @ np.log(np.linalg.norm(images, axis=-1)))

    return objective


def _sphere_minimize(word_mats, word_wts, dim, sphere_samples, n_descent, rng):
    dirs = rng.normal(size=(sphere_samples, dim))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    # batch evaluation of the objective over all sampled directions
    images = np.einsum("wij,sj->wsi", word_mats, dirs)
    vals = word_wts @ np.log(np.linalg.norm(images, axis=-1))
    order = np.argsort(vals)
    objective = _objective_factory(word_mats, word_wts)

    best_val = float(vals[order[0]])
    best_v = dirs[order[0]]
    for i in order[:n_descent]:
        res = minimize(
            objective,
            dirs[i],
            method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-13, "maxiter": 300 * dim},
        )
        if res.fun < best_val:
            best_val = float(res.fun)
            best_v = np.asarray(res.x, dtype=float)
    return best_val, best_v / np.linalg.norm(best_v)


def certificate_from_rep_atoms(
    rep_atoms,
    weights,
    N: int,
    rep_label: str = "custom",
    sphere_samples: int = 1000,
    n_descent: int = 20,
    mode: str = "auto",
    mc_words: int = 4000,
    confidence: float = 0.95,
    cap: int = 10**6,
    seed: int = 0,
) -> ExpansionCertificate:
    """Core certificate computation on precomputed representation atoms."""
    rep_atoms = np.asarray(rep_atoms, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if N < 1:
        raise ValueError("word length N must be at least 1")
    if mode not in ("auto", "exact", "mc", "monte-carlo"):
        raise ValueError(f"unknown certificate mode {mode!r}")
    dim = rep_atoms.shape[1]

    use_exact = mode == "exact" or (mode == "auto" and len(rep_atoms) ** N <= cap)
    if use_exact:
        word_mats, word_wts = _word_matrices_exact(rep_atoms, weights, N, cap)
    else:
        rng = substream(seed, 0)
        word_mats, word_wts = _word_matrices_mc(rep_atoms, weights, N, mc_words, rng)

    rng_sphere = substream(seed, 1)
    best_val, best_v = _sphere_minimize(
        word_mats, word_wts, dim, sphere_samples, n_descent, rng_sphere
    )

    if use_exact:
        return ExpansionCertificate(
            N=N,
            C_lower=best_val,
            mode="exact",
            sphere_samples=sphere_samples,
            confidence=1.0,
            witness=best_v,
            rep=rep_label,
        )
    per_word = np.log(np.linalg.norm(word_mats @ best_v, axis=-1))
    stderr = float(per_word.std(ddof=1) / np.sqrt(len(per_word)))
    z = float(_normal.ppf(confidence))
    return ExpansionCertificate(
        N=N,
        C_lower=float(per_word.mean() - z * stderr),
        mode="monte-carlo",
        sphere_samples=sphere_samples,
        confidence=confidence,
        witness=best_v,
        rep=rep_label,
    )


def expansion_certificate(
    mu: GroupMeasure, rep="std", N: int = 1, **kwargs
) -> ExpansionCertificate:
    """Sphere-minimized integral certificate in the chosen representation.

    Exact word enumeration is used while atom_count**N stays below the cap
    (products that merge are collapsed); otherwise the integral is sampled
    by Monte Carlo and C_lower is a one-sided lower confidence bound at the
    requested confidence level.  Only a FAIL (explicit witness direction
    with negative integral, exact mode) is a proof; PASS reports that the
    heuristic sphere minimum is positive.
    """
    rep_atoms = np.array([rep_matrix(rep, g) for g in mu.matrices])
    return certificate_from_rep_atoms(
        rep_atoms, mu.weights, N, rep_label=_rep_label(parse_rep(rep)), **kwargs
    )


def moment_contraction_estimate(
    mu: GroupMeasure,
    rep="std",
    delta: float = 0.3,
    N: int = 1,
    sphere_samples: int = 500,
    n_descent: int = 10,
    mode: str = "auto",
    mc_words: int = 4000,
    cap: int = 10**6,
    seed: int = 0,
):
    """Worst-case negative-moment ratio sup_v int |g v|^(-delta) dmu^{*N}(g).

    An expanding walk contracts these moments: for small delta the ratio
    drops below 1 once N is large enough, which is the quantitative engine
    behind the height contraction.  The supremum over the unit sphere is
    located heuristically like the certificate minimum.  Returns
    (sup_ratio, witness direction).
    """
    if delta <= 0.0:
        raise ValueError("moment exponent delta must be positive")
    rep_atoms = np.array([rep_matrix(rep, g) for g in mu.matrices])
    use_exact = mode == "exact" or (mode == "auto" and len(rep_atoms) ** N <= cap)
    if use_exact:
        word_mats, word_wts = _word_matrices_exact(rep_atoms, mu.weights, N, cap)
    else:
        word_mats, word_wts = _word_matrices_mc(
            rep_atoms, mu.weights, N, mc_words, substream(seed, 2)
        )

    def ratio(v):
        nrm = np.linalg.norm(v)
        if nrm < 1e-300 or not np.isfinite(nrm):
            return -1e6
        u = v / nrm
        return float(word_wts @ np.linalg.norm(word_mats @ u, axis=-1) ** (-delta))

    dim = rep_atoms.shape[1]
    rng = substream(seed, 3)
    dirs = rng.normal(size=(sphere_samples, dim))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    images = np.einsum("wij,sj->wsi", word_mats, dirs)
    vals = word_wts @ np.linalg.norm(images, axis=-1) ** (-delta)
    order = np.argsort(-vals)
    best_val = float(vals[order[0]])
    best_v = dirs[order[0]]
    for i in order[:n_descent]:
        res = minimize(
            lambda v: -ratio(v),
            dirs[i],
            method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 300 * dim},
        )
        if -res.fun > best_val:
            best_val = float(-res.fun)
            best_v = np.asarray(res.x, dtype=float)
    return best_val, best_v / np.linalg.norm(best_v)


def _fixed_subspace_complement(rep_elements, svd_tol=1e-8):
    """Orthonormal basis of the complement of the joint fixed space.

    ``rep_elements`` are representation images whose joint fixed space is
    removed; rows of (R - I) are stacked and the kernel read off the SVD.
    Returns (Q, fixed_dim) with Q of shape (dim, dim - fixed_dim).
    """
    dim = rep_elements[0].shape[0]
    stacked = np.vstack([r - np.eye(dim) for r in rep_elements])
    _, s, vt = np.linalg.svd(stacked, full_matrices=True)
    smax = s.max(initial=0.0)
    rank = int(np.sum(s > svd_tol * max(1.0, smax)))
    fixed_dim = dim - rank
    return vt[:rank].T.copy(), fixed_dim


def relative_expansion_sweep(
    mu: GroupMeasure,
    k_max: int,
    N: int = 4,
    n_fixed_words: int = 25,
    word_length: int = 8,
    dim_cap: int = 300,
    seed: int = 0,
    **cert_kwargs,
) -> list[ExpansionCertificate]:
    """Certificates on the wedge powers of the adjoint, fixed part removed.

    For k = 1..k_max the representation is the k-th exterior power of the
    adjoint action on sl_d, quotiented by the joint fixed subspace of the
    atoms together with ``n_fixed_words`` random words (a Zariski-density
    heuristic; atoms alone pin down the group-generated fixed space, the
    extra words guard against accidental kernels).  The quotient is modeled
    on the orthogonal complement, which is legitimate because every atom
    fixes the removed subspace pointwise.
    """
    d = mu.dim
    adj_dim = d * d - 1
    ad_atoms = np.array([linalg.adjoint_rep(g) for g in mu.matrices])
    out = []
    for k in range(1, k_max + 1):
        dim_k = comb(adj_dim, k)
        if dim_k > dim_cap:
            raise ValueError(
                f"wedge {k} of the adjoint has dimension {dim_k} > cap {dim_cap}"
            )
        rep_atoms = np.array([linalg.wedge_power(a, k) for a in ad_atoms])
        elements = list(rep_atoms)
        rng = substream(seed, 7, k)
        for _ in range(n_fixed_words):
            length = int(rng.integers(1, word_length + 1))
            idx = rng.choice(mu.natoms, size=length, p=mu.weights)
            w = np.eye(dim_k)
            for i in idx:
                w = rep_atoms[i] @ w
            elements.append(w)
        q, _ = _fixed_subspace_complement(elements)
        if q.shape[1] == 0:
            # everything is fixed; the zero quotient cannot expand
            out.append(
                ExpansionCertificate(
                    N=N,
                    C_lower=0.0,
                    mode="exact",
                    sphere_samples=0,
                    confidence=1.0,
                    witness=np.zeros(dim_k),
                    rep=f"wedge:{k}(adj)/fixed",
                )
            )
            continue
        quo_atoms = np.array([q.T @ a @ q for a in rep_atoms])
        out.append(
            certificate_from_rep_atoms(
                quo_atoms,
                mu.weights,
                N,
                rep_label=f"wedge:{k}(adj)/fixed",
                seed=seed,
                **cert_kwargs,
            )
        )
    return out


@dataclass(frozen=True)
class ConeSpec:
    """Standard block parabolic of sl_d: block sizes and its root set."""

    dim: int
    blocks: tuple[int, ...]

    def __post_init__(self):
        blocks = tuple(int(b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if any(b < 1 for b in blocks):
            raise ValueError("block sizes must be positive")
        if sum(blocks) != self.dim:
            raise ValueError("block sizes must sum to the dimension")
        if len(blocks) < 2:
            raise ValueError("a proper parabolic needs at least two blocks")

    def block_of(self, i: int) -> int:
        acc = 0
        for b_idx, b in enumerate(self.blocks):
            acc += b
            if i < acc:
                return b_idx
        raise IndexError(i)

    @property
    def root_pairs(self) -> list[tuple[int, int]]:
        """Index pairs (i, j) with block(i) < block(j): the roots of u."""
        return [
            (i, j)
            for i in range(self.dim)
            for j in range(self.dim)
            if self.block_of(i) < self.block_of(j)
        ]


@dataclass
class ConeMembership:
    inside: bool
    margin: float  # optimal tau of the LP
    coefficients: dict | None  # root pair -> positive coefficient (witness)
    separator: np.ndarray | None  # functional >= 0 on all roots, <= margin on logs


def expanding_cone_membership(
    spec: ConeSpec, logs, tol: float = CONE_TOL
) -> ConeMembership:
    """Decide membership of diag(logs) in the open expanding cone of u.

    The cone is the set of strictly positive combinations of the vectors
    e_i - e_j over root pairs (i, j) of the parabolic (Killing duals up to
    positive scale, which does not change the cone).  Solved as the LP
    "maximize tau subject to sum t_ij (e_i - e_j) = logs, t_ij >= tau";
    inside iff the optimum exceeds ``tol``.  The witness is the coefficient
    family; outside, the dual vector y is returned, which satisfies
    <y, e_i - e_j> >= 0 for every root and <y, logs> = margin <= tol.
    """
    logs = linalg.cartan_vector(logs, tol=1e-9)
    d = spec.dim
    if len(logs) != d:
        raise ValueError("logs length does not match the cone dimension")
    pairs = spec.root_pairs
    p = len(pairs)
    # variables x = (t_1..t_p, tau); drop the last (redundant) equality row
    a_eq = np.zeros((d - 1, p + 1))
    for col, (i, j) in enumerate(pairs):
        if i < d - 1:
            a_eq[i, col] += 1.0
        if j < d - 1:
            a_eq[j, col] -= 1.0
    b_eq = logs[: d - 1]
    a_ub = np.zeros((p, p + 1))
    a_ub[:, :p] = -np.eye(p)
    a_ub[:, p] = 1.0
    b_ub = np.zeros(p)
    c = np.zeros(p + 1)
    c[p] = -1.0
    res = linprog(
        c,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=[(None, None)] * (p + 1),
        method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"cone LP did not solve: {res.message}")
    tau = float(res.x[p])
    if tau > tol:
        coeffs = {pair: float(t) for pair, t in zip(pairs, res.x[:p])}
        return ConeMembership(True, tau, coeffs, None)
    y = np.zeros(d)
    y[: d - 1] = -np.asarray(res.eqlin.marginals, dtype=float)
    return ConeMembership(False, tau, None, y)


def a_expanding_check(
    spec: ConeSpec, logs, k: int, svd_tol: float = 1e-8, weight_tol: float = CONE_TOL
) -> bool:
    """Does exp(diag(logs)) expand the u-fixed vectors in the k-th wedge?

    The fixed space of the unipotent radical is the joint kernel of its
    log-nilpotent generators acting on the exterior power (kernel read off
    an SVD with threshold ``svd_tol``); the check passes when every weight
    of exp(diag(logs)) present on that kernel exceeds 1, i.e. every
    log-weight is positive.
    """
    logs = linalg.cartan_vector(logs, tol=1e-9)
    d = spec.dim
    if not 1 <= k <= d - 1:
        raise ValueError(f"grade k={k} out of range 1..{d - 1}")
    gens = []
    for i, j in spec.root_pairs:
        e = np.zeros((d, d))
        e[i, j] = 1.0
        gens.append(linalg.wedge_derivation(e, k))
    stacked = np.vstack(gens)
    _, s, vt = np.linalg.svd(stacked, full_matrices=True)
    smax = s.max(initial=0.0)
    rank = int(np.sum(s > svd_tol * max(1.0, smax)))
    kernel = vt[rank:].T  # columns span the u-fixed subspace
    if kernel.shape[1] == 0:
        return True  # vacuous: no u-fixed vectors to expand
    subset_weights = np.array([sum(logs[i] for i in s_) for s_ in linalg.k_subsets(d, k)])
    present = np.abs(kernel).max(axis=1) > svd_tol
    return bool(np.all(subset_weights[present] > weight_tol))
