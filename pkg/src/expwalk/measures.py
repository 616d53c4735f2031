"""Finitely supported probability measures on matrix groups.

A measure is a list of invertible atom matrices with positive weights
summing to one.  Sampling is driven by the splittable streams in
:mod:`expwalk.rng`, so words are reproducible given (seed, path).
Continuous laws can be plugged in behind the same sampling interface by
passing generators to the word-based routines; atoms are the first-class
representation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .kau import ParabolicProfile, WeightPair, kau_factorize
from .linalg import operator_norms
from .rng import substream

WEIGHT_SUM_TOL = 1e-12
MERGE_TOL = 1e-10


class ConvolutionCapError(ValueError):
    """Exact convolution power would exceed the atom cap; use Monte Carlo."""


@dataclass
class GroupMeasure:
    """Atomic probability measure on invertible d x d matrices."""

    matrices: np.ndarray  # (k, d, d)
    weights: np.ndarray  # (k,)
    seed: int = 0
    profile: ParabolicProfile | None = field(default=None)

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        wts = np.asarray(self.weights, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ValueError(f"expected a (k, d, d) atom array, got {mats.shape}")
        if wts.shape != (mats.shape[0],):
            raise ValueError("one weight per atom required")
        if not np.all(np.isfinite(mats)):
            raise ValueError("atom entries must be finite")
        if np.any(wts <= 0.0):
            raise ValueError("weights must be strictly positive")
        if abs(wts.sum() - 1.0) >= WEIGHT_SUM_TOL:
            raise ValueError(f"weights must sum to 1, got {wts.sum()!r}")
        dets = np.linalg.det(mats)
        if np.any(np.abs(dets) <= 1e-12):
            raise ValueError("all atoms must be invertible")
        if self.profile is not None:
            m = self.profile.m
            if self.profile.d != mats.shape[1]:
                raise ValueError("profile dimension does not match atoms")
            low = np.abs(mats[:, m:, :m]).max(initial=0.0)
            if low > 1e-9 * max(1.0, float(np.abs(mats).max())):
                raise ValueError(
                    "profile asserted but an atom is not block upper-triangular"
                )
        mats.setflags(write=False)
        wts.setflags(write=False)
        self.matrices = mats
        self.weights = wts

    @classmethod
    def from_atoms(cls, atoms, seed: int = 0, profile=None) -> "GroupMeasure":
        """Build from an iterable of (matrix, weight) pairs."""
        atoms = list(atoms)
        mats = np.array([np.asarray(g, dtype=float) for g, _ in atoms])
        wts = np.array([float(w) for _, w in atoms])
        return cls(mats, wts, seed=seed, profile=profile)

    @classmethod
    def dirac(cls, g, seed: int = 0, profile=None) -> "GroupMeasure":
        return cls.from_atoms([(g, 1.0)], seed=seed, profile=profile)

    @classmethod
    def uniform(cls, mats, seed: int = 0, profile=None) -> "GroupMeasure":
        mats = list(mats)
        return cls.from_atoms([(g, 1.0 / len(mats)) for g in mats], seed=seed, profile=profile)

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    @property
    def natoms(self) -> int:
        return self.matrices.shape[0]


def sample_indices(mu: GroupMeasure, n: int, seed=None, path=()) -> np.ndarray:
    """n i.i.d. atom indices, deterministic given (seed, path)."""
    if n < 0:
        raise ValueError("word length must be nonnegative")
    rng = substream(mu.seed if seed is None else seed, *path)
    return rng.choice(mu.natoms, size=n, p=mu.weights)


def sample_word(mu: GroupMeasure, n: int, seed=None, path=()) -> np.ndarray:
    """n i.i.d. atom draws as an (n, d, d) array."""
    return mu.matrices[sample_indices(mu, n, seed=seed, path=path)]


def sample_stream(mu: GroupMeasure, seed=None, path=(), block: int = 256):
    """Infinite generator of i.i.d. atom draws (same law as sample_word)."""
    rng = substream(mu.seed if seed is None else seed, *path)
    while True:
        for i in rng.choice(mu.natoms, size=block, p=mu.weights):
            yield mu.matrices[i]


def _merge_atoms(mats: np.ndarray, wts: np.ndarray, tol: float):
    # Grid quantization at resolution tol: atoms in the same cell merge
    # (they differ by at most tol per entry).  Near-duplicates straddling a
    # cell boundary stay separate, which is harmless: the measure is the
    # same, only its support list is longer.
    buckets: dict[bytes, int] = {}
    keep_mats = []
    keep_wts = []
    keys = np.round(mats.reshape(len(mats), -1) / tol).astype(np.int64)
    for i in range(len(mats)):
        key = keys[i].tobytes()
        j = buckets.get(key)
        if j is None:
            buckets[key] = len(keep_mats)
            keep_mats.append(mats[i])
            keep_wts.append(wts[i])
        else:
            keep_wts[j] += wts[i]
    return np.array(keep_mats), np.array(keep_wts)


def convolution_support(
    mu: GroupMeasure, n: int, cap: int = 10**6, merge_tol: float = MERGE_TOL
) -> GroupMeasure:
    """Exact n-fold convolution power as an atomic measure.

    Atoms are all length-n products with multiplied weights; products that
    coincide within ``merge_tol`` (max-entry distance, grid semantics) are
    merged after each step, which keeps commuting families polynomial.
    """
    if n < 0:
        raise ValueError("convolution order must be nonnegative")
    if mu.natoms**n > cap:
        raise ConvolutionCapError(
            f"{mu.natoms}^{n} products exceed the cap {cap}; use Monte Carlo"
        )
    d = mu.dim
    mats = np.eye(d)[None, :, :]
    wts = np.array([1.0])
    for _ in range(n):
        mats = np.einsum("aij,bjk->abik", mu.matrices, mats).reshape(-1, d, d)
        wts = (mu.weights[:, None] * wts[None, :]).reshape(-1)
        mats, wts = _merge_atoms(mats, wts, merge_tol)
    out = GroupMeasure(mats, wts / wts.sum(), seed=mu.seed, profile=mu.profile)
    return out


def exp_moment_estimate(mu: GroupMeasure, delta: float) -> float:
    """The exponential moment sum of weights * N(atom)**delta (exact)."""
    if delta <= 0.0:
        raise ValueError("moment exponent must be positive")
    total = 0.0
    for g, w in zip(mu.matrices, mu.weights):
        total += w * operator_norms(g)[2] ** delta
    return float(total)


def lambda_average(mu: GroupMeasure, profile: ParabolicProfile | None = None) -> float:
    """Average diagonal-flow parameter of the K'A'U factorization of atoms."""
    profile = profile if profile is not None else mu.profile
    if profile is None:
        raise ValueError("a parabolic profile is required")
    return float(
        sum(w * kau_factorize(g, profile).t for g, w in zip(mu.matrices, mu.weights))
    )


def save_measure(mu: GroupMeasure, path: str) -> None:
    """Write the measure as JSON; entries are repr strings for exact reload."""
    doc = {
        "dim": mu.dim,
        "atoms": [
            {"matrix": [repr(float(v)) for v in g.ravel()], "weight": repr(float(w))}
            for g, w in zip(mu.matrices, mu.weights)
        ],
    }
    if mu.profile is not None:
        doc["profile"] = {
            "m": mu.profile.m,
            "n": mu.profile.n,
            "r": [repr(v) for v in mu.profile.weights.r],
            "s": [repr(v) for v in mu.profile.weights.s],
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def measure_from_dict(doc: dict) -> GroupMeasure:
    """Build a measure from the JSON measure-file schema."""
    d = int(doc["dim"])
    mats = []
    wts = []
    for atom in doc["atoms"]:
        flat = [float(v) for v in atom["matrix"]]
        if len(flat) != d * d:
            raise ValueError(f"atom matrix must have {d * d} entries (row-major)")
        mats.append(np.array(flat).reshape(d, d))
        wts.append(float(atom["weight"]))
    profile = None
    if "profile" in doc and doc["profile"] is not None:
        p = doc["profile"]
        wp = WeightPair(
            tuple(float(v) for v in p["r"]), tuple(float(v) for v in p["s"])
        )
        profile = ParabolicProfile(int(p["m"]), int(p["n"]), wp)
    return GroupMeasure.from_atoms(zip(mats, wts), profile=profile)


def load_measure(path: str) -> GroupMeasure:
    with open(path, encoding="utf-8") as fh:
        return measure_from_dict(json.load(fh))
