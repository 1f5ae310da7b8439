"""Replicate detection and the unique-n sufficient statistics of a dataset.

A dataset of N raw observations collapses to n unique sites carrying, per
site, the replicate count ``mult_i``, the replicate mean ``Z0_i`` and the
raw (bias-unadjusted) variance ``S2_i = (1/a_i) sum_j (y_ij - Z0_i)^2``.
These are sufficient for the GP likelihood under replication, so the raw
responses are discarded after the collapse.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ReplicatedDesign:
    """Unique-n representation: inputs, replicate means, counts, raw variances.

    Instances are immutable and safe to share across threads. ``find_reps``
    guarantees pairwise-distinct rows in ``X0``; construct directly only when
    deliberately bypassing the collapse (e.g. to force full-N computations).
    """

    X0: np.ndarray
    Z0: np.ndarray
    mult: np.ndarray
    S2: np.ndarray
    N: int = field(default=0)

    def __post_init__(self):
        X0 = np.atleast_2d(np.asarray(self.X0, dtype=float))
        Z0 = np.asarray(self.Z0, dtype=float).ravel()
        mult = np.asarray(self.mult).ravel()
        S2 = np.asarray(self.S2, dtype=float).ravel()
        if not (X0.shape[0] == Z0.shape[0] == mult.shape[0] == S2.shape[0]):
            raise ValidationError("X0, Z0, mult and S2 must have matching lengths")
        if X0.shape[0] == 0:
            raise ValidationError("design must contain at least one site")
        if not np.all(np.isfinite(X0)) or not np.all(np.isfinite(Z0)):
            raise ValidationError("design contains non-finite values")
        if np.any(mult < 1) or np.any(mult != np.round(mult)):
            raise ValidationError("replicate counts must be positive integers")
        mult = mult.astype(np.int64)
        if np.any(S2 < 0):
            raise ValidationError("per-site variances must be nonnegative")
        if np.any((mult == 1) & (S2 != 0)):
            raise ValidationError("S2 must be zero at unreplicated sites")
        N = int(self.N) if self.N else int(mult.sum())
        if N != int(mult.sum()):
            raise ValidationError("N must equal the sum of replicate counts")
        object.__setattr__(self, "X0", X0)
        object.__setattr__(self, "Z0", Z0)
        object.__setattr__(self, "mult", mult)
        object.__setattr__(self, "S2", S2)
        object.__setattr__(self, "N", N)

    @property
    def n(self) -> int:
        return self.X0.shape[0]

    @property
    def dim(self) -> int:
        return self.X0.shape[1]

    def to_dict(self) -> dict:
        return {
            "X0": self.X0.tolist(),
            "Z0": self.Z0.tolist(),
            "mult": self.mult.tolist(),
            "S2": self.S2.tolist(),
            "N": self.N,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReplicatedDesign":
        return cls(
            X0=np.asarray(d["X0"], dtype=float),
            Z0=np.asarray(d["Z0"], dtype=float),
            mult=np.asarray(d["mult"]),
            S2=np.asarray(d["S2"], dtype=float),
            N=int(d["N"]),
        )


def find_reps(X: np.ndarray, Y: np.ndarray, dedup_tol: float = 0.0) -> ReplicatedDesign:
    """Collapse raw observations to their unique-n sufficient statistics.

    Rows equal within ``dedup_tol`` (componentwise; default 0, meaning exact
    equality) are merged. The site order is first-appearance order, which
    makes the result deterministic.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 1 and X.shape[1] > 1 and np.asarray(Y).size == X.shape[1]:
        # a 1-d vector of scalar inputs arrived as a single row
        X = X.T
    Y = np.asarray(Y, dtype=float).ravel()
    if X.shape[0] == 0:
        raise ValidationError("empty input")
    if X.shape[0] != Y.shape[0]:
        raise ValidationError(f"X has {X.shape[0]} rows but Y has length {Y.shape[0]}")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
        raise ValidationError("non-finite values in inputs or responses")
    if dedup_tol < 0:
        raise ValidationError("dedup_tol must be nonnegative")

    groups: list[list[int]] = []
    if dedup_tol == 0.0:
        index: dict[bytes, int] = {}
        for i in range(X.shape[0]):
            key = X[i].tobytes()
            j = index.get(key)
            if j is None:
                index[key] = len(groups)
                groups.append([i])
            else:
                groups[j].append(i)
    else:
        reps: list[np.ndarray] = []
        for i in range(X.shape[0]):
            merged = False
            for j, u in enumerate(reps):
                if np.all(np.abs(X[i] - u) <= dedup_tol):
                    groups[j].append(i)
                    merged = True
                    break
            if not merged:
                reps.append(X[i])
                groups.append([i])

    n = len(groups)
    X0 = np.empty((n, X.shape[1]))
    Z0 = np.empty(n)
    mult = np.empty(n, dtype=np.int64)
    S2 = np.empty(n)
    for j, idx in enumerate(groups):
        X0[j] = X[idx[0]]
        y = Y[idx]
        mult[j] = len(idx)
        Z0[j] = y.mean()
        S2[j] = np.mean((y - Z0[j]) ** 2) if len(idx) > 1 else 0.0
    return ReplicatedDesign(X0=X0, Z0=Z0, mult=mult, S2=S2, N=X.shape[0])


def expand(design: ReplicatedDesign) -> tuple[np.ndarray, np.ndarray]:
    """Full-N reconstruction with each site's rows and mean repeated.

    The raw responses are not recoverable, only the sufficient statistics
    are, so the returned response vector repeats the per-site means. Used to
    drive dense full-N oracles (synthetic replicates matching ``(Z0, S2)``
    exactly are built on top in the tests).
    """
    X = np.repeat(design.X0, design.mult, axis=0)
    Z = np.repeat(design.Z0, design.mult)
    return X, Z


def read_observations(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a raw-observation CSV: header row, d input columns, one response.

    One row per raw observation; returns ``(X, Y)``.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    if len(header) < 2:
        raise ValidationError(f"{path}: need at least one input column and one response column")
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    try:
        data = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise ValidationError(f"{path}: malformed numeric value ({exc})") from None
    if data.shape[1] != len(header):
        raise ValidationError(f"{path}: row width does not match header")
    return data[:, :-1], data[:, -1]
