"""Mobility models mapping forces and torques to rigid-body velocities.

Both models are symmetric positive definite stand-ins for a Stokes solve.
``DragDiagonal`` is isolated-sphere drag; ``RpyLike`` adds the
Rotne-Prager-Yamakawa translational coupling between nearby spheres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.spatial import cKDTree

from .geometry import ParticleConfig

#: Viscosity giving unit translational mobility for unit spheres.
UNIT_ETA = 1.0 / (6.0 * np.pi)


@dataclass(frozen=True)
class DragDiagonal:
    eta: float = UNIT_ETA

    tag = "drag"

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    def params(self) -> dict:
        return {"eta": self.eta}


@dataclass(frozen=True)
class RpyLike:
    """RPY coupling for pairs closer than ``cutoff * (r_i + r_j)``.

    The default keeps every pair; for equal radii the untruncated tensor is
    positive definite, while a finite cutoff may not be.
    """

    eta: float = UNIT_ETA
    cutoff: float = math.inf

    tag = "rpy"

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")

    def params(self) -> dict:
        return {"eta": self.eta, "cutoff": None if math.isinf(self.cutoff) else self.cutoff}


def model_from_dict(d: dict):
    kind = d.get("kind")
    if kind == DragDiagonal.tag:
        return DragDiagonal(float(d.get("eta", UNIT_ETA)))
    if kind == RpyLike.tag:
        cutoff = d.get("cutoff")
        return RpyLike(float(d.get("eta", UNIT_ETA)), math.inf if cutoff is None else float(cutoff))
    raise ValueError(f"unknown mobility model {kind!r}")


def model_to_dict(model) -> dict:
    return {"kind": model.tag, **model.params()}


def self_mobility(model, radii) -> tuple[np.ndarray, np.ndarray]:
    """Translational and rotational self-mobilities per particle."""
    r = np.asarray(radii, dtype=np.float64)
    return 1.0 / (6.0 * np.pi * model.eta * r), 1.0 / (8.0 * np.pi * model.eta * r**3)


def rpy_pair_tensor(ri, rj, rvec, eta) -> np.ndarray:
    """3x3 translational RPY coupling between spheres separated by ``rvec``.

    Non-overlapping pairs use the unequal-radius far-field form. Overlapping
    pairs use the equal-radius regularization with the mean radius.
    """
    r = float(np.linalg.norm(rvec))
    rhat = rvec / r
    P = np.outer(rhat, rhat)
    I = np.eye(3)
    if r > ri + rj:
        s2 = ri * ri + rj * rj
        return ((1.0 + s2 / (3.0 * r * r)) * I + (1.0 - s2 / (r * r)) * P) / (8.0 * np.pi * eta * r)
    a = 0.5 * (ri + rj)
    return ((1.0 - 9.0 * r / (32.0 * a)) * I + (3.0 * r / (32.0 * a)) * P) / (6.0 * np.pi * eta * a)


class Mobility:
    """Precomputed mobility operator for one configuration.

    ``apply`` maps a ``6 Np`` force/torque vector to velocities. Translational
    coupling is stored as a list of ``3 x 3`` blocks.
    """

    def __init__(self, model, config: ParticleConfig, dtype=np.float64):
        self.model = model
        self.n_particles = config.n_particles
        self.dtype = dtype
        mt, mr = self_mobility(model, config.radii)
        self.mt = mt.astype(dtype)
        self.mr = mr.astype(dtype)
        self.pairs = np.zeros((0, 2), dtype=np.int64)
        self.blocks = np.zeros((0, 3, 3), dtype=dtype)
        if isinstance(model, RpyLike) and config.n_particles > 1:
            c, r = config.centers, config.radii
            if math.isinf(model.cutoff):
                cand = np.array(list(combinations(range(config.n_particles), 2)), dtype=np.int64)
            else:
                cand = cKDTree(c).query_pairs(2.0 * model.cutoff * r.max(), output_type="ndarray")
            if len(cand):
                cand = cand[np.lexsort((cand[:, 1], cand[:, 0]))]
                dist = np.linalg.norm(c[cand[:, 1]] - c[cand[:, 0]], axis=1)
                cand = cand[dist < model.cutoff * (r[cand[:, 0]] + r[cand[:, 1]])]
                self.pairs = cand
                self.blocks = np.array(
                    [rpy_pair_tensor(r[i], r[j], c[j] - c[i], model.eta) for i, j in cand],
                    dtype=dtype,
                ).reshape(-1, 3, 3)

    def apply(self, F: np.ndarray) -> np.ndarray:
        F = np.asarray(F, dtype=self.dtype).reshape(self.n_particles, 6)
        U = np.empty_like(F)
        U[:, :3] = self.mt[:, None] * F[:, :3]
        U[:, 3:] = self.mr[:, None] * F[:, 3:]
        if len(self.pairs):
            i, j = self.pairs[:, 0], self.pairs[:, 1]
            Fi, Fj = F[i, :3], F[j, :3]
            # blocks are symmetric, so M_ji = M_ij
            np.add.at(U[:, :3], i, np.einsum("kab,kb->ka", self.blocks, Fj))
            np.add.at(U[:, :3], j, np.einsum("kab,kb->ka", self.blocks, Fi))
        return U.reshape(-1)

    def dense(self) -> np.ndarray:
        n = 6 * self.n_particles
        M = np.zeros((n, n))
        idx = np.arange(self.n_particles) * 6
        for k in range(3):
            M[idx + k, idx + k] = self.mt
            M[idx + 3 + k, idx + 3 + k] = self.mr
        for (i, j), blk in zip(self.pairs, self.blocks):
            M[6 * i:6 * i + 3, 6 * j:6 * j + 3] = blk
            M[6 * j:6 * j + 3, 6 * i:6 * i + 3] = blk.T
        return M


def mobility_apply(model, config: ParticleConfig, F) -> np.ndarray:
    """Velocities ``M F`` for forces/torques ``F`` (length ``6 Np``)."""
    return Mobility(model, config).apply(F).astype(np.float64)
