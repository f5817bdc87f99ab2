"""Sphere configurations, contact detection and the contact Jacobian."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree


@dataclass
class ParticleConfig:
    """Sphere centers (``Np x 3``) and radii, plus how they were generated."""

    centers: np.ndarray
    radii: np.ndarray
    lattice_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, 3)
        self.radii = np.asarray(self.radii, dtype=np.float64).reshape(-1)
        if self.radii.shape[0] != self.centers.shape[0]:
            raise ValueError("one radius per center required")
        if np.any(self.radii <= 0):
            raise ValueError("radii must be positive")
        if not np.all(np.isfinite(self.centers)):
            raise ValueError("non-finite center coordinates")

    @property
    def n_particles(self) -> int:
        return self.centers.shape[0]

    def scaled(self, gamma: float) -> "ParticleConfig":
        """Centers scaled about the origin by ``gamma``; radii unchanged."""
        meta = dict(self.lattice_meta, gamma=float(gamma))
        return ParticleConfig(gamma * self.centers, self.radii.copy(), meta)


@dataclass
class ContactSet:
    """Candidate contact pairs ``(i, j)``, ``i < j``, with gaps and unit normals ``i -> j``."""

    pairs: list
    gaps: np.ndarray
    normals: np.ndarray

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def empty(cls) -> "ContactSet":
        return cls([], np.zeros(0), np.zeros((0, 3)))


def gap(ci, ri, cj, rj) -> float:
    """Surface separation ``||cj - ci|| - ri - rj`` (negative when overlapping)."""
    dist = float(np.linalg.norm(np.asarray(cj, dtype=np.float64) - np.asarray(ci, dtype=np.float64)))
    if dist == 0.0:
        raise ValueError("coincident centers: contact normal undefined")
    return dist - ri - rj


def _candidate_pairs(centers, radius):
    if centers.shape[0] < 2:
        return np.zeros((0, 2), dtype=np.int64)
    return cKDTree(centers).query_pairs(radius, output_type="ndarray")


def active_set(config: ParticleConfig, delta_t: float) -> ContactSet:
    """All pairs whose gap is at most ``delta_t``, in lexicographic order."""
    if delta_t < 0:
        raise ValueError("delta_t must be nonnegative")
    c, r = config.centers, config.radii
    cand = _candidate_pairs(c, 2.0 * r.max(initial=0.0) + delta_t)
    if len(cand) == 0:
        return ContactSet.empty()
    cand = cand[np.lexsort((cand[:, 1], cand[:, 0]))]
    diff = c[cand[:, 1]] - c[cand[:, 0]]
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist == 0.0):
        raise ValueError("coincident centers: contact normal undefined")
    gaps = dist - r[cand[:, 0]] - r[cand[:, 1]]
    keep = gaps <= delta_t
    cand, gaps = cand[keep], gaps[keep]
    normals = diff[keep] / dist[keep, None]
    return ContactSet([(int(i), int(j)) for i, j in cand], gaps, normals)


def count_contacts(config: ParticleConfig, delta_t: float, gamma: float = 1.0) -> int:
    return len(active_set(config.scaled(gamma), delta_t))


def assemble_D(config: ParticleConfig, contacts: ContactSet) -> sp.csc_matrix:
    """Contact Jacobian, ``6 Np x Nc``.

    Each particle owns six rows (force then torque). Column ``l`` holds
    ``-n_l`` in the force rows of ``i`` and ``+n_l`` in those of ``j``, so
    ``D^T U`` is the rate of change of the gaps under rigid velocities ``U``.
    All six entries are stored even when a normal component vanishes.
    """
    nc = len(contacts)
    npart = config.n_particles
    if nc == 0:
        return sp.csc_matrix((6 * npart, 0))
    pairs = np.asarray(contacts.pairs, dtype=np.int64)
    k = np.arange(3)
    rows = np.concatenate([6 * pairs[:, :1] + k, 6 * pairs[:, 1:] + k], axis=1)
    vals = np.concatenate([-contacts.normals, contacts.normals], axis=1)
    cols = np.repeat(np.arange(nc), 6)
    D = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols)), shape=(6 * npart, nc))
    return D.tocsc()


def lattice(m: int, dx: float) -> np.ndarray:
    """``m^3`` points spaced ``dx`` apart, centered at the origin."""
    ticks = (np.arange(m) - (m - 1) / 2.0) * dx
    X, Y, Z = np.meshgrid(ticks, ticks, ticks, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)


def initialize_configuration(
    m: int,
    dx: float = 2.5,
    eps_x: float = 3.0,
    n_desired: float | None = None,
    eps_desired: float | None = None,
    seed: int = 0,
    radius: float = 1.0,
    delta_t: float | None = None,
    max_bisections: int = 200,
):
    """Jittered lattice of unit spheres scaled until the contact count hits a target.

    The scale ``gamma`` multiplies all centers. The count of pairs with gap at
    most ``delta_t`` is nonincreasing in ``gamma``; a doubling phase finds a
    scale with no contacts and bisection then brackets the window
    ``[n_desired - eps_desired, n_desired + eps_desired]``.

    Returns
    -------
    gamma : float
    config : ParticleConfig
        The scaled configuration. ``lattice_meta["in_window"]`` is False when
        the window was not reached, in which case ``gamma`` is the best scale seen.
    """
    if m < 2:
        raise ValueError("m must be at least 2")
    n_desired = m**3 / 2.0 if n_desired is None else n_desired
    eps_desired = m**3 / 10.0 if eps_desired is None else eps_desired
    delta_t = 0.1 * radius if delta_t is None else delta_t
    rng = np.random.default_rng(seed)
    centers = lattice(m, dx) + rng.uniform(-eps_x / 2.0, eps_x / 2.0, size=(m**3, 3))
    meta = {"m": int(m), "dx": float(dx), "eps_x": float(eps_x), "seed": int(seed)}
    base = ParticleConfig(centers, np.full(m**3, float(radius)), meta)
    lo, hi = n_desired - eps_desired, n_desired + eps_desired

    def count(g):
        return count_contacts(base, delta_t, g)

    def miss(c):
        return max(lo - c, c - hi, 0.0)

    g_minus, gamma, g_plus = 0.0, 1.0, 1.0
    while count(g_plus) > 0:
        g_plus *= 2.0
    c = count(gamma)
    best = (miss(c), gamma)
    steps = 0
    while miss(c) > 0 and steps < max_bisections:
        if c < lo:
            g_plus = gamma
        else:
            g_minus = gamma
        gamma = 0.5 * (g_minus + g_plus)
        c = count(gamma)
        best = min(best, (miss(c), gamma))
        steps += 1
    in_window = miss(c) == 0
    if not in_window:
        gamma = best[1]
    config = base.scaled(gamma)
    config.lattice_meta.update(in_window=in_window, bisections=steps, delta_t=float(delta_t))
    return gamma, config
