"""Contact LCPs ``A = D^T M D``, ``b = Phi / dt + D^T U_nc`` and their cheap surrogates."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from ..operators import DENSE_CAP, Fidelity, MatVecOperator, as_dense
from .geometry import ContactSet, ParticleConfig, active_set, assemble_D, initialize_configuration
from .mobility import DragDiagonal, Mobility, RpyLike, model_to_dict

DEFAULT_COST_RATIO = 10.0
DEFAULT_DT = 1e-2


class InstanceError(ValueError):
    pass


@dataclass(frozen=True)
class Perturb:
    """``A + delta * S / ||S||_inf`` with ``S`` a random symmetric matrix."""

    delta: float
    tag = "perturb"

    def params(self) -> dict:
        return {"delta": self.delta}


@dataclass(frozen=True)
class Precision32:
    """``A`` applied in single precision."""

    tag = "precision32"

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class Sparsify:
    """RPY coupling truncated at a smaller ``cutoff``."""

    cutoff: float
    tag = "sparsify"

    def params(self) -> dict:
        return {"cutoff": None if math.isinf(self.cutoff) else self.cutoff}


def scheme_from_dict(tag: str, params: dict):
    if tag == Perturb.tag:
        return Perturb(float(params["delta"]))
    if tag == Precision32.tag:
        return Precision32()
    if tag == Sparsify.tag:
        cutoff = params["cutoff"]
        return Sparsify(math.inf if cutoff is None else float(cutoff))
    raise InstanceError(f"unknown low-fidelity scheme {tag!r}")


@dataclass
class LcpInstance:
    """One contact LCP with its high- and (optionally) low-fidelity operators."""

    n: int
    b: np.ndarray
    A_high: MatVecOperator
    A_low: MatVecOperator | None = None
    low_scheme: object = None
    dense_A: np.ndarray | None = None
    dense_A_low: np.ndarray | None = None
    L: float = float("nan")
    mu: float = float("nan")
    cost_ratio: float = DEFAULT_COST_RATIO
    seed: int = 0
    generator: dict = field(default_factory=dict)
    config: ParticleConfig | None = None
    contacts: ContactSet | None = None
    model: object = None

    def __post_init__(self):
        if not self.cost_ratio >= 1:
            raise InstanceError("cost_ratio must be >= 1")

    @property
    def trivial(self) -> bool:
        return self.n == 0

    def with_low_fidelity(self, scheme, seed: int | None = None) -> "LcpInstance":
        op = make_low_fidelity(self, scheme, self.seed if seed is None else seed)
        return dataclasses.replace(self, A_low=op, low_scheme=scheme, dense_A_low=op.dense)


def spectrum_bounds(dense) -> tuple[float, float]:
    if dense.size == 0:
        return float("nan"), float("nan")
    w = np.linalg.eigvalsh(dense)
    return float(w[-1]), float(w[0])


def default_U_nc(contacts: ContactSet, D, dt: float, rng) -> np.ndarray:
    """Gaussian translational velocities sized to push some gaps closed within ``dt``.

    The scale matches ``max |Phi| / dt`` so that ``b`` has entries of both signs;
    draws are repeated (up to ten times) until some ``b`` entry is negative.
    """
    npart = D.shape[0] // 6
    scale = max(float(np.abs(contacts.gaps).max(initial=0.0)) / dt, 1.0)
    U = np.zeros((npart, 6))
    for _ in range(10):
        U[:, :3] = scale * rng.standard_normal((npart, 3))
        if len(contacts) == 0 or np.any(contacts.gaps / dt + D.T @ U.reshape(-1) < 0):
            break
    return U.reshape(-1)


def assemble_lcp(
    config: ParticleConfig,
    contacts: ContactSet,
    model,
    U_nc,
    dt: float = DEFAULT_DT,
    cost_ratio: float = DEFAULT_COST_RATIO,
    seed: int = 0,
    cap: int = DENSE_CAP,
) -> LcpInstance:
    """Matrix-free ``x -> D^T M D x`` with ``b = Phi / dt + D^T U_nc``.

    A dense copy of ``A`` (and the spectral bounds ``L``, ``mu``) is built when
    ``n <= cap``.
    """
    if not dt > 0:
        raise InstanceError("dt must be positive")
    D = assemble_D(config, contacts)
    n = D.shape[1]
    U_nc = np.asarray(U_nc, dtype=np.float64)
    if U_nc.shape != (D.shape[0],):
        raise InstanceError(f"U_nc must have length {D.shape[0]}")
    b = contacts.gaps / dt + D.T @ U_nc
    mob = Mobility(model, config)
    Dt = D.T.tocsr()

    def apply(x):
        return Dt @ mob.apply(D @ x)

    dense = None
    L = mu = float("nan")
    if n <= cap:
        Dd = D.toarray()
        dense = Dd.T @ mob.dense() @ Dd
        dense = 0.5 * (dense + dense.T)
        L, mu = spectrum_bounds(dense)
    op = MatVecOperator(n, apply, Fidelity.HIGH, dense=dense, name="DtMD")
    return LcpInstance(
        n=n, b=np.asarray(b, dtype=np.float64), A_high=op, dense_A=op.dense, L=L, mu=mu,
        cost_ratio=cost_ratio, seed=seed, config=config, contacts=contacts, model=model,
    )


def _perturbed(A, delta, rng, max_tries=20):
    if delta == 0:
        return A.copy()
    n = A.shape[0]
    for _ in range(max_tries):
        G = rng.standard_normal((n, n))
        S = 0.5 * (G + G.T)
        Ahat = A + delta * S / np.abs(S).sum(axis=1).max()
        Ahat = 0.5 * (Ahat + Ahat.T)
        if np.linalg.eigvalsh(Ahat)[0] > 0:
            return Ahat
    raise InstanceError(f"perturbation of size {delta} left the PD cone after {max_tries} draws")


def make_low_fidelity(instance: LcpInstance, scheme, seed: int = 0) -> MatVecOperator:
    """Low-fidelity operator for ``instance`` under ``scheme``.

    ``Perturb`` needs the dense matrix; ``Sparsify`` needs the generating
    configuration and reduces to the high-fidelity operator for non-RPY models
    or a cutoff no smaller than the model's.
    """
    n = instance.n
    if isinstance(scheme, Perturb):
        if not scheme.delta >= 0:
            raise InstanceError("perturbation size must be nonnegative")
        A = instance.dense_A if instance.dense_A is not None else as_dense(instance.A_high)
        Ahat = _perturbed(A, scheme.delta, np.random.default_rng(seed))
        return MatVecOperator.from_dense(Ahat, Fidelity.LOW, name=f"perturb({scheme.delta})")
    if isinstance(scheme, Precision32):
        if instance.dense_A is not None:
            A32 = instance.dense_A.astype(np.float32)

            def apply32(x):
                return (A32 @ x.astype(np.float32)).astype(np.float64)
        else:
            if instance.config is None:
                raise InstanceError("single-precision surrogate needs a dense matrix or a configuration")
            D = assemble_D(instance.config, instance.contacts).astype(np.float32)
            Dt = D.T.tocsr()
            mob = Mobility(instance.model, instance.config, dtype=np.float32)

            def apply32(x):
                return (Dt @ mob.apply(D @ x.astype(np.float32))).astype(np.float64)
        op = MatVecOperator(n, apply32, Fidelity.LOW, name="precision32")
        dense = as_dense(op) if n <= DENSE_CAP else None
        return MatVecOperator(n, apply32, Fidelity.LOW, dense=dense, name="precision32")
    if isinstance(scheme, Sparsify):
        if not scheme.cutoff > 0:
            raise InstanceError("cutoff must be positive")
        model = instance.model
        if not isinstance(model, RpyLike) or scheme.cutoff >= model.cutoff:
            return MatVecOperator(n, instance.A_high.apply, Fidelity.LOW, dense=instance.dense_A,
                                  name=f"sparsify({scheme.cutoff})")
        if instance.config is None:
            raise InstanceError("sparsification needs the generating configuration")
        coarse = RpyLike(model.eta, scheme.cutoff)
        lo = assemble_lcp(instance.config, instance.contacts, coarse, np.zeros(6 * instance.config.n_particles))
        if lo.dense_A is not None and not np.linalg.eigvalsh(lo.dense_A)[0] > 0:
            raise InstanceError("sparsified operator is not positive definite")
        return MatVecOperator(n, lo.A_high.apply, Fidelity.LOW, dense=lo.dense_A, name=f"sparsify({scheme.cutoff})")
    raise InstanceError(f"unknown low-fidelity scheme {scheme!r}")


def _mobility_is_pd(config, model) -> bool:
    if not isinstance(model, RpyLike):
        return True
    M = Mobility(model, config).dense()
    return bool(np.linalg.eigvalsh(M)[0] > 0)


def generate_instance(
    m: int,
    seed: int,
    model=None,
    dx: float = 2.5,
    eps_x: float = 3.0,
    dt: float = DEFAULT_DT,
    cost_ratio: float = DEFAULT_COST_RATIO,
    max_regenerations: int = 20,
) -> LcpInstance:
    """Deterministic contact LCP from a jittered ``m x m x m`` lattice.

    A configuration whose mobility or LCP matrix fails the positive-definiteness
    check is discarded and regenerated from the next seed in sequence.
    """
    model = DragDiagonal() if model is None else model
    for attempt in range(max_regenerations):
        s = int(seed) + attempt
        gamma, config = initialize_configuration(m, dx=dx, eps_x=eps_x, seed=s)
        contacts = active_set(config, config.lattice_meta["delta_t"])
        if not _mobility_is_pd(config, model):
            continue
        rng = np.random.default_rng([s, 1])
        D = assemble_D(config, contacts)
        U_nc = default_U_nc(contacts, D, dt, rng)
        inst = assemble_lcp(config, contacts, model, U_nc, dt=dt, cost_ratio=cost_ratio, seed=s)
        if inst.n and inst.dense_A is not None and not inst.mu > 1e-10 * inst.L:
            continue
        inst.generator = {
            "m": int(m), "dx": float(dx), "eps_x": float(eps_x), "gamma": float(gamma),
            "seed": s, "model": model_to_dict(model), "dt": float(dt),
            "in_window": bool(config.lattice_meta["in_window"]),
        }
        return inst
    raise InstanceError(f"no positive definite instance after {max_regenerations} seeds")
