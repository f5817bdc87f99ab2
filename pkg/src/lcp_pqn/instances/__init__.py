from .geometry import (
    ContactSet,
    ParticleConfig,
    active_set,
    assemble_D,
    count_contacts,
    gap,
    initialize_configuration,
    lattice,
)
from .io import SchemaError, deserialize, dumps, loads, serialize
from .lcp import (
    InstanceError,
    LcpInstance,
    Perturb,
    Precision32,
    Sparsify,
    assemble_lcp,
    default_U_nc,
    generate_instance,
    make_low_fidelity,
)
from .mobility import DragDiagonal, Mobility, RpyLike, mobility_apply, rpy_pair_tensor

__all__ = [
    "ContactSet",
    "DragDiagonal",
    "InstanceError",
    "LcpInstance",
    "Mobility",
    "ParticleConfig",
    "Perturb",
    "Precision32",
    "RpyLike",
    "SchemaError",
    "Sparsify",
    "active_set",
    "assemble_D",
    "assemble_lcp",
    "count_contacts",
    "default_U_nc",
    "deserialize",
    "dumps",
    "gap",
    "generate_instance",
    "initialize_configuration",
    "lattice",
    "loads",
    "make_low_fidelity",
    "mobility_apply",
    "rpy_pair_tensor",
    "serialize",
]
