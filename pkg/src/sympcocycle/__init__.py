"""Numerical laboratory for a two-cocycle on groups of symplectic diffeomorphisms."""

__version__ = "0.1.0"

from .cocycle import (  # noqa: E402
    G,
    CocycleContext,
    IsotopySpec,
    K_tilde,
    action_difference,
    action_functional,
    b_chain,
    coboundary2_residual,
    hom_Gxh,
    isotopy_independence_residual,
    k_chain,
    kahler_cocycle,
    trilateral_identity,
)
from .geometry import EuclideanPlane, HyperbolicDisk  # noqa: E402
from .hamiltonian import FlowSettings, HamiltonianSpec, TimeProfile, bump_hamiltonian  # noqa: E402
from .symplectomap import (  # noqa: E402
    AffineSymplectic,
    CompactBump,
    CotangentLift,
    HamiltonianFlowMap,
    Identity,
    MoebiusIsometry,
    Word,
)
