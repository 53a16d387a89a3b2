"""Wave packet and random-data toolkit for the cubic wave equation on periodic grids.

Submodules:

``spectral``      grids, transforms, norms and WPL1 snapshots
``partitions``    smooth unit-cell windows and frequency projections
``randomize``     counter-based coefficients and microlocal randomisation
``propagate``     half-wave propagators, decay profiles and Strichartz sampling
``wavepackets``   packet decomposition, tubes, bushes and cone geometry
``nlw``           forced cubic wave solver, energies, fluxes and ledgers
``mcstats``       Monte Carlo moment and suprema checks
``experiments``   named experiments behind the ``wavepacket-lab`` command
"""

__version__ = "0.1.0"

from . import mcstats, nlw, partitions, propagate, randomize, spectral, wavepackets  # noqa: E402
from .spectral import GridSpec, RealField, SpectralField  # noqa: E402

__all__ = [
    "__version__",
    "GridSpec",
    "RealField",
    "SpectralField",
    "spectral",
    "partitions",
    "randomize",
    "propagate",
    "wavepackets",
    "nlw",
    "mcstats",
]
