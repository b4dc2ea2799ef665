"""heraldyne: heralded homodyne simulation and phase-randomized tomography.

Synthesizes segmented homodyne records for photon-number mixtures, extracts
the temporal mode from the variance signature, reconstructs the photon
statistics by maximum likelihood, and maps out the Wigner function with a
bootstrap error bar on its negativity.
"""

from .fock import (
    PhotonNumberDistribution,
    apply_loss,
    fock_quadrature_pdf,
    fock_variance,
    hermite,
    laguerre,
    mixture_pdf,
    wigner_eval,
    wigner_origin,
)

__version__ = "0.1.0"

__all__ = [
    "PhotonNumberDistribution",
    "apply_loss",
    "fock_quadrature_pdf",
    "fock_variance",
    "hermite",
    "laguerre",
    "mixture_pdf",
    "wigner_eval",
    "wigner_origin",
    "__version__",
]
