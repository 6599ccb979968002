"""KAM reducibility toolkit for quasi-periodic GL(m,C) cocycles.

Subpackages follow the pipeline: Fourier/cocycle representations
(:mod:`qpkam.fourier`), resultant algebra (:mod:`qpkam.polyalg`),
transversality certificates and interval exclusion
(:mod:`qpkam.transversality`), spectrum clustering and block
diagonalization (:mod:`qpkam.spectral`), resonance structure
(:mod:`qpkam.resonance`), the KAM engine (:mod:`qpkam.kam`) and the
Aubry-duality spectral layer (:mod:`qpkam.duality`).
"""

from ._kernels import IMPL as kernel_backend

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]
