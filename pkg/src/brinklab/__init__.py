"""brinklab: a desk-scale numerical laboratory for dilute-suspension scaling.

Subpackages cover random particle configurations and their length scales
(:mod:`brinklab.geometry`), Monte Carlo event and moment estimation
(:mod:`brinklab.events`), exact Wasserstein-2 transport and rate fitting
(:mod:`brinklab.transport`), periodic-grid rasterization with spectral
H^-1 norms (:mod:`brinklab.fields`), the analytic exterior Stokes solution
with corrector and resistance solvers (:mod:`brinklab.stokes`), and batch
experiment orchestration (:mod:`brinklab.experiments`, :mod:`brinklab.cli`).
"""

__version__ = "0.1.0"

from .kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
