"""lorenzlab: a numerical laboratory for Lorenz-like singular flows.

Classical Lorenz, geometric expanding Lorenz and contracting
(Rovella-type) models, their physical measures, Lyapunov spectra,
entropy diagnostics, expansiveness probes and statistical-stability
sweeps.
"""

__version__ = "0.1.0"
