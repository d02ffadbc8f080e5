"""Kernel backend selection.

The compiled level-set kernels are used when the extension is importable and
``HILBERT_GEO_BACKEND`` is not set to ``python``; otherwise the numpy versions
from ``_pykernels`` are used.
"""

import os

from . import _pykernels
from ._pykernels import stored_steps
from .errors import ChartEscapeError

_requested = os.environ.get("HILBERT_GEO_BACKEND", "auto").lower()

ckernels = None
if _requested != "python":
    try:
        from . import _ckernels as ckernels
    except ImportError:
        if _requested == "cython":
            raise

if ckernels is not None:
    BACKEND = "cython"
    ls_geodesic = ckernels.ls_geodesic
    ls_flow = ckernels.ls_flow

    def chart_flow(model, x0, v0, f0, y0, yd0, h, nsteps, stride):
        k0 = model.curvature_param or 0.0
        try:
            return ckernels.conf_flow(k0, model.chart_radius, x0, v0, f0, y0, yd0,
                                      h, nsteps, stride)
        except ValueError as exc:
            raise ChartEscapeError(str(exc)) from None
else:
    BACKEND = "python"
    ls_geodesic = _pykernels.ls_geodesic
    ls_flow = _pykernels.ls_flow
    chart_flow = _pykernels.chart_flow

__all__ = ["BACKEND", "ls_geodesic", "ls_flow", "chart_flow", "stored_steps", "ckernels"]
