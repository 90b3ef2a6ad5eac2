"""Backend selection for the hot loops.

The compiled module is used when it imports; set ``TOEPWEYL_PURE_PYTHON=1`` to
force the NumPy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("TOEPWEYL_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels


def neumaier_sum(a):
    import numpy as np

    return _impl.neumaier_sum(np.ascontiguousarray(a, dtype=float))


def neumaier_dot(a, b):
    import numpy as np

    return _impl.neumaier_dot(
        np.ascontiguousarray(a, dtype=float), np.ascontiguousarray(b, dtype=float)
    )


def compensated_complex_dot(values, weights) -> complex:
    import numpy as np

    values = np.asarray(values)
    weights = np.asarray(weights, dtype=float)
    re = neumaier_dot(np.real(values), weights)
    im = neumaier_dot(np.imag(values), weights) if np.iscomplexobj(values) else 0.0
    return complex(re, im)


def atom_convolution(x, loc, w, nodes, coef, scale, cutoff, kind, backend=None):
    import numpy as np

    impl = {"python": _pykernels, None: _impl}.get(backend, _impl)
    if backend == "cython":
        from . import _ckernels as impl
    return impl.atom_convolution(
        np.ascontiguousarray(x, dtype=float),
        np.ascontiguousarray(loc, dtype=float),
        np.ascontiguousarray(w, dtype=float),
        np.ascontiguousarray(nodes, dtype=float),
        np.ascontiguousarray(coef, dtype=float),
        float(scale),
        float(cutoff),
        int(kind),
    )
