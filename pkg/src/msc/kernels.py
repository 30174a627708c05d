"""Backend selection for the hot loops.

The compiled ``_ckernels`` extension is used when importable; otherwise, or
when the environment variable ``MSC_PURE_PYTHON`` is set to a non-empty
value other than ``0``, the numpy fallback in ``_pykernels`` is used.
``BACKEND`` names the active choice.
"""
import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

_force_pure = os.environ.get("MSC_PURE_PYTHON", "") not in ("", "0")

if _force_pure:
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        log.info("compiled kernels unavailable, using pure-Python fallback")
        _impl = _pykernels

BACKEND = "python" if _impl is _pykernels else "cython"

lasso_cd = _impl.lasso_cd
lasso_cd_batch = _impl.lasso_cd_batch
lasso_path_batch = _impl.lasso_path_batch
omp = _impl.omp


def get_backend(name):
    """Return the kernel module for ``"python"`` or ``"cython"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
