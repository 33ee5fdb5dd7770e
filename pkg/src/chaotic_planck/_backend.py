"""Selects the kernel implementation at import time.

Set ``CHAOTIC_PLANCK_BACKEND=python`` to force the numpy fallback; the
default uses the compiled extension when it was built.
"""
import importlib
import logging
import os

logger = logging.getLogger(__name__)


def load(name: str | None = None):
    choice = (name or os.environ.get("CHAOTIC_PLANCK_BACKEND", "auto")).lower()
    if choice not in ("auto", "cython", "python"):
        raise ValueError(f"unknown backend {choice!r}")
    if choice in ("auto", "cython"):
        try:
            return importlib.import_module("chaotic_planck._kernels")
        except ImportError:
            if choice == "cython":
                raise
            logger.info("compiled kernels unavailable, using numpy fallback")
    return importlib.import_module("chaotic_planck._kernels_py")


kernels = load()
BACKEND = kernels.BACKEND
