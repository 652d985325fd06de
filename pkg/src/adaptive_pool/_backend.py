"""Kernel selection.

The compiled kernels are used when importable. Set ``ADAPTIVE_POOL_BACKEND``
to ``python`` to force the numpy fallback (or ``cython`` to fail loudly when
the extension is missing).
"""
import importlib
import logging
import os

logger = logging.getLogger(__name__)


def load(name: str | None = None):
    """Return a kernel module by name, or the best available one."""
    name = name or os.environ.get("ADAPTIVE_POOL_BACKEND", "auto")
    if name == "python":
        return importlib.import_module("adaptive_pool._pykernels")
    try:
        return importlib.import_module("adaptive_pool._ckernels")
    except ImportError:
        if name == "cython":
            raise
        logger.debug("compiled kernels unavailable, using numpy fallback")
        return importlib.import_module("adaptive_pool._pykernels")


kernels = load()


def available() -> list[str]:
    names = ["python"]
    try:
        importlib.import_module("adaptive_pool._ckernels")
    except ImportError:
        return names
    return ["cython"] + names


def thread_count() -> int:
    """Worker cap from ``ADAPTIVE_POOL_THREADS`` (0 or unset = CPU count)."""
    raw = os.environ.get("ADAPTIVE_POOL_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"ADAPTIVE_POOL_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("ADAPTIVE_POOL_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)
