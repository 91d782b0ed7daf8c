"""Evaluation kernel backends and selection.

Two interchangeable backends execute the compiled programs: a Cython
extension (built at install time when a C toolchain is available) and a
pure-Python fallback.  Selection happens at import: the extension is
preferred, the fallback is used when it is missing, and the environment
variable ULPSAT_KERNEL overrides the choice ("python" forces the fallback,
"compiled" demands the extension and fails loudly without it).
"""

from __future__ import annotations

import os

from ulpsat.kernels.program import CompiledProgram, compile_formula

__all__ = [
    "BACKEND",
    "CompiledProgram",
    "Kernel",
    "available_backends",
    "compile_formula",
]


def _load(name: str):
    if name == "python":
        from ulpsat.kernels import _core_py

        return _core_py
    from ulpsat.kernels import _core  # type: ignore[attr-defined]

    return _core


_requested = os.environ.get("ULPSAT_KERNEL", "auto").strip().lower() or "auto"
if _requested in ("python", "py"):
    _impl = _load("python")
elif _requested in ("compiled", "c", "native"):
    _impl = _load("compiled")
elif _requested == "auto":
    try:
        _impl = _load("compiled")
    except ImportError:
        _impl = _load("python")
else:
    raise RuntimeError(
        f"ULPSAT_KERNEL={_requested!r} not recognized; use 'python', 'compiled', or 'auto'"
    )

Kernel = _impl.Kernel
BACKEND: str = _impl.BACKEND


def available_backends() -> dict:
    """Importable backend modules by name; used by tests and the benchmark."""
    from ulpsat.kernels import _core_py

    out = {"python": _core_py}
    try:
        from ulpsat.kernels import _core  # type: ignore[attr-defined]

        out["compiled"] = _core
    except ImportError:
        pass
    return out
