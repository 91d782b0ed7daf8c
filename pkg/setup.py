"""Build script.

The compiled kernel extension is optional: if Cython or a C compiler is
unavailable the install falls back to the pure-Python kernel, which is
selected automatically at import time.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible, otherwise continue without it."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing entirely
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(f"WARNING: compiled kernel unavailable, using pure-Python fallback ({exc})")


def extensions():
    source = "src/ulpsat/kernels/_core.pyx"
    if os.environ.get("ULPSAT_NO_EXTENSION") or not os.path.exists(source):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("WARNING: Cython not installed, building without the compiled kernel")
        return []
    ext = Extension(
        "ulpsat.kernels._core",
        sources=[source],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
