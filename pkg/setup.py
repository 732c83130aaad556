"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so any failure here degrades to a pure-Python install rather
than aborting.  `-ffp-contract=off` keeps the compiled kernels bit-identical
to the numpy path in exact projection mode (no FMA contraction).
"""

import sys

import numpy
from setuptools import Extension, setup


def _extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("graspgeo: Cython not available, building without compiled kernels",
              file=sys.stderr)
        return []
    ext = Extension(
        "graspgeo._kernels",
        ["src/graspgeo/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extensions())
