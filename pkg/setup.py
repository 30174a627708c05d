"""Build the optional Cython kernels.

The extension is optional: when Cython or a C compiler is missing the
package installs anyway and ``msc.kernels`` falls back to pure Python.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("MSC_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "msc._ckernels",
                    ["src/msc/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
