"""Build script.

The compiled kernels are optional: if Cython (or a C compiler) is not
available the package installs anyway and falls back to the pure-Python
implementation of the same routines at import time.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "photoconv._kernels",
                ["src/photoconv/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - depends on build environment
    print(f"photoconv: building without compiled kernels ({exc})")
    ext_modules = []

setup(ext_modules=ext_modules)
