"""Build script: compiles the optional kernel extension when Cython is present.

Without Cython (or a working compiler) the install still succeeds and the
package falls back to the pure-Python kernels at import time.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "jfpd._kernels._core",
                ["src/jfpd/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # keep cos/sin as separate libm calls: gcc's sincos fusion
                # rounds differently and would break bit-parity with the
                # pure-Python backend
                extra_compile_args=["-fno-builtin-sin", "-fno-builtin-cos"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
