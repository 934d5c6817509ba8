"""Build script: compiles the rollout stepping kernel as a C extension.

The extension is optional.  If Cython or a C compiler is unavailable the
package installs anyway and falls back to the pure-Python kernel (see
lsocert._kernels).  Compile flags deliberately avoid -ffast-math and
-march=native so the compiled kernel performs the same IEEE double
operations as the fallback.
"""

import numpy
from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "lsocert._kernels._rollout_cy",
                ["src/lsocert/_kernels/_rollout_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O2"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
