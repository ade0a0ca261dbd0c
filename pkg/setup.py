import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; graspkit.kernels falls back
    cythonize = None

extensions = []
if cythonize is not None and not os.environ.get("GRASPKIT_NO_EXT"):
    extensions = cythonize(
        [
            Extension(
                "graspkit._kernels",
                ["src/graspkit/_kernels.pyx"],
                include_dirs=[np.get_include()],
                # no FMA contraction: keeps results bit-identical to the numpy fallback
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
