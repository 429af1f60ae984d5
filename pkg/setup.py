import numpy as np
from setuptools import Extension, setup

# The compiled kernels are optional: the package falls back to the pure
# numpy implementation in vru_intent.kernels._python when the extension
# is unavailable.  -ffp-contract=off keeps the C arithmetic bit-identical
# to the numpy fallback (no FMA contraction in the split-score math).
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "vru_intent.kernels._native",
                ["src/vru_intent/kernels/_native.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
