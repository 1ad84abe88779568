import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "sil._kernels",
                ["src/sil/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )
except ImportError:
    # The package still works without the compiled core: sil.kernels falls
    # back to the pure-numpy implementation at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
