import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "elastic_opt._kernels",
                ["src/elastic_opt/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython: install pure-Python only; elastic_opt.kernels falls back at import.
    ext_modules = []

setup(ext_modules=ext_modules)
