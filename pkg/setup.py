import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

openmp = [] if os.environ.get("HEIGHTLAB_NO_OPENMP") else ["-fopenmp"]

extensions = [
    Extension(
        "heightlab._core",
        ["src/heightlab/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffp-contract=off", *openmp],
        extra_link_args=openmp,
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
