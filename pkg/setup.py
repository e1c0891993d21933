import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # build without the compiled kernel; numpy fallback is used
    cythonize = None

ext_modules = []
if cythonize is not None and os.environ.get("X3D_FORGE_NO_EXT") != "1":
    ext_modules = cythonize(
        [
            Extension(
                "x3d_forge.engine._kernels",
                ["src/x3d_forge/engine/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
