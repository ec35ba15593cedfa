import os

import numpy as np
from setuptools import Extension, setup

PYX = "src/rangepose/_core/_kernels.pyx"

ext_modules = []
if os.path.exists(PYX):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "rangepose._core._kernels",
                [PYX],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)

