from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "irlad._kernels.dense_cy",
                ["src/irlad/_kernels/dense_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )
except ImportError:
    # Pure-python kernels are selected at import time when the extension
    # is unavailable.
    ext_modules = []

setup(ext_modules=ext_modules)
