import os

from setuptools import setup

ext_modules = []
if os.environ.get("ADAPTIVE_POOL_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        # the pure numpy kernels are used instead
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "adaptive_pool._ckernels",
                    ["src/adaptive_pool/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # no -ffast-math: the exact summation relies on IEEE semantics
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
