import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled kernels are an optimisation only; the package falls back to the
# NumPy implementation in otfssim._kernels_py when the extension is missing.
extensions = [
    Extension(
        "otfssim._kernels",
        ["src/otfssim/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # -ffast-math dodges the NaN-correct __muldc3 complex multiply helper
        extra_compile_args=["-O3", "-ffast-math"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )
)
