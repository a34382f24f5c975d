import os

from setuptools import setup

ext_modules = []
if os.environ.get("SIMPRIOR_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "simprior._kernel",
                    ["src/simprior/_kernel.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # no contraction or fast-math: results must match the fallback bit for bit
                    extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
                )
            ],
            compiler_directives={"language_level": 3},
        )

setup(ext_modules=ext_modules)
