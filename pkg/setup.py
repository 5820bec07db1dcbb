import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("BURGERS_NULLCTL_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "burgers_nullctl._ckernels",
                    ["src/burgers_nullctl/_ckernels.pyx"],
                    extra_compile_args=["-O3"],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
