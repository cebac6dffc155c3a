import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# No -ffast-math: the compiled loop must stay bit-identical to the pure-Python engine.
extensions = [
    Extension(
        "meterguard._fastloop",
        ["src/meterguard/_fastloop.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
