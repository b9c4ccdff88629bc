import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off keeps the compiled compositing kernel on plain IEEE
# mul/add so it agrees with the numpy fallback at the ulp level.
extensions = [
    Extension(
        "thermosplat._compositing",
        ["src/thermosplat/_compositing.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
