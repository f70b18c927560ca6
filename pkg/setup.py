"""Build script for the optional compiled kernels.

The package is fully functional without the extension: cnckit.kernels falls
back to the numpy implementations when the compiled module is absent.

The src-layout mapping is repeated here because older pips run
``setup.py develop`` directly, bypassing the pyproject metadata.
"""

from setuptools import Extension, find_packages, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "cnckit.kernels._fast",
                ["src/cnckit/kernels/_fast.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(
    name="cnckit",
    package_dir={"": "src"},
    packages=find_packages("src"),
    ext_modules=ext_modules,
)
