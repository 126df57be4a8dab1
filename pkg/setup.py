from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    # no Cython at build time: ship the pure-Python flood kernel only
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "stflood.simnet._flood",
                ["src/stflood/simnet/_flood.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
