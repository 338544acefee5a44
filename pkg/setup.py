from setuptools import find_packages, setup

from variation_lab._version import __version__

with open("README.md", "r") as f:
    LONG_DESCRIPTION = f.read()
with open("requirements.txt", "r") as f:
    REQUIREMENTS = [line.strip() for line in f if line.strip()]

CLASSIFIERS = [
    "Environment :: Console",
    "Intended Audience :: Science/Research",
    "License :: OSI Approved :: BSD License",
    "Operating System :: OS Independent",
    "Programming Language :: Python",
    "Programming Language :: Python :: 3",
    "Programming Language :: Python :: 3 :: Only",
    "Programming Language :: Python :: 3.11",
    "Topic :: Scientific/Engineering :: Mathematics",
]

setup(
    classifiers=CLASSIFIERS,
    description="Numerical laboratory for variational and oscillation estimates of singular integrals on Lipschitz graphs.",
    entry_points={"console_scripts": ["variation-lab=variation_lab.management:main"]},
    extras_require={
        "docs": ["mkdocs", "mkdocs-material", "mkdocstrings[python]"],
        "test": ["pytest"],
    },
    install_requires=REQUIREMENTS,
    license="BSD-3",
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    name="variation-lab",
    packages=find_packages(include=["variation_lab", "variation_lab.*"]),
    platforms="any",
    python_requires=">=3.9",
    version=__version__,
)
