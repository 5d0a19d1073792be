"""
Description:
Author: hikonv contributors
Date: 2022-04-21 04:30:02
LastEditors: hikonv contributors
LastEditTime: 2022-04-21 04:30:02
"""
import os
import re

from setuptools import Command, find_packages, setup

here = os.path.abspath(os.path.dirname(__file__))

# Get the long description from the README file
with open(os.path.join(here, "README.md"), encoding="utf-8") as f:
    long_description = f.read()

# read the version without importing the package and its dependencies
with open(os.path.join(here, "hikonv", "version.py"), encoding="utf-8") as f:
    __version__ = re.search(r"__version__\s*=\s*['\"]([^'\"]+)['\"]", f.read()).group(1)


class CleanCommand(Command):
    """Custom clean command to tidy up the project root."""

    user_options = []

    def initialize_options(self):
        pass

    def finalize_options(self):
        pass

    def run(self):
        os.system("rm -vrf ./build ./dist ./*.pyc ./*.tgz ./*.egg-info ./hikonv/*.egg-info")


setup(
    name="hikonv",
    version=__version__,
    description="Packed low-bitwidth convolution on wide integer multipliers",
    long_description=long_description,
    long_description_content_type="text/markdown",
    author="hikonv contributors",
    license="MIT",
    install_requires=[
        "numpy>=1.19.2",
        "tqdm>=4.56.0",
        "setuptools>=52.0.0",
        "torch>=1.13.0",
        "torchonn-pyutils>=0.0.1",
        "pyyaml>=5.1.1",
    ],
    extras_require={
        "test": ["hypothesis>=6.0.0"],
    },
    classifiers=[
        # How mature is this project? Common values are
        #   3 - Alpha
        #   4 - Beta
        #   5 - Production/Stable
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Education",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3.7",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Topic :: Scientific/Engineering",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Software Development :: Libraries :: Python Modules",
    ],
    python_requires=">=3.7",
    include_package_data=True,
    packages=find_packages(exclude=["unitest", "unitest.*"]),
    entry_points={"console_scripts": ["hikonv=hikonv.cli:run"]},
    cmdclass={"clean": CleanCommand},
)
