#!/usr/bin/env python3
"""
Setup script for partldp.
"""

from setuptools import setup, find_packages

# Read the README file
def read_readme():
    with open("README.md", "r", encoding="utf-8") as fh:
        return fh.read()

def read_requirements():
    return ["numpy>=1.24", "scipy>=1.10"]

setup(
    name="partldp",
    version="0.1.0",
    author="Your Name",
    author_email="your.email@example.com",
    description="Partitioning classifiers with and without local differential privacy, with rate-of-convergence experiments",
    long_description=read_readme(),
    long_description_content_type="text/markdown",
    url="https://github.com/yourusername/partldp",
    packages=find_packages(include=["partldp*"]),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Programming Language :: Python :: 3.13",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Topic :: Security",
    ],
    python_requires=">=3.11",
    install_requires=read_requirements(),
    entry_points={
        "console_scripts": [
            "partldp=partldp.cli:main",
        ],
    },
    include_package_data=True,
    zip_safe=False,
    keywords="classification histogram local-differential-privacy margin-condition",
    project_urls={
        "Bug Reports": "https://github.com/yourusername/partldp/issues",
        "Source": "https://github.com/yourusername/partldp",
        "Documentation": "https://github.com/yourusername/partldp#readme",
    },
)
