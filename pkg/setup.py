"""Setup script for SDE Perturbation Lab."""

from setuptools import setup, find_packages
import os
import re

# Read version from the package without importing it
with open(os.path.join('sde_perturbation', '__init__.py'), 'r', encoding='utf-8') as f:
    version = re.search(r'^__version__ = "([^"]+)"', f.read(), re.M).group(1)

# Read long description from README
with open('README.md', 'r', encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='sde-perturbation',
    version=version,
    author='Anach',
    description='Numerical experiments on Alekseev-Groebner type perturbation identities for SDEs',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['tests']),
    classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Topic :: Scientific/Engineering :: Mathematics',
    ],
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.20',
        'scipy>=1.7',
        'send2trash',
        'packaging',
    ],
    extras_require={
        'test': ['pytest>=7'],
    },
    entry_points={
        'console_scripts': [
            'sde-perturbation=sde_perturbation:main',
        ],
    },
)
