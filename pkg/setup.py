"""A setuptools based setup module for **DAG Feasibility**."""

# Always prefer setuptools over distutils
from setuptools import setup, find_packages
# To use a consistent encoding
from codecs import open
from os import path

here = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(here, 'README.rst'), encoding='utf-8') as f:
    long_description = f.read()

# Get the version number from the package's version module
version_dict = {}
with open(path.join(here, 'dag_feasibility', '__version__.py')) as version_file:
    exec(version_file.read(), version_dict)                                     # pylint: disable=W0122

version = version_dict.get('__version__')


setup(
    name='dag-feasibility',
    version=version,
    description=('Sampled feasible parameter sets of DAG-structured constraint '
                 'satisfaction problems'),
    long_description = long_description,
    license='MIT',

    classifiers=[
        'Development Status :: 3 - Alpha',

        'Environment :: Console',
        'Operating System :: OS Independent',
        'Intended Audience :: Developers',
        'Intended Audience :: Science/Research',

        'Topic :: Software Development :: Libraries :: Python Modules',
        'Topic :: Scientific/Engineering',
        'Topic :: Scientific/Engineering :: Chemistry',
        'Topic :: Scientific/Engineering :: Mathematics',

        'License :: OSI Approved :: MIT License',

        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11'
    ],

    zip_safe = False,

    keywords=('feasibility design-space constraint-satisfaction DAG decomposition sampling '
              'support-vector-machine kernel-ridge-regression sobol'),

    packages=find_packages(exclude=['contrib', 'docs', 'tests']),

    install_requires=[
        'numpy>=1.20',
        'scipy>=1.7',
        'scikit-learn>=1.0',
        'validator-collection>=1.5.0',
        'simplejson>=3.0',
        'PyYAML',
        'pandas>=1.2.0',
    ],

    extras_require={
        'dev': ['check-manifest',
                'sphinx',
                'sphinx-rtd-theme',
                'sphinx-tabs',
                'readme-renderer',
                'restview'],
        'test': ['coverage',
                 'pytest',
                 'pytest-cov',
                 'tox',
                 'codecov'],
    },

    python_requires='>=3.8, <4',

    entry_points={
        'console_scripts': [
            'dag-feasibility=dag_feasibility.cli:main',
        ],
    },
)
