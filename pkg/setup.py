from codecs import open
from os import path

from setuptools import setup, find_packages

here = path.abspath(path.dirname(__file__))

with open(path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='jtcomp',
    version='0.1.0',
    description='Precoder design for joint-transmission CoMP with limited feedback and limited backhaul',
    long_description=long_description,
    long_description_content_type='text/markdown',
    license='MIT',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
    ],
    python_requires='>=3.8',
    packages=find_packages(exclude=['tests']),
    package_data={'jtcomp': ['reference.conf']},
    install_requires=[
        # numerics and the conic solver front end
        'scipy>=1.6',
        'numpy>=1.20',
        'cvxpy>=1.3',
        # further tools
        'more-itertools>=8.0',
        'tabulate>=0.8',
        'pyhocon>=0.3.54'
    ],
    extras_require={
        'test': ['pytest>=6.0'],
    },
    entry_points={
        'console_scripts': ['jtcomp = jtcomp.harness.cli:main'],
    },
)
