from setuptools import setup


setup(
    name="ipad",
    use_scm_version=True,
    setup_requires=['setuptools_scm'],
    packages=['ipad'],
    python_requires='>=3.8',
    entry_points={
        'pytest11': ['ipad = ipad.plugin'],
        'console_scripts': ['ipad = ipad.cli:main'],
    },
    install_requires=['numpy>=1.20', 'scipy', 'Pillow', 'pytest>=7',
                      'colorama'],

    # metadata for upload to PyPI
    description="Inexact proximal alternating direction solvers for "
                "l0 sparse dictionary learning",
    long_description=open('README.rst').read(),
    license="MIT",
    keywords="optimization proximal dictionary-learning admm pytest",
    classifiers=[
        'Development Status :: 4 - Beta',
        'Framework :: Pytest',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Topic :: Scientific/Engineering :: Mathematics',
        'Topic :: Scientific/Engineering :: Image Processing',
    ],
)
