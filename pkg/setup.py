from setuptools import setup

setup(
    name             = 'msctrack',
    packages         = ['msctrack', 'msctrack.trackers', 'msctrack.harness'],
    version          = '1.0',
    license          = 'LGPL-2.1',
    description      = 'Correlation-filter visual tracking with MSC features',
    long_description = open('README.rst').read(),
    author           = 'NonProjects',
    author_email     = 'thenonproton@pm.me',

    long_description_content_type='text/x-rst',

    install_requires = [
        'numpy>=1.21',
        'scipy>=1.8',
        'opencv-python-headless>=4.5',
        'scikit-learn>=1.0',
        'matplotlib>=3.5',
        'filetype==1.0.8'
    ],
    keywords = [
        'Tracking', 'Correlation-Filter', 'Computer-Vision',
        'DCF', 'CCO', 'Benchmark'
    ],
    extras_require = {
        'test': [
            'pytest>=7.0',
            'hypothesis>=6.0'
        ],
        'doc': ['sphinx-rtd-theme==1.0.0']
    },
    entry_points = {
        'console_scripts': [
            'msctrack = msctrack.harness.cli:main'
        ]
    },
    classifiers = [
        'Development Status :: 4 - Beta',
        'Intended Audience :: Developers',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Image Recognition',
        'Topic :: Software Development :: Libraries :: Python Modules',
        'License :: OSI Approved :: GNU Lesser General Public License v2 (LGPLv2)',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10'
    ]
)
