# Sphinx configuration for the msctrack docs.
#
# API pages are generated with
#    export SPHINX_APIDOC_OPTIONS="members,undoc-members,show-inheritance"
#    sphinx-apidoc -o _docs ../msctrack

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

from msctrack import __version__

project = 'msctrack'
copyright = '2022, NonProjects'
author = 'NonProjects'

release = __version__

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.autosectionlabel',
    'sphinx.ext.mathjax'
]
# Heavy imports are not needed to read docstrings
autodoc_mock_imports = ['cv2', 'sklearn', 'matplotlib']
autodoc_member_order = 'bysource'
autosectionlabel_prefix_document = True

templates_path = ['_templates']
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']

html_theme = 'sphinx_rtd_theme'
