# Sphinx configuration for the seqnav documentation.
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import os
import sys
sys.path.insert(0, os.path.abspath('../..'))


# -- Project information -----------------------------------------------------

project = 'seqnav'
copyright = '2026, seqnav developers'
author = 'seqnav developers'
release = '0.1.0'


# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
]

autodoc_mock_imports = ['torch', 'textual', 'rich']
autodoc_member_order = 'bysource'

templates_path = ['_templates']
exclude_patterns = []


# -- Options for HTML output -------------------------------------------------

html_theme = 'classic'
html_static_path = ['_static']
