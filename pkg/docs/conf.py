# Sphinx configuration for the heraldsim guide.
import os
import subprocess

from heraldsim import __version__

project = 'heraldsim'
copyright = '2026, The heraldsim Developers'
author = 'The heraldsim Developers'
release = __version__
is_development = '.dev' in __version__

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.intersphinx',
    'sphinx.ext.viewcode',
    'sphinx.ext.napoleon',
    'sphinx.ext.doctest',
    'sphinx.ext.mathjax',
    'sphinx_automodapi.automodapi',
    'sphinx_automodapi.smart_resolver',
]
exclude_patterns = ['_build']
source_suffix = '.rst'
master_doc = 'index'
default_role = 'obj'
automodsumm_inherited_members = False
automodapi_inheritance_diagram = False

intersphinx_mapping = {
    'python': ('https://docs.python.org/3/', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
    'matplotlib': ('https://matplotlib.org/stable/', None),
    'astropy': ('https://docs.astropy.org/en/stable/', None),
}

html_theme = 'default'

# Unreleased changelog fragments, rendered by towncrier.
target_file = os.path.abspath("./whatsnew/latest_changelog.txt")
try:
    if is_development:
        draft = subprocess.run(["towncrier", "--draft", "--version", __version__],
                               cwd="..", capture_output=True, text=True, check=True).stdout
        with open(target_file, 'w') as handle:
            handle.write(draft)
except Exception as e:
    print(f"Failed to add changelog to docs with error {e}.")
open(target_file, 'a').close()
