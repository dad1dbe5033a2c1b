# setuptools_scm writes _version.py at build time; a source checkout that was
# never built falls back to a placeholder.
try:
    from ._version import version
except ImportError:
    import warnings

    warnings.warn(
        f'could not determine {__name__.split(".")[0]} package version; '
        'this indicates a broken installation')
    del warnings

    version = '0.0.0'

release = 'dev' not in version
