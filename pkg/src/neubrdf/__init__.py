"""Fitting and auditing spatially varying BRDFs on meshes."""

__version__ = "0.1.0"

#: on-disk format versions, reported by ``neubrdf --version``
SCHEMA_VERSIONS = {
    "checkpoint": 1,
    "records": 1,
    "scene": 1,
    "model": 1,
    "report": 1,
}
