__version__ = "0.1.0"


def get_versions() -> dict:
    """Return version information in the shape packaging tools expect."""
    return {"version": __version__, "full-revisionid": None, "dirty": False}
