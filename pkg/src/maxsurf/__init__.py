"""Numerical toolkit for maximal surfaces in Lorentz-Minkowski 3-space."""

__all__ = [
    "INFINITY",
    "CausalClass",
    "HyperbolicPoint",
    "LorentzVec",
    "classify",
    "lorentz_inner",
    "stereographic",
]


def __getattr__(name):
    # lazy so that the command line can configure threads before numpy loads
    if name in __all__:
        from . import lorentz

        return getattr(lorentz, name)
    raise AttributeError(f"module 'maxsurf' has no attribute {name!r}")
