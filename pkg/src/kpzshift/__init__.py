"""Finite-time corrections, non-random shifts and lattice effects for KPZ
growth models (PNG, TASEP, PASEP)."""

import importlib

__version__ = "0.1.0"

# names are resolved on first access so that light commands (e.g. the shift
# CLI) do not pay for numba and the Fredholm machinery
_EXPORTS = {
    "errors": ("AccuracyError", "DivergenceError", "RangeError", "SimulationError"),
    "shifts": ("ScalingConstants", "a_pq", "height_shift", "p_critical", "scaling_constants",
               "wasep_expansion"),
    "kernels": ("KernelModel", "k_prelimit", "k_rescaled", "kernel_matrix"),
    "fredholm": ("LatticeGrid", "LimitLaw", "det_continuum", "det_lattice", "law_cdf",
                 "law_moments", "law_pdf"),
    "simulate": ("RunBatch", "SimConfig", "batch"),
    "analysis": ("FitReport", "LatticeDistribution", "compare_cdf", "fit_protocol",
                 "make_distribution", "moments"),
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = ["__version__", *_WHERE]


def __getattr__(name):
    if name in _WHERE:
        value = getattr(importlib.import_module(f".{_WHERE[name]}", __name__), name)
        globals()[name] = value
        return value
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(__all__)
