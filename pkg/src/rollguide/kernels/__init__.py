"""Hot piano-roll kernels: compiled core with a pure-numpy fallback.

The compiled extension is preferred when it imported cleanly; the numpy
fallback is always importable as ``rollguide.kernels._fallback``.  The
active implementation is reported by ``IMPL``.
"""

from . import _fallback

try:
    from . import _ckernels as _impl
except ImportError:          # extension not built on this install
    _impl = _fallback

IMPL = _impl.IMPL

pitch_class_profile = _impl.pitch_class_profile
density_counts = _impl.density_counts
frame_chord_codes = _impl.frame_chord_codes
longest_run_codes = _impl.longest_run_codes
smooth_velocity_runs = _impl.smooth_velocity_runs

__all__ = [
    "IMPL", "pitch_class_profile", "density_counts", "frame_chord_codes",
    "longest_run_codes", "smooth_velocity_runs",
]
