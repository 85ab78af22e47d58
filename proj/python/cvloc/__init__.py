"""Cross-view 3-DoF vehicle pose refinement against satellite feature maps."""

import json

from ._core import *  # noqa: F401,F403
from ._core import _check_numerics, _run_eval


def run_eval(problem, trials, bounds, seed=0, workers=1):
    """Seeded batch evaluation; returns the metrics summary as a dict."""
    return json.loads(_run_eval(problem, trials, bounds, seed, workers))


def check_numerics(seed=0):
    """Runs the numerical self-checks; returns the report as a dict."""
    return json.loads(_check_numerics(seed))
