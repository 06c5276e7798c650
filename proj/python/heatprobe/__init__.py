"""Python bindings for heatprobe.

The compiled core lives in ``heatprobe._heatprobe``; ``run`` accepts the
same JSON experiment configs as the command-line tool.
"""

import json

from ._heatprobe import (  # noqa: F401
    ConfigError,
    Error,
    SchemaError,
    __version__,
    box_dimension,
    capacity,
    green,
    hausdorff_upper,
    kernel_mass,
    kinds,
    predict,
    simulate,
    variance_integral,
    wilson_interval,
)
from ._heatprobe import _run_json


def run(config, threads=0):
    """Run one experiment config (dict or JSON text); returns the summary
    document with an extra ``tables`` entry."""
    text = config if isinstance(config, str) else json.dumps(config)
    return json.loads(_run_json(text, threads))
