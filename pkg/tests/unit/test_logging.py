"""Unit tests for the structlog processors."""
import json

import numpy as np
import structlog

from spair.core.logging import ARRAY_PREVIEW, numpy_values


class TestNumpyValues:
    """Tests for the numpy-aware log processor."""

    def test_scalars_become_python_numbers(self):
        event = numpy_values(None, "info", {"event": "x", "loss": np.float32(0.25), "step": np.int64(3)})
        assert event["loss"] == 0.25 and type(event["loss"]) is float
        assert event["step"] == 3 and type(event["step"]) is int

    def test_arrays_are_summarised(self):
        event = numpy_values(None, "info", {"event": "x", "mask": np.arange(10, dtype=np.float32)})
        assert event["mask"] == {"shape": [10], "dtype": "float32",
                                 "head": list(range(ARRAY_PREVIEW))}

    def test_output_renders_as_json(self):
        event = numpy_values(None, "info", {"event": "train.step", "lr": np.float64(2e-4),
                                            "grid": np.zeros((2, 2))})
        line = structlog.processors.JSONRenderer()(None, "info", event)
        assert json.loads(line)["lr"] == 2e-4

    def test_plain_values_untouched(self):
        event = {"event": "x", "path": "runs/a", "count": 2}
        assert numpy_values(None, "info", dict(event)) == event
