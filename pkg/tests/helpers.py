"""Paths to the bundled models and shared test plumbing."""

from __future__ import annotations

from pathlib import Path

import pytest

from deltareach.benchmarks import models_dir

MODEL_NAMES = ("bouncing_ball", "bcf", "fk", "bcf_spike_dome", "fk_spike_dome")

# lines collected by the acceptance suite, printed in the terminal summary
ACCEPTANCE = pytest.StashKey[list]()


def model_path(name: str) -> Path:
    return models_dir() / f"{name}.model"
