import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

ARTIFACTS = Path(__file__).parent / "_artifacts"


def run_cli(*args, check=True):
    proc = subprocess.run([str(a) for a in args], capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(
            f"command failed ({proc.returncode}): {' '.join(str(a) for a in args)}\n"
            f"stdout: {proc.stdout[-2000:]}\nstderr: {proc.stderr[-2000:]}"
        )
    return proc


@pytest.fixture(scope="session")
def primary_cli():
    path = shutil.which("isacbf")
    if path is None:
        pytest.skip("primary solver CLI 'isacbf' is not installed")
    return path


@pytest.fixture(scope="session")
def artifacts_dir():
    ARTIFACTS.mkdir(exist_ok=True)
    return ARTIFACTS


def write_gdb_instance(path, weight, channels, gamma, sigma2):
    data = {
        "M": int(weight.shape[0]),
        "K": int(channels.shape[0]),
        "gamma": list(map(float, gamma)),
        "sigma2": list(map(float, sigma2)),
        "channels": np.stack([channels.real, channels.imag], axis=-1).tolist(),
        "B": np.stack([weight.real, weight.imag], axis=-1).tolist(),
    }
    Path(path).write_text(json.dumps(data, indent=1))
    return Path(path)
