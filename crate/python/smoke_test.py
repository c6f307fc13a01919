#!/usr/bin/env python3
"""Smoke test for the phaseobs_py extension module.

Locates the compiled cdylib (building it if absent), copies it next to a
temporary directory under the import name Python expects, imports it, and
checks a handful of values with known closed forms.
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def locate_cdylib() -> Path:
    candidates = [
        REPO_ROOT / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libphaseobs_py.so", "libphaseobs_py.dylib", "phaseobs_py.dll")
    ]
    for path in candidates:
        if path.exists():
            return path
    subprocess.run(
        ["cargo", "build", "-p", "phaseobs-py", "--release"],
        cwd=REPO_ROOT,
        check=True,
    )
    for path in candidates:
        if path.exists():
            return path
    raise FileNotFoundError("phaseobs_py cdylib not found after build")


def import_module(workdir: Path):
    source = locate_cdylib()
    suffix = ".pyd" if source.suffix == ".dll" else ".so"
    shutil.copy2(source, workdir / f"phaseobs_py{suffix}")
    sys.path.insert(0, str(workdir))
    import phaseobs_py

    return phaseobs_py


def approx(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol


def main() -> int:
    with tempfile.TemporaryDirectory() as tmp:
        m = import_module(Path(tmp))

        # Exact values.
        assert m.moment_matrix_element(0, 0, 0, 0, 0) == 1.0
        assert m.moment_matrix_element(0, 1, 0, 0, 0) == 0.0, "selection rule"
        assert m.moment_matrix_element(1, 1, 1, 2, 2) == 4.0, "diagonal k+s+1"
        assert m.exp_bound(0, 0, 0.0) == 1.0

        # Densities with closed forms.
        assert approx(m.diagonal_density(0, 0, 0j), 1.0 / math.pi, 1e-14)
        assert approx(
            m.unsharp_position_density(0, 0, 0.0), 1.0 / math.sqrt(2.0 * math.pi), 1e-10
        )

        # Full-plane POVM element resolves the identity.
        op = m.povm_element(0, "full", 4)
        assert op.dim == 4 and op.hermitian
        assert approx(op.entry(0, 0).real, 1.0, 1e-9)
        assert abs(op.entry(0, 1)) <= 1e-9
        assert op.min_eigenvalue() >= 1.0 - 1e-9
        assert '"dim": 4' in op.to_json() or '"dim":4' in op.to_json()

        # Region strings normalize through the same parser as the CLI.
        assert m.parse_region("disk:0,0,1") == "disk:0,0,1"
        try:
            m.parse_region("blob:1")
        except ValueError:
            pass
        else:
            raise AssertionError("invalid region must raise")

        # Determinacy verdict and deterministic sampling.
        assert m.determinacy_verdict(2, 3) is True
        first = m.sample(1, 0, 64, 7)
        second = m.sample(1, 0, 64, 7)
        assert first == second and len(first) == 64
        assert all(isinstance(z, complex) for z in first)

    print("phaseobs_py smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
