"""Walk the eye-tracking scenario through the command line: generate, init, optimize, then process each batch.

Batch 3 renames the fixation columns, batch 4 renames them back (the stored
pipeline is reused) and batch 5 rescales them. Run from anywhere:

    python3 demos/lifecycle.py [workdir]
"""

import json
import sys
import tempfile
from pathlib import Path

from adaptive_pipelines.cli import main

HERE = Path(__file__).resolve().parent


def run(*argv: str) -> int:
    print(f"\n$ adaptive-pipelines {' '.join(argv)}")
    code = main(list(argv))
    print(f"(exit {code})")
    return code


def demo(work: Path) -> None:
    data, root = work / "data", str(work / "registry")
    run("scenario", str(HERE / "scenario.json"), str(data))
    run("--root", root, "--config", str(data / "config.json"), "init", "eye", str(data / "batch_001.csv"))
    run("--root", root, "optimize", "eye")
    batches = json.loads((HERE / "scenario.json").read_text())["batches"]
    for b in range(2, batches + 1):
        run("--root", root, "process", "eye", str(data / f"batch_{b:03d}.csv"))
    run("--root", root, "report", "eye")
    run("--root", root, "report", "eye", "--property", "Fixation-X")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        demo(Path(sys.argv[1]))
    else:
        with tempfile.TemporaryDirectory() as tmp:
            demo(Path(tmp))
