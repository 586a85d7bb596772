"""Closed-loop tracking on the circle preset, driven through the CLI.

Run with ``python3 demos/circle_tracking.py [workdir]``. The script

1. simulates the circle sequence (events, IMU, map, ground truth and a
   ready-to-run ``run.ini``),
2. tracks it with the second-order motion model,
3. reports ATE at 30 %, 50 % and 100 % of the sequence,
4. writes ``trajectory.svg`` comparing estimate and ground truth.

Takes about 40 s on one core.
"""

import json
import sys
import tempfile
from pathlib import Path

from evtrack.cli import main


def run(*argv):
    code = main(list(argv))
    if code:
        sys.exit(code)


if __name__ == "__main__":
    work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="evtrack-circle-"))
    print(f"# working in {work}\n")

    print("## simulate")
    run("simulate", "--preset", "circle", "--out", str(work))

    print("\n## track (this is the slow part)")
    run("track", str(work / "run.ini"), "--output", str(work / "estimate.txt"),
        "--report", str(work / "report.json"))
    report = json.loads((work / "report.json").read_text())
    t = report["timings"]
    print(f"\n{report['keyframes']} keyframes, bootstrap finished at t = {report['init_time']:.2f} s, "
          f"{t['wall']:.1f} s wall time")

    print("\n## accuracy along the sequence")
    run("evaluate", str(work / "estimate.txt"), str(work / "groundtruth.txt"), "--milestones")

    print("\n## figure")
    run("plot", str(work / "groundtruth.txt"), str(work / "estimate.txt"),
        "--labels", "ground truth,estimate", "--out", str(work / "trajectory.svg"))
