"""
The whole pipeline through the command-line entry point, in a scratch
directory: simulate footage, inspect its trace, estimate and match
fingerprints, calibrate weight tables, and run an evaluation grid.

Each step calls blockprnu.cli.main with the same argv the installed
`blockprnu` command would receive.
"""
import shutil
import tempfile
from pathlib import Path

from blockprnu.cli import main


def run(*argv):
    argv = [str(a) for a in argv]
    print(f"\n$ blockprnu {' '.join(argv)}")
    rc = main(argv)
    assert rc == 0, rc


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)

    # Two cameras with a pronounced sensor pattern; camera A also films
    # two fixed-QP clips reused later for calibration.
    size = ("--width", 64, "--height", 64, "--frames", 16,
            "--k-strength", 0.06)
    run("simulate", *size, "--seed", 1, "--qp", 18,
        "--out-prefix", tmp / "camA", "--out", tmp / "camA.summary")
    print(Path(tmp / "camA.summary").read_text(), end="")
    run("simulate", *size, "--seed", 2, "--qp", 18,
        "--out-prefix", tmp / "camB")
    for qp, cseed in ((15, 101), (28, 102)):
        run("simulate", *size, "--seed", 1, "--content-seed", cseed,
            "--qp", qp, "--out-prefix", tmp / f"camA_q{qp}")

    run("inspect", tmp / "camA.trace")

    # Estimated fingerprints, named <camera_id>.bpf inside one directory.
    refs = tmp / "refs"
    for cam in ("camA", "camB"):
        run("estimate", "--frames", tmp / f"{cam}.yuv",
            "--trace", tmp / f"{cam}.trace", "--scheme", "conventional",
            "--source-id", cam, "--out", refs / f"{cam}.bpf")

    # Same camera matches loudly, different cameras stay quiet.
    run("match", "--test", refs / "camA.bpf",
        "--reference", refs / "camB.bpf")
    run("match", "--test", refs / "camA.bpf",
        "--reference", tmp / "camA.true.bpf")

    # simulate also wrote each camera's true pattern; calibration and
    # evaluation score their estimates against those.
    truth = tmp / "truth"
    truth.mkdir()
    for cam in ("camA", "camB"):
        shutil.copy(tmp / f"{cam}.true.bpf", truth / f"{cam}.bpf")

    manifest = tmp / "calib.csv"
    manifest.write_text("camA,camA_q15.yuv,camA_q15.trace,15\n"
                        "camA,camA_q28.yuv,camA_q28.trace,28\n")
    run("calibrate", "--mode", "qp", "--manifest", manifest,
        "--references", truth, "--out", tmp / "qp.wt",
        "--report", tmp / "qp.report")
    print(Path(tmp / "qp.report").read_text(), end="")
    run("calibrate", "--mode", "lambda_r", "--manifest", manifest,
        "--references", truth, "--out", tmp / "lr.wt", "--buckets", 4)

    eval_manifest = tmp / "eval.csv"
    eval_manifest.write_text("vidA,camA,camA.yuv,camA.trace\n"
                             "vidB,camB,camB.yuv,camB.trace\n")
    run("evaluate", "--manifest", eval_manifest, "--references", truth,
        "--schemes", "conventional,qp_noskip,lambda_r",
        "--qp-noskip-table", tmp / "qp.wt",
        "--lambda-table", tmp / "lr.wt", "--out-prefix", tmp / "e")
    print(Path(tmp / "e.table.txt").read_text(), end="")
    print(Path(tmp / "e.means.txt").read_text(), end="")
