"""Cross-checks cavkit's NPY files against numpy in both directions.

usage: npy_crosscheck.py <cavkit binary> <work dir>
"""
import io
import json
import pathlib
import shutil
import subprocess
import sys

try:
    import numpy as np
except ImportError:
    print("numpy not available, skipping")
    sys.exit(77)


def check(cond, msg):
    if not cond:
        print("FAIL:", msg)
        sys.exit(1)


def main():
    cli, work = sys.argv[1], pathlib.Path(sys.argv[2])
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)

    # cavkit -> numpy: every file loads and is byte-identical to numpy's own encoding
    toy = work / "toy"
    subprocess.run([cli, "synth", "--out", str(toy), "--samples", "60", "--epochs", "2",
                    "--layer", "hidden_post", "--layer", "conv_post"], check=True, stdout=subprocess.DEVNULL)
    manifest = json.loads((toy / "bundle.json").read_text())
    files = sorted(toy.glob("*.npy"))
    check(len(files) == 1 + 2 * (1 + 3), f"unexpected file count {len(files)}")
    for f in files:
        raw = f.read_bytes()
        arr = np.load(f)
        check(arr.dtype == np.dtype("<f4"), f"{f.name}: dtype {arr.dtype}")
        check(arr.flags.c_contiguous, f"{f.name}: not C-order")
        check(np.isfinite(arr).all(), f"{f.name}: non-finite values")
        buf = io.BytesIO()
        np.save(buf, arr)
        check(buf.getvalue() == raw, f"{f.name}: bytes differ from numpy.save")
    acts = np.load(toy / manifest["activation_files"]["conv_post"])
    check(acts.shape == (60, 8, 16, 16), f"conv_post shape {acts.shape}")
    check(np.load(toy / "images.npy").shape == (60, 1, 16, 16), "images shape")

    one = work / "one.npy"
    np.save(one, np.zeros((1,), dtype="<f4"))
    check(one.stat().st_size == 132, f"numpy (1,) file is {one.stat().st_size} bytes")

    # numpy -> cavkit: a bundle written by numpy, mixing float64 and float32
    rng = np.random.default_rng(3)
    n, d = 48, 5
    bundle = work / "np_bundle"
    bundle.mkdir()
    ids = [f"x{i}" for i in range(n)]
    flags = rng.integers(0, 2, n)
    x = rng.normal(size=(n, d)) + 2.0 * flags[:, None] * np.eye(d)[0]
    np.save(bundle / "acts.npy", x.astype("<f8"))
    classes = ["A", "B"]
    grads = {}
    for k, c in enumerate(classes):
        g = rng.normal(size=(n, d)).astype("<f4")
        np.save(bundle / f"grad_{c}.npy", g)
        grads[c] = f"grad_{c}.npy"
    labels = [classes[i % 2] for i in range(n)]
    concept = [int(v) for v in flags]
    concept[0] = None
    (bundle / "bundle.json").write_text(json.dumps({
        "version": 1, "layers": ["L"], "classes": classes, "sample_ids": ids,
        "activation_files": {"L": "acts.npy"}, "gradient_files": {"L": grads},
        "concept_labels": {"bump": concept}, "class_labels": labels}))
    out = work / "np_run"
    proc = subprocess.run([cli, "run", "--manifest", str(bundle / "bundle.json"), "--repetitions", "3",
                           "--random-cavs", "3", "--random-subset-size", "40", "--out", str(out)],
                          capture_output=True, text=True)
    check(proc.returncode == 0, f"run on numpy bundle failed: {proc.stderr}")
    rows = (out / "scores.csv").read_text().strip().splitlines()
    check(len(rows) == 1 + 3 * 2, f"scores.csv has {len(rows)} lines")

    # fortran-order arrays are refused with a data-contract exit status
    np.save(bundle / "acts.npy", np.asfortranarray(x.astype("<f4")))
    proc = subprocess.run([cli, "run", "--manifest", str(bundle / "bundle.json"), "--out", str(work / "bad_run")],
                          capture_output=True, text=True)
    check(proc.returncode == 3, f"fortran-order bundle exit status {proc.returncode}")
    print("numpy cross-check passed")


if __name__ == "__main__":
    main()
