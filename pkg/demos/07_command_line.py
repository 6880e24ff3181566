"""
Command line walkthrough
========================

Generate a corpus, train, evaluate with an attention dump and predict on
unlabeled pairs.  Every step writes plain files into a scratch directory.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path


def gbre(*args):
    cmd = [sys.executable, "-m", "gbre.cli", *map(str, args)]
    print("$ gbre", " ".join(map(str, args)), flush=True)
    subprocess.run(cmd, check=True)


work = Path(tempfile.mkdtemp())
data, run = work / "data", work / "run"
gbre("synth", "--out-dir", data, "--train-bags", 200, "--valid-bags", 60, "--test-bags", 60)
gbre("train", "--data-dir", data, "--epochs", 3, "--out-dir", run)
gbre("eval", "--checkpoint", run / "checkpoint.json", "--data-dir", data,
     "--dump-attention", "--out-dir", run / "eval")
gbre("predict", "--checkpoint", run / "checkpoint.json", "--input", data / "test.jsonl",
     "--out-dir", run / "pred")

print(json.dumps(json.loads((run / "eval" / "metrics.json").read_text()), indent=1))
print((run / "pred" / "predictions.jsonl").read_text().splitlines()[0])
