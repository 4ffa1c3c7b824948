"""Train a small real model and serve it for the explorer end-to-end test.

Prints READY once the app is constructed, then blocks in uvicorn until
killed by the test harness.
"""

import argparse
import sys

from ppn import synth, training
from ppn.data import prepare, split
from ppn.service import create_app
from ppn.training import TrainConfig


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--port", type=int, required=True)
    ap.add_argument("--seed", type=int, default=12)
    opts = ap.parse_args()

    ds = synth.default_dataset(n_patients=240, seed=opts.seed)
    tr, va, _ = split(ds, (0.7, 0.15, 0.15), seed=opts.seed)
    tr_n, stats = prepare(tr)
    va_n, _ = prepare(va, stats=stats)
    cfg = TrainConfig(k=4, hidden=8, epochs=3, batch_size=32,
                      refresh_epochs=(), freeze_duration=0, seed=opts.seed)
    model, _ = training.train(cfg, tr_n, va_n)

    app = create_app(model, dataset=tr)
    print("READY", flush=True)

    import uvicorn
    uvicorn.run(app, host="127.0.0.1", port=opts.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
