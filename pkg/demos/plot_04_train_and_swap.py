"""
Train briefly, then swap
========================

A short training run at reduced geometry, followed by a swap and an
evaluation over a few held-out pairs. Pass a step count as the first argument
(default 20); the full-size default configuration trains with
``facetx train --config <file>`` instead.
"""

import sys
import tempfile
from pathlib import Path

from facetx.harness.config import Config
from facetx.harness.driver import evaluate, read_metrics, swap, train
from facetx.synthdata import make_pairs, save_png

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 20
work = Path(tempfile.mkdtemp(prefix="facetx_demo_"))

cfg = Config(image_size=32, channels=16, feat_dim=16, heads=2, n_pairs=32, steps=steps,
             ckpt_every=10, ckpt_path=str(work / "ckpt.ftx"), metrics_path=str(work / "metrics.tsv"))
print(cfg.to_text())

state = train(cfg)
rows = read_metrics(cfg.metrics_path)
print("total loss, first and last step:", rows[0, 6], rows[-1, 6])

held_out = make_pairs(4, seed=999, size=32)
out, (id_d, expr_d, shape_d, q) = swap(state.model, held_out[0].source, held_out[0].target)
save_png(work / "swap.png", out)
print(f"swap: id {id_d:.4f}  expr {expr_d:.3f}  shape {shape_d:.3f}  ssim {q:.4f}")

report = evaluate(state.model, held_out)
print(report.to_tsv())
print("artifacts in", work)
