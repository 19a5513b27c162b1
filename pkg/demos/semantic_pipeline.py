"""Train a small split CNN, rank its feature maps, and send pruned frames.

A short run (12 epochs instead of 40) so the script finishes in a couple
of minutes. The full recipe lives in ExperimentConfig.
"""

import dataclasses

import numpy as np

from scait.channel import ChannelConfig
from scait.dataset import build_dataset
from scait.harness.config import ExperimentConfig
from scait.knowledge_base import build_kb
from scait.nn import Model, ModelSpec, accuracy, train
from scait.pipeline import impair_frame, semantic_receive
from scait.semantic_codec import encode_frame, frame_size, num_keep, random_select, select_maps

split = build_dataset(per_class=300)
cfg = dataclasses.replace(ExperimentConfig().train_config(), epochs=12)
model, history = train(Model.init(ModelSpec(), seed=0), split, cfg)
print(f"test accuracy after {cfg.epochs} epochs: {accuracy(model, split.test_x, split.test_y):.3f}")

kb = build_kb(model, split.train_x, split.train_y)
ranking = kb.ranking()
print("top maps by gradient score:", ranking[:8].tolist())

maps = model.extract(split.test_x)
k = model.spec.num_maps
channel = ChannelConfig(4.0, "none", seed=7)
for cr in (0.0, 0.5, 0.875, 0.97):
    n = num_keep(cr, k)
    row = []
    for name, pick in (("ranked", lambda i: select_maps(ranking, cr, k)),
                       ("random", lambda i: random_select(k, cr, seed=i))):
        preds = []
        for i, m in enumerate(maps):
            frame, _ = impair_frame(encode_frame(m, pick(i)), dataclasses.replace(channel, seed=i))
            preds.append(semantic_receive(model, frame))
        row.append(f"{name} {np.mean(np.array(preds) == split.test_y):.3f}")
    print(f"cr={cr:<5g} maps={n:2d} bytes={frame_size(n, 8, 8):4d}  " + "  ".join(row))
