"""Send a handful of semantic frames to a receiver over UDP loopback.

The model is untrained here; the point is the wire protocol: a KB_SYNC
frame first, then one SEMANTIC frame per image, each acknowledged.
"""

import threading

import numpy as np

from scait.knowledge_base import KnowledgeBase
from scait.link import Receiver, run_transmitter
from scait.nn import Model, ModelSpec, model_fingerprint

model = Model.init(ModelSpec(), seed=0)
kb = KnowledgeBase.from_weights(np.random.default_rng(0).normal(size=(32, 6)), model_fingerprint(model))
images = np.random.default_rng(1).uniform(0, 1, (5, 32, 32))

rx = Receiver(("127.0.0.1", 0), model)
t = threading.Thread(target=rx.serve, kwargs={"max_frames": len(images), "idle_timeout": 5}, daemon=True)
t.start()
sent = run_transmitter(rx.address, model, kb, images, cr=0.875)
t.join(10)
rx.close()

for r in sent:
    print(r)
print("receiver log:")
for r in rx.log:
    print(r)
