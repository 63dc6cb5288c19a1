#!/usr/bin/env python3
"""Run the HTTP service in-process and drive it like the web UI does.

The service exposes the registry (/api/styles), the 2-D embedding map
(/api/embedding), and stylization with exactly one weight selector per
request (/api/stylize).  Uploads are multipart: a PNG part named "content"
plus a JSON part named "options".
"""

import json
import threading
import time

import numpy as np
import requests
import uvicorn

from stylemix.images import encode_png
from stylemix.service import create_app
from stylemix.toydata import STYLE_KINDS, content_image

from _shared import ensure_toy_checkpoint, output_path

model, _ = ensure_toy_checkpoint(name="toy6", styles=STYLE_KINDS[:6],
                                 total_iters=1100, segment=150, seed=1)

app = create_app(model, seed=0, max_inflight=2)
config = uvicorn.Config(app, host="127.0.0.1", port=8642, log_level="warning")
server = uvicorn.Server(config)
thread = threading.Thread(target=server.run, daemon=True)
thread.start()
while not server.started:
    time.sleep(0.05)
base = "http://127.0.0.1:8642"

print("styles:")
for entry in requests.get(f"{base}/api/styles").json():
    top = max(range(len(entry["weights"])), key=entry["weights"].__getitem__)
    print(f"  {entry['name']:>14}: heaviest basis slice {top}, thumb {entry['thumb_url']}")

emb = requests.get(f"{base}/api/embedding").json()
print(f"embedding: {len(emb['coords'])} points at perplexity {emb['perplexity']}")

png = encode_png(content_image(np.random.default_rng(0), 96))
names = [e["name"] for e in requests.get(f"{base}/api/styles").json()]
for options in ({"style": names[0]},
                {"combine": {"a": names[0], "b": names[1], "alpha": 0.5}},
                {"perturb": {"style": names[0], "sigma": 0.005, "seed": 7}},
                {"cst": "average"}):
    r = requests.post(f"{base}/api/stylize",
                      files={"content": ("img.png", png, "image/png")},
                      data={"options": json.dumps(options)})
    label = next(iter(options))
    out = output_path("service", f"{label}.png")
    open(out, "wb").write(r.content)
    print(f"  {label:>8}: {r.status_code}, resized to {r.headers['x-resized-to']} -> {out}")

server.should_exit = True
thread.join(timeout=5)
print("server stopped")
