"""
The full pipeline from Python
=============================

Same as ``fereit pipeline --out demo_out/pipeline`` but driven from a
config object, which is handy for parameter studies.
"""
import json

from fereit.config import parse_config_text
from fereit.pipeline import run_pipeline

cfg = parse_config_text("""
out = demo_out/pipeline
noise_level = 0.01
motion_amplitude = 0.01
frames = 40
""").validate()

manifest = run_pipeline(cfg)
print(json.dumps({k: manifest[k] for k in ("mesh", "sensitivity", "frames")}, indent=2))
print("timings:", {k: round(v, 2) for k, v in manifest["timings_s"].items()})

# second run hits the sensitivity cache
again = run_pipeline(cfg)
print("cache hit on rerun:", again["sensitivity"]["cache_hit"])
