"""Generate a toy focal-surface dataset and fit the transport model to it."""
import tempfile

import numpy as np

from focalholo.dataset import GenerationConfig, demo_samples, generate_dataset, load_dataset
from focalholo.model import FocalSurfaceModel, ModelConfig, TrainSchedule, train
from focalholo.optics import OpticalConfig

EPOCHS = 60

cfg = OpticalConfig(width=32, height=32)
out = tempfile.mkdtemp(prefix="focalholo_ds_")
records = generate_dataset(demo_samples(8, 32, 32, seed=0), cfg, out,
                           GenerationConfig(surfaces_per_image=1, distances=(0.0,)), seed=0)
print(len(records), "records in", out)
print(records[0].to_line())

pairs = load_dataset(out)
print("in-focus fraction per record:", [round(float(t.mask.mean()), 2) for _, t in pairs])

model = FocalSurfaceModel(ModelConfig(32, 32), seed=0)
print(model.parameter_count(), "parameters")
result = train(pairs, model, TrainSchedule(epochs=EPOCHS),
               callback=lambda e, l: print(f"epoch {e:3d}  {l:.5f}") if e % 10 == 0 else None)
print("loss ratio after", EPOCHS, "epochs:", round(result.losses[-1] / result.losses[0], 3))
model.save(f"{out}/model.bin")
