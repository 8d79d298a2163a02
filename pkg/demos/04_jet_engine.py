"""
Jet engine compressor
=====================

The two-state Moore-Greitzer model, trained on 1000 trajectories over
T = 5. This is the slow demo (a few minutes of synthesis). The initial and
unsafe boxes are our own choice (the bundled config flags them with
``assumed_from_figure``).

Set ``PACBARRIER_FRESH`` to change the number of validation trajectories.
"""

import os
from pathlib import Path

import numpy as np

from pacbarrier.cli import bundled_config_path, levelset_grid, load_config, run_synthesis, validate_certificate
from pacbarrier.loss import eval_grids

cfg = load_config(bundled_config_path("jet_engine"))
print("initial set", cfg.regions.initial, "\nunsafe set ", cfg.regions.unsafe)

run = run_synthesis(cfg)
rep = run.report
print(f"success {rep['success']} after {rep['iterations']['inner']} iterations, "
      f"{rep['wall_time']:.0f} s")
print(f"d = {rep['d_used']:.4f}, worst retained loss {rep['max_retained_traj_loss']:.4f}")
print(run.guarantee.text)

# Fresh trajectories, simulated with the true vector field.
n_fresh = int(os.environ.get("PACBARRIER_FRESH", "1000"))
val = validate_certificate(run.result.certificate, cfg, rep, n_fresh)
print(f"\n{n_fresh} fresh trajectories: entered unsafe set {val.unsafe_entry_rate}, "
      f"violation rate {val.psi_violation_rate} (epsilon {val.epsilon:.4f}), "
      f"largest gap {val.gap_max:.2e} vs d {val.d:.2e}")

# The zero level set, exported for plotting.
cert = run.result.certificate
grid = levelset_grid(cert, (-0.5, 0.5, -0.5, 0.5), 101)
out = Path("jet_levelset.csv")
np.savetxt(out, grid, delimiter=",", header="x1,x2,B", comments="")
grids = cfg.grids()
ge = eval_grids(cert, grids)
print(f"\nsup B on initial grid {ge.sup_init:.3f}, inf B on unsafe grid {ge.inf_unsafe:.3f};"
      f" level set written to {out}")
