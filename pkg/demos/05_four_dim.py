"""
Four-dimensional benchmark
==========================

A four-state nonlinear system with only N = 100 training trajectories and
confidence 1 - 1e-5. The initial set is a thin box around a point of the
invariant plane x1 = x3 = 0; the unsafe set is a slab in x1.
"""

from pacbarrier.cli import bundled_config_path, load_config, run_synthesis, validate_certificate

cfg = load_config(bundled_config_path("four_dim"))
for seed in (0, 1):
    cfg.seed = seed
    run = run_synthesis(cfg)
    rep = run.report
    print(f"seed {seed}: success {rep['success']}, |C| = {len(rep['compression_indices'])} "
          f"({rep['jump_count']} jumps, {rep['discarded_count']} discarded), epsilon {rep['epsilon']:.4f}")
    print("  constants:", {k: round(rep["constants"][k], 4) for k in ("Lf", "Mf", "LB", "MB")})
    val = validate_certificate(run.result.certificate, cfg, rep, n_fresh=300)
    print(f"  300 fresh trajectories: violation rate {val.psi_violation_rate}, "
          f"safety-implication checks {val.prop1_applicable} applicable / {val.prop1_counterexamples} failed")
