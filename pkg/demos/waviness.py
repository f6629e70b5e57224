"""Projector gamma bends the sinusoids and the three-step estimator turns
that into a periodic depth ripple. Compare gamma 1.0 with 2.2.

    python3 demos/waviness.py
"""
from cpscan.fixtures import metrology_scene, reference_rig
from cpscan.metrology import surface_diagnostics
from cpscan.pipeline import run_scan

rig = reference_rig()
w = 64
for gamma in (1.0, 1.4, 2.2):
    res = run_scan(rig, metrology_scene(gamma=gamma))
    rms, period, amp = surface_diagnostics(res.reconstruction.points, res.decoded.correspondence.xp, w)
    print(f"gamma {gamma}: plane rms {rms * 1e3:7.3f} mm, ripple period {period:5.1f} px ({period / w:.2f} w), amplitude {amp * 1e3:7.3f} mm")

# With three equal phase steps the harmonics of a bent sinusoid only leak into
# the phase at three times the fringe frequency, so the ripple repeats every w/3.
