"""Eigenstate expectation values of sigma_z on the coupled spin, chaotic vs integrable bath.

Slides a window (5% of the spectrum) across each bath spectrum and reports
the spread of <E_i|sigma^A_z|E_i> inside it. The chaotic bath has a long
mid-spectrum run of windows with a small spread; the classical Ising bath
does not, since its eigenstates are product states.

    python demos/eth_windows.py
"""

from renormstat import diagnostics as diag
from renormstat.models import PAULI, build_model, chaotic_spec, integrable_spec, mean_spacing_ratio
from renormstat.renorm import EnvironmentData
from renormstat.spectra import diagonalize

for name, spec in (("chaotic", chaotic_spec(10)), ("integrable", integrable_spec(10))):
    hs = build_model(spec)
    env = EnvironmentData(diagonalize(hs.h_env), hs.space)
    span = env.spec.span
    reps = diag.eth_scan(env, PAULI["z"], 0.05 * span, 0.025 * span, threshold=0.05, label="sz_A")
    region = diag.eth_region(reps)
    passing = sum(r.eth_flag for r in reps)
    print(f"{name}: <r> = {mean_spacing_ratio(env.values):.3f}, {passing}/{len(reps)} windows pass")
    for r in reps[::4]:
        spread = f"{r.window_stddev:.3f}" if r.count else "  -  "
        print(f"  [{r.e_lo:7.2f}, {r.e_hi:7.2f}]  n={r.count:4d}  std={spread}  {'ok' if r.eth_flag else '--'}")
    if region:
        print(f"  longest passing run: windows {region[0]}..{region[1] - 1}")
