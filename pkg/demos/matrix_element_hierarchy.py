"""How interaction matrix elements shrink with the bath size.

Off-diagonal elements (H^I_ab)_ij, i != j, in the bath eigenbasis fall off
like N_E^(-1/2) in a chaotic bath, while the diagonal ones stay O(h). The
ratio of the two is what lets the diagonal part be absorbed into H~^S.

    python demos/matrix_element_hierarchy.py
"""

import numpy as np

from renormstat import diagnostics as diag
from renormstat.models import build_model, chaotic_spec
from renormstat.renorm import EnvironmentData, interaction_blocks
from renormstat.spectra import diagonalize

sizes, medians = [], []
print(f"{'n_b':>4} {'N_E':>6} {'median|off|':>12} {'bound':>9} {'under 3x':>9} {'diag/off':>9} {'<G_ii>':>8}")
for nb in range(5, 10):
    hs = build_model(chaotic_spec(nb, epsilon=1.0, system_field=2.0, interaction_terms=(("x", "n"),)))
    env = EnvironmentData(diagonalize(hs.h_env), hs.space)
    h = diag.element_hierarchy(interaction_blocks(hs, diagonalize(hs.h_s)), env, 1500, seed=0)
    g = diag.g_statistics(env, 100, seed=0)
    sizes.append(h.n_env)
    medians.append(h.median_offdiag)
    print(
        f"{nb:4d} {h.n_env:6d} {h.median_offdiag:12.4e} {h.offdiag_bound:9.4f} {h.fraction_under_bound:9.3f}"
        f" {h.hierarchy_ratio:9.1f} {g.summaries['g_diag']['mean']:8.4f}"
    )

slope = np.polyfit(np.log(sizes), np.log(medians), 1)[0]
print(f"\nlog-log slope of median off-diagonal vs N_E: {slope:.3f} (expect about -0.5)")
