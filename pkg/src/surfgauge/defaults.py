"""Single source of truth for numerical tolerances.

Scenario files may override any entry; the test suite reads the same table
so that the acceptance thresholds and the library defaults cannot drift
apart.
"""

TOLERANCES = {
    # lightcone / metric algebra
    "null_rep": 1e-12,            # |(v,v)| / |v|^2_euclid for a null representative
    "orthogonality": 1e-10,       # metric preservation of Gamma maps and gauges
    "rank_rel": 1e-8,             # singular values below rank_rel * s_max count as zero
    "cross_ratio_fit": 1e-8,      # residual of the Gamma fit inside cross_ratio
    "reflection_involution": 1e-12,

    # ksurface
    "sine_gordon_corner": 1e-10,  # boundary rows must agree at the corner
    "degenerate_sin": 1e-6,       # |sin omega| below this marks a degenerate vertex
    "tchebyshev": 1e-4,
    "cayley_hamilton_rel": 1e-6,
    "gauss_curvature": 1e-3,
    "lelieuvre": 1e-2,

    # loopgauge
    "loop_flatness": 1e-3,        # holonomy defect per plaquette area at h = 1/32
    "anticommute": 1e-8,
    "conjugation_symmetry": 1e-8,
    "twist": 1e-6,                # rho^N L = conj(L) residual
    "dressing_identity": 1e-6,    # |R(lambda) - 1| for the permutability factor
    "backlund_constants": 1e-3,
    "backlund_curvature": 1e-2,
    "sym_recovery": 1e-3,

    # isothermic
    "patch_invariants": 1e-6,
    "eta_nilpotency": 1e-8,
    "eta_closedness": 1e-3,       # per-area residual at h = 1/64 on the shipped examples
    "dual_match": 1e-3,
    "dual_involution": 1e-6,
    "darboux_invariants": 1e-3,
    "bianchi_projective": 1e-8,

    # discretei (float-exact domain)
    "discrete_face": 1e-9,
    "discrete_perturbed": 1e-5,   # lower bound for the perturbed negative control
    "discrete_triple": 1e-8,
    "discrete_group": 1e-8,
}


def tolerance(name, scale=1.0, overrides=None):
    """Look up a tolerance, applying per-scenario overrides then a global scale."""
    table = dict(TOLERANCES)
    if overrides:
        table.update(overrides)
    return table[name] * scale
