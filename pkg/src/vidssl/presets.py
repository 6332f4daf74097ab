"""Ablation presets expressed as flat-config deltas."""

# Each preset is a pure transformation of the flat config; the full method is
# the default config, so its delta is empty.
PRESETS = {
    "supervised_only": {
        "loss.omega_m": "0.0",
        "loss.omega_f": "0.0",
        "loss.omega_a": "0.0",
        "mixing.mode": "off",
    },
    "cr_ft": {
        "threshold.mode": "fixed",
        "threshold.fixed": "0.95",
        "loss.omega_f": "0.0",
        "loss.omega_a": "0.0",
        "mixing.mode": "off",
    },
    "cr_sat": {
        "threshold.mode": "sat",
        "loss.omega_f": "0.0",
        "loss.omega_a": "0.0",
        "mixing.mode": "off",
    },
    "cr_sat_ada_vm": {
        "threshold.mode": "sat",
        "loss.omega_f": "0.0",
        "mixing.mode": "videomix",
    },
    "cr_sat_ada_vcsa": {
        "threshold.mode": "sat",
        "loss.omega_f": "0.0",
        "mixing.mode": "vcsa",
    },
    "firematch_full": {},
}


def apply_preset(flat, name):
    from .errors import ConfigurationError
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    out = dict(flat)
    out.update(PRESETS[name])
    return out
