"""Problem presets used throughout the test and acceptance suites.

reflected_bm          unit noise reflected at the origin (|BM| oracle)
delay_linear          pure delay drift b = -x(t - r0), no operator (method of steps)
example5_tanh_reflected
                      bounded tanh functionals with affine measure coupling,
                      reflected at the origin; the workhorse for the scaling
                      experiments
"""

import copy

PRESETS = {
    "reflected_bm": {
        "operator": {"kind": "box", "lo": [0.0], "hi": [float("inf")]},
        "coefficients": {
            "kind": "example5",
            "f": {"s": "identity"},
            "g": {"s": "identity", "c0": 1.0},
            "phi": {},
        },
        "grid": {"h": 0.001, "r0": 0.001, "T": 1.0},
        "initial_segment": {"constant": [0.0]},
        "m": 1,
    },
    "delay_linear": {
        "operator": {"kind": "zero", "dimension": 1},
        "coefficients": {
            "kind": "example5",
            "f": {"s": "identity", "C2": -1.0},
            "g": {"s": "identity", "c0": 1.0},
            "phi": {},
        },
        "grid": {"h": 0.01, "r0": 1.0, "T": 2.0},
        "initial_segment": {"constant": [1.0]},
        "m": 1,
    },
    "example5_tanh_reflected": {
        "operator": {"kind": "box", "lo": [0.0], "hi": [float("inf")]},
        "coefficients": {
            "kind": "example5",
            "f": {"s": "tanh", "c0": 0.2, "C1": 0.5, "C2": 0.3, "C3": 0.3},
            "g": {"s": "tanh", "c0": 0.6, "C1": 0.2, "C3": 0.1},
            "phi": {"alpha": 0.4, "beta": 0.1},
        },
        "grid": {"h": 0.004, "r0": 0.2, "T": 0.4},
        "initial_segment": {"ramp": {"start": [0.0], "stop": [0.5]}},
        "m": 1,
    },
}


def preset_problem(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])
