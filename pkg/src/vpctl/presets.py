"""Named experiment presets.

Each preset is a nested dict in the config schema of :mod:`vpctl.experiments`,
written at paper scale. ``DESK`` lists per-preset overrides that shrink
grids and iteration counts to laptop budgets.
"""

from __future__ import annotations

import copy

_TS_TRAIN = {"horizon": 30.0, "iterations": 3000, "adagrad_steps": 200,
             "lr_adagrad": 5e-3, "lr_adam": 5e-4, "eval_every": 10}
_BT_TRAIN = {**_TS_TRAIN, "lr_adagrad": 2e-3, "lr_adam": 3e-4}

_TS_1D = {
    "grid": {"dim": 1, "nx": 100, "nv": 200},
    "equilibrium": {"kind": "two_stream_1d"},
    "initial": {"preset": "two_stream_default"},
    "solver": {"dt": 0.2, "t_end": 70.0, "record_every": 1},
    "experiment": {"snapshot_times": [0.0, 35.0, 70.0]},
}
_BT_1D = {
    **_TS_1D,
    "equilibrium": {"kind": "bump_on_tail_1d"},
    "initial": {"preset": "bump_on_tail_default"},
}
_TS_2D = {
    "grid": {"dim": 2, "nx": 70, "nv": 120},
    "equilibrium": {"kind": "two_stream_2d"},
    "initial": {"preset": "two_stream_2d_default"},
    "solver": {"dt": 0.15, "t_end": 30.0, "record_every": 1},
    "experiment": {"snapshot_times": [0.0, 30.0]},
}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


PRESETS: dict[str, dict] = {
    "two_stream_uncontrolled": _merge(_TS_1D, {"controller": {"kind": "zero"}}),
    "two_stream_time_independent": _merge(_TS_1D, {
        "controller": {"kind": "time_independent"}, "training": _TS_TRAIN,
        "experiment": {"compare": ["zero"]},
    }),
    "two_stream_feedback": _merge(_TS_1D, {
        "controller": {"kind": "low_rank_operator"}, "training": _TS_TRAIN,
        "experiment": {"compare": ["zero", "time_independent"]},
    }),
    "two_stream_cancellation": _merge(_TS_1D, {
        "controller": {"kind": "cancellation", "gamma": 1.0},
        "experiment": {"compare": ["zero"]},
    }),
    "two_stream_cancellation_alt_ic": _merge(_TS_1D, {
        "initial": {"preset": "two_stream_alt"},
        "controller": {"kind": "cancellation", "gamma": 1.0},
        "experiment": {"compare": ["zero"]},
    }),
    "two_stream_noise_sweep": _merge(_TS_1D, {
        "controller": {"kind": "low_rank_operator"}, "training": _TS_TRAIN,
        "noise": {"sigma": [2e-5, 5e-5, 1e-4],
                  "controllers": ["time_independent", "low_rank_operator", "cancellation"]},
    }),
    "bump_on_tail_uncontrolled": _merge(_BT_1D, {"controller": {"kind": "zero"}}),
    "bump_on_tail_time_independent": _merge(_BT_1D, {
        "controller": {"kind": "time_independent"}, "training": _BT_TRAIN,
        "experiment": {"compare": ["zero"]},
    }),
    "bump_on_tail_feedback": _merge(_BT_1D, {
        "controller": {"kind": "low_rank_operator"}, "training": _BT_TRAIN,
        "experiment": {"compare": ["zero", "time_independent"]},
    }),
    "bump_on_tail_noise_sweep": _merge(_BT_1D, {
        "controller": {"kind": "low_rank_operator"}, "training": _BT_TRAIN,
        "noise": {"sigma": [2.4e-5, 6e-5, 1.2e-4],
                  "controllers": ["time_independent", "low_rank_operator"]},
    }),
    "two_stream_2d_uncontrolled": _merge(_TS_2D, {"controller": {"kind": "zero"}}),
    "two_stream_2d_cancellation": _merge(_TS_2D, {
        "controller": {"kind": "cancellation", "gamma": 2.0},
        "experiment": {"compare": ["zero"]},
    }),
}

STUDIES = {
    "two_stream_uncontrolled": "two-stream control study",
    "two_stream_time_independent": "two-stream control study",
    "two_stream_feedback": "two-stream control study",
    "two_stream_cancellation": "cancellation universality study",
    "two_stream_cancellation_alt_ic": "cancellation universality study",
    "two_stream_noise_sweep": "noisy feedback study",
    "bump_on_tail_uncontrolled": "bump-on-tail control study",
    "bump_on_tail_time_independent": "bump-on-tail control study",
    "bump_on_tail_feedback": "bump-on-tail control study",
    "bump_on_tail_noise_sweep": "noisy feedback study",
    "two_stream_2d_uncontrolled": "2D cancellation study",
    "two_stream_2d_cancellation": "2D cancellation study",
}

DESCRIPTIONS = {
    "two_stream_uncontrolled": "two-stream instability, no external field",
    "two_stream_time_independent": "two-stream, trained time-independent trigonometric field",
    "two_stream_feedback": "two-stream, trained low-rank operator feedback",
    "two_stream_cancellation": "two-stream, cancellation feedback (gamma = 1)",
    "two_stream_cancellation_alt_ic": "two-stream, cancellation feedback on the alternate initial data",
    "two_stream_noise_sweep": "two-stream, feedback under noisy measurements",
    "bump_on_tail_uncontrolled": "bump-on-tail instability, no external field",
    "bump_on_tail_time_independent": "bump-on-tail, trained time-independent field",
    "bump_on_tail_feedback": "bump-on-tail, trained low-rank operator feedback",
    "bump_on_tail_noise_sweep": "bump-on-tail, feedback under noisy measurements",
    "two_stream_2d_uncontrolled": "2D2V two-stream instability, no external field",
    "two_stream_2d_cancellation": "2D2V two-stream, cancellation feedback (gamma = 2)",
}

_DESK_TRAIN = {"horizon": 15.0, "iterations": 300, "adagrad_steps": 50}
_DESK_1D_TRAIN = {"grid": {"nx": 64, "nv": 96}, "training": _DESK_TRAIN}
_DESK_2D = {"grid": {"nx": 32, "nv": 48}}

DESK = {
    name: (_DESK_2D if "2d" in name else _DESK_1D_TRAIN if "training" in cfg else {})
    for name, cfg in PRESETS.items()
}


def preset_config(name: str, scale: str = "desk") -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; run 'vpctl list-presets'")
    if scale not in ("desk", "paper"):
        raise ValueError(f"scale must be 'desk' or 'paper', got {scale!r}")
    cfg = copy.deepcopy(PRESETS[name])
    if scale == "desk":
        cfg = _merge(cfg, DESK[name])
    cfg = _merge(cfg, {"experiment": {"name": name, "scale": scale}})
    return cfg


def list_presets() -> list[dict]:
    return [
        {"name": n, "study": STUDIES[n], "description": DESCRIPTIONS[n]}
        for n in PRESETS
    ]
