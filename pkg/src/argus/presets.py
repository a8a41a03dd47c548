"""Tuned run configurations, shared by the validate command, the acceptance
tests, and the README examples."""
from __future__ import annotations

HYPERCLEAN_DECAY = {
    "problem": "hyperclean",
    "seed": 3,
    "mode": "argus",
    "problem_params": {"d_f": 10, "n_train": 100, "n_val": 100, "classes": 3,
                       "corruption_rate": 0.3, "mean_spread": 3.0, "init_scale": 2.0},
    "network": {"N": 10, "p_c": 0.5, "static_topology": False},
    "scheduler": {"p_active": 1.0, "tau": 20},
    "hyper": {"T": 500, "T1": 500, "iota": 5, "M": 3,
              "eta_x": 0.2, "eta_y": 0.02, "eta_lambda": 0.03, "eta_theta": 0.005,
              "lambda1": 0.1, "epsilon": 0.1, "eta_y_ll": 0.1, "eta_phi": 0.05,
              "mu": 0.5, "K": 1, "L_est": 1.0},
}

QUADRATIC_ORACLE = {
    "problem": "quadratic",
    "seed": 7,
    "mode": "argus",
    "problem_params": {"n": 4, "m": 4, "init_scale": 3.0},
    "network": {"N": 3, "p_c": 0.5, "static_topology": False},
    "scheduler": {"p_active": 0.8, "tau": 20},
    "hyper": {"T": 2000, "T1": 2000, "iota": 5, "M": 3,
              "eta_x": 0.05, "eta_y": 0.05, "eta_lambda": 0.05, "eta_theta": 0.05,
              "lambda1": 0.1, "epsilon": 1.5, "eta_y_ll": 0.1, "eta_phi": 0.05,
              "mu": 0.5, "K": 1, "L_est": 1.0},
}

QUADRATIC_TREND = {
    "problem": "quadratic",
    "seed": 11,
    "mode": "argus",
    "problem_params": {"n": 4, "m": 4, "init_scale": 3.0},
    "network": {"N": 5, "p_c": 0.5, "static_topology": False},
    "scheduler": {"p_active": 0.8, "tau": 20},
    "hyper": {"T": 800, "T1": 800, "iota": 5, "M": 3,
              "eta_x": 0.05, "eta_y": 0.05, "eta_lambda": 0.05, "eta_theta": 0.05,
              "lambda1": 0.1, "epsilon": 1.5, "eta_y_ll": 0.1, "eta_phi": 0.05,
              "mu": 0.5, "K": 1, "L_est": 1.0},
}

STRAGGLER_COMPARE = {
    "problem": "quadratic",
    "seed": 1,
    "mode": "argus",
    "problem_params": {"n": 4, "m": 4, "init_scale": 3.0},
    "network": {"N": 10, "p_c": 0.5, "static_topology": False},
    "scheduler": {"p_active": 1.0, "tau": 20,
                  "delay": {"compute_mean": 1.0, "compute_jitter": 0.1,
                            "comm_mean": 0.2, "comm_jitter": 0.1},
                  "round_length": 1.6,
                  "stragglers_per_round": 2, "straggler_multiplier": 10.0},
    "hyper": {"T": 600, "T1": 600, "iota": 5, "M": 3,
              "eta_x": 0.05, "eta_y": 0.05, "eta_lambda": 0.05, "eta_theta": 0.05,
              "lambda1": 0.1, "epsilon": 1.5, "eta_y_ll": 0.1, "eta_phi": 0.05,
              "mu": 0.5, "K": 1, "L_est": 1.0},
    "compare": {"target_upper_loss": 1.0},
}
