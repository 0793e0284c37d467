"""Writes data/oracle_vectors.jsonl: random reputation-core inputs with
expected outputs computed here, independently of the Rust code.

Each line holds the hyperparameters, the raw inputs of one interaction and
the values every core operation must produce for them.
"""
import json
import math
import random
from pathlib import Path

N_CASES = 1000
rng = random.Random(1729)
out = Path(__file__).resolve().parent.parent / "data" / "oracle_vectors.jsonl"


def simplex3():
    a, b = sorted((rng.random(), rng.random()))
    return a, b - a, 1.0 - b


def hyperparams():
    psi = rng.uniform(0.05, 0.6)
    xi = rng.uniform(psi + 0.01, 0.99)
    ar, br, gr = simplex3()
    au, bu, gu = simplex3()
    return {
        "psi": psi,
        "xi": xi,
        "lambda": 10 ** rng.uniform(-4, -1),
        "theta": rng.random(),
        "alpha_r": ar,
        "beta_r": br,
        "gamma_r": gr,
        "alpha_u": au,
        "beta_u": bu,
        "gamma_u": gu,
        "d_reset_minutes": rng.choice([60.0, 720.0, 1440.0, 10080.0]),
    }


def update(r, s, omega, threshold, hp):
    rate = (hp["psi"] if s >= threshold else hp["xi"]) * omega
    return r + rate * (s - r)


def case(i):
    hp = hyperparams()
    k = rng.randint(1, 6)
    pair_scores = [rng.random() for _ in range(k)]
    ref_reps = [rng.random() for _ in range(k)]
    fb = {name: rng.random() for name in
          ["a_trust", "a_complete", "a_utility", "familiarity", "llm_trust", "uncertainty"]}
    # some cases land exactly on edge values
    if i % 50 == 0:
        fb = {key: float(rng.choice([0, 1])) for key in fb}
    elapsed = rng.choice([0.0, 1.0, rng.uniform(0, 3 * hp["d_reset_minutes"])])
    r_auto, r_human, r_weighted = rng.random(), rng.random(), rng.random()
    th_auto, th_human, th_weighted = rng.random(), rng.random(), rng.random()

    s_a = sum(pair_scores) / k
    w_a = sum(ref_reps) / k
    if i % 97 == 0:
        th_auto = s_a
    d = min(elapsed, hp["d_reset_minutes"])
    f_d = math.tanh(hp["lambda"] * d / 2.0)
    s_h = hp["alpha_r"] * fb["a_trust"] + hp["beta_r"] * fb["a_complete"] + hp["gamma_r"] * fb["a_utility"]
    w_user = (hp["alpha_u"] * fb["familiarity"] + hp["beta_u"] * fb["llm_trust"]
              + hp["gamma_u"] * (1.0 - fb["uncertainty"]))
    w_h = w_user * f_d
    th = hp["theta"]
    s_theta = th * s_h + (1 - th) * s_a
    w_theta = 0.0 if w_h == 0.0 else th * w_h + (1 - th) * w_a
    return {
        "hp": hp,
        "pair_scores": pair_scores,
        "ref_reputations": ref_reps,
        "feedback": fb,
        "elapsed_minutes": elapsed,
        "reputation": [r_auto, r_human, r_weighted],
        "thresholds": [th_auto, th_human, th_weighted],
        "expected": {
            "s_a": s_a,
            "w_a": w_a,
            "duration": d,
            "f_d": f_d,
            "s_h": s_h,
            "w_user": w_user,
            "w_h": w_h,
            "s_theta": s_theta,
            "w_theta": w_theta,
            "r_auto": update(r_auto, s_a, w_a, th_auto, hp),
            "r_human": update(r_human, s_h, w_h, th_human, hp),
            "r_weighted": update(r_weighted, s_theta, w_theta, th_weighted, hp),
        },
    }


with open(out, "w") as f:
    for i in range(N_CASES):
        f.write(json.dumps(case(i), sort_keys=True) + "\n")
