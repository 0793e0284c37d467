"""Writes data/synthetic_scores.csv and data/synthetic_truth.csv.

Five models with a latent quality each answer 40 questions. Human labels
follow the latent per-answer quality; the metric sees the same quality plus
noise on a BARTScore-like negative scale, so some pairs disagree.
"""
import csv
import math
import random
from pathlib import Path

MODELS = ["alpaca-13b", "chatglm-6b", "koala-13b", "vicuna-7b", "vicuna-13b"]
BASE = [0.30, 0.45, 0.55, 0.65, 0.80]
CONTEXTS = ["coding", "math", "reasoning", "writing"]
N_QUESTIONS = 40

rng = random.Random(20240611)
out = Path(__file__).resolve().parent.parent / "data"

quality = {}
for q in range(N_QUESTIONS):
    for m, b in zip(MODELS, BASE):
        quality[(q, m)] = min(1.0, max(0.0, b + rng.gauss(0, 0.12)))

with open(out / "synthetic_scores.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["question_id", "candidate_model", "reference_model", "raw_score"])
    for q in range(N_QUESTIONS):
        for m in MODELS:
            noisy = quality[(q, m)] + rng.gauss(0, 0.10)
            raw = -6.0 + 5.0 * noisy
            w.writerow([f"mt{q:03d}", m, "human", f"{raw:.4f}"])

with open(out / "synthetic_truth.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["question_id", "model_a", "model_b", "winner", "context"])
    for q in range(N_QUESTIONS):
        pairs = [(a, b) for i, a in enumerate(MODELS) for b in MODELS[i + 1:]]
        for a, b in rng.sample(pairs, 4):
            diff = quality[(q, a)] - quality[(q, b)]
            winner = "tie" if abs(diff) < 0.02 else ("model_a" if diff > 0 else "model_b")
            w.writerow([f"mt{q:03d}", a, b, winner, CONTEXTS[q % len(CONTEXTS)]])
