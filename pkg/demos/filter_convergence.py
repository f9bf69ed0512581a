"""Compare the two rejection filters on matched synthetic label streams.

The expanding window locks onto the trust model's accuracy quickly; the
UCB bandit spends test instances on exploration but ends up higher once
it has learned which arm pays. Saves filter_convergence.png when
matplotlib is available.
"""

import random

from tablap.trust import simulate_filter, synthetic_stream

LABEL_ACCURACY = 0.9
ANSWER_ACCURACY = 0.5
STEPS = 10_000
EXPLORATION_C = 3.0
CHECKPOINTS = (100, 200, 500, 1_000, 2_000, 5_000, 10_000)


def main():
    stream = synthetic_stream(
        STEPS, LABEL_ACCURACY, ANSWER_ACCURACY, rng=random.Random(0)
    )
    ew = simulate_filter(stream, "ew", warmup=50, seed=1)
    mab = simulate_filter(stream, "mab", c=EXPLORATION_C, seed=1)
    none = simulate_filter(stream, "none")

    print(f"trust-label accuracy p={LABEL_ACCURACY}, c={EXPLORATION_C}")
    print(f"{'step':>6}  {'raw':>6}  {'EW':>6}  {'MAB':>6}")
    for step in CHECKPOINTS:
        row = step - 1
        print(
            f"{step:>6}  {none[row]['tw_accuracy']:.4f}  "
            f"{ew[row]['tw_accuracy']:.4f}  {mab[row]['tw_accuracy']:.4f}"
        )

    final = mab[-1]["stats"]
    print(
        f"\nfinal bandit state: ucb_accept={final['ucb_accept']:.4f} "
        f"ucb_override={final['ucb_override']:.4f}"
    )

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plot")
        return
    steps = range(1, STEPS + 1)
    plt.figure(figsize=(7, 4))
    plt.plot(steps, [r["tw_accuracy"] for r in ew], label="expanding window")
    plt.plot(steps, [r["tw_accuracy"] for r in mab], label="UCB bandit")
    plt.plot(steps, [r["tw_accuracy"] for r in none], label="no filter", ls="--", alpha=0.6)
    plt.xscale("log")
    plt.xlabel("test instances")
    plt.ylabel("cumulative label accuracy")
    plt.legend()
    plt.tight_layout()
    plt.savefig("filter_convergence.png", dpi=120)
    print("wrote filter_convergence.png")


if __name__ == "__main__":
    main()
