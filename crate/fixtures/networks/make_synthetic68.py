"""Regenerates synthetic_68.toml: 68 buses (16 generators, 52 load buses),
86 lines. Topology and parameters are drawn from a fixed seed; this is a
test fixture of realistic size, not a transcription of any real system."""

import random

SEED = 68
N_GEN, N_LOAD, N_LINES = 16, 52, 86

TIER = """cost = [
  { x_min = -inf, x_max = -0.2, a = 1.0, b = 0.0, c = -0.02 },
  { x_min = -0.2, x_max = 0.2, a = 0.5, b = 0.0, c = 0.0 },
  { x_min = 0.2, x_max = inf, a = 1.0, b = 0.0, c = -0.02 },
]"""


def main():
    rng = random.Random(SEED)
    n = N_GEN + N_LOAD
    edges = []
    seen = set()

    def add(i, j):
        key = (min(i, j), max(i, j))
        if i == j or key in seen:
            return False
        seen.add(key)
        edges.append((i, j, round(rng.uniform(2.0, 8.0), 3)))
        return True

    # load buses N_GEN..n-1 form a random tree, each generator hangs off one
    for k in range(1, N_LOAD):
        add(N_GEN + k, N_GEN + rng.randrange(k))
    for g in range(N_GEN):
        add(g, N_GEN + rng.randrange(N_LOAD))
    while len(edges) < N_LINES:
        add(N_GEN + rng.randrange(N_LOAD), N_GEN + rng.randrange(N_LOAD))

    out = ["# Synthetic 68-bus system generated by make_synthetic68.py.", 'name = "synthetic-68"', ""]
    for j in range(n):
        out.append("[[buses]]")
        out.append(f"id = {j}")
        if j < N_GEN:
            out.append('kind = "generator"')
            out.append(f"M = {round(rng.uniform(0.02, 0.1), 4)}")
        else:
            out.append('kind = "load"')
        out.append(f"D = {round(rng.uniform(0.5, 2.0), 3)}")
        out.append("p_l_min = -1.0")
        out.append("p_l_max = 1.0")
        out.append(TIER)
        out.append("")
    for i, j, b in edges:
        out += ["[[lines]]", f"from = {i}", f"to = {j}", f"B = {b}", "theta_min = -0.5", "theta_max = 0.5", ""]
    with open("synthetic_68.toml", "w") as fh:
        fh.write("\n".join(out))


if __name__ == "__main__":
    main()
