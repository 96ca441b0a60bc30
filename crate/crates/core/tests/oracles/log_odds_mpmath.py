"""Reference values for the weighted log-odds toy vocabulary.

Prints a Rust table of (token, y1, y2, delta, variance, z) computed with
mpmath at 50 significant digits. The test embeds this output verbatim.
"""
from mpmath import mp, mpf, log, sqrt

mp.dps = 50

SEED = {
    "trust": 41, "plan": 37, "#wwg1wga": 25, "storm": 19, "patriots": 17,
    "news": 12, "today": 9, "vote": 8, "#maga": 7, "great": 6,
    "weather": 2, "coffee": 1, "game": 3, "music": 1, "family": 5,
    "truth": 11, "qq": 4, "ab": 2,
}
BACKGROUND = {
    "trust": 12, "plan": 15, "storm": 6, "patriots": 3, "news": 80,
    "today": 64, "vote": 40, "#maga": 2, "great": 33, "weather": 51,
    "coffee": 47, "game": 58, "music": 44, "family": 29, "truth": 10,
    "ab": 9, "recipe": 21, "#nfl": 18,
}
ALPHA = mpf("0.01")


def table(seed, background, alpha):
    vocab = sorted(set(seed) | set(background))
    a0 = alpha * len(vocab)
    n1 = sum(seed.values())
    n2 = sum(background.values())
    rows = []
    for t in vocab:
        y1, y2 = seed.get(t, 0), background.get(t, 0)
        a1, a2 = y1 + alpha, y2 + alpha
        delta = log(a1 / (n1 + a0 - a1)) - log(a2 / (n2 + a0 - a2))
        var = 1 / a1 + 1 / a2
        rows.append((t, y1, y2, delta, var, delta / sqrt(var)))
    return rows


if __name__ == "__main__":
    rows = table(SEED, BACKGROUND, ALPHA)
    assert len(rows) == 20
    for t, y1, y2, d, v, z in rows:
        f = lambda x: mp.nstr(x, 25, min_fixed=-30, max_fixed=30)
        print(f'    ("{t}", {y1}, {y2}, {f(d)}, {f(v)}, {f(z)}),')
