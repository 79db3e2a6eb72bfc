"""Independent brute-force oracles used to pin expected test values.

Everything here is deliberately written in plain Python (no numpy, no
library tree code): walks are per-leaf, sums are left to right, and the
enumeration is itertools over label tuples. The library must agree with
these within 1e-12.
"""
import itertools


def tree_node_count(n, y_size):
    return sum(y_size**k for k in range(n))


def leaf_outcomes(labels, n, y_size, rows, a, b):
    """Yield (score, probability) per leaf, in output-sequence order."""
    p_ab = rows[a][b]
    for ys in itertools.product(range(y_size), repeat=n):
        v = 0
        s = 0.0
        prob = 1.0
        for y in ys:
            x = labels[v]
            if x == a:
                s += (1.0 if y == b else 0.0) - p_ab
            prob *= rows[x][y]
            v = v * y_size + y + 1
        yield s, prob


def brute_success_probability(labels, n, y_size, rows, a, b, mu):
    threshold = n * mu
    total = 0.0
    for s, prob in leaf_outcomes(labels, n, y_size, rows, a, b):
        if abs(s) > threshold:
            total += prob
    return total


def brute_max_success(n, x_size, y_size, rows, a, b, mu):
    """(labels, value) of the first maximizer in lexicographic order."""
    best_labels, best_value = None, -1.0
    for labels in itertools.product(range(x_size), repeat=tree_node_count(n, y_size)):
        value = brute_success_probability(labels, n, y_size, rows, a, b, mu)
        if value > best_value:
            best_labels, best_value = labels, value
    return best_labels, best_value


def brute_mutual_information_bits(px, w):
    """I(X;Y) in bits from first principles (natural log ratio / log 2)."""
    import math

    py = [sum(px[x] * w[x][y] for x in range(len(px))) for y in range(len(w[0]))]
    total = 0.0
    for x in range(len(px)):
        for y in range(len(w[0])):
            joint = px[x] * w[x][y]
            if joint > 0.0:
                total += joint * math.log(w[x][y] / py[y]) / math.log(2.0)
    return total


def brute_restricted_mass(encode, decode, estimate, tensor, ps, m, n,
                          cap, mu, x_size, s_size, y_size):
    """Conditional mass of the outcome set computed by naked loops.

    encode(m, y_prefix) -> x, decode(ys) -> message, estimate(xs, ys) ->
    state block; tensor[x][s][y] and ps[s] are plain nested lists.
    """
    mass = 0.0
    for ys in itertools.product(range(y_size), repeat=n):
        xs = []
        for i in range(n):
            xs.append(encode(m, tuple(ys[:i])))
        xs = tuple(xs)
        if decode(ys) != m:
            continue
        for ss in itertools.product(range(s_size), repeat=n):
            prob = 1.0
            for i in range(n):
                prob *= ps[ss[i]] * tensor[xs[i]][ss[i]][ys[i]]
            if prob == 0.0:
                continue
            s_hat = estimate(xs, ys)
            dist = sum(1.0 if h != s else 0.0 for h, s in zip(s_hat, ss)) / n
            if dist > cap:
                continue
            # empirical triple frequencies vs input type x state law x channel
            ok = True
            for av in range(x_size):
                fx = sum(1 for x in xs if x == av) / n
                for bv in range(s_size):
                    for cv in range(y_size):
                        f3 = (
                            sum(
                                1
                                for i in range(n)
                                if xs[i] == av and ss[i] == bv and ys[i] == cv
                            )
                            / n
                        )
                        if abs(f3 - fx * ps[bv] * tensor[av][bv][cv]) > mu:
                            ok = False
            if ok:
                mass += prob
    return mass
