"""Reference values for the unit tests, computed independently at 40 digits.

Run: python3 tests/oracles/reference_values.py
The printed numbers are pasted into tests/*.cpp.
"""
import mpmath as mp

mp.mp.dps = 40

B1_X = [(1, 0.5), (1, -1.0), (1, 1.5), (1, 0.2), (1, -0.7)]
B1_Y = [1.3, 0.6, 2.8, 0.9, 0.75]
B2_X = [(1, 1.0), (1, -0.3), (1, 0.8), (1, -1.2)]
B2_Y = [2.1, 0.8, 1.1, 0.5]


def parts(xs, ys, beta):
    p = len(beta)
    s = mp.matrix(p, 1)
    q = mp.matrix(p, p)
    c = mp.matrix(p, p)
    loss = mp.mpf(0)
    for x, y in zip(xs, ys):
        x = [mp.mpf(v) for v in x]
        eta = sum(b * v for b, v in zip(beta, x))
        u = mp.mpf(y) * mp.e ** (-eta)
        loss += u + 1 / u - 2
        for j in range(p):
            s[j] += (1 / u - u) * x[j]
            for k in range(p):
                q[j, k] += (u + 1 / u) * x[j] * x[k]
                c[j, k] += (1 / u - u) ** 2 * x[j] * x[k]
    return loss, s, q, c


def newton(resid_jac, beta):
    beta = mp.matrix(beta)
    for _ in range(100):
        f, jac = resid_jac(beta)
        step = mp.lu_solve(jac, f)
        beta = beta - step
        if mp.norm(step, mp.inf) < mp.mpf(10) ** -35:
            break
    return beta


def fit(xs, ys):
    def rj(b):
        _, s, q, _ = parts(xs, ys, list(b))
        return s, q
    return newton(rj, [0, 0])


def show(name, v):
    vals = [v[i, j] for i in range(v.rows) for j in range(v.cols)]
    print(name, ", ".join(mp.nstr(x, 17) for x in vals))


def main():
    print("normal quantile 0.975:", mp.nstr(mp.sqrt(2) * mp.erfinv(2 * mp.mpf("0.975") - 1), 17))
    print("normal quantile 0.995:", mp.nstr(mp.sqrt(2) * mp.erfinv(2 * mp.mpf("0.995") - 1), 17))
    print("normal quantile 1e-10:", mp.nstr(mp.sqrt(2) * mp.erfinv(2 * mp.mpf("1e-10") - 1), 17))
    print("normal quantile 0.3:", mp.nstr(mp.sqrt(2) * mp.erfinv(2 * mp.mpf("0.3") - 1), 17))
    print("two-sided p at 1.959964:", mp.nstr(mp.erfc(mp.mpf("1.959964") / mp.sqrt(2)), 17))
    print("two-sided p at 10:", mp.nstr(mp.erfc(mp.mpf(10) / mp.sqrt(2)), 17))

    b1 = fit(B1_X, B1_Y)
    b2 = fit(B2_X, B2_Y)
    pooled = fit(B1_X + B2_X, B1_Y + B2_Y)
    show("fit batch1:", b1)
    show("fit batch2:", b2)
    show("fit pooled:", pooled)

    _, _, q1, c1 = parts(B1_X, B1_Y, list(b1))

    def rj(b):
        _, s, q, _ = parts(B2_X, B2_Y, list(b))
        return q1 * (b - b1) + s, q1 + q
    renew2 = newton(rj, b1)
    show("renew after batch2:", renew2)
    _, _, q2r, c2r = parts(B2_X, B2_Y, list(renew2))
    qt = q1 + q2r
    ct = c1 + c2r
    v_renew = mp.inverse(qt.T * mp.inverse(ct) * qt)
    show("renew variance (row-major):", v_renew)

    _, _, q2c, c2c = parts(B2_X, B2_Y, list(b2))
    a = q1 + q2c
    cee2 = mp.lu_solve(a, q1 * b1 + q2c * b2)
    show("cee after batch2:", cee2)
    v1 = mp.inverse(q1 * mp.inverse(c1) * q1.T)
    v2 = mp.inverse(q2c * mp.inverse(c2c) * q2c.T)
    ainv = mp.inverse(a)
    v_cee = ainv * (q1 * v1 * q1.T + q2c * v2 * q2c.T) * ainv.T
    show("cee variance:", v_cee)

    # CUEE: intermediary estimates are the CEE estimates after each batch.
    _, s1k, q1k, c1k = parts(B1_X, B1_Y, list(b1))
    _, s2k, q2k, c2k = parts(B2_X, B2_Y, list(cee2))
    a = q1k + q2k
    cuee2 = mp.lu_solve(a, q1k * b1 + q2k * cee2 - s1k - s2k)
    show("cuee after batch2:", cuee2)
    v1 = mp.inverse(q1k * mp.inverse(c1k) * q1k.T)
    v2 = mp.inverse(q2k * mp.inverse(c2k) * q2k.T)
    ainv = mp.inverse(a)
    v_cuee = ainv * (q1k * v1 * q1k.T + q2k * v2 * q2k.T) * ainv.T
    show("cuee variance:", v_cuee)

    loss, s, q, c = parts(B1_X, B1_Y, [mp.mpf("0.1"), mp.mpf("-0.3")])
    print("batch1 at (0.1,-0.3): loss", mp.nstr(loss, 17))
    show("  score", s)
    show("  info", q)
    show("  cmat", c)


if __name__ == "__main__":
    main()
